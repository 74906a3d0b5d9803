"""chatctl command line: train, evaluate, shell, serve, data validate."""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading

from .bundle import load_bundle, save_bundle
from .config import PipelineConfig, load_config
from .crf import CrfHyper
from .engine import request_seed
from .errors import ChatctlError, ValidationError
from .evaluate import (
    EvalReport,
    SECTIONS,
    emit_report,
    eval_entities,
    eval_intents,
    eval_stories,
    stratified_kfold,
)
from .knn import DEFAULT_KS, build_index, generate_corruptions, k_sweep
from .pipeline import (
    corruption_spec,
    entity_sequences,
    sweep_kernels,
    intent_dataset,
    kernel_from_config,
    load_corpus,
    make_engine,
    train_pipeline,
)
from .policy import stories_to_sequences
from .server import ChatServer
from .svm import grid_search_C, kernel_sweep


def cmd_train(args) -> int:
    config = load_config(args.config)
    artifacts = train_pipeline(config)
    if artifacts.grid_result is not None:
        print("C grid search:")
        for c, accuracy in artifacts.grid_result.table:
            print(f"  C={c:<6g} accuracy {accuracy:6.2f}%")
        print(f"  best C: {artifacts.grid_result.best_c:g}")
    trace = artifacts.entity_model.objective_trace
    print(f"CRF: {len(trace) - 1} accepted steps, objective {trace[-1]:.4f}")
    losses = artifacts.policy_trace.losses
    accuracies = artifacts.policy_trace.accuracies
    print(
        f"policy: {len(losses)} epochs, final loss {losses[-1]:.6f}, "
        f"training accuracy {100 * accuracies[-1]:.2f}%"
    )
    save_bundle(artifacts, args.out)
    print(f"bundle written to {args.out}")
    return 0


def run_evaluation(config: PipelineConfig, engine, only: str | None = None) -> EvalReport:
    """Assemble the report; `only` restricts the output to one section."""
    wanted = set(SECTIONS) if only is None else {only}
    if only is not None and only not in SECTIONS:
        raise ValidationError(f"unknown section {only!r}; choose from {', '.join(SECTIONS)}")
    intents, _, stories, _ = load_corpus(config)
    report = EvalReport()

    if wanted & {"intents", "confidences"}:
        from .textfeat import EmbeddingTable, load_embeddings

        if config.embeddings_path:
            embeddings = load_embeddings(config.embeddings_path, fallback_seed=config.seed)
        else:
            embeddings = EmbeddingTable(
                dimension=config.embedding_dim, vectors={}, fallback_seed=config.seed
            )
        data = intent_dataset(intents, embeddings)
        kernel = kernel_from_config(config)
        grid = tuple(float(c) for c in config.svm_c_grid)
        if len(grid) > 1:
            best_c = grid_search_C(
                data, kernel, grid=grid, folds=config.svm_folds, seed=config.seed
            ).best_c
        else:
            best_c = grid[0]
        labels = [label for _, label in data]
        split = stratified_kfold(labels, k=config.eval_folds, seed=config.seed)
        report.set_intents(eval_intents(data, kernel, best_c, split))

    if "kernels" in wanted:
        from .textfeat import EmbeddingTable, load_embeddings

        if config.embeddings_path:
            embeddings = load_embeddings(config.embeddings_path, fallback_seed=config.seed)
        else:
            embeddings = EmbeddingTable(
                dimension=config.embedding_dim, vectors={}, fallback_seed=config.seed
            )
        data = intent_dataset(intents, embeddings)
        rows = kernel_sweep(
            data,
            kernels=sweep_kernels(config),
            grid=tuple(float(c) for c in config.svm_c_grid),
            folds=config.svm_folds,
            seed=config.seed,
        )
        report.set_kernels(rows)

    if "entities" in wanted:
        sequences = entity_sequences(intents)
        hyper = CrfHyper(
            l1=config.crf_l1, l2=config.crf_l2, max_iterations=config.crf_max_iterations
        )
        tag_labels = ["has-entity" if any(t != "O" for t in s.tags) else "plain" for s in sequences]
        split = stratified_kfold(tag_labels, k=config.eval_folds, seed=config.seed)
        report.set_entities(eval_entities(sequences, hyper, split))

    if "stories" in wanted:
        report.set_stories(eval_stories(engine, stories))

    if "ksweep" in wanted:
        from .knn import lexicon_from_nlu, load_lexicon

        lexicon = (
            load_lexicon(config.lexicon_path) if config.lexicon_path else lexicon_from_nlu(intents)
        )
        index = build_index(
            lexicon,
            corruption_spec(config),
            k=config.knn_k,
            reject_radius=config.knn_reject_radius,
        )
        eval_spec = corruption_spec(config, seed_offset=1)
        eval_set = [
            (variant, value)
            for value in lexicon.values()
            for variant in generate_corruptions(value, eval_spec)
        ]
        report.set_ksweep(k_sweep(index, eval_set, ks=DEFAULT_KS))

    if only is not None:
        report.sections = {k: v for k, v in report.sections.items() if k == only}
    return report


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    if args.bundle:
        engine = load_bundle(args.bundle).make_engine()
    else:
        engine = make_engine(train_pipeline(config))
    report = run_evaluation(config, engine, only=args.only)
    os.makedirs(args.out, exist_ok=True)
    for fmt, name in (("text", "report.txt"), ("json", "report.json"), ("csv", "report.csv")):
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(emit_report(report, fmt))
    print(emit_report(report, "text"), end="")
    print(f"reports written to {args.out}")
    return 0


def cmd_shell(args) -> int:
    loaded = load_bundle(args.bundle)
    engine = loaded.make_engine()
    tracker = engine.new_tracker("shell")
    debug_mode = False
    print("chatctl shell - /debug toggles diagnostics, /restart resets, Ctrl-D exits")
    while True:
        try:
            line = input("you> ")
        except EOFError:
            print()
            return 0
        line = line.strip()
        if not line:
            continue
        if line == "/debug":
            debug_mode = not debug_mode
            print(f"debug {'on' if debug_mode else 'off'}")
            continue
        if line == "/restart":
            engine.restart(tracker)
            print("conversation restarted")
            continue
        seed = request_seed(loaded.config.seed, "shell", tracker.message_count)
        responses = engine.handle_message(tracker, line, seed)
        for response in responses:
            print(f"bot> {response.text}")
        if debug_mode and responses:
            print(json.dumps(responses[0].debug, ensure_ascii=False, indent=2))


def cmd_serve(args) -> int:
    loaded = load_bundle(args.bundle)
    engine = loaded.make_engine()
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValidationError(f"--bind must look like host:port, got {args.bind!r}")
    try:
        server = ChatServer(
            engine,
            host=host,
            port=int(port_text),
            global_seed=loaded.config.seed,
            static_dir=args.static,
        )
    except OSError as exc:
        print(f"error: cannot bind {args.bind}: {exc}", file=sys.stderr)
        return 1
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    server.start()
    print(f"serving on http://{server.address[0]}:{server.address[1]}")
    stop.wait()
    server.stop()
    print("stopped")
    return 0


def cmd_data_validate(args) -> int:
    config = load_config(args.config)
    intents, templates, stories, domain = load_corpus(config)
    problems: list[str] = []

    for action, slot in sorted(config.custom_action_slots.items()):
        if slot not in domain.slot_names:
            problems.append(f"custom action {action!r} maps to unknown slot {slot!r}")

    from .engine import load_knowledge_base
    from .knn import lexicon_from_nlu, load_lexicon, regex_normalize

    lexicon = (
        load_lexicon(config.lexicon_path) if config.lexicon_path else lexicon_from_nlu(intents)
    )
    knowledge = (
        load_knowledge_base(config.knowledge_path) if config.knowledge_path else None
    )
    warnings: list[str] = []
    if knowledge is not None:
        slot_to_actions: dict[str, list[str]] = {}
        for action, slot in config.custom_action_slots.items():
            slot_to_actions.setdefault(slot, []).append(action)
        for value, entity in lexicon.entries:
            for action in slot_to_actions.get(entity, ()):
                if knowledge.lookup(action, regex_normalize(value)) is None:
                    warnings.append(f"no knowledge entry for ({action}, {value})")

    sequences = stories_to_sequences(stories, domain, config.policy_max_history)
    seen: dict[bytes, int] = {}
    conflicts = 0
    for window, target in sequences:
        key = window.tobytes()
        if key in seen and seen[key] != target:
            conflicts += 1
        else:
            seen.setdefault(key, target)
    if conflicts:
        warnings.append(
            f"{conflicts} story windows map to conflicting actions "
            "(policy cannot reach 100% on these)"
        )

    pattern_count = sum(len(i.patterns) for i in intents)
    print(f"intents: {len(intents)} ({pattern_count} patterns)")
    print(f"templates: {len(templates)}")
    print(f"stories: {len(stories)} ({len(sequences)} action examples)")
    print(f"entities: {len(domain.entity_names)} names, {len(lexicon.entries)} lexicon values")
    print(f"actions: {len(domain.actions)}")
    for warning in warnings:
        print(f"warning: {warning}")
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chatctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train all models and write a bundle")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="cross-validated evaluation report")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--bundle", default=None)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--only", default=None, choices=SECTIONS)
    p_eval.set_defaults(func=cmd_evaluate)

    p_shell = sub.add_parser("shell", help="interactive chat loop")
    p_shell.add_argument("--bundle", required=True)
    p_shell.set_defaults(func=cmd_shell)

    p_serve = sub.add_parser("serve", help="HTTP chat API")
    p_serve.add_argument("--bundle", required=True)
    p_serve.add_argument("--bind", default="127.0.0.1:5005")
    p_serve.add_argument("--static", default=None, help="optional UI directory to mount at /")
    p_serve.set_defaults(func=cmd_serve)

    p_data = sub.add_parser("data", help="training-data utilities")
    data_sub = p_data.add_subparsers(dest="data_command", required=True)
    p_validate = data_sub.add_parser("validate", help="parse and cross-check all inputs")
    p_validate.add_argument("--config", required=True)
    p_validate.set_defaults(func=cmd_data_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChatctlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
