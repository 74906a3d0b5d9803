#!/usr/bin/env python3
"""Train on the bundled corpus, replay the stories, and hold a short scripted
conversation. A quick end-to-end sanity run:

    python scripts/run_pipeline.py [config]
"""

import sys
import time
from pathlib import Path

from chatctl.config import load_config
from chatctl.engine import request_seed
from chatctl.evaluate import eval_stories
from chatctl.pipeline import make_engine, train_pipeline

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "data" / "config.toml"

SCRIPTED_TURNS = [
    "xin chào",
    "bạn là ai",
    "học phần là cái gì",
    "hoc phan la cai gi",
    "khou hoc may tinh la gi",
    "thư viện nằm ở chỗ nào",
    "xong",
    "tạm biệt",
]


def main() -> int:
    config_path = sys.argv[1] if len(sys.argv) > 1 else str(DEFAULT_CONFIG)
    config = load_config(config_path)

    start = time.perf_counter()
    artifacts = train_pipeline(config)
    print(f"trained in {time.perf_counter() - start:.1f}s")
    if artifacts.grid_result:
        print(f"  best C: {artifacts.grid_result.best_c:g}")
    print(f"  CRF objective: {artifacts.entity_model.objective_trace[-1]:.3f}")
    print(
        f"  policy: {len(artifacts.policy_trace.losses)} epochs, "
        f"loss {artifacts.policy_trace.losses[-1]:.5f}"
    )

    engine = make_engine(artifacts)
    result = eval_stories(engine, list(artifacts.stories))
    print(
        f"story replay: {result.story_accuracy:.1f}% stories, "
        f"{result.action_accuracy:.1f}% actions"
    )

    tracker = engine.new_tracker("demo")
    for text in SCRIPTED_TURNS:
        seed = request_seed(config.seed, "demo", tracker.message_count)
        print(f"\nyou> {text}")
        for response in engine.handle_message(tracker, text, seed):
            print(f"bot> {response.text}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
