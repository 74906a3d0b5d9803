"""Next-action policy: a single-layer LSTM over binary tracker states.

Tracker snapshots featurize into a binary vector with four blocks (current
intent one-hot, entities present, slots set, previous action one-hot) laid
out in the domain's lexicographic order. Stories replay into fixed-length
windows of the most recent states; the LSTM reads a window and emits a
softmax over actions. Training is full-batch gradient descent with
backtracking halving and gradient-norm clipping, in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import BotAction, DomainSpec, Story, UserTurn
from .errors import EngineError, TrainingError
from .knn import regex_normalize
from .tracker import (
    ACTION_LISTEN,
    ACTION_RESTART,
    ActionExecuted,
    ConversationTracker,
    Restarted,
    SlotSet,
    UserMessage,
)

PARAM_KEYS = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g", "w_out", "b_out")


def featurize_tracker(tracker: ConversationTracker, domain: DomainSpec) -> np.ndarray:
    """Binary state vector; a fresh tracker featurizes to all zeros."""
    vec = np.zeros(domain.state_size)
    offset = 0
    if tracker.current_intent is not None:
        if tracker.current_intent not in domain.intents:
            raise EngineError(f"unknown intent {tracker.current_intent!r}")
        vec[domain.intents.index(tracker.current_intent)] = 1.0
    offset += len(domain.intents)
    for name in tracker.current_entities:
        if name not in domain.entity_names:
            raise EngineError(f"unknown entity {name!r}")
        vec[offset + domain.entity_names.index(name)] = 1.0
    offset += len(domain.entity_names)
    for slot, value in tracker.slots.items():
        if value is not None:
            vec[offset + domain.slot_names.index(slot)] = 1.0
    offset += len(domain.slot_names)
    if tracker.last_action is not None:
        if tracker.last_action not in domain.actions:
            raise EngineError(f"unknown action {tracker.last_action!r}")
        vec[offset + domain.actions.index(tracker.last_action)] = 1.0
    return vec


def pad_window(states: list[np.ndarray], max_history: int, state_size: int) -> np.ndarray:
    """Left-pad the most recent states with zero vectors to a fixed window."""
    recent = states[-max_history:]
    window = np.zeros((max_history, state_size))
    if recent:
        window[max_history - len(recent) :] = np.stack(recent)
    return window


def apply_story_turn(tracker: ConversationTracker, turn: UserTurn) -> None:
    """Drive a tracker with a story turn, bypassing NLU."""
    entities = tuple(
        {"entity": name, "raw_value": value, "value": value, "matched": True}
        for name, value in sorted(turn.entity_assignments.items())
    )
    tracker.apply(UserMessage(text="", intent=turn.intent_name, confidence=1.0, entities=entities))
    for name, value in sorted(turn.entity_assignments.items()):
        tracker.apply(SlotSet(name, regex_normalize(value)))


def apply_story_action(tracker: ConversationTracker, name: str, history: list[np.ndarray]) -> None:
    tracker.apply(ActionExecuted(name))
    if name == ACTION_RESTART:
        tracker.apply(Restarted())
        history.clear()


def stories_to_sequences(
    stories: list[Story], domain: DomainSpec, max_history: int = 5
) -> list[tuple[np.ndarray, int]]:
    """One training example per bot action: the window of the most recent
    tracker states (left zero-padded) paired with the action's index.

    After each turn's final explicit action the policy is also taught to
    listen, except when the turn ends in a restart (which already returns
    control to the user).
    """
    examples: list[tuple[np.ndarray, int]] = []
    for story in stories:
        tracker = ConversationTracker(sender_id=f"story:{story.name}", slot_names=domain.slot_names)
        history: list[np.ndarray] = []

        def emit(action_name: str):
            if action_name not in domain.actions:
                raise EngineError(
                    f"story {story.name!r} uses out-of-domain action {action_name!r}"
                )
            history.append(featurize_tracker(tracker, domain))
            window = pad_window(history, max_history, domain.state_size)
            examples.append((window, domain.action_index(action_name)))
            apply_story_action(tracker, action_name, history)

        steps = list(story.steps)
        for i, step in enumerate(steps):
            if isinstance(step, UserTurn):
                apply_story_turn(tracker, step)
            else:
                emit(step.action_name)
                next_is_action = i + 1 < len(steps) and isinstance(steps[i + 1], BotAction)
                if not next_is_action and step.action_name != ACTION_RESTART:
                    emit(ACTION_LISTEN)
    return examples


@dataclass
class PolicyModel:
    hidden_size: int
    max_history: int
    state_size: int
    actions: tuple[str, ...]
    domain_fingerprint: str
    params: dict[str, np.ndarray]

    def param_items(self):
        return [(key, self.params[key]) for key in PARAM_KEYS]


@dataclass(frozen=True)
class TrainingTrace:
    losses: tuple[float, ...]
    accuracies: tuple[float, ...]


def _init_params(state_size: int, hidden: int, n_actions: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    gate_scale = 1.0 / np.sqrt(state_size + hidden)
    params: dict[str, np.ndarray] = {}
    for key in ("w_i", "w_f", "w_o", "w_g"):
        params[key] = rng.normal(0.0, gate_scale, size=(hidden, state_size + hidden))
    for key in ("b_i", "b_o", "b_g"):
        params[key] = np.zeros(hidden)
    params["b_f"] = np.ones(hidden)  # open forget gates help early memorization
    params["w_out"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(n_actions, hidden))
    params["b_out"] = np.zeros(n_actions)
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(params: dict[str, np.ndarray], inputs: np.ndarray):
    """inputs: (N, T, D). Returns (logits, caches) with caches per timestep."""
    n, steps, _ = inputs.shape
    hidden = params["b_i"].shape[0]
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    caches = []
    for t in range(steps):
        z = np.concatenate([inputs[:, t, :], h], axis=1)
        gate_i = _sigmoid(z @ params["w_i"].T + params["b_i"])
        gate_f = _sigmoid(z @ params["w_f"].T + params["b_f"])
        gate_o = _sigmoid(z @ params["w_o"].T + params["b_o"])
        cand = np.tanh(z @ params["w_g"].T + params["b_g"])
        c_new = gate_f * c + gate_i * cand
        tanh_c = np.tanh(c_new)
        caches.append((z, gate_i, gate_f, gate_o, cand, c, tanh_c))
        h = gate_o * tanh_c
        c = c_new
    logits = h @ params["w_out"].T + params["b_out"]
    return logits, h, caches


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def loss_and_gradients(
    params: dict[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    reduction: str = "mean",
):
    """Cross-entropy loss and full BPTT gradients for every parameter."""
    n, steps, dim = inputs.shape
    logits, h_final, caches = _forward(params, inputs)
    probs = _softmax(logits)
    picked = probs[np.arange(n), targets]
    loss = -np.log(np.maximum(picked, 1e-300)).sum()
    scale = 1.0 / n if reduction == "mean" else 1.0
    loss *= scale

    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits *= scale

    grads = {key: np.zeros_like(value) for key, value in params.items()}
    grads["w_out"] = dlogits.T @ h_final
    grads["b_out"] = dlogits.sum(axis=0)
    dh = dlogits @ params["w_out"]
    dc = np.zeros_like(h_final)
    for t in range(steps - 1, -1, -1):
        z, gate_i, gate_f, gate_o, cand, c_prev, tanh_c = caches[t]
        d_o = dh * tanh_c
        dc = dc + dh * gate_o * (1.0 - tanh_c**2)
        d_i = dc * cand
        d_g = dc * gate_i
        d_f = dc * c_prev
        dc_prev = dc * gate_f
        da_i = d_i * gate_i * (1.0 - gate_i)
        da_f = d_f * gate_f * (1.0 - gate_f)
        da_o = d_o * gate_o * (1.0 - gate_o)
        da_g = d_g * (1.0 - cand**2)
        grads["w_i"] += da_i.T @ z
        grads["w_f"] += da_f.T @ z
        grads["w_o"] += da_o.T @ z
        grads["w_g"] += da_g.T @ z
        grads["b_i"] += da_i.sum(axis=0)
        grads["b_f"] += da_f.sum(axis=0)
        grads["b_o"] += da_o.sum(axis=0)
        grads["b_g"] += da_g.sum(axis=0)
        dz = da_i @ params["w_i"] + da_f @ params["w_f"] + da_o @ params["w_o"] + da_g @ params["w_g"]
        dh = dz[:, dim:]
        dc = dc_prev
    return float(loss), grads


def _clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {key: g * factor for key, g in grads.items()}


def train_policy(
    sequences: list[tuple[np.ndarray, int]],
    domain: DomainSpec,
    epochs: int = 500,
    learning_rate: float = 0.05,
    seed: int = 0,
    hidden_size: int = 32,
    max_history: int = 5,
    clip_norm: float = 5.0,
) -> tuple[PolicyModel, TrainingTrace]:
    """Full-batch BPTT; each epoch's step is backtracked (halved) until the
    loss strictly decreases, so the loss trace is monotone."""
    if not sequences:
        raise TrainingError("no training sequences")
    inputs = np.stack([window for window, _ in sequences])
    targets = np.array([target for _, target in sequences], dtype=np.intp)
    state_size = inputs.shape[2]
    if state_size != domain.state_size:
        raise TrainingError("sequence width does not match the domain")

    params = _init_params(state_size, hidden_size, len(domain.actions), seed)
    losses: list[float] = []
    accuracies: list[float] = []
    lr = learning_rate
    loss, grads = loss_and_gradients(params, inputs, targets)
    for _ in range(epochs):
        clipped = _clip_gradients(grads, clip_norm)
        accepted = False
        while lr > 1e-12:
            candidate = {key: params[key] - lr * clipped[key] for key in params}
            new_loss, new_grads = loss_and_gradients(candidate, inputs, targets)
            if new_loss < loss:
                params, loss, grads = candidate, new_loss, new_grads
                lr = min(lr * 1.2, 1.0)
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        logits, _, _ = _forward(params, inputs)
        accuracy = float((logits.argmax(axis=1) == targets).mean())
        losses.append(loss)
        accuracies.append(accuracy)
        if accuracy == 1.0 and loss < 5e-3:
            break

    model = PolicyModel(
        hidden_size=hidden_size,
        max_history=max_history,
        state_size=state_size,
        actions=domain.actions,
        domain_fingerprint=domain.fingerprint(),
        params=params,
    )
    return model, TrainingTrace(losses=tuple(losses), accuracies=tuple(accuracies))


def predict_action(model: PolicyModel, recent_states: list[np.ndarray]) -> np.ndarray:
    """Softmax distribution over actions given the most recent tracker
    states. Only the last max_history states matter; shorter histories are
    left zero-padded."""
    for state in recent_states:
        if state.shape != (model.state_size,):
            raise EngineError(
                f"state has shape {state.shape}, policy expects ({model.state_size},)"
            )
    window = pad_window(list(recent_states), model.max_history, model.state_size)
    logits, _, _ = _forward(model.params, window[None, :, :])
    return _softmax(logits)[0]


def policy_gradient_check(model: PolicyModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Max relative error between analytic BPTT partials and central finite
    differences (h = 1e-5) over every parameter, using sum reduction."""
    step = 1e-5
    _, grads = loss_and_gradients(model.params, inputs, targets, reduction="sum")
    worst = 0.0
    for key in PARAM_KEYS:
        param = model.params[key]
        flat = param.ravel()
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            plus, _ = loss_and_gradients(model.params, inputs, targets, reduction="sum")
            flat[idx] = original - step
            minus, _ = loss_and_gradients(model.params, inputs, targets, reduction="sum")
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            analytic = grads[key].ravel()[idx]
            denom = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst
