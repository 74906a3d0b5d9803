import type { ParsePayload, TrackerView } from "./types.js";

export interface DebugPanelState {
  visible: boolean;
  parse: ParsePayload | null;
  tracker: TrackerView | null;
  lowConfidenceThreshold: number;
}

export function initialDebugState(threshold = 0.3): DebugPanelState {
  return { visible: false, parse: null, tracker: null, lowConfidenceThreshold: threshold };
}

export function toggleDebug(state: DebugPanelState): DebugPanelState {
  return { ...state, visible: !state.visible };
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Rebuild the sidebar. Every confidence, entity, and action string comes
 * verbatim from a service payload; the panel formats nothing itself. */
export function renderDebugPanel(container: HTMLElement, state: DebugPanelState): void {
  container.classList.toggle("hidden", !state.visible);
  container.textContent = "";
  if (!state.parse && !state.tracker) {
    container.append(el("p", "debug-empty", "No parse yet. Send a message first."));
    return;
  }

  if (state.parse) {
    const ranking = state.parse.intent_ranking;
    const top = ranking[0];
    if (top && top.confidence < state.lowConfidenceThreshold) {
      container.append(
        el(
          "div",
          "low-confidence-warning",
          `low confidence: ${String(top.confidence)}`,
        ),
      );
    }
    const intents = el("section", "debug-intents");
    intents.append(el("h3", "debug-heading", "intent ranking"));
    for (const row of ranking) {
      const line = el("div", "intent-row");
      const bar = el("div", "intent-bar");
      bar.style.width = `${Math.round(row.confidence * 100)}%`;
      line.append(
        el("span", "intent-name", row.name),
        bar,
        el("span", "intent-confidence", String(row.confidence)),
      );
      intents.append(line);
    }
    container.append(intents);

    const entities = el("section", "debug-entities");
    entities.append(el("h3", "debug-heading", "entities (raw -> normalized)"));
    if (state.parse.entities.length === 0) {
      entities.append(el("p", "debug-none", "none"));
    }
    for (const entity of state.parse.entities) {
      const line = el("div", "entity-row");
      line.append(
        el("span", "entity-name", entity.entity),
        el("span", "entity-raw", entity.raw_value),
        el("span", "entity-arrow", "->"),
        el("span", "entity-value", entity.value),
      );
      entities.append(line);
    }
    container.append(entities);
  }

  if (state.tracker) {
    const slots = el("section", "debug-slots");
    slots.append(el("h3", "debug-heading", "slots"));
    const names = Object.keys(state.tracker.slots).sort();
    for (const name of names) {
      const value = state.tracker.slots[name];
      const line = el("div", "slot-row");
      line.append(
        el("span", "slot-name", name),
        el("span", value === null ? "slot-empty" : "slot-value", value ?? "(empty)"),
      );
      slots.append(line);
    }
    container.append(slots);

    const chain = el("section", "debug-actions");
    chain.append(el("h3", "debug-heading", "action chain"));
    const list = el("div", "action-chain");
    for (const action of state.tracker.last_action_chain) {
      list.append(el("span", "action-chip", action));
    }
    if (state.tracker.last_action_chain.length === 0) {
      list.append(el("span", "debug-none", "none"));
    }
    chain.append(list);
    container.append(chain);
  }
}
