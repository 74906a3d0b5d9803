import { ApiClient } from "./api.js";
import {
  DebugPanelState,
  initialDebugState,
  renderDebugPanel,
  toggleDebug,
} from "./debug.js";
import { appendEntry, ChatSession, newSession, Who } from "./session.js";

export interface AppOptions {
  session?: ChatSession;
  lowConfidenceThreshold?: number;
}

export interface App {
  root: HTMLElement;
  session: ChatSession;
  /** Resolves when the in-flight send (if any) has settled. */
  idle(): Promise<void>;
}

function bubble(who: Who | "error" | "divider", text: string): HTMLElement {
  const node = document.createElement("div");
  node.className = `bubble ${who}`;
  node.textContent = text;
  return node;
}

/** Wire the chat UI into `root`: transcript, input row, restart, and the
 * debug sidebar. At most one chat request is in flight at a time; the
 * input is disabled (spinner shown) while waiting and re-enabled on both
 * success and failure. */
export function createApp(root: HTMLElement, client: ApiClient, options: AppOptions = {}): App {
  const session = options.session ?? newSession();
  let debugState: DebugPanelState = initialDebugState(options.lowConfidenceThreshold);
  let inFlight: Promise<void> = Promise.resolve();

  root.innerHTML = `
    <div class="chat-layout">
      <main class="chat-main">
        <header class="chat-header">
          <span class="chat-title">Anna</span>
          <span class="chat-buttons">
            <button type="button" class="restart-button">restart</button>
            <button type="button" class="debug-toggle">debug</button>
          </span>
        </header>
        <div class="transcript" aria-live="polite"></div>
        <form class="composer">
          <input type="text" class="message-input" autocomplete="off"
                 placeholder="Hỏi mình điều gì đó..." />
          <button type="submit" class="send-button" disabled>send</button>
        </form>
      </main>
      <aside class="debug-panel hidden"></aside>
    </div>`;

  const transcript = root.querySelector<HTMLElement>(".transcript")!;
  const form = root.querySelector<HTMLFormElement>(".composer")!;
  const input = root.querySelector<HTMLInputElement>(".message-input")!;
  const sendButton = root.querySelector<HTMLButtonElement>(".send-button")!;
  const restartButton = root.querySelector<HTMLButtonElement>(".restart-button")!;
  const debugButton = root.querySelector<HTMLButtonElement>(".debug-toggle")!;
  const panel = root.querySelector<HTMLElement>(".debug-panel")!;

  function show(who: Who | "error" | "divider", text: string): void {
    if (who === "user" || who === "bot") appendEntry(session, who, text);
    transcript.append(bubble(who, text));
    transcript.scrollTop = transcript.scrollHeight;
  }

  function setBusy(busy: boolean): void {
    input.disabled = busy;
    sendButton.disabled = busy || input.value.trim() === "";
    root.querySelector(".spinner")?.remove();
    if (busy) {
      const spinner = document.createElement("div");
      spinner.className = "spinner";
      spinner.textContent = "...";
      transcript.append(spinner);
    }
  }

  function refreshDebug(): void {
    renderDebugPanel(panel, debugState);
  }

  async function updateDebugFromService(text: string): Promise<void> {
    try {
      const [parse, tracker] = await Promise.all([
        client.parse(text),
        client.tracker(session.senderId),
      ]);
      debugState = { ...debugState, parse, tracker };
    } catch {
      // the chat reply already rendered; a missing debug payload is not an error bubble
    }
    refreshDebug();
  }

  async function send(text: string): Promise<void> {
    show("user", text);
    setBusy(true);
    try {
      const replies = await client.sendMessage(session.senderId, text);
      for (const reply of replies) show("bot", reply.text);
      await updateDebugFromService(text);
    } catch (error) {
      show("error", `Không gửi được tin nhắn: ${(error as Error).message}`);
    } finally {
      setBusy(false);
      input.focus();
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (!text || input.disabled) return;
    input.value = "";
    sendButton.disabled = true;
    inFlight = send(text);
  });

  input.addEventListener("input", () => {
    sendButton.disabled = input.disabled || input.value.trim() === "";
  });

  restartButton.addEventListener("click", () => {
    inFlight = (async () => {
      try {
        await client.restart(session.senderId);
        show("divider", "— conversation restarted —");
        debugState = { ...debugState, parse: null, tracker: null };
        refreshDebug();
      } catch (error) {
        show("error", `Không restart được: ${(error as Error).message}`);
      }
    })();
  });

  debugButton.addEventListener("click", () => {
    debugState = toggleDebug(debugState);
    refreshDebug();
  });

  refreshDebug();
  return {
    root,
    session,
    idle: () => inFlight,
  };
}
