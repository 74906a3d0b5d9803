import type { ChatReply, HealthPayload, ParsePayload, TrackerView } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Resolve the service origin: an injected global wins, then a stored
 * setting, then same-origin (the engine's static mount). */
export function apiBase(): string {
  const injected = (globalThis as { CHAT_API_BASE?: string }).CHAT_API_BASE;
  if (typeof injected === "string") return injected.replace(/\/$/, "");
  try {
    const stored = globalThis.localStorage?.getItem("chat_api_base");
    if (stored) return stored.replace(/\/$/, "");
  } catch {
    /* storage unavailable (e.g. file://) */
  }
  return "";
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status?: number,
  ) {
    super(message);
  }
}

/** Thin typed client over the documented endpoints. */
export class ApiClient {
  constructor(
    private readonly base: string = apiBase(),
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (error) {
      throw new ApiError(`cannot reach the chat service: ${String(error)}`);
    }
    if (!response.ok) {
      throw new ApiError(`service answered ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }

  sendMessage(sender: string, message: string): Promise<ChatReply[]> {
    return this.request<ChatReply[]>("/webhooks/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sender, message }),
    });
  }

  parse(text: string): Promise<ParsePayload> {
    return this.request<ParsePayload>(`/model/parse?q=${encodeURIComponent(text)}`);
  }

  restart(sender: string): Promise<{ status: string }> {
    return this.request<{ status: string }>(
      `/conversations/${encodeURIComponent(sender)}/restart`,
      { method: "POST" },
    );
  }

  tracker(sender: string): Promise<TrackerView> {
    return this.request<TrackerView>(`/conversations/${encodeURIComponent(sender)}/tracker`);
  }

  health(): Promise<HealthPayload> {
    return this.request<HealthPayload>("/health");
  }
}
