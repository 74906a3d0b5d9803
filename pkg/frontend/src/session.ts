export type Who = "user" | "bot";

export interface TranscriptEntry {
  who: Who;
  text: string;
  timestamp: number;
}

export interface ChatSession {
  senderId: string;
  transcript: TranscriptEntry[];
}

const STORAGE_KEY = "chat_sender_id";

function randomId(): string {
  const crypto = globalThis.crypto;
  if (crypto?.randomUUID) return `web-${crypto.randomUUID()}`;
  return `web-${Math.random().toString(36).slice(2)}${Date.now().toString(36)}`;
}

/** Sender id is random per tab but stable across reloads within the tab
 * (sessionStorage); the transcript is append-only. */
export function newSession(storage: Storage | null = defaultStorage()): ChatSession {
  let senderId = storage?.getItem(STORAGE_KEY) ?? null;
  if (!senderId) {
    senderId = randomId();
    storage?.setItem(STORAGE_KEY, senderId);
  }
  return { senderId, transcript: [] };
}

function defaultStorage(): Storage | null {
  try {
    return globalThis.sessionStorage ?? null;
  } catch {
    return null;
  }
}

export function appendEntry(
  session: ChatSession,
  who: Who,
  text: string,
  now: () => number = Date.now,
): TranscriptEntry {
  const entry: TranscriptEntry = { who, text, timestamp: now() };
  session.transcript.push(entry);
  return entry;
}
