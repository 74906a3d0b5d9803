import { readFileSync } from "node:fs";
import { join } from "node:path";

import type { FetchLike } from "../src/api.js";

/** Raw bytes of a recorded service response (committed fixtures). The test
 * runner's cwd is the frontend project root. */
export function fixtureText(name: string): string {
  return readFileSync(join(process.cwd(), "test", "fixtures", name), "utf-8");
}

export function fixture<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: string | null;
}

export interface FakeService {
  fetch: FetchLike;
  calls: RecordedCall[];
}

/** Route map like {"POST /webhooks/chat": "chat_greeting.json"}; values may
 * also be functions returning a Response for custom behavior. */
export function fakeService(
  routes: Record<string, string | (() => Response | Promise<Response>)>,
): FakeService {
  const calls: RecordedCall[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    calls.push({ url, method, body: (init?.body as string) ?? null });
    const path = url.replace(/^https?:\/\/[^/]+/, "").split("?")[0];
    const handler = routes[`${method} ${path}`];
    if (handler === undefined) {
      return new Response(JSON.stringify({ error: `no route ${method} ${path}` }), {
        status: 404,
        headers: { "Content-Type": "application/json" },
      });
    }
    if (typeof handler === "string") {
      return new Response(fixtureText(handler), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }
    return handler();
  };
  return { fetch: fetchImpl, calls };
}

export function deferred<T>() {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

export function memoryStorage(): Storage {
  const store = new Map<string, string>();
  return {
    get length() {
      return store.size;
    },
    clear: () => store.clear(),
    getItem: (key) => store.get(key) ?? null,
    key: (index) => [...store.keys()][index] ?? null,
    removeItem: (key) => void store.delete(key),
    setItem: (key, value) => void store.set(key, String(value)),
  } as Storage;
}
