// Test doubles: a fetch stub that replays recorded fixtures and records
// every request body it sees.

import { readFileSync } from "node:fs";
import { join } from "node:path";

export function fixture<T>(name: string): T {
  const path = join(__dirname, "fixtures", `${name}.json`);
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

export class FakeFetch {
  requests: RecordedRequest[] = [];
  private queue: { status: number; body: unknown }[] = [];

  enqueue(body: unknown, status = 200): void {
    this.queue.push({ status, body });
  }

  fn = async (input: string, init?: RequestInit): Promise<Response> => {
    this.requests.push({
      url: input,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : null,
    });
    const next = this.queue.shift();
    if (!next) throw new Error(`no fixture queued for ${input}`);
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { "Content-Type": "application/json" },
    });
  };
}
