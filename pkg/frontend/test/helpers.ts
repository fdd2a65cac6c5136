/** Shared test plumbing: fixture loading and a scripted fetch.
 *
 * The fixtures are real request/response pairs recorded from the service by
 * scripts/make_fixtures.py. `scriptedFetch` replays them in order, failing
 * loudly if the client ever deviates from the recorded contract.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf8")) as T;
}

export interface Exchange {
  method: string;
  path: string;
  request?: unknown;
  status: number;
  response: unknown;
}

/** JSON with recursively sorted object keys, for order-insensitive compares. */
export function stableStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${JSON.stringify(k)}:${stableStringify(v)}`);
    return `{${entries.join(",")}}`;
  }
  return JSON.stringify(value);
}

export interface ScriptedFetch {
  fetchFn: (input: string, init?: RequestInit) => Promise<Response>;
  remaining: () => number;
}

export function scriptedFetch(script: Exchange[]): ScriptedFetch {
  let cursor = 0;
  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const expected = script[cursor];
    if (!expected) {
      throw new Error(`request beyond end of script: ${init?.method ?? "GET"} ${input}`);
    }
    cursor += 1;
    const method = init?.method ?? "GET";
    if (method !== expected.method || input !== expected.path) {
      throw new Error(
        `exchange ${cursor - 1}: got ${method} ${input}, ` +
          `scripted ${expected.method} ${expected.path}`,
      );
    }
    if (expected.request !== undefined) {
      const got = init?.body ? JSON.parse(init.body as string) : undefined;
      if (stableStringify(got) !== stableStringify(expected.request)) {
        throw new Error(
          `exchange ${cursor - 1} body mismatch: got ${stableStringify(got)}, ` +
            `scripted ${stableStringify(expected.request)}`,
        );
      }
    }
    return new Response(JSON.stringify(expected.response), {
      status: expected.status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetchFn, remaining: () => script.length - cursor };
}

/** Count non-overlapping occurrences of `needle` in `haystack`. */
export function countOccurrences(haystack: string, needle: string): number {
  let count = 0;
  let idx = haystack.indexOf(needle);
  while (idx !== -1) {
    count += 1;
    idx = haystack.indexOf(needle, idx + needle.length);
  }
  return count;
}
