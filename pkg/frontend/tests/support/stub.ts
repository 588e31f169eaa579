/** A scriptable fetch stub for unit-testing the API client and views. */

import type { FetchLike } from "../../src/api.js";

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

export type Route = (call: RecordedCall) => Response | Promise<Response>;

export function jsonResponse(payload: unknown, status = 200): Response {
  if (status === 204) return new Response(null, { status });
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FetchStub {
  calls: RecordedCall[] = [];
  private routes: Array<{ method: string; path: string; route: Route }> = [];

  on(method: string, path: string, route: Route | unknown, status = 200): this {
    const handler: Route =
      typeof route === "function"
        ? (route as Route)
        : () => jsonResponse(route, status);
    this.routes.push({ method, path, route: handler });
    return this;
  }

  get fetch(): FetchLike {
    return async (url, init) => {
      const headers = Object.fromEntries(
        Object.entries((init?.headers as Record<string, string>) ?? {}),
      );
      const call: RecordedCall = {
        url,
        method: init?.method ?? "GET",
        headers,
        body: init?.body ? JSON.parse(init.body as string) : undefined,
      };
      this.calls.push(call);
      // Later registrations win, so tests can reroute mid-flight.
      for (const { method, path, route } of [...this.routes].reverse()) {
        if (method === call.method && url === path) {
          return route(call);
        }
      }
      return jsonResponse({ error: `no stub for ${call.method} ${url}` }, 404);
    };
  }
}
