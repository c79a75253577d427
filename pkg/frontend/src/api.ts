// Thin client over the annotation endpoints. The fetch function is injected
// so the controller can be tested without a server.

import type { LabelValue, StatusView, WireQuery } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly base: string = "",
  ) {}

  async listQueries(): Promise<WireQuery[]> {
    const res = await this.fetchFn(`${this.base}/queries`);
    if (!res.ok) throw new Error(`GET /queries -> ${res.status}`);
    return (await res.json()) as WireQuery[];
  }

  async status(): Promise<StatusView> {
    const res = await this.fetchFn(`${this.base}/status`);
    if (!res.ok) throw new Error(`GET /status -> ${res.status}`);
    return (await res.json()) as StatusView;
  }

  async submitLabel(id: string, v: LabelValue): Promise<"accepted" | "already_labeled"> {
    const res = await this.fetchFn(`${this.base}/queries/${encodeURIComponent(id)}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ v }),
    });
    if (!res.ok) throw new Error(`POST label -> ${res.status}`);
    const body = (await res.json()) as { status: "accepted" | "already_labeled" };
    return body.status;
  }
}
