// Annotation flow, independent of the DOM: polls for pending queries, holds
// exactly one active query, maps keys to labels and posts them with a retry
// path. The view is an injected set of callbacks so tests can drive the
// controller headlessly.

import { ApiClient } from "./api.js";
import type { LabelValue, StatusView, WireQuery } from "./types.js";

export interface AnnotatorView {
  showQuery(query: WireQuery | null): void;
  showStatus(status: StatusView | null, queueDepth: number): void;
  showSubmitState(state: "idle" | "sending" | "retry"): void;
  flash(message: string): void;
}

export const KEY_LABELS: Record<string, LabelValue> = {
  "0": 0, // left preferred
  "1": 1, // right preferred
  "2": 0.5, // tie
};

export class AnnotatorController {
  private queue: WireQuery[] = [];
  private active: WireQuery | null = null;
  private sending = false;
  private pendingRetry: { id: string; v: LabelValue } | null = null;

  constructor(private readonly api: ApiClient, private readonly view: AnnotatorView) {}

  get activeQuery(): WireQuery | null {
    return this.active;
  }

  get queueDepth(): number {
    return this.queue.length + (this.active ? 1 : 0);
  }

  async poll(): Promise<void> {
    let status: StatusView | null = null;
    try {
      status = await this.api.status();
    } catch {
      // keep annotating; the strip just goes stale
    }
    try {
      const pending = await this.api.listQueries();
      const activeId = this.active?.id;
      this.queue = pending.filter((q) => q.id !== activeId);
      if (!this.active && this.queue.length > 0) {
        this.advance();
      }
    } catch {
      this.view.flash("service unreachable");
    }
    this.view.showStatus(status, this.queueDepth);
    if (this.pendingRetry) {
      await this.retry();
    }
  }

  private advance(): void {
    this.active = this.queue.shift() ?? null;
    this.view.showQuery(this.active);
  }

  /** Handle a label keypress; returns true when a label was posted. */
  async handleKey(key: string): Promise<boolean> {
    const label = KEY_LABELS[key];
    if (label === undefined) return false;
    if (!this.active) {
      this.view.flash("no query waiting for a label");
      return false;
    }
    if (this.sending) return false;
    return this.submit(this.active.id, label);
  }

  private async submit(id: string, v: LabelValue): Promise<boolean> {
    this.sending = true;
    this.view.showSubmitState("sending");
    try {
      await this.api.submitLabel(id, v);
      this.pendingRetry = null;
      this.advance();
      this.view.showSubmitState("idle");
      return true;
    } catch {
      // keep the query on screen; the label is retried, never dropped
      this.pendingRetry = { id, v };
      this.view.showSubmitState("retry");
      return false;
    } finally {
      this.sending = false;
    }
  }

  async retry(): Promise<boolean> {
    if (!this.pendingRetry || this.sending) return false;
    const { id, v } = this.pendingRetry;
    return this.submit(id, v);
  }
}
