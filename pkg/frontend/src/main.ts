// Browser bootstrap: wires the controller to the canvas, keyboard, buttons
// and the 1s polling loop.

import { ApiClient } from "./api.js";
import { AnnotatorController, KEY_LABELS } from "./controller.js";
import { buildScene, paint } from "./render.js";
import type { StatusView, WireQuery } from "./types.js";

const POLL_INTERVAL_MS = 1000;

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function start(): void {
  const canvas = element<HTMLCanvasElement>("arena");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  const statusStrip = element<HTMLElement>("status");
  const queryInfo = element<HTMLElement>("query-info");
  const submitState = element<HTMLElement>("submit-state");
  const toast = element<HTMLElement>("toast");
  let toastTimer: number | undefined;

  const view = {
    showQuery(query: WireQuery | null): void {
      if (!query) {
        ctx.clearRect(0, 0, canvas.width, canvas.height);
        ctx.fillStyle = "#fafafa";
        ctx.fillRect(0, 0, canvas.width, canvas.height);
        queryInfo.textContent = "no pending queries";
        return;
      }
      try {
        paint(ctx, buildScene(query, canvas.width, canvas.height), canvas.width, canvas.height);
        queryInfo.textContent =
          `query ${query.id} (episode ${query.created_episode}) — ` +
          `hollow blue: option 0, solid orange: option 1`;
      } catch {
        queryInfo.textContent =
          `query ${query.id}: geometry unavailable — left ${JSON.stringify(query.left)} ` +
          `right ${JSON.stringify(query.right)}`;
      }
    },
    showStatus(status: StatusView | null, queueDepth: number): void {
      if (!status) {
        statusStrip.textContent = `queue ${queueDepth} | trainer status unavailable`;
        return;
      }
      statusStrip.textContent =
        `queue ${queueDepth} | episode ${status.episode} | k ${status.k.toFixed(2)} | ` +
        `subgoal success ${(status.subgoal_success_rate * 100).toFixed(0)}% | ` +
        `labels ${status.labels_total}`;
    },
    showSubmitState(state: "idle" | "sending" | "retry"): void {
      submitState.textContent =
        state === "idle" ? "" : state === "sending" ? "sending…" : "label not delivered — retrying";
      submitState.className = state;
    },
    flash(message: string): void {
      toast.textContent = message;
      toast.classList.add("visible");
      window.clearTimeout(toastTimer);
      toastTimer = window.setTimeout(() => toast.classList.remove("visible"), 1500);
    },
  };

  const controller = new AnnotatorController(new ApiClient(fetch.bind(window)), view);

  document.addEventListener("keydown", (event) => {
    if (event.key in KEY_LABELS) {
      void controller.handleKey(event.key);
    }
  });
  for (const [buttonId, key] of [["prefer-left", "0"], ["prefer-right", "1"], ["tie", "2"]] as const) {
    element<HTMLButtonElement>(buttonId).addEventListener("click", () => {
      void controller.handleKey(key);
    });
  }

  void controller.poll();
  window.setInterval(() => void controller.poll(), POLL_INTERVAL_MS);
}

document.addEventListener("DOMContentLoaded", start);
