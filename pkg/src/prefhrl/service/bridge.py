"""Shared state between the trainer thread and the annotation service.

The bridge holds the pending query set, an outbox of submitted labels and a
training-status snapshot.  The trainer is the only producer of queries and
the only consumer of labels; the HTTP handlers are the only producer of
labels and only read queries — one lock covers both directions.  Every query
and label is also appended to a JSONL spool file, so restarting the service
process does not lose pending queries.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

import numpy as np

VALID_LABELS = (0.0, 0.5, 1.0)


class AnnotationBridge:
    def __init__(self, spool_path: Optional[str] = None, env_geometry: Optional[dict] = None,
                 env_kind: str = ""):
        self._lock = threading.Lock()
        self._pending: dict[str, dict] = {}
        self._labeled: dict[str, float] = {}
        self._label_outbox: list[tuple[str, float]] = []
        self._status = {
            "episode": 0, "k": 0.0, "alpha": 0.0,
            "subgoal_success_rate": 0.0, "labels_total": 0,
        }
        self.env_kind = env_kind
        self.env_geometry = env_geometry or {}
        self._spool = Path(spool_path) if spool_path else None
        if self._spool and self._spool.exists():
            self._replay_spool()

    # ------------------------------------------------------------- trainer API

    def publish(self, queries) -> None:
        """Expose query pairs to annotators (trainer side)."""
        with self._lock:
            for q in queries:
                wire = {
                    "id": q.id,
                    "env": self.env_kind,
                    "left": {"state": _as_list(q.left_state),
                             "subgoal": _as_list(q.left_subgoal)},
                    "right": {"state": _as_list(q.right_state),
                              "subgoal": _as_list(q.right_subgoal)},
                    "goal": _as_list(q.g_env),
                    "geometry": self.env_geometry,
                    "created_episode": q.created_episode,
                }
                self._pending[q.id] = wire
                self._append_spool({"kind": "query", "query": wire})

    def drain_labels(self) -> list[tuple[str, float]]:
        """Hand all freshly submitted (query_id, v) labels to the trainer."""
        with self._lock:
            out = self._label_outbox
            self._label_outbox = []
            return out

    def retract(self, query_id: str) -> None:
        """Withdraw an expired query so annotators stop seeing it."""
        with self._lock:
            self._pending.pop(query_id, None)
            self._append_spool({"kind": "retract", "id": query_id})

    def update_status(self, **fields) -> None:
        with self._lock:
            self._status.update(fields)

    # ------------------------------------------------------------- service API

    def pending_queries(self) -> list[dict]:
        with self._lock:
            return list(self._pending.values())

    def get_query(self, query_id: str) -> Optional[dict]:
        with self._lock:
            return self._pending.get(query_id)

    def submit_label(self, query_id: str, v: float) -> str:
        """Record a label; duplicates acknowledge without overwriting (first wins).

        Returns "accepted", "already_labeled" or raises KeyError for unknown ids.
        """
        if v not in VALID_LABELS:
            raise ValueError(f"label {v} not in {VALID_LABELS}")
        with self._lock:
            if query_id in self._labeled:
                return "already_labeled"
            if query_id not in self._pending:
                raise KeyError(query_id)
            del self._pending[query_id]
            self._labeled[query_id] = v
            self._label_outbox.append((query_id, v))
            self._append_spool({"kind": "label", "id": query_id, "v": v})
            return "accepted"

    def status(self) -> dict:
        with self._lock:
            return {**self._status, "pending": len(self._pending)}

    # ------------------------------------------------------------------ spool

    def _append_spool(self, record: dict) -> None:
        if self._spool is None:
            return
        with self._spool.open("a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _replay_spool(self) -> None:
        for line in self._spool.read_text().splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if record["kind"] == "query":
                self._pending[record["query"]["id"]] = record["query"]
            elif record["kind"] == "label":
                self._pending.pop(record["id"], None)
                self._labeled[record["id"]] = record["v"]
            elif record["kind"] == "retract":
                self._pending.pop(record["id"], None)


def _as_list(value) -> list[float]:
    return [float(x) for x in np.asarray(value).ravel()]
