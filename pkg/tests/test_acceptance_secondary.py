"""A11: the live annotation loop, exercised end to end over real HTTP.

Runs only when the browser bundle has been built (frontend/dist), matching
the staging of the secondary component; the primary suite never needs it.
The scripted client plays the annotator: it polls the service and posts the
labels the UI's '0'/'1'/'2' keys would produce, while a fallback-labeled
training run consumes them without stalling.
"""

import socket
import threading
import time
from pathlib import Path

import pytest

httpx = pytest.importorskip("httpx")

from prefhrl.config import TrainConfig
from prefhrl.envs import make_env
from prefhrl.service import AnnotationBridge
from prefhrl.service.app import serve_in_thread
from prefhrl.trainer import Trainer

FRONTEND_DIST = Path(__file__).resolve().parents[1] / "frontend" / "dist"

pytestmark = pytest.mark.skipif(
    not FRONTEND_DIST.is_dir(),
    reason="secondary component not built (frontend/dist missing)",
)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class ScriptedAnnotator(threading.Thread):
    """Posts labels cycling 0 / 1 / 0.5 — the payloads of keys '0', '1', '2'."""

    def __init__(self, base_url: str):
        super().__init__(daemon=True)
        self.base_url = base_url
        self.posted: list[tuple[str, float]] = []
        self.stop_flag = threading.Event()

    def run(self):
        cycle = [0.0, 1.0, 0.5]
        with httpx.Client(base_url=self.base_url, timeout=5.0) as client:
            while not self.stop_flag.is_set():
                try:
                    pending = client.get("/queries").json()
                except httpx.HTTPError:
                    time.sleep(0.05)
                    continue
                for query in pending:
                    v = cycle[len(self.posted) % 3]
                    res = client.post(f"/queries/{query['id']}/label", json={"v": v})
                    if res.status_code == 200 and res.json()["status"] == "accepted":
                        self.posted.append((query["id"], v))
                time.sleep(0.05)


def test_a11_ui_loop_and_smoke_run(tmp_path):
    port = free_port()
    env = make_env("four-rooms")
    bridge = AnnotationBridge(
        spool_path=str(tmp_path / "spool.jsonl"),
        env_geometry=env.geometry(), env_kind="four-rooms",
    )
    server, _ = serve_in_thread(bridge, port, ui_dir=FRONTEND_DIST)
    base_url = f"http://127.0.0.1:{port}"
    with httpx.Client(base_url=base_url, timeout=5.0) as probe:
        for _ in range(100):
            try:
                if probe.get("/status").status_code == 200:
                    break
            except httpx.HTTPError:
                pass
            time.sleep(0.05)
        else:
            pytest.fail("annotation service did not come up")
        # the built UI bundle is served
        assert probe.get("/ui/").status_code == 200

    annotator = ScriptedAnnotator(base_url)
    annotator.start()
    cfg = TrainConfig(
        env="four-rooms", seed=5, episodes=200, labeler="fallback",
        label_timeout_s=20.0,
        eval_rollouts=2, high_updates=2, low_updates=2,
        high_hidden_size=16, high_hidden_layers=1, high_batch_size=32,
        low_hidden_size=16, low_hidden_layers=1, low_batch_size=64,
        rnd_hidden_size=16, rnd_hidden_layers=1, rnd_represent_size=8,
        reward_hidden_size=16, reward_hidden_layers=1, reward_batch_size=32,
        reward_epochs=2, distance_hidden_size=16, distance_hidden_layers=1,
        distance_batch_size=32, distance_steps=1,
        query_frequency=20, batch_queries=5, eval_frequency=100, eval_episodes=3,
        out_dir=str(tmp_path / "run"),
    ).validate()
    trainer = Trainer(cfg, bridge=bridge)
    start = time.perf_counter()
    trainer.run()
    wall = time.perf_counter() - start
    annotator.stop_flag.set()
    annotator.join(timeout=2)
    server.should_exit = True

    posted = len(annotator.posted)
    drained = len(trainer.pref_buffer)
    pending_left = bridge.status()["pending"]
    ok = (trainer.episode == 200 and posted > 0 and drained > 0
          and pending_left == 0)
    print(f"\nA11 {'PASS' if ok else 'FAIL'}: 200-episode fallback run finished in "
          f"{wall:.0f}s; {posted} labels posted over HTTP, {drained} records in the "
          f"preference buffer, {pending_left} queries left pending")
    assert ok
