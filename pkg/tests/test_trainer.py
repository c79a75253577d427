import numpy as np
import pytest

from prefhrl.checkpoint import CheckpointError, load, pack, save, unpack
from prefhrl.config import TrainConfig, config_to_text, load_config
from prefhrl.trainer import (
    Trainer,
    export_heatmaps,
    load_checkpoint,
    run_training,
    save_checkpoint,
)


def small_cfg(tmp_path, **overrides) -> TrainConfig:
    base = dict(
        env="four-rooms", seed=3, episodes=8, labeler="oracle",
        eval_rollouts=2, high_updates=2, low_updates=2,
        high_hidden_size=16, high_hidden_layers=1, high_batch_size=32,
        low_hidden_size=16, low_hidden_layers=1, low_batch_size=64,
        rnd_hidden_size=16, rnd_hidden_layers=1, rnd_represent_size=8,
        reward_hidden_size=16, reward_hidden_layers=1, reward_batch_size=32,
        reward_epochs=2, distance_hidden_size=16, distance_hidden_layers=1,
        distance_batch_size=32, distance_steps=1,
        query_frequency=3, batch_queries=4, eval_frequency=4, eval_episodes=3,
        near_policy_episodes=5, out_dir=str(tmp_path / "run"),
    )
    base.update(overrides)
    return TrainConfig(**base).validate()


class TestConfig:
    def test_round_trip_through_file(self, tmp_path):
        cfg = small_cfg(tmp_path, seed=17)
        path = tmp_path / "run.cfg"
        path.write_text(config_to_text(cfg))
        loaded = load_config(path)
        assert loaded == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("episodes = 10\nwarp_speed = 9\n")
        with pytest.raises(ValueError, match="warp_speed"):
            load_config(path)

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "ok.cfg"
        path.write_text("# header\n\nseed = 5  # trailing\nepisodes = 2\n")
        cfg = load_config(path)
        assert cfg.seed == 5 and cfg.episodes == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(env="atari").validate()
        with pytest.raises(ValueError):
            TrainConfig(episodes=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(hindsight_ratio=1.5).validate()


class TestCheckpointContainer:
    def test_round_trip(self):
        meta = {"a": 1, "nested": {"b": [1, 2]}}
        entries = {
            "arr": np.arange(12, dtype=np.float64).reshape(3, 4),
            "ints": np.array([3, 1, 2]),
            "blob": b"\x00\x01binary",
            "scalar": np.float64(7.5),
        }
        meta2, entries2 = unpack(pack(meta, entries))
        assert meta2 == meta
        assert np.array_equal(entries2["arr"], entries["arr"])
        assert entries2["ints"].dtype.kind == "i"
        assert entries2["blob"] == entries["blob"]

    def test_truncation_and_magic_errors(self):
        blob = pack({"x": 1}, {"a": np.zeros(4)})
        with pytest.raises(CheckpointError):
            unpack(blob[:-3])
        with pytest.raises(CheckpointError):
            unpack(b"NOTMAGIC" + blob[8:])
        with pytest.raises(CheckpointError):
            unpack(blob + b"extra")

    def test_save_load_save_is_bit_identical(self, tmp_path):
        meta = {"seed": 1}
        entries = {"p": np.random.default_rng(0).normal(size=100)}
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save(p1, meta, entries)
        m, e = load(p1)
        save(p2, m, e)
        assert p1.read_bytes() == p2.read_bytes()


class TestTrainingLoop:
    def test_smoke_run_produces_metrics(self, tmp_path):
        cfg = small_cfg(tmp_path)
        trainer, metrics = run_training(cfg)
        assert len(metrics.rows) == cfg.episodes
        assert (tmp_path / "run" / "metrics.csv").exists()
        assert (tmp_path / "run" / "checkpoint_final.bin").exists()
        assert (tmp_path / "run" / "summary.json").exists()
        assert trainer.labels_total > 0
        # the curriculum is probed and adjusted once per episode
        assert len(metrics.adjustment_events) == cfg.episodes

    def test_identical_seeds_identical_csv(self, tmp_path):
        cfg_a = small_cfg(tmp_path, out_dir=str(tmp_path / "a"))
        cfg_b = small_cfg(tmp_path, out_dir=str(tmp_path / "b"))
        run_training(cfg_a)
        run_training(cfg_b)
        csv_a = (tmp_path / "a" / "metrics.csv").read_text()
        csv_b = (tmp_path / "b" / "metrics.csv").read_text()
        assert csv_a == csv_b

    def test_different_seed_changes_course(self, tmp_path):
        cfg_a = small_cfg(tmp_path, out_dir=str(tmp_path / "a"))
        cfg_b = small_cfg(tmp_path, seed=4, out_dir=str(tmp_path / "b"))
        run_training(cfg_a)
        run_training(cfg_b)
        assert (tmp_path / "a" / "metrics.csv").read_text() != \
               (tmp_path / "b" / "metrics.csv").read_text()

    def test_resume_matches_uninterrupted(self, tmp_path):
        full_cfg = small_cfg(tmp_path, episodes=8, include_buffers_in_checkpoint=True,
                             out_dir=str(tmp_path / "full"))
        _, full_metrics = run_training(full_cfg)

        half_cfg = small_cfg(tmp_path, episodes=4, include_buffers_in_checkpoint=True,
                             out_dir=str(tmp_path / "half"))
        trainer, _ = run_training(half_cfg)
        resumed_cfg = small_cfg(tmp_path, episodes=8, include_buffers_in_checkpoint=True,
                                out_dir=str(tmp_path / "resumed"))
        _, resumed = run_training(
            resumed_cfg, resume_from=tmp_path / "half" / "checkpoint_final.bin")
        full_rows = [r for r in full_metrics.rows if r.episode >= 4]
        for full_row, resumed_row in zip(full_rows, resumed.rows):
            for col in ("episode", "success", "k", "alpha", "low_base_loss",
                        "high_critic_loss", "eval_success", "labels_total"):
                assert getattr(full_row, col) == getattr(resumed_row, col), col

    def test_ablation_no_hf_freezes_reward_model(self, tmp_path):
        cfg = small_cfg(tmp_path, no_hf=True)
        trainer = Trainer(cfg)
        before = trainer.reward_model.params.copy()
        trainer.run()
        assert np.array_equal(trainer.reward_model.params, before)
        assert trainer.labels_total == 0

    def test_ablation_no_ddc_keeps_alpha_zero(self, tmp_path):
        cfg = small_cfg(tmp_path, no_ddc=True)
        trainer = Trainer(cfg)
        before = trainer.distance_model.params.copy()
        metrics = trainer.run()
        assert trainer.dual.alpha == 0.0
        assert trainer.curriculum.k == cfg.k_init
        assert metrics.adjustment_events == []
        assert np.array_equal(trainer.distance_model.params, before)

    def test_ablation_no_eed_single_policy(self, tmp_path):
        cfg = small_cfg(tmp_path, no_eed=True)
        trainer = Trainer(cfg)
        assert trainer.dual_policy.base is trainer.dual_policy.explore
        trainer.run()
        assert trainer.dual_policy.base is trainer.dual_policy.explore

    def test_batch_queries_zero_trains_without_labels(self, tmp_path):
        cfg = small_cfg(tmp_path, batch_queries=0)
        trainer = Trainer(cfg)
        before = trainer.reward_model.params.copy()
        trainer.run()
        assert trainer.labels_total == 0
        assert np.array_equal(trainer.reward_model.params, before)


class TestCheckpointing:
    def test_round_trip_restores_all_networks(self, tmp_path):
        cfg = small_cfg(tmp_path, episodes=4, include_buffers_in_checkpoint=True)
        trainer = Trainer(cfg)
        trainer.run()
        path = tmp_path / "ckpt.bin"
        save_checkpoint(trainer, path)
        restored = load_checkpoint(path)
        assert restored.episode == trainer.episode
        assert np.array_equal(restored.high.actor.params, trainer.high.actor.params)
        assert np.array_equal(restored.reward_model.params, trainer.reward_model.params)
        assert np.array_equal(restored.dual_policy.base.q.params,
                              trainer.dual_policy.base.q.params)
        assert restored.curriculum.k == trainer.curriculum.k
        assert restored.dual.alpha == trainer.dual.alpha
        assert len(restored.low_buffer) == len(trainer.low_buffer)
        assert len(restored.high_buffer) == len(trainer.high_buffer)
        assert len(restored.pref_buffer) == len(trainer.pref_buffer)
        assert restored.rng.bit_generator.state == trainer.rng.bit_generator.state

    def test_save_load_save_idempotent(self, tmp_path):
        cfg = small_cfg(tmp_path, episodes=2)
        trainer = Trainer(cfg)
        trainer.run()
        p1, p2 = tmp_path / "c1.bin", tmp_path / "c2.bin"
        save_checkpoint(trainer, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_checkpoint_rejected(self, tmp_path):
        cfg = small_cfg(tmp_path, episodes=2)
        trainer = Trainer(cfg)
        path = tmp_path / "c.bin"
        save_checkpoint(trainer, path)
        path.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestEvaluationAndHeatmaps:
    def test_untrained_four_rooms_evaluates_near_zero(self, tmp_path):
        cfg = small_cfg(tmp_path, episodes=1)
        trainer = Trainer(cfg)
        rate = trainer.evaluate(episodes=50, rng=np.random.default_rng(0))
        assert rate <= 0.1

    def test_eval_requires_positive_episodes(self, tmp_path):
        trainer = Trainer(small_cfg(tmp_path, episodes=1))
        with pytest.raises(ValueError):
            trainer.evaluate(episodes=0)

    def test_heatmap_grids(self, tmp_path):
        cfg = small_cfg(tmp_path, episodes=2)
        trainer = Trainer(cfg)
        trainer.run()
        grids = export_heatmaps(trainer, resolution=9, out_dir=tmp_path / "maps")
        assert set(grids) == {"reward", "distance", "overlay", "oracle"}
        for grid in grids.values():
            assert grid.size == 81
        # overlay equals the reward grid wherever the constraint is inactive
        inactive = grids["distance"] <= trainer.curriculum.k
        assert np.allclose(grids["overlay"][inactive], grids["reward"][inactive])
        for name in ("reward", "distance", "overlay", "oracle"):
            assert (tmp_path / "maps" / f"heatmap_{name}.csv").exists()

    def test_oracle_grid_matches_pointwise_evaluation(self, tmp_path):
        from prefhrl.envs import four_rooms_oracle_reward

        cfg = small_cfg(tmp_path, episodes=1)
        trainer = Trainer(cfg)
        grids = export_heatmaps(trainer, resolution=5, out_dir=tmp_path / "maps")
        xs = np.linspace(-0.5, 0.5, 5)
        ys = np.linspace(-0.5, 0.5, 5)
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                assert grids["oracle"][i, j] == pytest.approx(
                    four_rooms_oracle_reward([x, y]))


class TestPointPush:
    def test_continuous_training_smoke(self, tmp_path):
        cfg = small_cfg(tmp_path, env="point-push", episodes=4,
                        out_dir=str(tmp_path / "pp"))
        trainer, metrics = run_training(cfg)
        assert len(metrics.rows) == 4
        # continuous low level: actor-critic pairs, box actions
        from prefhrl.lowlevel import ACPolicy, act_explore
        import numpy as np
        assert isinstance(trainer.dual_policy.base, ACPolicy)
        action = act_explore(trainer.dual_policy, np.zeros(4), np.zeros(2),
                             greedy=True)
        assert action.shape == (2,)
        assert np.all(np.abs(action) <= 1.0)

    def test_point_push_checkpoint_round_trip(self, tmp_path):
        cfg = small_cfg(tmp_path, env="point-push", episodes=2,
                        include_buffers_in_checkpoint=True,
                        out_dir=str(tmp_path / "pp2"))
        trainer = Trainer(cfg)
        trainer.run()
        path = tmp_path / "pp.bin"
        save_checkpoint(trainer, path)
        restored = load_checkpoint(path)
        import numpy as np
        assert np.array_equal(restored.dual_policy.base.actor.params,
                              trainer.dual_policy.base.actor.params)
        assert np.array_equal(restored.dual_policy.explore.critic.params,
                              trainer.dual_policy.explore.critic.params)


class TestReferenceDefaults:
    def test_table_values_are_the_defaults(self):
        cfg = TrainConfig()
        # high level
        assert cfg.high_actor_lr == 3e-4
        assert cfg.high_critic_lr == 3e-4
        assert cfg.high_buffer_size == 10**6
        assert cfg.high_hidden_layers == 3
        assert cfg.high_hidden_size == 256
        assert cfg.high_batch_size == 256
        assert cfg.tau == 0.005
        assert cfg.gamma == 0.95
        # distance / reward models
        assert cfg.distance_lr == 3e-4
        assert cfg.distance_buffer_size == 1000
        assert cfg.distance_hidden_layers == 3
        assert cfg.distance_hidden_size == 256
        assert cfg.distance_batch_size == 256
        assert cfg.reward_lr == 3e-4
        assert cfg.reward_buffer_size == 1000
        assert cfg.reward_hidden_layers == 3
        assert cfg.reward_hidden_size == 256
        assert cfg.reward_batch_size == 256
        assert cfg.query_frequency == 50
        assert cfg.batch_queries == 50
        # curriculum
        assert cfg.success_high_threshold == 0.6
        assert cfg.success_low_threshold == 0.3
        assert cfg.delta_k == 0.05
        assert cfg.k_init == 0.05
        assert cfg.beta == 0.1
        # low level
        assert cfg.low_actor_lr == 1e-3
        assert cfg.low_critic_lr == 1e-3
        assert cfg.low_hidden_layers == 3
        assert cfg.low_hidden_size == 256
        assert cfg.low_buffer_size == 10**6
        assert cfg.low_batch_size == 512
        assert cfg.rnd_lr == 3e-4
        assert cfg.rnd_hidden_layers == 3
        assert cfg.rnd_hidden_size == 256
        assert cfg.rnd_represent_size == 512
        assert cfg.rnd_bonus_scale == 1.0
        assert cfg.hindsight_ratio == 0.8


def test_periodic_checkpoints_written(tmp_path):
    cfg = small_cfg(tmp_path, episodes=4, checkpoint_every=2,
                    out_dir=str(tmp_path / "periodic"))
    run_training(cfg)
    assert (tmp_path / "periodic" / "checkpoint_ep2.bin").exists()
    assert (tmp_path / "periodic" / "checkpoint_ep4.bin").exists()
    restored = load_checkpoint(tmp_path / "periodic" / "checkpoint_ep2.bin")
    assert restored.episode == 2
