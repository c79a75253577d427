import numpy as np
import pytest
from scipy import stats

from prefhrl import nets
from prefhrl.distance import (
    DistancePairBuffer,
    build_distance_batch,
    export_distance_grid,
    init_distance_model,
    pairs_to_arrays,
    predict_distance,
    train_distance,
)


@pytest.fixture
def model():
    return init_distance_model(goal_dim=2, hidden_size=32, hidden_layers=2, seed=0)


def test_outputs_in_unit_interval(model):
    rng = np.random.default_rng(0)
    a = rng.uniform(-5, 5, size=(10_000, 2))
    b = rng.uniform(-5, 5, size=(10_000, 2))
    d = predict_distance(model, a, b)
    assert np.all((0.0 <= d) & (d <= 1.0))
    assert np.all(np.isfinite(d))


def test_build_batch_targets():
    rng = np.random.default_rng(1)
    traj = np.linspace(0, 1, 10)[:, None] * np.ones((1, 2))
    pairs = build_distance_batch(traj, np.array([2.0, 2.0]), reached=True,
                                 count=200, rng=rng)
    assert len(pairs) == 200
    for p in pairs:
        i = int(round(p.g_a[0] * 9))
        j = int(round(p.g_b[0] * 9))
        assert j >= i
        assert p.target == pytest.approx(abs(i - j) / 10)
    # the i=2, j=7, L=10 case from the definition
    assert abs(2 - 7) / 10 == 0.5


def test_unreached_subgoal_pairs_have_target_one():
    rng = np.random.default_rng(2)
    traj = np.random.default_rng(0).uniform(size=(5, 2))
    g_sub = np.array([9.0, 9.0])
    pairs = build_distance_batch(traj, g_sub, reached=False, count=10, rng=rng,
                                 unreached_count=16)
    extra = pairs[10:]
    assert len(extra) == 16
    assert all(p.target == 1.0 and np.array_equal(p.g_b, g_sub) for p in extra)
    # no augmentation when reached
    assert len(build_distance_batch(traj, g_sub, True, 10, rng)) == 10


def test_short_trajectory_rejected():
    with pytest.raises(ValueError):
        build_distance_batch(np.zeros((1, 2)), np.zeros(2), True, 4,
                             np.random.default_rng(0))


def test_loss_zero_on_perfect_predictions(model):
    # force a constant-0.5 predictor (zero final layer) and 0.5 targets
    params = model.params.copy()
    params[-(32 + 1):] = 0.0
    flat = model.with_params(params)
    x = np.random.default_rng(3).normal(size=(8, 4))
    opt = nets.adam_init(flat, 0.0)
    _, _, loss = train_distance(flat, (x, np.full(8, 0.5)), opt)
    assert loss == pytest.approx(0.0)


def test_halved_mse_hand_value(model):
    # constant-0.5 predictor against targets {0, 1}: 0.5 * mean(0.25) = 0.125
    params = model.params.copy()
    params[-(32 + 1):] = 0.0
    flat = model.with_params(params)
    x = np.random.default_rng(4).normal(size=(2, 4))
    opt = nets.adam_init(flat, 0.0)
    _, _, loss = train_distance(flat, (x, np.array([0.0, 1.0])), opt)
    assert loss == pytest.approx(0.125)


def test_convergence_on_fixed_synthetic_set(model):
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.5, 0.5, size=(256, 4))
    targets = np.clip(np.linalg.norm(x[:, :2] - x[:, 2:], axis=1), 0, 1)
    opt = nets.adam_init(model, 3e-4)
    for _ in range(2000):
        model, opt, loss = train_distance(model, (x, targets), opt)
    assert loss < 1e-3


def test_monotone_in_index_gap_after_training(model):
    # straight-line trajectories: learned distance should rank by index gap
    rng = np.random.default_rng(6)
    pairs = []
    for _ in range(100):
        start = rng.uniform(-0.4, 0.0, size=2)
        end = rng.uniform(0.0, 0.4, size=2)
        traj = start + np.linspace(0, 1, 20)[:, None] * (end - start)
        pairs.extend(build_distance_batch(traj, end, True, 40, rng))
    x, t = pairs_to_arrays(pairs)
    opt = nets.adam_init(model, 3e-4)
    for _ in range(1500):
        idx = rng.integers(0, x.shape[0], size=256)
        model, opt, _ = train_distance(model, (x[idx], t[idx]), opt)

    start = np.array([-0.2, -0.2])
    end = np.array([0.3, 0.3])
    traj = start + np.linspace(0, 1, 20)[:, None] * (end - start)
    gaps = np.arange(20)
    d = predict_distance(model, np.tile(traj[0], (20, 1)), traj)
    rho = stats.spearmanr(gaps, d).statistic
    assert rho > 0.9


def test_pair_buffer_fifo_and_sampling():
    buf = DistancePairBuffer(capacity=5, goal_dim=2)
    rng = np.random.default_rng(7)
    pairs = build_distance_batch(np.random.default_rng(1).uniform(size=(4, 2)),
                                 np.ones(2), False, 6, rng, unreached_count=2)
    buf.push_pairs(pairs)  # 8 pairs into capacity 5
    assert len(buf) == 5
    x, t = buf.sample(3, rng)
    assert x.shape == (3, 4) and t.shape == (3,)


def test_grid_export_shape(model):
    xs, ys, grid = export_distance_grid(model, np.zeros(2),
                                        (np.array([-0.5, -0.5]), np.array([0.5, 0.5])), 21)
    assert grid.shape == (21, 21)
    assert np.all((0 <= grid) & (grid <= 1))
    assert xs[0] == -0.5 and xs[-1] == 0.5
