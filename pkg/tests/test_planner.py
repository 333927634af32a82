import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import asyncmpc.planner as PL
from asyncmpc.errors import PlannerDegenerate
from asyncmpc.models import init_node_params
from asyncmpc.ode import ActionSchedule, SolverSpec, integrate
from asyncmpc.planner import (
    GRIPPER_LEVELS,
    TURTLE_ANGULAR,
    TURTLE_LINEAR,
    CEMTrace,
    PlanContext,
    PlannerConfig,
    RewardSpec,
    argmax_with_ties,
    cem_optimize,
    cem_select,
    colored_noise,
    discrete_product,
    reward_box,
    reward_exploration,
    reward_goal_heading,
    sample_colored,
    score_sequence,
    shoot_select,
)

TURTLE = discrete_product(TURTLE_LINEAR, TURTLE_ANGULAR)


def zero_model():
    p = init_node_params((8,), 2, 0)
    return p.with_flat(np.zeros_like(p.flat))


def ctx_for(params, z0, reward, t_obs=0.0, t_now=0.0):
    return PlanContext(params, np.asarray(z0, float), t_obs, ActionSchedule([0.0], [[0.0, 0.0]]), t_now, reward, SolverSpec.rk4(2))


# -- colored noise ----------------------------------------------------------------


def _slope(x):
    psd = np.mean(np.abs(np.fft.rfft(x, axis=-1)) ** 2, axis=0)[1:]
    f = np.fft.rfftfreq(x.shape[-1])[1:]
    return np.polyfit(np.log(f), np.log(psd), 1)[0]


@pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
def test_psd_slope(beta):
    x = colored_noise(beta, (200, 256), np.random.default_rng(int(beta)))
    assert abs(_slope(x) + beta) <= 0.3


def test_white_noise_statistics():
    x = sample_colored(np.zeros((2, 2)), np.ones((2, 2)), 0.0, 10_000, np.random.default_rng(0))
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)
    w = colored_noise(0.0, (200, 256), np.random.default_rng(1))
    lag1 = np.mean([np.corrcoef(r[:-1], r[1:])[0, 1] for r in w])
    assert abs(lag1) < 0.05


@pytest.mark.parametrize("beta", [0.0, 2.0])
def test_unit_marginal_variance(beta):
    x = colored_noise(beta, (500, 32), np.random.default_rng(2))
    assert abs(x.std() - 1.0) < 0.05
    assert abs(x.mean()) < 0.05


def test_zero_std_returns_mean():
    mu = np.array([[0.1, -0.2], [0.3, 0.0], [0.0, 0.5]])
    x = sample_colored(mu, np.zeros_like(mu), 2.0, 7, np.random.default_rng(0), bound=1.0)
    assert x.shape == (7, 3, 2)
    assert np.all(x == mu)


@given(st.floats(0, 3), st.integers(0, 1000))
@settings(max_examples=25)
def test_samples_within_box(beta, seed):
    x = sample_colored(np.zeros((4, 2)), np.full((4, 2), 5.0), beta, 20, np.random.default_rng(seed), bound=1.0)
    assert np.all(np.abs(x) <= 1.0)


# -- rewards -----------------------------------------------------------------------


def test_box_reward_examples():
    spec = RewardSpec("box-rotation", target_yaw=math.pi / 2, initial_position=(0.0, 0.0), threshold=0.3)
    assert reward_box([0, 0, math.pi / 2, 0, 0, 0], spec) == 0.0
    assert reward_box([0.5, 0, math.pi / 2, 0, 0, 0], spec) == -5.0
    assert abs(reward_box([0.2, 0, math.pi / 2 - 0.2, 0, 0, 0], spec) + 0.04) < 1e-12


def test_goal_heading_examples():
    spec = RewardSpec("goal-heading", goal=(2.0, 0.0))
    # moving straight at the goal: bearing unchanged
    assert reward_goal_heading([0, 0, 0, 0, 0, 0], [0.5, 0, 0, 0, 0, 0], spec) == -1.5
    # bearing change of 4 degrees is ignored
    u = math.radians(4.0)
    p1 = (2.0 - 1.5 * math.cos(u), 1.5 * math.sin(u))
    r = reward_goal_heading([0, 0, 0, 0, 0, 0], [p1[0], p1[1], 0, 0, 0, 0], spec)
    assert abs(r + 1.5) < 1e-12
    # a 10 degree bearing change is charged in radians
    u = math.radians(10.0)
    p1 = (2.0 - 1.5 * math.cos(u), 1.5 * math.sin(u))
    r = reward_goal_heading([0, 0, 0, 0, 0, 0], [p1[0], p1[1], 0, 0, 0, 0], spec)
    assert abs(r + 1.5 + u) < 1e-9
    # at the goal the bearing is undefined and the heading term vanishes
    assert reward_goal_heading([1, 1, 0, 0, 0, 0], [2, 0, 0, 0, 0, 0], spec) == 0.0


def test_exploration_reward_examples():
    spec = RewardSpec("exploration", bounds=(-2, 2, -2, 2), cells=40)
    assert reward_exploration([0.05, 0.05, 0, 0, 0, 0], spec) == 0.0
    for _ in range(7):
        spec.visit([0.05, 0.05])
    assert reward_exploration([0.05, 0.05, 0, 0, 0, 0], spec) == -7.0
    assert reward_exploration([0.01, 0.09, 0, 0, 0, 0], spec) == -7.0
    # out-of-arena positions use the nearest boundary cell
    spec.visit([1.99, 1.99])
    assert reward_exploration([5.0, 9.0, 0, 0, 0, 0], spec) == -1.0


def test_reward_spec_validation():
    with pytest.raises(ValueError):
        RewardSpec("box-rotation", threshold=0.0)
    with pytest.raises(ValueError):
        RewardSpec("exploration", cells=0)


# -- scoring -------------------------------------------------------------------------


def test_box_score_at_optimum_is_zero():
    spec = RewardSpec("box-rotation", target_yaw=math.pi / 2)
    ctx = ctx_for(zero_model(), [0, 0, math.pi / 2, 0, 0, 0], spec)
    assert score_sequence(ctx, np.zeros((4, 2)), 0.4) == 0.0


def test_identical_candidates_identical_scores():
    p = init_node_params((8, 8), 2, 1, output_scale=1.0)
    ctx = ctx_for(p, np.zeros(6), RewardSpec("goal-heading", goal=(1.0, 0.0)))
    c = np.random.default_rng(0).uniform(-1, 1, (4, 2))
    s = score_sequence(ctx, np.stack([c, c, c]), 0.4)
    assert s[0] == s[1] == s[2]
    assert score_sequence(ctx, c, 0.4) == s[0]


def _truth_predict(params, z0, t0, t1, sched, solver):
    def f(t, z, u):
        out = np.zeros_like(z)
        out[:, 0] = u[:, 0] * np.cos(z[:, 2])
        out[:, 1] = u[:, 0] * np.sin(z[:, 2])
        out[:, 2] = u[:, 1]
        return out

    return integrate(f, z0, t0, t1, sched, SolverSpec.rk4(8))


def test_true_model_prefers_driving_to_goal(monkeypatch):
    monkeypatch.setattr(PL, "predict_batch", _truth_predict)
    ctx = ctx_for(zero_model(), np.zeros(6), RewardSpec("goal-heading", goal=(1.0, 0.0)))
    still, forward = score_sequence(ctx, np.array([[[0.0, 0.0]], [[0.1, 0.0]]]), 2.0)
    assert forward > still
    # the command ramps linearly from the held 0 to 0.1 over the interval: 0.1 m travelled
    assert abs(forward + 0.9) < 1e-9 and abs(still + 1.0) < 1e-12


def test_history_knots_after_now_are_replaced():
    hist = ActionSchedule([0.0, 0.5, 5.0], [[0.0, 0.0], [0.1, 0.0], [0.9, 0.9]])
    ctx = PlanContext(zero_model(), np.zeros(6), 0.0, hist, 1.0, RewardSpec("goal-heading"), SolverSpec.rk4(2))
    assert np.isfinite(score_sequence(ctx, np.zeros((2, 2)), 0.4))


# -- CEM -------------------------------------------------------------------------------


def test_cem_static_quadratic():
    target = np.array([[0.4, -0.3]])
    cfg = PlannerConfig(mode="cem", horizon=1, max_iters=20)
    best, score = cem_optimize(lambda a: -np.sum((a - target) ** 2, axis=(1, 2)), cfg, np.random.default_rng(0))
    assert np.max(np.abs(best - target)) < 1e-2


def test_cem_monotone_on_deterministic_reward():
    target = np.array([[0.4, -0.3], [0.1, 0.2], [-0.5, 0.0], [0.0, 0.3]])
    trace = CEMTrace()
    cfg = PlannerConfig(mode="cem", max_iters=15)
    cem_optimize(lambda a: -np.sum((a - target) ** 2, axis=(1, 2)), cfg, np.random.default_rng(1), trace)
    assert all(b >= a for a, b in zip(trace.best_scores, trace.best_scores[1:]))
    assert all(b >= a for a, b in zip(trace.elite_means, trace.elite_means[1:]))


def test_full_population_refit_never_widens():
    trace = CEMTrace()
    cfg = PlannerConfig(mode="cem", population=10, elites=10, max_iters=10, keep_elites=False)
    cem_optimize(lambda a: -np.sum(a**2, axis=(1, 2)), cfg, np.random.default_rng(2), trace)
    assert all(b <= a for a, b in zip(trace.stds, trace.stds[1:]))


def test_cem_paper_settings_shape_and_box():
    p = init_node_params((8, 8), 2, 3, output_scale=1.0)
    ctx = ctx_for(p, np.zeros(6), RewardSpec("box-rotation"))
    cfg = PlannerConfig(mode="cem", population=20, elites=5, horizon=4, beta=2.0, init_mean=0.0, init_std=1.0)
    seq = cem_select(ctx, cfg, np.random.default_rng(0))
    assert seq.shape == (4, 2)
    assert np.all(np.abs(seq) <= 1.0)


def test_all_infinite_scores_is_degenerate():
    with pytest.raises(PlannerDegenerate):
        cem_optimize(lambda a: np.full(len(a), -np.inf), PlannerConfig(), np.random.default_rng(0))


# -- random shooting ----------------------------------------------------------------------


def test_discrete_sets():
    assert len(TURTLE) == 21
    assert len(discrete_product(GRIPPER_LEVELS, GRIPPER_LEVELS)) == 81


def test_constant_reward_picks_zero_action():
    assert np.array_equal(TURTLE[argmax_with_ties(TURTLE, np.zeros(21))], [0.0, 0.0])


def test_tie_break_smallest_norm_then_lexicographic():
    acts = np.array([[0.1, 0.0], [-0.1, 0.0], [0.0, 0.1], [0.0, -0.1], [0.2, 0.0]])
    assert argmax_with_ties(acts, np.zeros(5)) == 1  # (-0.1, 0) is lexicographically first
    assert argmax_with_ties(acts, np.array([0, 0, 0, 0, 1.0])) == 4


def _brute_force(ctx, acts, dt):
    scores = [score_sequence(ctx, a[None, :], dt) for a in acts]
    top = max(scores)
    tied = [i for i, s in enumerate(scores) if s == top]
    tied.sort(key=lambda i: (float(np.hypot(*acts[i])), tuple(acts[i])))
    return acts[tied[0]]


def test_shoot_select_matches_brute_force():
    cfg = PlannerConfig(mode="random-shoot", horizon=1, population=21, elites=1, actions=tuple(map(tuple, TURTLE)), dt=1.0)
    rng = np.random.default_rng(0)
    for k in range(20):
        p = init_node_params((8,), 2, k, output_scale=1.0)
        z0 = np.concatenate([rng.uniform(-1, 1, 2), rng.uniform(-math.pi, math.pi, 1), rng.normal(0, 0.1, 3)])
        ctx = ctx_for(p, z0, RewardSpec("goal-heading", goal=tuple(rng.uniform(-2, 2, 2))))
        assert np.array_equal(shoot_select(ctx, cfg, rng), _brute_force(ctx, TURTLE, 1.0))


def test_shoot_select_stays_in_set():
    cfg = PlannerConfig(mode="random-shoot", population=5, exhaustive=False, actions=tuple(map(tuple, TURTLE)), dt=1.0)
    p = init_node_params((8,), 2, 0, output_scale=1.0)
    ctx = ctx_for(p, np.zeros(6), RewardSpec("goal-heading", goal=(1.0, 1.0)))
    for seed in range(10):
        a = shoot_select(ctx, cfg, np.random.default_rng(seed))
        assert any(np.array_equal(a, t) for t in TURTLE)


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(elites=30, population=20)
    with pytest.raises(ValueError):
        PlannerConfig(mode="random-shoot")
    with pytest.raises(ValueError):
        PlannerConfig(beta=-1.0)
