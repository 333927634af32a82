import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncmpc.env import (
    S_MAG,
    AsyncEnv,
    EnvParams,
    EpisodeConfig,
    IrregularityConfig,
    TimedEvent,
    emit_observations,
    export_event_log,
    load_event_log,
    run_success_check,
    sample_env,
    step_truth,
    wind_directions,
    xi_estimate,
    xi_from_log,
)
from asyncmpc.errors import DegenerateInterval, OrderingError

UNI = EnvParams("unicycle-wind")


def obs(t, x, y=0.0, yaw=0.0):
    return TimedEvent(t, "obs", (x, y, yaw))


# -- environment sampling ---------------------------------------------------------


def test_train_directions_are_even_multiples():
    d = wind_directions("train", 32)
    assert d == list(range(0, 32, 2)) and len(d) == 16
    assert set(d).isdisjoint(wind_directions("test", 32))


@given(st.integers(1, 40))
def test_direction_parity_disjoint(half):
    n = 2 * half
    assert set(wind_directions("train", n)).isdisjoint(wind_directions("test", n))
    assert len(wind_directions("train", n)) + len(wind_directions("test", n)) == n


def test_magnitude_set():
    assert S_MAG == (0.1, 0.2, 0.4, 0.5)


def test_sampled_envs_respect_distribution():
    rng = np.random.default_rng(0)
    for _ in range(200):
        tr = sample_env("train", "unicycle-wind", rng)
        te = sample_env("test", "unicycle-wind", rng)
        assert tr.wind_index % 2 == 0 and te.wind_index % 2 == 1
        assert tr.wind_magnitude in S_MAG
        box = sample_env("train", "belt-box", rng)
        assert 0.3 <= box.kappa_m <= 1.0 and 0.5 <= box.kappa_r <= 2.0 and -0.2 <= box.kappa_s <= 0.2


def test_belt_box_train_test_streams_differ():
    a = sample_env("train", "belt-box", 5)
    b = sample_env("test", "belt-box", 5)
    assert (a.kappa_m, a.kappa_r, a.kappa_s) != (b.kappa_m, b.kappa_r, b.kappa_s)


def test_env_params_validation():
    with pytest.raises(ValueError):
        EnvParams("unicycle-wind", wind_index=32)
    with pytest.raises(ValueError):
        EnvParams("belt-box", kappa_m=1.5)
    with pytest.raises(ValueError):
        EnvParams("boat")


# -- ground truth -------------------------------------------------------------------


def test_unicycle_straight_line():
    z = step_truth(UNI, [0.0, 0.0, 0.0], [0.1, 0.0], 1.0)
    np.testing.assert_allclose(z, [0.1, 0.0, 0.0], atol=1e-15)


def test_unicycle_pure_drift():
    env = EnvParams("unicycle-wind", wind_index=0, wind_magnitude=0.2)
    np.testing.assert_allclose(step_truth(env, [0.0, 0.0, 0.0], [0.0, 0.0], 1.0), [0.2, 0.0, 0.0], atol=1e-15)


def test_belt_box_antisymmetric_command():
    env = EnvParams("belt-box", kappa_m=0.8, kappa_r=1.5, kappa_s=0.1)
    s, dt = 0.3, 1e-3
    z = step_truth(env, [0.0, 0.0, 0.0], [-s, s], dt)
    # yaw rate kappa_r * 2s, no forward motion, lateral slip kappa_s * 2s (to first order in dt)
    assert abs(z[2] / dt - 1.5 * 2 * s) < 1e-9
    assert abs(z[0] / dt) < 1e-3
    assert abs(z[1] / dt - 0.1 * 2 * s) < 1e-3


def test_truth_is_deterministic():
    env = EnvParams("belt-box", kappa_m=0.5, kappa_r=1.0, kappa_s=-0.1)
    a = step_truth(env, [0.1, 0.2, 0.3], [0.5, -0.2], 0.05)
    b = step_truth(env, [0.1, 0.2, 0.3], [0.5, -0.2], 0.05)
    assert a.tobytes() == b.tobytes()


def test_out_of_box_actions_are_clamped_and_flagged():
    env = AsyncEnv(UNI, EpisodeConfig(), IrregularityConfig(), 0)
    env.apply([1.0], [[0.5, -0.5]])
    last = [e for e in env.event_log if e.kind == "act"][-1]
    assert last.flag == "clamped"
    assert last.payload == (0.22, -0.22)
    assert env.clamped_count == 1


# -- irregular observations -----------------------------------------------------------


def _traj(n):
    return [(i / 6.0, (float(i), 0.0, 0.0)) for i in range(n)]


def test_regular_stream_passes_everything():
    assert len(emit_observations(_traj(50), IrregularityConfig(), 0)) == 50


def test_block_subsampling_rate():
    out = emit_observations(_traj(3000), IrregularityConfig(keep_one_of=3), 1)
    assert abs(len(out) - 1000) <= 50
    # exactly one survivor per block, keeping its true timestamp
    blocks = [int(round(e.t * 6)) // 3 for e in out]
    assert blocks == list(range(1000))
    for e in out:
        assert e.payload[0] == round(e.t * 6)


def test_p_drop_rate():
    out = emit_observations(_traj(2000), IrregularityConfig(p_drop=0.5), 2)
    assert abs(len(out) / 2000 - 0.5) <= 0.03


def test_eta_after_subsampling():
    out = emit_observations(_traj(30000), IrregularityConfig(keep_one_of=3, eta=0.2), 3)
    assert abs(len(out) / 10000 - 0.8) <= 0.02


# -- state estimator ----------------------------------------------------------------------


def test_xi_constant_velocity():
    z = xi_estimate(obs(0.0, 0.0), obs(1.0, 1.0)).as_array()
    np.testing.assert_array_equal(z, [1, 0, 0, 1, 0, 0])


def test_xi_identical_poses():
    z = xi_estimate(obs(0.0, 0.3, 0.2, 1.0), obs(0.5, 0.3, 0.2, 1.0))
    np.testing.assert_array_equal(z.velocity, [0, 0, 0])


def test_xi_wraps_yaw_difference():
    z = xi_estimate(obs(0.0, 0, 0, 3.1), obs(0.2, 0, 0, -3.1))
    assert abs(z.yaw_rate - (2 * math.pi - 6.2) / 0.2) < 1e-12
    assert z.yaw_rate > 0


def test_xi_errors():
    with pytest.raises(OrderingError):
        xi_estimate(obs(1.0, 0), obs(1.0, 1))
    with pytest.raises(DegenerateInterval):
        xi_estimate(obs(1.0, 0), obs(1.0 + 1e-7, 1))


@given(st.floats(-0.2, 0.2), st.floats(-math.pi, math.pi), st.floats(0.05, 2.0))
@settings(max_examples=50)
def test_xi_then_true_field_reconstructs_constant_velocity(v, yaw, dt):
    env = EnvParams("unicycle-wind", wind_index=3, wind_magnitude=0.1)
    p0 = np.array([0.5, -0.3, yaw])
    p1 = step_truth(env, p0, [v, 0.0], dt)
    p2 = step_truth(env, p1, [v, 0.0], dt)
    z = xi_estimate(TimedEvent(0.0, "obs", tuple(p0)), TimedEvent(dt, "obs", tuple(p1)))
    np.testing.assert_allclose(z.pose + z.velocity * dt, p2, atol=1e-12)


# -- success check -----------------------------------------------------------------------------


def test_success_examples():
    box = EpisodeConfig(pos_tol=0.3, yaw_tol=0.1)
    assert run_success_check("belt-box", [0.0, 0.0, math.pi / 2], box) == "solved"
    assert run_success_check("belt-box", [0.0, 0.0, 0.0], box, applied=10) == "running"
    uni = EpisodeConfig(goal=(1.0, 0.0), pos_tol=0.1)
    assert run_success_check("unicycle-wind", [0.91, 0.0, 0.0], uni) == "solved"
    assert run_success_check("unicycle-wind", [0.0, 0.0, 0.0], EpisodeConfig(max_actions=300), applied=300) == "timeout"


# -- episodes and logs ---------------------------------------------------------------------------


def _play(seed, irr=IrregularityConfig(keep_one_of=3, eta=0.05, jitter=True)):
    env = AsyncEnv(EnvParams("belt-box", kappa_m=0.5, kappa_r=1.0), EpisodeConfig(obs_rate=10.0), irr, seed)
    rng = np.random.default_rng(seed)
    for k in range(10):
        env.apply(env.t + 0.1 * np.arange(1, 5), rng.uniform(-1, 1, (4, 2)))
    return env


def test_event_log_is_sorted_and_keeps_every_action():
    env = _play(0)
    log = env.event_log
    times = [e.t for e in log]
    assert times == sorted(times)
    assert sum(e.kind == "act" and e.flag != "initial" for e in log) == env.applied_count == 40
    assert log[0].kind == "obs" and log[0].t == 0.0


def test_jitter_keeps_knots_inside_their_interval():
    env = _play(1)
    t = np.array(env.applied_times)
    assert np.all(np.diff(t) > 0)
    assert t[-1] <= 10 * 0.4 + 1e-9


def test_seeded_episode_replays(tmp_path):
    a = export_event_log(_play(7).event_log, tmp_path / "a.jsonl").read_bytes()
    b = export_event_log(_play(7).event_log, tmp_path / "b.jsonl").read_bytes()
    assert a == b
    assert a != export_event_log(_play(8).event_log, tmp_path / "c.jsonl").read_bytes()


def test_log_replay_reproduces_xi(tmp_path):
    env = _play(3)
    path = export_event_log(env.event_log, tmp_path / "log.jsonl")
    again = xi_from_log(load_event_log(path))
    direct = [xi_estimate(a, b) for a, b in zip(env.observations[:-1], env.observations[1:])]
    assert len(again) == len(direct) > 10
    for x, y in zip(again, direct):
        assert x.as_array().tobytes() == y.as_array().tobytes()


def test_actions_since_covers_window_start():
    env = _play(2)
    t = env.observations[-2].t
    s = env.actions_since(t)
    assert s.times[0] <= t
    assert s.times[-1] == env.applied_times[-1]
