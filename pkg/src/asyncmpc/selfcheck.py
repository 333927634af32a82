"""Fast invariant and oracle checks run by ``asyncmpc check``.

Each check returns ``(ok, detail)``; the whole battery takes a few seconds.
"""

from __future__ import annotations

import math

import numpy as np

from .env import EnvParams, EpisodeConfig, IrregularityConfig, AsyncEnv, export_event_log, load_event_log
from .harness import traj_metrics
from .models import TrainingExample, init_node_params, loss_and_grad, node_loss, prepare_batch
from .ode import ActionSchedule, SolverSpec, integrate
from .planner import (
    TURTLE_ANGULAR,
    TURTLE_LINEAR,
    PlannerConfig,
    RewardSpec,
    cem_optimize,
    colored_noise,
    discrete_product,
    reward_box,
    reward_goal_heading,
)


def _decay(t, z, u):
    return -z


def check_gradient():
    rng = np.random.default_rng(0)
    params = init_node_params((8, 8), 2, rng, output_scale=1.0)
    sched = ActionSchedule([0.0, 1.0], rng.uniform(-0.2, 0.2, (2, 2)))
    data = [
        TrainingExample(rng.normal(0, 0.3, 6), t0, t0 + 0.3, rng.normal(0, 0.1, 6), sched)
        for t0 in (0.0, 0.2, 0.5)
    ]
    batch = prepare_batch(data)
    solver = SolverSpec.rk4(3)
    _, g = loss_and_grad(params, batch, 1.0, solver)
    worst = 0.0
    for i in rng.choice(len(params.flat), 6, replace=False):
        h = 1e-6
        up, dn = params.flat.copy(), params.flat.copy()
        up[i] += h
        dn[i] -= h
        fd = (node_loss(params.with_flat(up), batch, 1.0, solver) - node_loss(params.with_flat(dn), batch, 1.0, solver)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), 1e-8))
    return worst < 1e-4, f"max relative error {worst:.2e}"


def check_rk4_order():
    sched = ActionSchedule([0.0], [[0.0]])
    exact = math.exp(-1.0)
    e1 = abs(integrate(_decay, np.array([1.0]), 0.0, 1.0, sched, SolverSpec.rk4(10))[0] - exact)
    e2 = abs(integrate(_decay, np.array([1.0]), 0.0, 1.0, sched, SolverSpec.rk4(20))[0] - exact)
    ratio = e1 / e2
    return 12 <= ratio <= 20, f"error ratio {ratio:.2f}"


def check_dopri5():
    sched = ActionSchedule([0.0], [[0.0]])
    z = integrate(_decay, np.array([1.0]), 0.0, 2.0, sched, SolverSpec.dopri5(1e-8, 1e-8))
    err = abs(z[0] - math.exp(-2.0))
    return err < 1e-6, f"terminal error {err:.2e}"


def check_colored_noise():
    rng = np.random.default_rng(1)
    slopes = []
    for beta in (0.0, 1.0, 2.0):
        x = colored_noise(beta, (200, 256), rng)
        psd = np.mean(np.abs(np.fft.rfft(x, axis=-1)) ** 2, axis=0)[1:]
        f = np.fft.rfftfreq(256)[1:]
        slopes.append(np.polyfit(np.log(f), np.log(psd), 1)[0])
    ok = all(abs(s + b) <= 0.3 for s, b in zip(slopes, (0, 1, 2)))
    return ok, "slopes " + ", ".join(f"{s:.2f}" for s in slopes)


def check_cem_quadratic():
    target = np.array([[0.3, -0.2]])
    cfg = PlannerConfig(mode="cem", horizon=1, max_iters=20, beta=2.0, action_bound=1.0)
    best, _ = cem_optimize(lambda a: -np.sum((a - target) ** 2, axis=(1, 2)), cfg, np.random.default_rng(2))
    err = float(np.max(np.abs(best - target)))
    return err < 1e-2, f"max deviation {err:.2e}"


def check_rewards():
    spec = RewardSpec("box-rotation", target_yaw=0.0, threshold=0.3)
    r = float(reward_box(np.array([0.5, 0.0, 0.0, 0, 0, 0]), spec))
    g = RewardSpec("goal-heading", goal=(1.0, 0.0))
    # bearing change of about 2.9 degrees: heading term dropped
    small = float(reward_goal_heading(np.zeros(6), np.array([0.0, 0.05, 0, 0, 0, 0]), g))
    ok = abs(r + 5.0) < 1e-12 and abs(small + math.hypot(1.0, 0.05)) < 1e-12
    return ok, f"box reward {r:.3f}"


def check_traj_metrics():
    th = np.linspace(0, math.pi, 100)
    m = traj_metrics(np.c_[np.cos(th), np.sin(th)])
    sq = traj_metrics([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    ok = abs(m.length - math.pi) < 0.01 and abs(m.s_kappa - math.pi) < 0.05 and abs(sq.s_kappa - 1.5 * math.pi) < 1e-12
    return ok, f"semicircle length {m.length:.4f}, S_k {m.s_kappa:.4f}"


def check_tie_break():
    from .planner import argmax_with_ties

    acts = discrete_product(TURTLE_LINEAR, TURTLE_ANGULAR)[:, None, :]
    i = argmax_with_ties(acts, np.zeros(len(acts)))
    return bool(np.allclose(acts[i], 0.0)), f"constant reward picks {acts[i].ravel().tolist()}"


def check_event_log_roundtrip(tmpdir=None):
    import tempfile
    from pathlib import Path

    env = AsyncEnv(EnvParams("unicycle-wind"), EpisodeConfig(), IrregularityConfig(p_drop=0.5), 3)
    env.apply([0.5, 1.0], [[0.1, 0.0], [0.1, 0.1]])
    with tempfile.TemporaryDirectory(dir=tmpdir) as d:
        p = Path(d) / "log.jsonl"
        export_event_log(env.event_log, p)
        first = p.read_bytes()
        export_event_log(load_event_log(p), p)
        ok = first == p.read_bytes()
    return ok, f"{len(env.event_log)} events"


CHECKS = [
    ("gradient-vs-finite-difference", check_gradient),
    ("rk4-fourth-order", check_rk4_order),
    ("dopri5-accuracy", check_dopri5),
    ("colored-noise-slope", check_colored_noise),
    ("cem-static-quadratic", check_cem_quadratic),
    ("reward-formulas", check_rewards),
    ("trajectory-metrics", check_traj_metrics),
    ("shoot-tie-break", check_tie_break),
    ("event-log-roundtrip", check_event_log_roundtrip),
]


def run_checks(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
