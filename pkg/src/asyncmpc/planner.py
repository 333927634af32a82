"""Sampling-based action selection against a learned dynamics model.

Candidates are appended to the history of applied actions, the combined
schedule is propagated through the model from the time of the latest state
estimate, and the predicted terminal state is scored by a task reward.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AsyncMPCError, PlannerDegenerate
from .models import ModelParams, predict_batch, wrap_angle
from .ode import ActionSchedule, SolverSpec

log = logging.getLogger(__name__)

TURTLE_LINEAR = (-0.1, -0.05, -0.01, 0.0, 0.01, 0.05, 0.1)
TURTLE_ANGULAR = (-0.1, 0.0, 0.1)
GRIPPER_LEVELS = (-0.05, -0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.02, 0.05)


def discrete_product(*axes) -> np.ndarray:
    return np.array(list(itertools.product(*axes)), dtype=float)


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = "cem"  # "cem" or "random-shoot"
    population: int = 20  # N_p
    elites: int = 5  # N_e
    horizon: int = 4  # H
    beta: float = 2.0
    init_mean: float = 0.0
    init_std: float = 1.0
    max_iters: int = 5
    std_floor: float = 0.0
    keep_elites: bool = True
    momentum: float = 0.5  # weight kept on the previous mean/std at each refit
    action_dim: int = 2
    action_bound: float = 1.0
    actions: tuple | None = None  # discrete set for random shooting
    exhaustive: bool = True
    dt: float = 0.4  # propagation duration after the current time

    def __post_init__(self):
        if self.mode not in ("cem", "random-shoot"):
            raise ValueError(f"unknown planner mode {self.mode!r}")
        if not 1 <= self.elites <= self.population:
            raise ValueError("need 1 <= elites <= population")
        if self.horizon < 1 or self.beta < 0 or self.dt <= 0:
            raise ValueError("horizon >= 1, beta >= 0, dt > 0 required")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.mode == "random-shoot" and not self.actions:
            raise ValueError("random-shoot mode needs a non-empty discrete action set")

    @property
    def action_set(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=float).reshape(-1, self.action_dim)


# --------------------------------------------------------------------------
# Colored noise


def colored_noise(beta: float, shape: tuple, rng) -> np.ndarray:
    """Gaussian noise with power spectrum ~ f^-beta along the last axis.

    Unit marginal variance and zero mean; beta = 0 is plain white noise.
    """
    rng = np.random.default_rng(rng)
    n = shape[-1]
    if beta == 0 or n < 2:
        return rng.standard_normal(shape)
    f = np.fft.rfftfreq(n)
    f[0] = 1.0 / n  # low-frequency cutoff
    scale = f ** (-beta / 2.0)
    re = rng.standard_normal(shape[:-1] + (f.size,)) * scale
    im = rng.standard_normal(shape[:-1] + (f.size,)) * scale
    im[..., 0] = 0.0
    if n % 2 == 0:
        im[..., -1] = 0.0
        re[..., -1] *= math.sqrt(2.0)
    # exact marginal variance of the inverse transform: DC enters once,
    # interior bins as 2 Re(.), and the (doubled) Nyquist bin once
    var = scale[0] ** 2
    if n % 2 == 0:
        var += 4.0 * np.sum(scale[1:-1] ** 2) + 2.0 * scale[-1] ** 2
    else:
        var += 4.0 * np.sum(scale[1:] ** 2)
    sigma = math.sqrt(var) / n
    return np.fft.irfft(re + 1j * im, n=n, axis=-1) / sigma


def sample_colored(mean, std, beta: float, n: int, rng, bound: float | None = None) -> np.ndarray:
    """``n`` action sequences ``mean + std * eps`` with time-correlated ``eps``.

    ``mean`` and ``std`` are (H, M); the result is (n, H, M), clipped to
    ``[-bound, bound]`` when a bound is given.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    H, M = mean.shape
    eps = colored_noise(beta, (n, M, H), rng).transpose(0, 2, 1)
    out = mean + std * eps
    if bound is not None:
        out = np.clip(out, -bound, bound)
    return out


# --------------------------------------------------------------------------
# Rewards


@dataclass
class RewardSpec:
    kind: str
    target_yaw: float = math.pi / 2
    initial_position: tuple = (0.0, 0.0)
    threshold: float = 0.3  # r_t
    penalty: float = 10.0
    goal: tuple = (0.0, 0.0)
    heading_tol_deg: float = 5.0
    bounds: tuple = (-2.0, 2.0, -2.0, 2.0)
    cells: int = 40
    visits: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("box-rotation", "goal-heading", "exploration"):
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.cells < 1:
            raise ValueError("grid resolution must be >= 1")
        if self.kind == "exploration" and self.visits is None:
            self.visits = np.zeros((self.cells, self.cells), dtype=np.int64)

    def cell(self, xy) -> tuple:
        xy = np.asarray(xy, dtype=float)
        x0, x1, y0, y1 = self.bounds
        ix = np.clip(np.floor((xy[..., 0] - x0) / (x1 - x0) * self.cells), 0, self.cells - 1).astype(int)
        iy = np.clip(np.floor((xy[..., 1] - y0) / (y1 - y0) * self.cells), 0, self.cells - 1).astype(int)
        return ix, iy

    def visit(self, xy) -> None:
        ix, iy = self.cell(xy)
        self.visits[ix, iy] += 1


def reward_box(z_pred, spec: RewardSpec):
    z = np.asarray(z_pred, dtype=float)
    yaw_err = wrap_angle(spec.target_yaw - z[..., 2])
    d = np.hypot(z[..., 0] - spec.initial_position[0], z[..., 1] - spec.initial_position[1])
    return -(yaw_err**2) - spec.penalty * (d > spec.threshold) * d


def reward_goal_heading(z_t, z_next, spec: RewardSpec):
    z_t = np.asarray(z_t, dtype=float)
    z_next = np.asarray(z_next, dtype=float)
    goal = np.asarray(spec.goal, dtype=float)
    v0 = goal - z_t[..., :2]
    v1 = goal - z_next[..., :2]
    n0 = np.linalg.norm(v0, axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    ok = (n0 >= 1e-6) & (n1 >= 1e-6)
    cosang = np.sum(v0 * v1, axis=-1) / np.where(ok, n0 * n1, 1.0)
    u = np.where(ok, np.arccos(np.clip(cosang, -1.0, 1.0)), 0.0)
    heading = np.where(u > math.radians(spec.heading_tol_deg), u, 0.0)
    return -n1 - heading


def reward_exploration(z_pred, spec: RewardSpec):
    ix, iy = spec.cell(np.asarray(z_pred, dtype=float)[..., :2])
    return -spec.visits[ix, iy].astype(float)


def evaluate_reward(spec: RewardSpec, z_start, z_end):
    if spec.kind == "box-rotation":
        return reward_box(z_end, spec)
    if spec.kind == "goal-heading":
        return reward_goal_heading(np.broadcast_to(z_start, np.shape(z_end)), z_end, spec)
    return reward_exploration(z_end, spec)


# --------------------------------------------------------------------------
# Scoring and selection


@dataclass
class PlanContext:
    """Everything needed to score candidates at one planning instant."""

    params: ModelParams
    z0: np.ndarray  # state estimate at t_obs
    t_obs: float
    history: ActionSchedule
    t_now: float
    reward: RewardSpec
    solver: SolverSpec = field(default_factory=lambda: SolverSpec.rk4(4))

    def knot_times(self, horizon: int, dt: float) -> np.ndarray:
        return self.t_now + dt * np.arange(1, horizon + 1) / horizon


def score_sequence(ctx: PlanContext, candidates, dt: float) -> np.ndarray:
    """Rewards of candidate sequences (N, H, M) or a single (H, M) sequence.

    Failed propagations score -inf.
    """
    cand = np.asarray(candidates, dtype=float)
    single = cand.ndim == 2
    if single:
        cand = cand[None]
    N, H, _ = cand.shape
    times = ctx.knot_times(H, dt)
    hist = ctx.history
    keep = hist.times < times[0]
    base = ActionSchedule(hist.times[keep], hist.values[keep])
    sched = base.extended(times, np.transpose(cand, (1, 0, 2)))
    z0 = np.broadcast_to(np.asarray(ctx.z0, dtype=float), (N, ctx.z0.shape[-1]))
    try:
        z_end = predict_batch(ctx.params, z0, ctx.t_obs, ctx.t_now + dt, sched, ctx.solver)
        scores = evaluate_reward(ctx.reward, z0, z_end)
        scores = np.where(np.all(np.isfinite(z_end), axis=-1), scores, -np.inf)
    except AsyncMPCError as exc:
        log.warning("candidate propagation failed: %s", exc)
        scores = np.full(N, -np.inf)
    return scores[0] if single else scores


@dataclass
class CEMTrace:
    best_scores: list = field(default_factory=list)
    elite_means: list = field(default_factory=list)
    stds: list = field(default_factory=list)


def cem_optimize(score_fn, cfg: PlannerConfig, rng, trace: CEMTrace | None = None):
    """Cross-entropy search over (H, M) sequences; returns (best sequence, best score).

    The refit never increases the per-entry std, so on a deterministic
    reward the sampling distribution contracts monotonically.
    """
    rng = np.random.default_rng(rng)
    H, M = cfg.horizon, cfg.action_dim
    mean = np.full((H, M), cfg.init_mean, dtype=float)
    std = np.full((H, M), cfg.init_std, dtype=float)
    elites = np.empty((0, H, M))
    elite_scores = np.empty(0)
    best, best_score = None, -np.inf
    for _ in range(cfg.max_iters):
        samples = sample_colored(mean, std, cfg.beta, cfg.population, rng, cfg.action_bound)
        scores = np.asarray(score_fn(samples), dtype=float)
        if cfg.keep_elites and len(elites):
            samples = np.concatenate([samples, elites])
            scores = np.concatenate([scores, elite_scores])
        if not np.any(np.isfinite(scores)):
            continue
        order = np.argsort(-np.where(np.isfinite(scores), scores, -np.inf), kind="stable")[: cfg.elites]
        elites, elite_scores = samples[order], scores[order]
        if elite_scores[0] > best_score:
            best, best_score = elites[0].copy(), float(elite_scores[0])
        a = cfg.momentum
        mean = a * mean + (1.0 - a) * elites.mean(axis=0)
        elite_std = elites.std(axis=0, ddof=1 if len(elites) > 1 else 0)
        std = np.minimum(a * std + (1.0 - a) * elite_std, std)
        if trace is not None:
            trace.best_scores.append(best_score)
            trace.elite_means.append(float(np.mean(elite_scores)))
            trace.stds.append(float(std.mean()))
        if cfg.std_floor > 0 and float(std.mean()) < cfg.std_floor:
            break
    if best is None:
        raise PlannerDegenerate("every candidate scored -inf")
    return best, best_score


def cem_select(ctx: PlanContext, cfg: PlannerConfig, rng, trace: CEMTrace | None = None) -> np.ndarray:
    best, _ = cem_optimize(lambda c: score_sequence(ctx, c, cfg.dt), cfg, rng, trace)
    return best


def _tie_order(actions: np.ndarray) -> np.ndarray:
    """Indices sorted by (norm, lexicographic)."""
    flat = actions.reshape(len(actions), -1)
    norms = np.linalg.norm(flat, axis=1)
    # np.lexsort sorts by the last key first
    keys = [flat[:, j] for j in range(flat.shape[1])][::-1] + [norms]
    return np.lexsort(keys)


def argmax_with_ties(actions: np.ndarray, scores: np.ndarray) -> int:
    scores = np.asarray(scores, dtype=float)
    top = np.max(scores)
    if not np.isfinite(top):
        raise PlannerDegenerate("every candidate scored -inf")
    tied = np.flatnonzero(scores == top)
    return int(tied[_tie_order(actions[tied])[0]])


def shoot_candidates(cfg: PlannerConfig, rng) -> np.ndarray:
    acts = cfg.action_set
    if cfg.exhaustive or cfg.population >= len(acts):
        return acts
    rng = np.random.default_rng(rng)
    return acts[rng.integers(len(acts), size=cfg.population)]


def shoot_select(ctx: PlanContext, cfg: PlannerConfig, rng) -> np.ndarray:
    """Best single action from the discrete set (H = 1)."""
    cands = shoot_candidates(cfg, rng)
    scores = score_sequence(ctx, cands[:, None, :], cfg.dt)
    return cands[argmax_with_ties(cands, scores)].copy()


def select_command(ctx: PlanContext, cfg: PlannerConfig, rng) -> np.ndarray:
    """(H, M) action sequence from whichever planner ``cfg.mode`` names."""
    if cfg.mode == "cem":
        return cem_select(ctx, cfg, rng)
    return shoot_select(ctx, cfg, rng)[None, :]
