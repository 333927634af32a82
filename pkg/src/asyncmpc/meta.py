"""Episode execution with in-episode model refinement, and the ES meta-loop.

An episode perturbs the prior, then repeatedly estimates the state from the
freshest observations, plans against the current model, applies a prefix of
the plan and refines the model on observation pairs gathered so far. The
prior itself is only ever written by :func:`meta_update`, which combines the
post-adaptation validation losses of all episodes of one meta-iteration into
a zero-order gradient estimate.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .env import (
    AsyncEnv,
    EnvParams,
    EpisodeConfig,
    IrregularityConfig,
    TimedEvent,
    sample_env,
    xi_estimate,
)
from .errors import AsyncMPCError
from .models import ModelParams, StateEstimate, TrainConfig, TrainStats, TrainingExample, node_loss, optimize_node, save_params
from .ode import ActionSchedule
from .planner import PlanContext, PlannerConfig, RewardSpec, select_command

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaConfig:
    n_envs: int = 20  # N
    alpha: float = 5e-4
    sigma: float = 1e-2
    r_split: float = 0.75
    train_freq: int = 5
    n_iterations: int = 10
    m_test: int = 20
    eval_every: int = 1
    antithetic: bool = False
    alpha_decay: float = 1.0  # multiplicative decay of alpha per meta-iteration
    seed: int = 0

    def __post_init__(self):
        if self.n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        if self.alpha < 0 or self.sigma <= 0:
            raise ValueError("alpha must be >= 0 and sigma > 0")
        if not 0.0 < self.r_split < 1.0:
            raise ValueError("r_split must be in (0, 1)")
        if self.train_freq < 1 or self.n_iterations < 0 or self.m_test < 0 or self.eval_every < 1:
            raise ValueError("train_freq, eval_every >= 1 and counts >= 0 required")
        if self.antithetic and self.n_envs % 2:
            raise ValueError("antithetic sampling needs an even n_envs")
        if not 0.0 < self.alpha_decay <= 1.0:
            raise ValueError("alpha_decay must be in (0, 1]")


@dataclass(frozen=True)
class EpisodeSetup:
    """Everything an episode needs besides the model and the hidden dynamics."""

    variant: str
    planner: PlannerConfig
    train: TrainConfig
    episode: EpisodeConfig
    irregularity: IrregularityConfig = IrregularityConfig()
    reward: str = "goal-heading"
    r_split: float = 0.75
    train_freq: int = 5
    wind_gain: float = 1.0
    arena: tuple = (-2.0, 2.0, -2.0, 2.0)
    cells: int = 40

    def make_reward(self, env: AsyncEnv) -> RewardSpec:
        if self.reward == "box-rotation":
            return RewardSpec(
                "box-rotation",
                target_yaw=self.episode.target_yaw,
                initial_position=tuple(env.initial[:2]),
                threshold=self.episode.pos_tol if self.episode.pos_tol > 0 else 0.3,
            )
        if self.reward == "goal-heading":
            return RewardSpec("goal-heading", goal=tuple(self.episode.goal))
        return RewardSpec("exploration", bounds=self.arena, cells=self.cells)


@dataclass
class EpisodeReport:
    env: EnvParams
    outcome: str
    applied: int
    params: ModelParams
    val_loss: float | None
    events: list = field(default_factory=list, repr=False)
    positions: np.ndarray | None = field(default=None, repr=False)
    diagnostic: str = ""
    n_train: int = 0
    n_val: int = 0
    iterations: int = 0
    elapsed: float = 0.0  # simulated seconds
    physics_steps: int = 0
    coverage: int = 0
    eps: np.ndarray | None = field(default=None, repr=False)

    @property
    def solved(self) -> bool:
        return self.outcome == "solved"


# --------------------------------------------------------------------------
# Sample split


def _start_estimate(prev: TimedEvent | None, cur: TimedEvent) -> StateEstimate:
    if prev is None:
        return StateEstimate(*cur.payload[:3])
    return xi_estimate(prev, cur)


def make_pair_examples(window, actions: ActionSchedule, prev: TimedEvent | None = None) -> list[TrainingExample]:
    """One example per consecutive observation pair of ``window``.

    The start estimate of the first pair uses ``prev`` (the observation just
    before the window) for its velocity when given, zero velocity otherwise.
    """
    out = []
    for k in range(len(window) - 1):
        a, b = window[k], window[k + 1]
        before = window[k - 1] if k > 0 else prev
        z0 = _start_estimate(before, a).as_array()
        d = np.asarray(b.payload[:3], dtype=float) - np.asarray(a.payload[:3], dtype=float)
        d[2] = math.atan2(math.sin(d[2]), math.cos(d[2]))
        end = xi_estimate(a, b).as_array()
        delta = np.concatenate([d, end[3:] - z0[3:]])
        out.append(TrainingExample(z0, a.t, b.t, delta, actions))
    return out


def sample_split(window, actions: ActionSchedule, r_split: float, rng, prev: TimedEvent | None = None):
    """Consecutive-pair examples assigned to train with probability ``r_split``."""
    if len(window) < 2:
        return [], []
    rng = np.random.default_rng(rng)
    examples = make_pair_examples(window, actions, prev)
    draws = rng.random(len(examples))
    train = [ex for ex, u in zip(examples, draws) if u < r_split]
    val = [ex for ex, u in zip(examples, draws) if u >= r_split]
    return train, val


# --------------------------------------------------------------------------
# Episode


def _state_from_window(window) -> tuple[np.ndarray, float]:
    if len(window) >= 2:
        return xi_estimate(window[-2], window[-1]).as_array(), window[-1].t
    return StateEstimate(*window[-1].payload[:3]).as_array(), window[-1].t


def _status(env: AsyncEnv, reward: RewardSpec) -> str:
    status = env.status()
    if reward.kind == "exploration" and status == "solved":
        # exploration has no goal; only the action budget ends it
        return "timeout" if env.applied_count >= env.episode.max_actions else "running"
    return status


def _random_command(pcfg: PlannerConfig, rng) -> np.ndarray:
    if pcfg.actions:
        acts = pcfg.action_set
        return acts[rng.integers(len(acts))][None, :]
    b = pcfg.action_bound
    return rng.uniform(-b, b, size=(pcfg.horizon, pcfg.action_dim))


def run_episode(
    theta_start: ModelParams,
    env_params: EnvParams,
    setup: EpisodeSetup,
    rng=None,
    keep_events: bool = True,
    policy: str = "model",
) -> EpisodeReport:
    """One episode: plan, apply K actions, split data, refine every ``train_freq`` cycles.

    ``policy="random"`` replaces planning by uniform draws from the action
    set (same timing and bookkeeping), which serves as a reference policy.
    """
    if policy not in ("model", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    if isinstance(rng, np.random.SeedSequence):
        # spawning mutates a sequence; copy it so a seed shared by paired
        # runs, or reused by sequential runs in one process, replays exactly
        rng = np.random.SeedSequence(rng.entropy, spawn_key=rng.spawn_key, pool_size=rng.pool_size)
    rng = np.random.default_rng(rng)
    env_rng, plan_rng, split_rng, train_rng = rng.spawn(4)
    episode = setup.episode
    env = AsyncEnv(env_params, episode, setup.irregularity, env_rng)
    reward = setup.make_reward(env)
    if reward.kind == "exploration":
        reward.visit(env.pose[:2])
    theta = theta_start.copy()
    d_train: list[TrainingExample] = []
    d_val: list[TrainingExample] = []
    seen: set = set()
    step_offset = 0
    it = 0
    diagnostic = ""
    status = _status(env, reward)
    pcfg = setup.planner
    while status == "running":
        window = env.window(episode.window)
        z_hat, t_obs = _state_from_window(window)
        history = env.actions_since(window[0].t)
        first = len(env.observations) - len(window)
        prev = env.observations[first - 1] if first >= 1 else None
        t_now = env.t
        ctx = PlanContext(theta, z_hat, t_obs, history, t_now, reward, setup.train.solver)
        try:
            if policy == "random":
                seq = _random_command(pcfg, plan_rng)
            else:
                seq = select_command(ctx, pcfg, plan_rng)
        except AsyncMPCError as exc:
            diagnostic = f"planner failed at t={t_now:.3f}: {exc}"
            log.warning(diagnostic)
            status = "timeout"
            break
        k = min(episode.apply_k, len(seq))
        times = ctx.knot_times(len(seq), pcfg.dt)[:k]
        n_before = len(env.truth)
        env.apply(times, seq[:k])
        if reward.kind == "exploration":
            for _, pose in env.truth[n_before:]:
                reward.visit(pose[:2])

        tr, va = sample_split(window, history, setup.r_split, split_rng, prev)
        for ex in tr:
            if ex.key not in seen:
                seen.add(ex.key)
                d_train.append(ex)
        for ex in va:
            if ex.key not in seen:
                seen.add(ex.key)
                d_val.append(ex)
        it += 1
        if it % setup.train_freq == 0 and d_train:
            try:
                theta = optimize_node(theta, d_train, setup.train, train_rng, step_offset, TrainStats())
                step_offset += setup.train.n_iters
            except AsyncMPCError as exc:
                diagnostic = f"inner training failed at t={env.t:.3f}: {exc}"
                log.warning(diagnostic)
                status = "timeout"
                break
        status = _status(env, reward)

    val_loss = None
    if d_val:
        try:
            val_loss = node_loss(theta, d_val, setup.train.w_l, setup.train.solver)
        except AsyncMPCError as exc:
            diagnostic = diagnostic or f"validation failed: {exc}"
        if val_loss is not None and not math.isfinite(val_loss):
            val_loss = None
    coverage = int(np.count_nonzero(reward.visits)) if reward.kind == "exploration" else 0
    return EpisodeReport(
        env=env_params,
        outcome="solved" if status == "solved" else "timeout",
        applied=env.applied_count,
        params=theta,
        val_loss=val_loss,
        events=env.event_log if keep_events else [],
        positions=np.array([p[:2] for _, p in env.truth]),
        diagnostic=diagnostic,
        n_train=len(d_train),
        n_val=len(d_val),
        iterations=it,
        elapsed=env.t,
        physics_steps=env.physics_steps,
        coverage=coverage,
    )


# --------------------------------------------------------------------------
# Meta update


def meta_update(theta: ModelParams, losses, eps, alpha: float, sigma: float) -> ModelParams:
    """``theta - alpha / (N sigma) * sum_i L_i eps_i``.

    ``None`` (empty validation set) losses are replaced by the mean of the
    available ones; when none is available the update is skipped.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 1:
        eps = eps[None]
    n = eps.shape[0]
    if len(losses) != n:
        raise ValueError("one loss per perturbation is required")
    known = [float(v) for v in losses if v is not None]
    if not known:
        log.warning("meta-update skipped: every validation set is empty")
        return theta.copy()
    if len(known) < n:
        log.warning("%d episode(s) had empty validation sets; using the mean loss", n - len(known))
    fill = float(np.mean(known))
    L = np.array([fill if v is None else float(v) for v in losses])
    # elementwise products summed over episodes (no BLAS fused kernels), so
    # mirrored perturbations with equal losses cancel exactly
    step = (alpha / (n * sigma)) * np.sum(L[:, None] * eps, axis=0)
    return theta.with_flat(theta.flat - step)


def draw_perturbations(n: int, dim: int, rng, antithetic: bool = False) -> np.ndarray:
    rng = np.random.default_rng(rng)
    if not antithetic:
        return rng.standard_normal((n, dim))
    half = rng.standard_normal((n // 2, dim))
    return np.concatenate([half, -half])


# --------------------------------------------------------------------------
# Outer loop


def _episode_job(args):
    theta, env_params, setup, seed, *rest = args
    policy = rest[0] if rest else "model"
    return run_episode(theta, env_params, setup, seed, keep_events=False, policy=policy)


def run_episodes(jobs, parallel: int = 1):
    """Run ``(theta, env, setup, seed[, policy])`` jobs; results come back in job order."""
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_episode_job, jobs))
    return [_episode_job(j) for j in jobs]


def _stats(values):
    if not values:
        return None, None
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std())


def iteration_metrics(iteration: int, reports, test_solved: float | None) -> dict:
    steps_all = [r.applied for r in reports]
    steps_solved = [r.applied for r in reports if r.solved]
    m_all, s_all = _stats(steps_all)
    m_sol, s_sol = _stats(steps_solved)
    return {
        "iteration": iteration,
        "solved_pct": 100.0 * len(steps_solved) / max(len(reports), 1),
        "mean_steps_all": m_all,
        "std_steps_all": s_all,
        "mean_steps_solved": m_sol,
        "std_steps_solved": s_sol,
        "mean_sim_time_all": _stats([r.elapsed for r in reports])[0],
        "test_solved_pct": test_solved,
    }


def evaluate_prior(theta: ModelParams, setup: EpisodeSetup, envs, seeds, parallel: int = 1):
    """Unperturbed prior adapted per episode with the usual inner budget."""
    jobs = [(theta, e, setup, s) for e, s in zip(envs, seeds)]
    return run_episodes(jobs, parallel)


@dataclass
class MetaResult:
    best: ModelParams
    last: ModelParams
    metrics: list
    best_test_solved: float | None


def held_out_draw(test_seq: np.random.SeedSequence, m: int, setup: EpisodeSetup, magnitudes):
    """Test environments and episode seeds drawn from one iteration's test stream."""
    env_seq, ep_seq = test_seq.spawn(2)
    envs = [
        sample_env("test", setup.variant, np.random.default_rng(s), magnitudes=magnitudes, wind_gain=setup.wind_gain)
        for s in env_seq.spawn(m)
    ]
    return envs, ep_seq.spawn(m)


def held_out_stream(meta: MetaConfig, iteration: int) -> np.random.SeedSequence:
    """The seed stream ``acumen_train`` uses for held-out evaluation after ``iteration``."""
    it_seq = np.random.SeedSequence(meta.seed).spawn(iteration + 1)[iteration]
    return it_seq.spawn(4)[3]


def acumen_train(
    theta0: ModelParams,
    meta: MetaConfig,
    setup: EpisodeSetup,
    parallel: int = 1,
    out_dir=None,
    magnitudes=None,
) -> MetaResult:
    """Meta-learn a prior; returns the best (by held-out success) and last priors."""
    from .env import S_MAG

    mags = S_MAG if magnitudes is None else magnitudes
    setup = replace(setup, r_split=meta.r_split, train_freq=meta.train_freq)
    root = np.random.SeedSequence(meta.seed)
    theta = theta0.copy()
    metrics: list[dict] = []
    best, best_score = theta.copy(), -math.inf
    out = Path(out_dir) if out_dir is not None else None
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "metrics.jsonl", "w", encoding="utf-8")
    try:
        for it_seq, it in zip(root.spawn(meta.n_iterations), range(meta.n_iterations)):
            eps_seq, env_seq, ep_seq, test_seq = it_seq.spawn(4)
            eps = draw_perturbations(meta.n_envs, len(theta), np.random.default_rng(eps_seq), meta.antithetic)
            env_rngs = [np.random.default_rng(s) for s in env_seq.spawn(meta.n_envs)]
            envs = [sample_env("train", setup.variant, r, magnitudes=mags, wind_gain=setup.wind_gain) for r in env_rngs]
            seeds = ep_seq.spawn(meta.n_envs)
            jobs = [(theta.with_flat(theta.flat + meta.sigma * e), env, setup, s) for e, env, s in zip(eps, envs, seeds)]
            reports = run_episodes(jobs, parallel)
            for r, e in zip(reports, eps):
                r.eps = e
            alpha = meta.alpha * meta.alpha_decay**it
            theta = meta_update(theta, [r.val_loss for r in reports], eps, alpha, meta.sigma)

            test_solved = None
            if meta.m_test and (it + 1) % meta.eval_every == 0:
                t_envs, t_seeds = held_out_draw(test_seq, meta.m_test, setup, mags)
                t_reports = evaluate_prior(theta, setup, t_envs, t_seeds, parallel)
                test_solved = 100.0 * sum(r.solved for r in t_reports) / meta.m_test
                if test_solved > best_score:
                    best, best_score = theta.copy(), test_solved
            rec = iteration_metrics(it, reports, test_solved)
            metrics.append(rec)
            if fh is not None:
                fh.write(json.dumps(rec, sort_keys=False) + "\n")
                fh.flush()
                save_params(theta, out / "prior_last.npz")
                save_params(best if best_score > -math.inf else theta, out / "prior_best.npz")
    finally:
        if fh is not None:
            fh.close()
    if best_score == -math.inf:
        best = theta.copy()
    return MetaResult(best=best, last=theta, metrics=metrics, best_test_solved=None if best_score == -math.inf else best_score)
