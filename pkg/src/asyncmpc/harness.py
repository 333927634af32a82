"""Experiment orchestration: configuration, pretraining, ablation suites, metrics.

Configuration files are YAML documents with an explicit ``schema_version``.
Every section maps onto one of the library's config dataclasses and unknown
keys are rejected with the dotted path of the offending entry.

All numeric output files are written with ``repr``-formatted floats and a
fixed column order, so re-running a seeded suite reproduces them
byte-for-byte.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .env import (
    EnvParams,
    EpisodeConfig,
    IrregularityConfig,
    AsyncEnv,
    sample_env,
)
from .errors import AsyncMPCError, ConfigError, InsufficientData
from .meta import EpisodeSetup, MetaConfig, acumen_train, make_pair_examples, run_episodes
from .models import (
    ModelParams,
    TrainConfig,
    TrainStats,
    init_node_params,
    init_rnn_params,
    load_params,
    node_loss,
    optimize_node,
    param_count,
    node_layers,
    rnn_width_for,
    save_params,
)
from .ode import SolverSpec
from .planner import GRIPPER_LEVELS, TURTLE_ANGULAR, TURTLE_LINEAR, PlannerConfig, discrete_product

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUITES = ("no-meta", "rnn-vs-node", "specialist-vs-prior", "pdrop-sweep", "exploration")
SWEEP_TARGETS = ((3.0, -2.0), (-3.0, -2.0), (3.0, 1.0), (3.0, 3.0), (2.5, 6.3))
ACTION_SETS = {
    "turtlebot": lambda: discrete_product(TURTLE_LINEAR, TURTLE_ANGULAR),
    "gripper": lambda: discrete_product(GRIPPER_LEVELS, GRIPPER_LEVELS),
}


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "node"
    hidden: tuple = (64, 64)
    rnn_layers: int = 5
    rnn_width: int = 0  # 0 picks the width matching the neural-ODE parameter count
    init_seed: int = 0
    checkpoint: str = ""

    def __post_init__(self):
        if self.kind not in ("node", "rnn"):
            raise ValueError("kind must be 'node' or 'rnn'")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be positive")


@dataclass(frozen=True)
class PretrainConfig:
    """Supervised pretraining on random-action rollouts of one fixed plant."""

    episodes: int = 60
    steps: int = 20
    cmd_dt: float = 0.5
    max_gap: int = 6
    p_drop: float = 0.0
    iterations: int = 6000
    lr: float = 3e-3
    lr_decay: float = 0.9996
    batch_size: int = 512
    w_l: float = 1.0
    val_episodes: int = 10
    command_set: str = ""  # named discrete action set; empty draws uniformly from the action box

    def __post_init__(self):
        if self.episodes < 1 or self.steps < 1 or self.iterations < 1 or self.max_gap < 1:
            raise ValueError("pretraining counts must be positive")
        if self.command_set and self.command_set not in ACTION_SETS:
            raise ValueError(f"unknown command set {self.command_set!r}")


@dataclass(frozen=True)
class SuiteConfig:
    pdrop_levels: tuple = (0.0, 0.2, 0.5)
    targets: tuple = SWEEP_TARGETS
    repeats: int = 5
    pairs: int = 10
    specialist_envs: int = 60
    specialist_iterations: int = 0  # 0 reuses the pretraining iteration count
    exploration_budget: int = 150
    exploration_runs: int = 5
    # planner used with the occupancy reward; sampled candidates break the
    # many exact ties of a count-valued reward at random
    exploration_mode: str = "cem"
    exploration_population: int = 20
    exploration_elites: int = 5

    def __post_init__(self):
        if self.exploration_mode not in ("cem", "random-shoot"):
            raise ValueError("exploration_mode must be 'cem' or 'random-shoot'")
        if self.exploration_population < 1 or self.exploration_elites < 1:
            raise ValueError("exploration population and elites must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    variant: str = "unicycle-wind"
    seed: int = 0
    output_dir: str = "runs/default"
    wind_gain: float = 0.1
    reward: str = "goal-heading"
    model: ModelConfig = ModelConfig()
    pretrain: PretrainConfig = PretrainConfig()
    irregularity: IrregularityConfig = IrregularityConfig()
    planner: PlannerConfig = PlannerConfig()
    train: TrainConfig = TrainConfig()
    meta: MetaConfig = MetaConfig()
    episode: EpisodeConfig = EpisodeConfig()
    suites: SuiteConfig = SuiteConfig()

    def setup(self, **overrides) -> EpisodeSetup:
        base = EpisodeSetup(
            variant=self.variant,
            planner=self.planner,
            train=self.train,
            episode=self.episode,
            irregularity=self.irregularity,
            reward=self.reward,
            r_split=self.meta.r_split,
            train_freq=self.meta.train_freq,
            wind_gain=self.wind_gain,
        )
        return replace(base, **overrides) if overrides else base


def _convert(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    default = cls()
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(sub, "unknown key")
        current = getattr(default, key)
        if dataclasses.is_dataclass(current):
            kwargs[key] = _build(type(current), value, sub)
        elif cls is PlannerConfig and key == "actions" and isinstance(value, str):
            if value not in ACTION_SETS:
                raise ConfigError(sub, f"unknown action set {value!r}")
            kwargs[key] = tuple(tuple(float(x) for x in row) for row in ACTION_SETS[value]())
        elif cls is PlannerConfig and key == "actions" and isinstance(value, list):
            kwargs[key] = tuple(tuple(float(x) for x in row) for row in value)
        else:
            kwargs[key] = _convert(value, current)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or "<root>", str(exc)) from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"malformed YAML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (tuple, list)):
            return [plain(x) for x in v]
        if isinstance(v, np.generic):
            return v.item()
        return v

    return plain(cfg)


def dump_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False), encoding="utf-8")
    return path


def scaled(n: int, scale: float) -> int:
    return max(1, int(math.ceil(n * scale)))


def apply_scale(cfg: ExperimentConfig, scale: float) -> ExperimentConfig:
    """Shrink populations, iteration counts and repetitions by ``scale``."""
    if scale == 1.0:
        return cfg
    if scale <= 0:
        raise ConfigError("scale", "must be positive")
    meta = replace(
        cfg.meta,
        n_envs=scaled(cfg.meta.n_envs, scale) + (scaled(cfg.meta.n_envs, scale) % 2 if cfg.meta.antithetic else 0),
        n_iterations=scaled(cfg.meta.n_iterations, scale),
        m_test=scaled(cfg.meta.m_test, scale) if cfg.meta.m_test else 0,
    )
    suites = replace(
        cfg.suites,
        repeats=scaled(cfg.suites.repeats, scale),
        pairs=scaled(cfg.suites.pairs, scale),
        specialist_envs=scaled(cfg.suites.specialist_envs, scale),
        exploration_runs=scaled(cfg.suites.exploration_runs, scale),
    )
    pre = replace(
        cfg.pretrain,
        episodes=scaled(cfg.pretrain.episodes, scale),
        iterations=scaled(cfg.pretrain.iterations, scale),
    )
    return replace(cfg, meta=meta, suites=suites, pretrain=pre)


# --------------------------------------------------------------------------
# Trajectory metrics


@dataclass(frozen=True)
class TrajectoryMetrics:
    length: float
    s_kappa: float
    applied: int = 0
    outcome: str = ""


def traj_metrics(positions, applied: int = 0, outcome: str = "") -> TrajectoryMetrics:
    """Polyline length and total absolute turning angle of a 2-D path.

    Segments shorter than 1e-6 m carry no direction and are skipped when
    measuring turning angles.
    """
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InsufficientData("need at least two points")
    seg = np.diff(pts[:, :2], axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    length = float(lens.sum())
    dirs = seg[lens >= 1e-6]
    s_kappa = 0.0
    if len(dirs) >= 2:
        a, b = dirs[:-1], dirs[1:]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = np.sum(a * b, axis=1)
        s_kappa = float(np.sum(np.abs(np.arctan2(cross, dot))))
    return TrajectoryMetrics(length, s_kappa, int(applied), outcome)


# --------------------------------------------------------------------------
# Models and pretraining


def reference_env(variant: str, wind_gain: float = 1.0) -> EnvParams:
    """Zero-wind unicycle or the mid-box belt coefficients."""
    if variant == "unicycle-wind":
        return EnvParams("unicycle-wind", wind_gain=wind_gain)
    return EnvParams("belt-box", kappa_m=0.65, kappa_r=1.25, kappa_s=0.0)


def init_model(cfg: ModelConfig, kind: str | None = None, action_dim: int = 2) -> ModelParams:
    kind = kind or cfg.kind
    node = init_node_params(cfg.hidden, action_dim, cfg.init_seed)
    if kind == "node":
        return node
    width = cfg.rnn_width or rnn_width_for(param_count(node_layers(cfg.hidden, action_dim)), cfg.rnn_layers, action_dim)
    return init_rnn_params(width, cfg.rnn_layers, action_dim, cfg.init_seed)


def collect_random_data(env_params: EnvParams, pre: PretrainConfig, rng, start_box: float = 1.0):
    """Observation-pair examples from uniform random commands.

    Each rollout starts at a random pose; pairs join an observation with one
    of the next ``max_gap`` observations so intervals of several lengths
    appear in the data.
    """
    rng = np.random.default_rng(rng)
    bound = env_params.action_bound
    choices = ACTION_SETS[pre.command_set]() if pre.command_set else None
    data = []
    for _ in range(pre.episodes):
        start = (rng.uniform(-start_box, start_box), rng.uniform(-start_box, start_box), rng.uniform(-math.pi, math.pi))
        ep = EpisodeConfig(start_pose=start, obs_rate=6.0 if env_params.variant == "unicycle-wind" else 10.0)
        env = AsyncEnv(env_params, ep, IrregularityConfig(p_drop=pre.p_drop), rng.integers(2**31))
        for _ in range(pre.steps):
            cmd = choices[rng.integers(len(choices))] if choices is not None else rng.uniform(-bound, bound, 2)
            env.apply([env.t + pre.cmd_dt], [cmd])
        obs = env.observations
        sched = env.schedule
        for i in range(1, len(obs) - 1):
            j = i + int(rng.integers(1, pre.max_gap + 1))
            if j < len(obs):
                data += make_pair_examples([obs[i], obs[j]], sched, obs[i - 1])
    return data


def pretrain_model(params: ModelParams, env_params: EnvParams, pre: PretrainConfig, rng, solver: SolverSpec):
    """Fit ``params`` to random-action data from ``env_params``; returns (params, stats dict)."""
    rng = np.random.default_rng(rng)
    data_rng, val_rng, opt_rng = rng.spawn(3)
    train = collect_random_data(env_params, pre, data_rng)
    val = collect_random_data(env_params, replace(pre, episodes=pre.val_episodes), val_rng)
    cfg = TrainConfig(
        lr=pre.lr, lr_decay=pre.lr_decay, w_l=pre.w_l, n_iters=pre.iterations, batch_size=pre.batch_size, solver=solver
    )
    stats = TrainStats()
    fitted = optimize_node(params, train, cfg, opt_rng, 0, stats)
    val_loss = node_loss(fitted, val, pre.w_l, solver)
    return fitted, {
        "n_train": len(train),
        "n_val": len(val),
        "initial_loss": stats.initial_loss,
        "train_loss": stats.final_loss,
        "val_loss": val_loss,
    }


def obtain_model(cfg: ExperimentConfig, kind: str | None = None, out_dir=None, env_params: EnvParams | None = None):
    """Checkpoint from the config if given, else a model pretrained on the reference plant.

    Pretrained models are cached in ``out_dir`` so suites sharing an output
    directory reuse them.
    """
    kind = kind or cfg.model.kind
    if cfg.model.checkpoint and kind == cfg.model.kind:
        return load_params(cfg.model.checkpoint)
    env_params = env_params or reference_env(cfg.variant, cfg.wind_gain)
    cache = None
    if out_dir is not None:
        cache = Path(out_dir) / f"pretrained_{kind}.npz"
        if cache.exists():
            return load_params(cache)
    params = init_model(cfg.model, kind, cfg.planner.action_dim)
    seq = np.random.SeedSequence([cfg.seed, 1 if kind == "node" else 2])
    fitted, info = pretrain_model(params, env_params, cfg.pretrain, np.random.default_rng(seq), cfg.train.solver)
    log.info("pretrained %s model: %s", kind, info)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        save_params(fitted, cache)
        (cache.with_suffix(".json")).write_text(json.dumps(info) + "\n", encoding="utf-8")
    return fitted


# --------------------------------------------------------------------------
# Output helpers


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def _seeds(seed: int, tag: int, n: int):
    return np.random.SeedSequence([seed, tag]).spawn(n)


# --------------------------------------------------------------------------
# Suites


EPISODE_COLUMNS = [
    "model", "p_drop", "target_x", "target_y", "repeat", "outcome", "applied_actions",
    "physics_steps", "sim_time", "length", "s_kappa",
]


def _episode_row(rep, **extra) -> dict:
    row = dict(extra)
    row["outcome"] = rep.outcome
    row["applied_actions"] = rep.applied
    row["physics_steps"] = rep.physics_steps
    row["sim_time"] = rep.elapsed
    try:
        m = traj_metrics(rep.positions)
        row["length"], row["s_kappa"] = m.length, m.s_kappa
    except InsufficientData:
        row["length"], row["s_kappa"] = 0.0, 0.0
    return row


def _navigation_runs(cfg, models, levels, targets, repeats, tag, parallel):
    jobs, keys = [], []
    seeds = _seeds(cfg.seed, tag, len(levels) * len(targets) * repeats)
    k = 0
    for level in levels:
        for tgt in targets:
            for r in range(repeats):
                seed = seeds[k]
                k += 1
                setup = cfg.setup(
                    episode=replace(cfg.episode, goal=tuple(tgt)),
                    irregularity=replace(cfg.irregularity, p_drop=float(level)),
                )
                env = reference_env(cfg.variant, cfg.wind_gain)
                for name, params in models.items():
                    # paired runs: both models see the same seed
                    jobs.append((params, env, setup, seed))
                    keys.append({"model": name, "p_drop": float(level), "target_x": float(tgt[0]),
                                 "target_y": float(tgt[1]), "repeat": r})
    reports = run_episodes(jobs, parallel)
    return [_episode_row(rep, **key) for rep, key in zip(reports, keys)]


def _summary_rows(rows, group_keys):
    groups: dict = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in group_keys), []).append(row)
    out = []
    for key, items in groups.items():
        lengths = np.array([r["length"] for r in items])
        kappas = np.array([r["s_kappa"] for r in items])
        acts = np.array([r["applied_actions"] for r in items])
        solved = [r for r in items if r["outcome"] == "solved"]
        rec = dict(zip(group_keys, key))
        rec.update(
            runs=len(items),
            success_pct=100.0 * len(solved) / len(items),
            median_length=float(np.median(lengths)),
            median_s_kappa=float(np.median(kappas)),
            mean_actions=float(acts.mean()),
        )
        out.append(rec)
    return out


SUMMARY_COLUMNS = ["model", "p_drop", "runs", "success_pct", "median_length", "median_s_kappa", "mean_actions"]
# *_time columns count applied actions; mu_physics_steps counts simulator steps
TABLE_COLUMNS = ["model", "n_envs", "success", "mu_time", "sigma_time", "min_time", "mu_physics_steps"]
EXPLORATION_COLUMNS = ["policy", "run", "budget", "coverage", "applied_actions", "physics_steps", "length"]


def suite_no_meta(cfg: ExperimentConfig, out: Path, parallel: int) -> dict:
    theta0 = obtain_model(cfg, "node", out)
    meta = replace(cfg.meta, alpha=0.0, seed=cfg.seed)
    res = acumen_train(theta0, meta, cfg.setup(), parallel, out / "no-meta")
    return {"metrics": str(out / "no-meta" / "metrics.jsonl"), "iterations": len(res.metrics)}


def suite_rnn_vs_node(cfg: ExperimentConfig, out: Path, parallel: int) -> dict:
    models = {"node": obtain_model(cfg, "node", out), "rnn": obtain_model(cfg, "rnn", out)}
    targets = [tuple(cfg.episode.goal)]
    rows = _navigation_runs(cfg, models, cfg.suites.pdrop_levels, targets, cfg.suites.pairs, 11, parallel)
    write_csv(out / "rnn_vs_node.csv", EPISODE_COLUMNS, rows)
    write_csv(out / "rnn_vs_node_summary.csv", SUMMARY_COLUMNS, _summary_rows(rows, ["model", "p_drop"]))
    return {"runs": len(rows)}


def suite_pdrop_sweep(cfg: ExperimentConfig, out: Path, parallel: int) -> dict:
    models = {"node": obtain_model(cfg, "node", out), "rnn": obtain_model(cfg, "rnn", out)}
    rows = _navigation_runs(
        cfg, models, cfg.suites.pdrop_levels, cfg.suites.targets, cfg.suites.repeats, 12, parallel
    )
    write_csv(out / "pdrop_sweep.csv", EPISODE_COLUMNS, rows)
    write_csv(out / "pdrop_sweep_summary.csv", SUMMARY_COLUMNS, _summary_rows(rows, ["model", "p_drop"]))
    return {"runs": len(rows)}


def table_row(name: str, reports) -> dict:
    """Table columns: success %, and mean/std/min applied actions over solved episodes."""
    times = np.array([r.applied for r in reports if r.solved], dtype=float)
    steps = np.array([r.physics_steps for r in reports if r.solved], dtype=float)
    return {
        "model": name,
        "n_envs": len(reports),
        "success": 100.0 * len(times) / max(len(reports), 1),
        "mu_time": float(times.mean()) if len(times) else None,
        "sigma_time": float(times.std()) if len(times) else None,
        "min_time": float(times.min()) if len(times) else None,
        "mu_physics_steps": float(steps.mean()) if len(steps) else None,
    }


def train_specialist(cfg: ExperimentConfig, out: Path | None = None) -> ModelParams:
    """Model trained to convergence on the single average environment."""
    pre = cfg.pretrain
    if cfg.suites.specialist_iterations:
        pre = replace(pre, iterations=cfg.suites.specialist_iterations)
    return obtain_model(replace(cfg, pretrain=pre), "node", out)


def evaluate_models(models: dict, cfg: ExperimentConfig, n_envs: int, tag: int, parallel: int, distribution="test"):
    """Every model on the same freshly sampled environments and episode seeds."""
    env_seeds = _seeds(cfg.seed, tag, n_envs)
    ep_seeds = _seeds(cfg.seed, tag + 1000, n_envs)
    envs = [sample_env(distribution, cfg.variant, np.random.default_rng(s), wind_gain=cfg.wind_gain) for s in env_seeds]
    setup = cfg.setup()
    out = {}
    for name, params in models.items():
        out[name] = run_episodes([(params, e, setup, s) for e, s in zip(envs, ep_seeds)], parallel)
    return out


def specialist_vs_prior_rows(specialist: ModelParams, cfg: ExperimentConfig, parallel: int = 1, meta_dir=None) -> list[dict]:
    """Meta-train a prior from the specialist, then tabulate both on fresh environments."""
    res = acumen_train(specialist, replace(cfg.meta, seed=cfg.seed), cfg.setup(), parallel, meta_dir)
    reports = evaluate_models({"specialist": specialist, "prior": res.best}, cfg, cfg.suites.specialist_envs, 13, parallel)
    return [table_row(name, reps) for name, reps in reports.items()]


def suite_specialist_vs_prior(cfg: ExperimentConfig, out: Path, parallel: int) -> dict:
    rows = specialist_vs_prior_rows(train_specialist(cfg, out), cfg, parallel, out / "meta")
    write_csv(out / "specialist_vs_prior.csv", TABLE_COLUMNS, rows)
    return {"rows": rows}


def exploration_planner(cfg: ExperimentConfig) -> PlannerConfig:
    """Goal-reaching planner switched to the exploration sampler.

    In continuous mode the command box is the envelope of the discrete set,
    so both planners reach the same speeds.
    """
    s = cfg.suites
    pcfg = cfg.planner
    if s.exploration_mode == "cem":
        bound = float(np.max(np.abs(pcfg.action_set))) if pcfg.actions else pcfg.action_bound
        return replace(pcfg, mode="cem", horizon=1, population=s.exploration_population,
                       elites=min(s.exploration_elites, s.exploration_population), actions=(), action_bound=bound)
    return replace(pcfg, mode=s.exploration_mode)


def exploration_rows(model: ModelParams, cfg: ExperimentConfig, parallel: int = 1) -> list[dict]:
    """Coverage of the occupancy reward and of uniform-random commands on one model."""
    budget = cfg.suites.exploration_budget
    setup = cfg.setup(reward="exploration", episode=replace(cfg.episode, max_actions=budget),
                      planner=exploration_planner(cfg))
    env = reference_env(cfg.variant, cfg.wind_gain)
    seeds = _seeds(cfg.seed, 14, cfg.suites.exploration_runs)
    rows = []
    for policy in ("model", "random"):
        reps = run_episodes([(model, env, setup, s, policy) for s in seeds], parallel)
        for i, rep in enumerate(reps):
            rows.append({
                "policy": "exploration-reward" if policy == "model" else "uniform-random",
                "run": i,
                "budget": budget,
                "coverage": rep.coverage,
                "applied_actions": rep.applied,
                "physics_steps": rep.physics_steps,
                "length": traj_metrics(rep.positions).length,
            })
    return rows


def suite_exploration(cfg: ExperimentConfig, out: Path, parallel: int) -> dict:
    rows = exploration_rows(obtain_model(cfg, "node", out), cfg, parallel)
    write_csv(out / "exploration.csv", EXPLORATION_COLUMNS, rows)
    return {"runs": len(rows)}


_SUITE_FUNCS = {
    "no-meta": suite_no_meta,
    "rnn-vs-node": suite_rnn_vs_node,
    "specialist-vs-prior": suite_specialist_vs_prior,
    "pdrop-sweep": suite_pdrop_sweep,
    "exploration": suite_exploration,
}


def run_ablation(suite: str, cfg: ExperimentConfig, out_dir=None, parallel: int = 1, scale: float = 1.0) -> dict:
    """Run one ablation suite; failures are recorded in ``status.json`` instead of raised."""
    if suite not in _SUITE_FUNCS:
        raise ConfigError("suite", f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    cfg = apply_scale(cfg, scale)
    out = Path(out_dir or cfg.output_dir) / suite
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    try:
        result = _SUITE_FUNCS[suite](cfg, out, parallel)
        status = {"suite": suite, "ok": True}
    except AsyncMPCError as exc:
        log.error("suite %s failed: %s", suite, exc)
        result, status = {}, {"suite": suite, "ok": False, "error": str(exc)}
    (out / "status.json").write_text(json.dumps(status) + "\n", encoding="utf-8")
    return {**status, **result}
