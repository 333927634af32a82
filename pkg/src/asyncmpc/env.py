"""Ground-truth episodic environments with irregular, asynchronous event streams.

Two surrogate plants are provided:

* ``unicycle-wind``: planar unicycle driven by (linear, angular) velocity
  commands plus a constant wind drift sampled per episode.
* ``belt-box``: a box on two independently driven belts; three hidden
  coefficients set how belt speeds turn into forward motion, rotation and
  lateral slip.

The controller never sees the truth directly. It receives a time-ordered log
of observation events, thinned by block subsampling and random dropping, and
the knots of the actions that were actually applied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInterval, OrderingError
from .models import StateEstimate, wrap_angle
from .ode import ActionSchedule

S_MAG = (0.1, 0.2, 0.4, 0.5)
UNICYCLE_BOX = 0.22
BELT_BOX = 1.0
KAPPA_M = (0.3, 1.0)
KAPPA_R = (0.5, 2.0)
KAPPA_S = (-0.2, 0.2)
VARIANTS = ("unicycle-wind", "belt-box")


@dataclass(frozen=True)
class TimedEvent:
    t: float
    kind: str  # "obs" or "act"
    payload: tuple
    flag: str = ""

    def __post_init__(self):
        if self.kind not in ("obs", "act"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError("event timestamps must be finite and non-negative")
        object.__setattr__(self, "payload", tuple(float(x) for x in self.payload))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.payload, dtype=float)

    def to_record(self) -> dict:
        rec = {"t": self.t, "kind": self.kind, "v": list(self.payload)}
        if self.flag:
            rec["flag"] = self.flag
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "TimedEvent":
        return cls(float(rec["t"]), rec["kind"], tuple(rec["v"]), rec.get("flag", ""))


@dataclass(frozen=True)
class EnvParams:
    variant: str
    wind_index: int = 0
    wind_magnitude: float = 0.0
    n_directions: int = 32
    kappa_m: float = 0.65
    kappa_r: float = 1.25
    kappa_s: float = 0.0
    wind_gain: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0 <= self.wind_index < self.n_directions:
            raise ValueError("wind direction index out of range")
        if self.variant == "belt-box":
            for name, (lo, hi) in (("kappa_m", KAPPA_M), ("kappa_r", KAPPA_R), ("kappa_s", KAPPA_S)):
                if not lo <= getattr(self, name) <= hi:
                    raise ValueError(f"{name} outside [{lo}, {hi}]")

    @property
    def wind_angle(self) -> float:
        return self.wind_index * 2.0 * math.pi / self.n_directions

    @property
    def drift(self) -> np.ndarray:
        m = self.wind_magnitude * self.wind_gain
        return np.array([m * math.cos(self.wind_angle), m * math.sin(self.wind_angle)])

    @property
    def action_bound(self) -> float:
        return UNICYCLE_BOX if self.variant == "unicycle-wind" else BELT_BOX


def wind_directions(split: str, n_directions: int = 32) -> list[int]:
    if n_directions % 2:
        raise ValueError("n_directions must be even")
    start = 0 if split == "train" else 1
    return list(range(start, n_directions, 2))


def sample_env(distribution: str, variant: str, rng, n_directions: int = 32, magnitudes=S_MAG, wind_gain: float = 1.0) -> EnvParams:
    """Draw hidden dynamics from the train or test distribution."""
    if distribution not in ("train", "test"):
        raise ValueError("distribution must be 'train' or 'test'")
    rng = np.random.default_rng(rng)
    if variant == "unicycle-wind":
        dirs = wind_directions(distribution, n_directions)
        n = int(dirs[rng.integers(len(dirs))])
        mag = float(magnitudes[rng.integers(len(magnitudes))])
        return EnvParams(variant, n, mag, n_directions, wind_gain=wind_gain)
    if variant == "belt-box":
        # separate child streams keep train and test draws disjoint for any seed
        sub = np.random.default_rng([int(rng.integers(2**62)), 0 if distribution == "train" else 1])
        return EnvParams(
            variant,
            kappa_m=float(sub.uniform(*KAPPA_M)),
            kappa_r=float(sub.uniform(*KAPPA_R)),
            kappa_s=float(sub.uniform(*KAPPA_S)),
        )
    raise ValueError(f"unknown variant {variant!r}")


def _truth_field(env: EnvParams, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    yaw = z[2]
    c, s = math.cos(yaw), math.sin(yaw)
    if env.variant == "unicycle-wind":
        v, w = u
        d = env.drift
        return np.array([v * c + d[0], v * s + d[1], w])
    a0, a1 = u
    fwd = env.kappa_m * (a0 + a1) / 2.0
    lat = env.kappa_s * (a1 - a0)
    return np.array([fwd * c - lat * s, fwd * s + lat * c, env.kappa_r * (a1 - a0)])


def clamp_action(env: EnvParams, u) -> tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=float)
    b = env.action_bound
    clamped = np.clip(u, -b, b)
    return clamped, bool(np.any(clamped != u))


def step_truth(env: EnvParams, z, u, dt: float) -> np.ndarray:
    """Advance the true pose (x, y, yaw) by one RK4 step with action ``u`` held."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = np.asarray(z, dtype=float)
    u, _ = clamp_action(env, u)
    k1 = _truth_field(env, z, u)
    k2 = _truth_field(env, z + 0.5 * dt * k1, u)
    k3 = _truth_field(env, z + 0.5 * dt * k2, u)
    k4 = _truth_field(env, z + dt * k3, u)
    out = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out[2] = float(wrap_angle(out[2]))
    return out


@dataclass(frozen=True)
class IrregularityConfig:
    keep_one_of: int = 1  # K_s
    eta: float = 0.0
    p_drop: float = 0.0
    jitter: bool = False

    def __post_init__(self):
        if self.keep_one_of < 1:
            raise ValueError("keep_one_of must be >= 1")
        for name in ("eta", "p_drop"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")


class _ObservationGate:
    """Decides, tick by tick, which nominal observations survive.

    Per block of ``keep_one_of`` ticks one uniformly chosen tick survives,
    then eta-dropping and P_drop-dropping are applied to it in that order.
    """

    def __init__(self, cfg: IrregularityConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self._block = -1
        self._chosen = -1
        self._kept = False

    def keep(self, tick: int) -> bool:
        k = self.cfg.keep_one_of
        block = tick // k
        if block != self._block:
            self._block = block
            self._chosen = block * k + (int(self.rng.integers(k)) if k > 1 else 0)
            kept = True
            if self.cfg.eta > 0:
                kept = self.rng.random() >= self.cfg.eta
            if self.cfg.p_drop > 0:
                kept = (self.rng.random() >= self.cfg.p_drop) and kept
            self._kept = kept
        return tick == self._chosen and self._kept


def emit_observations(trajectory, cfg: IrregularityConfig, rng) -> list[TimedEvent]:
    """Thin a nominal-rate trajectory ``[(t, pose), ...]`` into observation events."""
    rng = np.random.default_rng(rng)
    gate = _ObservationGate(cfg, rng)
    return [
        TimedEvent(float(t), "obs", tuple(np.asarray(p, float)))
        for tick, (t, p) in enumerate(trajectory)
        if gate.keep(tick)
    ]


def xi_estimate(prev: TimedEvent, cur: TimedEvent) -> StateEstimate:
    """Latest pose plus finite-difference velocity from the two freshest observations."""
    dt = cur.t - prev.t
    if dt <= 0:
        raise OrderingError("observations must have increasing timestamps")
    if dt < 1e-6:
        raise DegenerateInterval(f"observation interval {dt:.3g}s too short")
    p0, p1 = prev.vector, cur.vector
    d = p1 - p0
    d[2] = float(wrap_angle(d[2]))
    v = d / dt
    return StateEstimate(p1[0], p1[1], p1[2], v[0], v[1], v[2])


@dataclass(frozen=True)
class EpisodeConfig:
    max_actions: int = 300  # H_max
    apply_k: int = 1
    window: int = 2
    pos_tol: float = 0.1
    yaw_tol: float = 0.1
    obs_rate: float = 6.0
    physics_substeps: int = 4
    goal: tuple = (1.0, 0.0)
    target_yaw: float = math.pi / 2
    start_pose: tuple = (0.0, 0.0, 0.0)
    start_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_actions < 1:
            raise ValueError("max_actions must be >= 1")
        if self.apply_k < 1:
            raise ValueError("apply_k must be >= 1")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.obs_rate <= 0 or self.physics_substeps < 1:
            raise ValueError("obs_rate and physics_substeps must be positive")


def run_success_check(variant: str, z, episode: EpisodeConfig, applied: int = 0, initial=None) -> str:
    """'solved', 'running' or 'timeout' for the true pose ``z``."""
    z = np.asarray(z, dtype=float)
    if variant == "belt-box":
        init = np.asarray(initial if initial is not None else episode.start_pose, dtype=float)
        yaw_err = abs(float(wrap_angle(z[2] - episode.target_yaw)))
        drift = float(np.hypot(*(z[:2] - init[:2])))
        solved = yaw_err < episode.yaw_tol and drift < episode.pos_tol
    else:
        solved = float(np.hypot(*(z[:2] - np.asarray(episode.goal, float)))) < episode.pos_tol
    if solved:
        return "solved"
    if applied >= episode.max_actions:
        return "timeout"
    return "running"


class AsyncEnv:
    """One episode of a surrogate plant seen through an irregular event stream.

    Time starts at 0 with the plant at rest and a zero command knot. The
    observation at t=0 is always delivered so the controller has a pose.
    """

    def __init__(self, params: EnvParams, episode: EpisodeConfig, irregularity: IrregularityConfig, rng=None):
        self.params = params
        self.episode = episode
        self.irregularity = irregularity
        rng = np.random.default_rng(rng)
        seeds = rng.spawn(3)
        self._obs_rng, self._act_rng, start_rng = seeds
        start = np.asarray(episode.start_pose, dtype=float).copy()
        if episode.start_noise > 0:
            start[:2] += start_rng.normal(0.0, episode.start_noise, size=2)
            start[2] += start_rng.normal(0.0, episode.start_noise)
        start[2] = float(wrap_angle(start[2]))
        self.initial = start.copy()
        self.pose = start
        self.t = 0.0
        self.events: list[TimedEvent] = []
        self.observations: list[TimedEvent] = []
        self.truth: list[tuple[float, np.ndarray]] = []
        self.applied_times: list[float] = [0.0]
        self.applied_values: list[np.ndarray] = [np.zeros(2)]
        self.applied_count = 0
        self.clamped_count = 0
        self.physics_steps = 0
        self._planned_last = (0.0, np.zeros(2))
        self._gate = _ObservationGate(irregularity, self._obs_rng)
        self._tick = 0
        self._record_action(0.0, np.zeros(2), "initial")
        self._tick_observe(force=True)

    # -- event plumbing -------------------------------------------------
    def _record_action(self, t, u, flag):
        self.events.append(TimedEvent(float(t), "act", tuple(u), flag))

    def _tick_observe(self, force=False):
        keep = self._gate.keep(self._tick)
        self.truth.append((self.t, self.pose.copy()))
        if keep or force:
            ev = TimedEvent(self.t, "obs", tuple(self.pose))
            self.events.append(ev)
            self.observations.append(ev)
        self._tick += 1

    @property
    def schedule(self) -> ActionSchedule:
        return ActionSchedule(np.array(self.applied_times), np.array(self.applied_values))

    def status(self) -> str:
        return run_success_check(self.params.variant, self.pose, self.episode, self.applied_count, self.initial)

    def window(self, m: int) -> list[TimedEvent]:
        return self.observations[-m:]

    def actions_since(self, t: float) -> ActionSchedule:
        """Applied knots from the last one at or before ``t`` onwards."""
        times = np.array(self.applied_times)
        start = max(int(np.searchsorted(times, t, side="right")) - 1, 0)
        return ActionSchedule(times[start:], np.array(self.applied_values[start:]))

    # -- simulation -----------------------------------------------------
    def advance(self, t_target: float):
        period = 1.0 / self.episode.obs_rate
        h_max = period / self.episode.physics_substeps
        sched = self.schedule
        while self.t < t_target - 1e-12:
            next_tick = self._tick * period
            t_next = min(t_target, next_tick if next_tick > self.t + 1e-12 else math.inf, self.t + h_max)
            dt = t_next - self.t
            u = sched(self.t + 0.5 * dt)
            self.pose = step_truth(self.params, self.pose, u, dt)
            self.physics_steps += 1
            self.t = t_next
            if abs(self.t - self._tick * period) <= 1e-9:
                self.t = self._tick * period
                self._tick_observe()

    def apply(self, times, values):
        """Apply planned knots ``(times[j], values[j])`` and run until the last one.

        With jitter on, each knot is re-stamped uniformly inside its
        inter-command interval and takes the value the planned sequence has
        there. The plant follows the linear interpolation of applied knots.
        """
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        prev_t, prev_u = self._planned_last
        for tj, uj in zip(times, values):
            uj, clamped = clamp_action(self.params, uj)
            self.clamped_count += clamped
            t_apply, u_apply = float(tj), uj
            if self.irregularity.jitter and tj > prev_t:
                lo = max(prev_t, self.applied_times[-1])
                t_apply = float(self._act_rng.uniform(lo, tj))
                w = (t_apply - prev_t) / (tj - prev_t)
                u_apply = prev_u + w * (uj - prev_u)
            t_apply = max(t_apply, self.applied_times[-1] + 1e-6, self.t + 1e-6)
            self.applied_times.append(t_apply)
            self.applied_values.append(np.asarray(u_apply, dtype=float))
            self._record_action(t_apply, u_apply, "clamped" if clamped else "")
            self.applied_count += 1
            prev_t, prev_u = float(tj), uj
        self._planned_last = (prev_t, prev_u)
        self.advance(max(float(times[-1]), self.applied_times[-1]))

    @property
    def event_log(self) -> list[TimedEvent]:
        """Observations and applied actions merged in time order."""
        return sorted(self.events, key=lambda e: (e.t, e.kind != "obs"))


def export_event_log(events, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record(), separators=(",", ":")) + "\n")
    return path


def load_event_log(path) -> list[TimedEvent]:
    with open(path, encoding="utf-8") as fh:
        return [TimedEvent.from_record(json.loads(line)) for line in fh if line.strip()]


def xi_from_log(events) -> list[StateEstimate]:
    obs = [e for e in events if e.kind == "obs"]
    return [xi_estimate(a, b) for a, b in zip(obs[:-1], obs[1:])]


def observation_positions(events) -> np.ndarray:
    return np.array([e.payload[:2] for e in events if e.kind == "obs"])
