"""Learned dynamics: the neural-ODE vector field and the stacked-RNN baseline.

Both models predict the evolution of a 6-D state estimate
``(x, y, yaw, vx, vy, yaw_rate)`` given a piecewise-linear action signal.
Parameters live in one flat float64 vector so that perturbation, meta
updates and checkpoints are plain vector operations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tape as tp
from .errors import EmptyDataset, ShapeError
from .ode import ActionSchedule, SolverSpec, integrate

log = logging.getLogger(__name__)

STATE_DIM = 6
CHECKPOINT_VERSION = 1


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    # angles already in range are returned untouched (the shift above rounds)
    return np.where((a > -np.pi) & (a <= np.pi), a, w)


@dataclass
class ModelParams:
    """Flat parameter vector plus the layer layout needed to unpack it.

    For ``kind="node"``, ``layers`` lists every width from input to output.
    For ``kind="rnn"``, ``layers`` is ``(input_dim, width, ..., width, output_dim)``
    with one entry per stacked recurrent layer in between.
    """

    flat: np.ndarray
    layers: tuple
    kind: str = "node"
    activation: str = "tanh"

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=float)
        self.layers = tuple(int(w) for w in self.layers)
        if self.kind not in ("node", "rnn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.activation != "tanh":
            raise ValueError("only tanh activations are supported")
        expected = param_count(self.layers, self.kind)
        if self.flat.shape != (expected,):
            raise ShapeError(f"flat vector has {self.flat.size} entries, layers imply {expected}")
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("parameters must be finite")

    @property
    def action_dim(self) -> int:
        extra = 1 + STATE_DIM
        return self.layers[0] - extra

    def with_flat(self, flat) -> "ModelParams":
        return ModelParams(np.array(flat, dtype=float), self.layers, self.kind, self.activation)

    def copy(self) -> "ModelParams":
        return self.with_flat(self.flat.copy())

    def __len__(self):
        return self.flat.size


def param_count(layers, kind: str = "node") -> int:
    layers = tuple(layers)
    if kind == "node":
        return sum(a * b + b for a, b in zip(layers[:-1], layers[1:]))
    widths = layers[1:-1]
    total, fan_in = 0, layers[0]
    for w in widths:
        total += fan_in * w + w * w + w
        fan_in = w
    return total + fan_in * layers[-1] + layers[-1]


def node_layers(hidden, action_dim: int = 2) -> tuple:
    return (1 + action_dim + STATE_DIM, *hidden, STATE_DIM)


def init_node_params(hidden, action_dim: int = 2, rng=None, output_scale: float = 0.1) -> ModelParams:
    """Glorot-uniform weights, zero biases, shrunken output layer."""
    rng = np.random.default_rng(rng)
    layers = node_layers(hidden, action_dim)
    chunks = []
    for i, (a, b) in enumerate(zip(layers[:-1], layers[1:])):
        lim = math.sqrt(6.0 / (a + b))
        w = rng.uniform(-lim, lim, size=(a, b))
        if i == len(layers) - 2:
            w *= output_scale
        chunks += [w.ravel(), np.zeros(b)]
    return ModelParams(np.concatenate(chunks), layers, "node")


def _unpack_dense(theta, layers, offset=0):
    weights = []
    for a, b in zip(layers[:-1], layers[1:]):
        w = theta[offset : offset + a * b].reshape(a, b)
        offset += a * b
        bias = theta[offset : offset + b]
        offset += b
        weights.append((w, bias))
    return weights, offset


def mlp_forward(weights, x, return_hidden: bool = False):
    hidden = []
    h = x
    for i, (w, b) in enumerate(weights):
        h = h @ w + b
        if i < len(weights) - 1:
            h = tp.ftanh(h)
            hidden.append(h)
    return (h, hidden) if return_hidden else h


def make_node_field(theta, layers, t_origin=0.0):
    """Vector field closure; the network sees time relative to ``t_origin``."""
    weights, _ = _unpack_dense(theta, layers)

    def field(t, z, u):
        zv = z
        batch_shape = tp.value(zv).shape[:-1]
        trel = np.asarray(t, dtype=float) - t_origin
        if trel.ndim == 0:
            trel = np.full(batch_shape + (1,), float(trel))
        elif trel.shape[-1:] != (1,):
            trel = trel[..., None]
        u = np.asarray(u, dtype=float)
        if u.shape[:-1] != batch_shape:
            u = np.broadcast_to(u, batch_shape + u.shape[-1:])
        x = tp.fconcat([np.broadcast_to(trel, batch_shape + (1,)), u, zv], axis=-1)
        return mlp_forward(weights, x)

    return field


def node_derivative(params: ModelParams, t, u, z) -> np.ndarray:
    """dz/dt predicted by the network for input (t, u, z)."""
    z = _as_vec(z)
    u = np.asarray(u, dtype=float)
    if params.kind != "node":
        raise ShapeError("node_derivative needs neural-ODE parameters")
    if u.shape[-1] + 1 + z.shape[-1] != params.layers[0] or z.shape[-1] != STATE_DIM:
        raise ShapeError(
            f"input width {1 + u.shape[-1] + z.shape[-1]} does not match layer 0 ({params.layers[0]})"
        )
    weights, _ = _unpack_dense(params.flat, params.layers)
    x = np.concatenate([np.atleast_1d(np.asarray(t, dtype=float)), u, z], axis=-1)
    return mlp_forward(weights, x)


def hidden_activations(params: ModelParams, t, u, z) -> list:
    weights, _ = _unpack_dense(params.flat, params.layers)
    x = np.concatenate([np.atleast_1d(float(t)), np.asarray(u, float), _as_vec(z)])
    return mlp_forward(weights, x, return_hidden=True)[1]


@dataclass
class StateEstimate:
    """Planar pose and its time derivative (SI units)."""

    x: float
    y: float
    yaw: float
    vx: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        self.yaw = float(wrap_angle(self.yaw))
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("state estimate must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw, self.vx, self.vy, self.yaw_rate], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateEstimate":
        a = np.asarray(a, dtype=float)
        return cls(*map(float, a[:STATE_DIM]))

    @property
    def pose(self) -> np.ndarray:
        return self.as_array()[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.as_array()[3:]


def _as_vec(z) -> np.ndarray:
    if isinstance(z, StateEstimate):
        return z.as_array()
    return np.asarray(z, dtype=float)


def _wrap_state(z: np.ndarray) -> np.ndarray:
    z = np.array(z, dtype=float)
    z[..., 2] = wrap_angle(z[..., 2])
    return z


# --------------------------------------------------------------------------
# Stacked RNN baseline


def rnn_layers(width: int, n_layers: int = 5, action_dim: int = 2) -> tuple:
    return (action_dim + 1 + STATE_DIM, *([width] * n_layers), STATE_DIM)


def rnn_width_for(target_count: int, n_layers: int = 5, action_dim: int = 2) -> int:
    """Recurrent width whose parameter count is closest to ``target_count``."""
    best = min(
        range(2, 513),
        key=lambda w: abs(param_count(rnn_layers(w, n_layers, action_dim), "rnn") - target_count),
    )
    return best


def init_rnn_params(width: int, n_layers: int = 5, action_dim: int = 2, rng=None, output_scale: float = 0.1):
    rng = np.random.default_rng(rng)
    layers = rnn_layers(width, n_layers, action_dim)
    chunks = []
    fan_in = layers[0]
    for w in layers[1:-1]:
        lim = math.sqrt(6.0 / (fan_in + w))
        chunks.append(rng.uniform(-lim, lim, size=(fan_in, w)).ravel())
        chunks.append((rng.standard_normal((w, w)) / math.sqrt(w) * 0.5).ravel())
        chunks.append(np.zeros(w))
        fan_in = w
    lim = math.sqrt(6.0 / (fan_in + layers[-1]))
    chunks.append(rng.uniform(-lim, lim, size=(fan_in, layers[-1])).ravel() * output_scale)
    chunks.append(np.zeros(layers[-1]))
    return ModelParams(np.concatenate(chunks), layers, "rnn")


def _unpack_rnn(theta, layers):
    cells = []
    offset, fan_in = 0, layers[0]
    for w in layers[1:-1]:
        wx = theta[offset : offset + fan_in * w].reshape(fan_in, w)
        offset += fan_in * w
        wh = theta[offset : offset + w * w].reshape(w, w)
        offset += w * w
        b = theta[offset : offset + w]
        offset += w
        cells.append((wx, wh, b))
        fan_in = w
    wo = theta[offset : offset + fan_in * layers[-1]].reshape(fan_in, layers[-1])
    offset += fan_in * layers[-1]
    bo = theta[offset : offset + layers[-1]]
    return cells, (wo, bo)


def rnn_delta(theta, layers, z0, actions, dts, mask):
    """Predicted state change from a padded batch of (action, dt) tuples.

    ``actions`` (B, L, M), ``dts`` (B, L), ``mask`` (B, L) with 1 for real tuples.
    Padded steps leave every hidden state untouched.
    """
    cells, (wo, bo) = _unpack_rnn(theta, layers)
    B, L = dts.shape
    hs = [np.zeros((B, wh.shape[0])) for _, wh, _ in cells]
    for k in range(L):
        m = mask[:, k : k + 1]
        x = np.concatenate([actions[:, k], dts[:, k : k + 1], z0], axis=-1)
        for li, (wx, wh, b) in enumerate(cells):
            h_new = tp.ftanh(x @ wx + hs[li] @ wh + b)
            hs[li] = h_new * m + hs[li] * (1.0 - m) if not np.all(m == 1.0) else h_new
            x = hs[li]
    out = hs[-1] @ wo + bo
    # zero real tuples means zero change regardless of the output bias
    has_any = (mask.sum(axis=1, keepdims=True) > 0).astype(float)
    return out * has_any


def rnn_predict(params: ModelParams, z0, tuples) -> StateEstimate:
    """Roll the stacked RNN over ``[(action, dt), ...]`` starting from ``z0``."""
    z = _as_vec(z0)
    if not tuples:
        return StateEstimate.from_array(z)
    acts = np.array([np.asarray(a, dtype=float) for a, _ in tuples])
    dts = np.array([float(d) for _, d in tuples])
    if np.any(dts <= 0):
        raise ValueError("tuple durations must be positive")
    if acts.shape[-1] + 1 + STATE_DIM != params.layers[0]:
        raise ShapeError("action width does not match the RNN input layer")
    delta = rnn_delta(params.flat, params.layers, z[None], acts[None], dts[None], np.ones((1, len(dts))))
    return StateEstimate.from_array(_wrap_state(z + delta[0]))


def schedule_to_tuples(times, values, t0, t1):
    """(action, dt) tuples covering [t0, t1] for one (unbatched or batched) schedule.

    Each knot strictly inside the interval starts a new segment.  A segment
    carries the mean action over its span, which for a piecewise-linear
    schedule is the value at the segment midpoint; a start-point sample
    would hide a command whose ramp ends at ``t1``.
    """
    sched = ActionSchedule(times, values)
    inner = [t for t in sched.times if t0 < t < t1]
    starts = [t0] + inner
    ends = inner + [t1]
    return [(sched(0.5 * (s + e)), e - s) for s, e in zip(starts, ends) if e - s > 0]


# --------------------------------------------------------------------------
# Batched prediction used by the planner


def predict_batch(params: ModelParams, z0, t0: float, t1: float, schedule: ActionSchedule, solver: SolverSpec):
    """Propagate a batch of states (B, 6) through a batched schedule."""
    z0 = np.asarray(z0, dtype=float)
    if t1 <= t0:
        return _wrap_state(z0)
    if params.kind == "node":
        fieldf = make_node_field(params.flat, params.layers, t_origin=t0)
        z = integrate(fieldf, z0, t0, t1, schedule, solver)
        return _wrap_state(z)
    actions, dts, mask = _tuples_for_batch(schedule, z0.shape[0], t0, t1)
    return _wrap_state(z0 + rnn_delta(params.flat, params.layers, z0, actions, dts, mask))


def _tuples_for_batch(schedule: ActionSchedule, B: int, t0: float, t1: float):
    times = schedule.times
    inner = times[(times > t0) & (times < t1)]
    starts = np.concatenate([[t0], inner])
    ends = np.concatenate([inner, [t1]])
    m = schedule.values.shape[-1]
    actions = np.stack([np.broadcast_to(schedule(0.5 * (s + e)), (B, m)) for s, e in zip(starts, ends)], axis=1)
    dts = np.broadcast_to(ends - starts, (B, len(starts))).copy()
    mask = (dts > 0).astype(float)
    return actions, dts, mask


def predict_state(params: ModelParams, z0, schedule: ActionSchedule, t0: float, dt: float, solver: SolverSpec) -> StateEstimate:
    """Predicted state estimate at ``t0 + dt``; yaw re-wrapped."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    z = _as_vec(z0)
    if dt == 0:
        return StateEstimate.from_array(z)
    out = predict_batch(params, z[None], t0, t0 + dt, schedule, solver)
    return StateEstimate.from_array(out[0])


# --------------------------------------------------------------------------
# Training data and loss


@dataclass
class TrainingExample:
    """Observed change of state between two observations and the actions applied meanwhile."""

    z_start: np.ndarray
    t_start: float
    t_end: float
    delta: np.ndarray
    schedule: ActionSchedule

    def __post_init__(self):
        self.z_start = _as_vec(self.z_start)
        self.delta = np.asarray(self.delta, dtype=float)
        if not self.t_end > self.t_start:
            raise ValueError("training example needs t_end > t_start")

    @property
    def key(self) -> tuple:
        return (round(self.t_start, 9), round(self.t_end, 9))


class _PaddedSchedules:
    """Evaluate a different schedule per batch row at per-row times."""

    def __init__(self, schedules):
        L = max(len(s) for s in schedules)
        M = schedules[0].dim
        B = len(schedules)
        self.times = np.empty((B, L))
        self.values = np.empty((B, L, M))
        for i, s in enumerate(schedules):
            n = len(s)
            self.times[i, :n] = s.times
            self.values[i, :n] = s.values
            # constant-hold padding beyond the last real knot
            self.times[i, n:] = s.times[-1] + 1.0 + np.arange(L - n)
            self.values[i, n:] = s.values[-1]
        self._cache: dict = {}

    def subset(self, idx) -> "_PaddedSchedules":
        out = object.__new__(_PaddedSchedules)
        out.times = self.times[idx]
        out.values = self.values[idx]
        out._cache = {}
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        key = t.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        times, values = self.times, self.values
        B, L = times.shape
        if L == 1:
            out = values[:, 0].copy()
        else:
            tc = np.clip(t, times[:, 0], times[:, -1])
            idx = np.clip((times <= tc[:, None]).sum(axis=1) - 1, 0, L - 2)
            rows = np.arange(B)
            t_lo, t_hi = times[rows, idx], times[rows, idx + 1]
            w = ((tc - t_lo) / (t_hi - t_lo))[:, None]
            out = values[rows, idx] + w * (values[rows, idx + 1] - values[rows, idx])
        self._cache[key] = out
        return out


@dataclass
class PreparedBatch:
    z0: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    delta: np.ndarray
    schedules: _PaddedSchedules
    rnn_inputs: tuple | None = None

    def __len__(self):
        return self.z0.shape[0]

    def subset(self, idx) -> "PreparedBatch":
        idx = np.asarray(idx)
        rnn = None
        if self.rnn_inputs is not None:
            rnn = tuple(a[idx] for a in self.rnn_inputs)
        return PreparedBatch(
            self.z0[idx], self.t0[idx], self.t1[idx], self.delta[idx], self.schedules.subset(idx), rnn
        )


def prepare_batch(dataset, with_rnn: bool = False) -> PreparedBatch:
    if len(dataset) == 0:
        raise EmptyDataset("dataset is empty")
    z0 = np.stack([ex.z_start for ex in dataset])
    t0 = np.array([ex.t_start for ex in dataset])
    t1 = np.array([ex.t_end for ex in dataset])
    delta = np.stack([ex.delta for ex in dataset])
    batch = PreparedBatch(z0, t0, t1, delta, _PaddedSchedules([ex.schedule for ex in dataset]))
    if with_rnn:
        tuples = [schedule_to_tuples(ex.schedule.times, ex.schedule.values, ex.t_start, ex.t_end) for ex in dataset]
        L = max(len(tu) for tu in tuples)
        M = dataset[0].schedule.dim
        acts = np.zeros((len(dataset), L, M))
        dts = np.zeros((len(dataset), L))
        mask = np.zeros((len(dataset), L))
        for i, tu in enumerate(tuples):
            for k, (a, d) in enumerate(tu):
                acts[i, k], dts[i, k], mask[i, k] = a, d, 1.0
        batch.rnn_inputs = (acts, dts, mask)
    return batch


def predicted_change(theta, layers, kind, batch: PreparedBatch, solver: SolverSpec):
    """Predicted state change over each example interval (differentiable in theta)."""
    if kind == "node":
        fieldf = make_node_field(theta, layers, t_origin=0.0)
        t0 = batch.t0

        def shifted(t, z, u):
            # network time input is relative to each example's own start
            return fieldf(np.asarray(t) - t0[:, None], z, u)

        z1 = integrate(shifted, batch.z0, batch.t0, batch.t1, batch.schedules, solver)
        return z1 - batch.z0
    if batch.rnn_inputs is None:
        raise ValueError("batch was prepared without RNN inputs")
    acts, dts, mask = batch.rnn_inputs
    return rnn_delta(theta, layers, batch.z0, acts, dts, mask)


def loss_terms(pred_delta, batch: PreparedBatch):
    """Per-example translation and rotation errors."""
    err_xy = pred_delta[:, 0:2] - batch.delta[:, 0:2]
    e_trans = tp.fnorm(err_xy, axis=-1)
    yaw_true = batch.z0[:, 2] + batch.delta[:, 2]
    yaw_pred = batch.z0[:, 2] + pred_delta[:, 2]
    ca, sa = np.cos(yaw_true), np.sin(yaw_true)
    cb, sb = tp.fcos(yaw_pred), tp.fsin(yaw_pred)
    # entries of R_true^T R_pred - I
    m00 = ca * cb + sa * sb - 1.0
    m01 = sa * cb - ca * sb
    m10 = ca * sb - sa * cb
    m11 = sa * sb + ca * cb - 1.0
    stacked = tp.fconcat([m00[:, None], m01[:, None], m10[:, None], m11[:, None]], axis=-1)
    e_rot = tp.fnorm(stacked, axis=-1)
    return e_trans, e_rot


def loss_from_terms(e_trans, e_rot, w_l: float):
    per = e_trans + w_l * e_rot
    n = tp.value(per).shape[0]
    return (per * per).sum() * (1.0 / n)


def node_loss(params: ModelParams, dataset, w_l: float, solver: SolverSpec = SolverSpec.rk4(4)) -> float:
    """Mean over examples of (E_trans + w_l * E_rot)^2."""
    batch = dataset if isinstance(dataset, PreparedBatch) else prepare_batch(dataset, params.kind == "rnn")
    pred = predicted_change(params.flat, params.layers, params.kind, batch, solver)
    e_t, e_r = loss_terms(pred, batch)
    return float(loss_from_terms(e_t, e_r, w_l))


def loss_and_grad(params: ModelParams, batch: PreparedBatch, w_l: float, solver: SolverSpec):
    with tp.recording() as tape:
        theta = tape.variable(params.flat)
        pred = predicted_change(theta, params.layers, params.kind, batch, solver)
        e_t, e_r = loss_terms(pred, batch)
        loss = loss_from_terms(e_t, e_r, w_l)
        (g,) = tape.gradient(loss, [theta])
    return float(loss.value), g


# --------------------------------------------------------------------------
# Inner-loop optimisation


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.99
    w_l: float = 1.0
    n_iters: int = 10
    batch_size: int = 0  # 0 means full batch
    solver: SolverSpec = field(default_factory=lambda: SolverSpec.rk4(4))
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr_decay must be in (0, 1]")
        if self.w_l < 0:
            raise ValueError("w_l must be >= 0")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")


@dataclass
class TrainStats:
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    skipped_steps: int = 0
    steps: int = 0


def optimize_node(params: ModelParams, train_set, cfg: TrainConfig, rng=None, step_offset: int = 0, stats: TrainStats | None = None) -> ModelParams:
    """``cfg.n_iters`` Adam steps on the training loss; never returns worse parameters.

    The learning rate is ``lr * lr_decay ** k`` at global step ``k``
    (``step_offset`` carries the count across calls). Parameters are
    returned from the best full-batch loss seen, so the loss after the call
    is never above the loss before it.
    """
    if len(train_set) == 0:
        raise EmptyDataset("cannot optimise on an empty training set")
    stats = stats if stats is not None else TrainStats()
    rng = np.random.default_rng(rng)
    full = train_set if isinstance(train_set, PreparedBatch) else prepare_batch(train_set, params.kind == "rnn")
    minibatch = bool(cfg.batch_size) and len(full) > cfg.batch_size
    theta = params.flat.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta, best_loss = theta.copy(), math.inf
    for k in range(cfg.n_iters):
        if minibatch:
            idx = np.sort(rng.choice(len(full), size=cfg.batch_size, replace=False))
            batch = full.subset(idx)
        else:
            batch = full
        try:
            loss, g = loss_and_grad(params.with_flat(theta), batch, cfg.w_l, cfg.solver)
        except Exception as exc:  # divergence inside the solve
            log.warning("inner step %d skipped: %s", k, exc)
            stats.skipped_steps += 1
            continue
        if not minibatch:
            if k == 0:
                stats.initial_loss = loss
            if loss < best_loss:
                best_loss, best_theta = loss, theta.copy()
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            log.warning("inner step %d skipped: non-finite loss or gradient", k)
            stats.skipped_steps += 1
            continue
        lr = cfg.lr * cfg.lr_decay ** (step_offset + k)
        t = k + 1
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**t)
        vhat = v / (1 - cfg.beta2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + cfg.eps)
        stats.steps += 1
    try:
        final = node_loss(params.with_flat(theta), full, cfg.w_l, cfg.solver)
    except Exception:
        final = math.inf
    if minibatch:
        start = node_loss(params, full, cfg.w_l, cfg.solver)
        stats.initial_loss = start
        best_theta, best_loss = params.flat.copy(), start
    if final <= best_loss:
        best_theta, best_loss = theta, final
    stats.final_loss = best_loss
    return params.with_flat(best_theta)


# --------------------------------------------------------------------------
# Checkpoints


def save_params(params: ModelParams, path) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.array(CHECKPOINT_VERSION),
            kind=np.array(params.kind),
            activation=np.array(params.activation),
            layers=np.array(params.layers, dtype=np.int64),
            flat=params.flat,
        )
    return path


def load_params(path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return ModelParams(
            data["flat"].astype(float),
            tuple(int(x) for x in data["layers"]),
            str(data["kind"]),
            str(data["activation"]),
        )
