"""Explicit ODE integration over interpolated action schedules.

Two schemes are provided: classical RK4 with a fixed number of uniform steps
and Dormand-Prince 5(4) with an embedded error estimate. Both accept plain
ndarrays or tape :class:`~asyncmpc.tape.Var` states, so a solve can be
recorded and differentiated exactly (the adaptive controller only ever looks
at values, which freezes the accepted step sequence).

The fixed scheme also accepts per-example interval endpoints (arrays shaped
``(B,)``), which lets a whole batch of irregular intervals advance together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tape as tp
from .errors import EmptySchedule, GradientOverflow, IntegrationDiverged, StepUnderflow


class ActionSchedule:
    """Piecewise-linear action signal through timestamped knots.

    ``values`` is ``(L, M)`` or, for a batch of schedules sharing the same
    knot times, ``(L, B, M)``. Outside ``[times[0], times[-1]]`` the nearest
    endpoint value is held.
    """

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1:
            raise ValueError("knot times must be 1-D")
        if values.ndim == 1:
            values = values[:, None]
        if len(times) != len(values):
            raise ValueError("times and values disagree on knot count")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("knot timestamps must be strictly increasing")
        self.times = times
        self.values = values

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    def __call__(self, t):
        return interp_at(self, t)

    def extended(self, times, values) -> "ActionSchedule":
        """Schedule with extra knots appended after the current last knot."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(self.times) and len(times) and times[0] <= self.times[-1]:
            raise ValueError("appended knots must follow the existing ones")
        base = self.values
        if values.ndim == 3 and base.ndim == 2:
            base = np.broadcast_to(base[:, None, :], (len(base),) + values.shape[1:])
        return ActionSchedule(np.concatenate([self.times, times]), np.concatenate([base, values]))


def interp_at(schedule: ActionSchedule, t):
    """Evaluate the schedule at scalar ``t`` (or at per-batch times ``t`` of shape (B,))."""
    if len(schedule.times) == 0:
        raise EmptySchedule("cannot evaluate an empty action schedule")
    times, values = schedule.times, schedule.values
    if len(times) == 1:
        v = values[0]
        if np.ndim(t) == 0:
            return v.copy()
        return np.broadcast_to(v, np.shape(t) + v.shape[-1:]).copy()
    tc = np.clip(t, times[0], times[-1])
    idx = np.clip(np.searchsorted(times, tc, side="right") - 1, 0, len(times) - 2)
    t_lo, t_hi = times[idx], times[idx + 1]
    w = (tc - t_lo) / (t_hi - t_lo)
    if np.ndim(t) == 0:
        v0, v1 = values[idx], values[idx + 1]
        # exact knot value at knots (w == 0 or 1) without rounding from the blend
        if w == 0.0:
            return v0.copy()
        if w == 1.0:
            return v1.copy()
        return v0 + w * (v1 - v0)
    idx = np.asarray(idx)
    if values.ndim == 3:
        b = np.arange(values.shape[1])
        v0, v1 = values[idx, b], values[idx + 1, b]
    else:
        v0, v1 = values[idx], values[idx + 1]
    w = np.asarray(w)[..., None]
    return np.where(w == 0.0, v0, np.where(w == 1.0, v1, v0 + w * (v1 - v0)))


@dataclass(frozen=True)
class SolverSpec:
    kind: str = "rk4"
    n_steps: int = 4
    rtol: float = 1e-6
    atol: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("rk4", "dopri5"):
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")

    @classmethod
    def rk4(cls, n_steps: int = 4) -> "SolverSpec":
        return cls("rk4", n_steps=n_steps)

    @classmethod
    def dopri5(cls, rtol: float = 1e-6, atol: float = 1e-8) -> "SolverSpec":
        return cls("dopri5", rtol=rtol, atol=atol)


Field = Callable  # field(t, z, u) -> dz/dt


def _check_finite(z, t):
    if not np.all(np.isfinite(tp.value(z))):
        raise IntegrationDiverged(float(np.min(t)) if np.ndim(t) else float(t))


def rk4_step(field, t, z, h, schedule):
    """One classical Runge-Kutta step; ``t`` and ``h`` may be (B, 1) arrays."""
    tt = np.squeeze(t, -1) if np.ndim(t) > 1 else t
    hh = np.squeeze(h, -1) if np.ndim(h) > 1 else h
    u1 = schedule(tt)
    u2 = schedule(tt + 0.5 * hh)
    u4 = schedule(tt + hh)
    k1 = field(t, z, u1)
    k2 = field(t + 0.5 * h, z + (0.5 * h) * k1, u2)
    k3 = field(t + 0.5 * h, z + (0.5 * h) * k2, u2)
    k4 = field(t + h, z + h * k3, u4)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B5 - _DP_B4


def dopri5_step(field, t, z, h, schedule):
    """Returns (5th-order solution, embedded error estimate as ndarray)."""
    ks = []
    for i in range(7):
        zi = z
        for j, a in enumerate(_DP_A[i]):
            if a != 0.0:
                zi = zi + (h * a) * ks[j]
        ti = t + _DP_C[i] * h
        ks.append(field(ti, zi, schedule(ti)))
    z_new = z
    for b, k in zip(_DP_B5, ks):
        if b != 0.0:
            z_new = z_new + (h * b) * k
    err = sum(h * e * tp.value(k) for e, k in zip(_DP_E, ks) if e != 0.0)
    return z_new, err


def integrate(field: Field, z0, t0, t1, schedule: ActionSchedule, solver: SolverSpec, steps_out=None):
    """Integrate ``dz/dt = field(t, z, u(t))`` from ``t0`` to ``t1``.

    ``schedule`` supplies ``u``; any callable of ``t`` works too. When
    ``steps_out`` is a list, the realised (t, h) pairs are appended to it.
    """
    if solver.kind == "rk4":
        return _integrate_fixed(field, z0, t0, t1, schedule, solver.n_steps, steps_out)
    return _integrate_adaptive(field, z0, float(t0), float(t1), schedule, solver, steps_out)


def _integrate_fixed(field, z0, t0, t1, schedule, n_steps, steps_out):
    per_example = np.ndim(t0) > 0 or np.ndim(t1) > 0
    if per_example:
        t0a = np.asarray(t0, dtype=float)
        t1a = np.asarray(t1, dtype=float)
        if np.any(t1a < t0a):
            raise ValueError("t1 must be >= t0")
        h = ((t1a - t0a) / n_steps)[..., None]
        t = t0a[..., None] + 0.0 * h
    else:
        if t1 < t0:
            raise ValueError("t1 must be >= t0")
        h = (t1 - t0) / n_steps
        t = float(t0)
    z = z0
    if np.all(h == 0):
        return z
    for k in range(n_steps):
        tk = t + k * h if not per_example else t0a[..., None] + k * h
        z = rk4_step(field, tk, z, h, schedule)
        _check_finite(z, tk + h)
        if steps_out is not None:
            steps_out.append((tk, h))
    return z


def _integrate_adaptive(field, z0, t0, t1, schedule, solver, steps_out, max_steps=100_000):
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    span = t1 - t0
    z = z0
    if span == 0.0:
        return z
    h_min = 1e-12 * span
    t = t0
    zv = np.asarray(tp.value(z0), dtype=float)
    f0 = np.asarray(tp.value(field(t0, tp.value(z0), schedule(t0))), dtype=float)
    # Hairer-Norsett-Wanner initial step heuristic
    sc = solver.atol + solver.rtol * np.abs(zv)
    d0 = np.sqrt(np.mean((zv / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6 * span
    h = min(max(h, 1e-6 * span), span)
    if h <= 0.0 or t0 + h == t0:
        # interval too short to subdivide in floating point: one step
        z_new, _ = dopri5_step(field, t0, z0, span, schedule)
        _check_finite(z_new, t1)
        if steps_out is not None:
            steps_out.append((t0, span))
        return z_new
    safety, fac_min, fac_max = 0.9, 0.2, 5.0
    for _ in range(max_steps):
        if t >= t1:
            break
        h = min(h, t1 - t)
        z_new, err = dopri5_step(field, t, z, h, schedule)
        zn = tp.value(z_new)
        scale = solver.atol + solver.rtol * np.maximum(np.abs(tp.value(z)), np.abs(zn))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not np.isfinite(err_norm):
            raise IntegrationDiverged(t + h)
        if err_norm <= 1.0:
            _check_finite(z_new, t + h)
            if steps_out is not None:
                steps_out.append((t, h))
            t = t + h if t + h < t1 else t1
            z = z_new
            fac = fac_max if err_norm == 0 else min(fac_max, max(fac_min, safety * err_norm ** -0.2))
        else:
            fac = max(fac_min, safety * err_norm ** -0.2)
        h = h * fac
        if t < t1 and (h < h_min or t + h == t):
            raise StepUnderflow(t, h)
    return z


def grad_through_solve(loss_fn: Callable, params) -> np.ndarray:
    """Exact gradient of ``loss_fn(theta)`` w.r.t. the flat vector ``params``.

    ``loss_fn`` receives the parameters as a tape variable and must return a
    scalar built from tape primitives (typically through :func:`integrate`).
    """
    flat = np.asarray(getattr(params, "flat", params), dtype=float)
    with tp.recording() as tape:
        theta = tape.variable(flat)
        loss = loss_fn(theta)
        if not tp.is_var(loss):
            return np.zeros_like(flat)
        (grad,) = tape.gradient(loss, [theta])
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise GradientOverflow(int(bad[0]))
    return grad
