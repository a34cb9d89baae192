"""Embedded explicit Runge-Kutta pairs with adaptive step-size control."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "IntegrationError",
    "Tableau",
    "DORMAND_PRINCE_45",
    "BOGACKI_SHAMPINE_32",
    "METHODS",
    "Trajectory",
    "save_grid",
    "adaptive_rk",
]


class IntegrationError(RuntimeError):
    """Raised when step-size control collapses."""


@dataclass(frozen=True)
class Tableau:
    name: str
    order: int  # order of the propagated solution
    a: tuple
    b: np.ndarray
    b_err: np.ndarray  # b - b_hat, weights of the error estimate
    c: np.ndarray
    fsal: bool


def _tableau(name, order, a, b, b_hat, fsal):
    b = np.array(b, dtype=np.float64)
    b_hat = np.array(b_hat, dtype=np.float64)
    c = np.array([sum(row) for row in a], dtype=np.float64)
    return Tableau(name, order, tuple(tuple(r) for r in a), b, b - b_hat, c, fsal)


DORMAND_PRINCE_45 = _tableau(
    "dormand_prince_45",
    5,
    [
        [],
        [1 / 5],
        [3 / 40, 9 / 40],
        [44 / 45, -56 / 15, 32 / 9],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0],
    [5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40],
    fsal=True,
)

BOGACKI_SHAMPINE_32 = _tableau(
    "bogacki_shampine_32",
    3,
    [
        [],
        [1 / 2],
        [0, 3 / 4],
        [2 / 9, 1 / 3, 4 / 9],
    ],
    [2 / 9, 1 / 3, 4 / 9, 0],
    [7 / 24, 1 / 4, 1 / 3, 1 / 8],
    fsal=True,
)

METHODS = {t.name: t for t in (DORMAND_PRINCE_45, BOGACKI_SHAMPINE_32)}


@dataclass
class Trajectory:
    """States saved on an increasing time grid, one row per time."""

    times: np.ndarray
    states: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states)
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state row per saved time is required")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def nearest(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def save_grid(t0: float, t1: float, save_every: float) -> np.ndarray:
    """``t0, t0 + h, ...`` up to ``t1`` inclusive; ``t1`` is appended if off-grid."""
    n = (t1 - t0) / save_every
    k = int(round(n))
    if abs(n - k) > 1e-9:
        k = int(np.floor(n))
        grid = t0 + save_every * np.arange(k + 1)
        return np.append(grid, t1) if t1 - grid[-1] > 1e-12 * (t1 - t0) else grid
    grid = t0 + save_every * np.arange(k + 1)
    grid[-1] = t1
    return grid


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, order, rtol, atol, span):
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, span)


def adaptive_rk(
    rhs,
    y0,
    tspan,
    rtol=1e-10,
    atol=1e-14,
    method="dormand_prince_45",
    save_every=None,
    *,
    max_steps=10_000_000,
    callback=None,
    save_times=None,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` over ``tspan`` with an embedded RK pair.

    The local error estimate is controlled against ``atol + rtol*|y|`` in
    the RMS norm, with a PI step-size controller.  Steps are clipped so
    that every save time is hit exactly.  Save times are ``save_every``
    apart, or given explicitly as ``save_times`` (increasing, starting at
    ``tspan[0]``).  ``callback(t, y)``, if given, is called at each save
    time after the initial one.
    """
    tab = METHODS[method] if isinstance(method, str) else method
    t0, t1 = (float(v) for v in tspan)
    if not t1 > t0:
        raise ValueError(f"degenerate time span {tspan}")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    span = t1 - t0
    if save_times is None:
        save_times = save_grid(t0, t1, save_every if save_every else span)
    else:
        save_times = np.asarray(save_times, dtype=np.float64)
        if save_times[0] != t0 or np.any(np.diff(save_times) <= 0) or save_times[-1] > t1:
            raise ValueError("save_times must increase from tspan[0] within tspan")

    y = np.array(y0, copy=True)
    f = rhs(t0, y)
    states = [y.copy()]
    low_order = tab.order - 1
    alpha = 0.7 / (low_order + 1)
    beta = 0.4 / (low_order + 1)
    safety, fac_min, fac_max = 0.9, 0.2, 5.0
    h_min = 1e-14 * span

    h = _initial_step(rhs, t0, y, f, tab.order, rtol, atol, span)
    err_prev = 1.0
    t = t0
    steps = 0
    n_stages = len(tab.a)
    k = [None] * n_stages

    for target in save_times[1:]:
        while t < target:
            if steps >= max_steps:
                raise IntegrationError(f"exceeded {max_steps} steps at t={t:.6g}")
            clipped = h >= target - t
            h_try = target - t if clipped else h
            k[0] = f
            last = n_stages - 1 if tab.fsal else n_stages
            for s in range(1, last):
                incr = sum(a * k[j] for j, a in enumerate(tab.a[s]) if a != 0.0)
                k[s] = rhs(t + tab.c[s] * h_try, y + h_try * incr)
            y_new = y + h_try * sum(b * k[j] for j, b in enumerate(tab.b) if b != 0.0)
            if tab.fsal:
                # last stage is the derivative at the new point
                k[-1] = f_new = rhs(t + h_try, y_new)
            else:
                f_new = None
            err_vec = h_try * sum(e * k[j] for j, e in enumerate(tab.b_err) if e != 0.0)
            err = _error_norm(err_vec, y, y_new, rtol, atol)
            steps += 1
            if not np.isfinite(err):
                err = np.inf

            if err <= 1.0:
                t = target if clipped else t + h_try
                y = y_new
                f = f_new if f_new is not None else rhs(t, y)
                fac = safety * max(err, 1e-10) ** (-alpha) * err_prev**beta
                h_next = h_try * min(fac_max, max(fac_min, fac))
                # a clipped step says nothing about the natural step size
                h = max(h, h_next) if clipped else h_next
                err_prev = max(err, 1e-4)
            else:
                fac = safety * err ** (-1.0 / (low_order + 1)) if np.isfinite(err) else fac_min
                h = h_try * max(fac_min, min(1.0, fac))
            if h < h_min:
                raise IntegrationError(
                    f"step size {h:.3e} underflowed below {h_min:.3e} at t={t:.6g}"
                )
        states.append(y.copy())
        if callback is not None:
            callback(t, y)

    return Trajectory(save_times, np.array(states), {"method": tab.name, "steps": steps})
