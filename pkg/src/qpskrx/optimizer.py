"""Receiver parameter optimisation.

The photon-counting displacement follows analytically from the
stationarity condition ``a = beta * tanh(2 a beta)``; only the beam-splitter
transmittance is searched numerically (coarse grid, then golden section).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import (
    DisplacementSetting,
    OdGeometry,
    Receiver,
    SplitRatio,
    _hd_k,
    _hd_od,
)
from .core import SQRT2

__all__ = [
    "SolverError",
    "OptimizerSettings",
    "solve_beta",
    "displacement_params",
    "od_geometry",
    "kennedy_geometry",
    "golden_section",
    "minimize_unit_interval",
    "optimize_transmittance",
    "effective_splitting",
    "physical_splitting",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
BETA_LIMIT = 1.0 / SQRT2


class SolverError(RuntimeError):
    """Raised when a root or minimum search fails to converge."""


@dataclass(frozen=True)
class OptimizerSettings:
    beta_tol: float = 1e-12
    t2_grid: int = 201
    t2_refine_tol: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        if not (self.beta_tol > 0 and self.t2_refine_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.t2_grid < 3:
            raise ValueError("t2_grid needs at least 3 points")


DEFAULT_SETTINGS = OptimizerSettings()


def _residual(a, beta):
    return beta * np.tanh(2.0 * a * beta) - a


def solve_beta(a, settings: OptimizerSettings | None = None):
    """Optimal binary displacement ``beta`` for half-distance ``a``.

    Solves ``a = beta * tanh(2 a beta)`` by bisection on
    ``[max(a, 0.5), a + 2]`` followed by Newton polishing.  ``a = 0`` returns
    the low-signal limit ``1/sqrt(2)``.  Accepts scalars or arrays.

    Raises
    ------
    SolverError
        If the residual is not below ``settings.beta_tol`` after
        ``settings.max_iter`` iterations.
    """
    settings = settings or DEFAULT_SETTINGS
    a_arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a_arr)) or np.any(a_arr < 0):
        raise ValueError("a must be finite and non-negative")
    a_flat = np.atleast_1d(a_arr).ravel()
    out = np.full(a_flat.shape, BETA_LIMIT)
    live = a_flat > 0
    if np.any(live):
        out[live] = _solve_positive(a_flat[live], settings)
    out = out.reshape(a_arr.shape)
    return float(out) if out.ndim == 0 else out


def _solve_positive(a, settings):
    # g(beta) is strictly increasing for beta > 0, negative at lo, positive at hi
    lo = np.maximum(a, 0.5)
    hi = a + 2.0
    if np.any(_residual(a, hi) <= 0):
        raise SolverError("bracket does not enclose the root")
    for _ in range(settings.max_iter):
        mid = 0.5 * (lo + hi)
        pos = _residual(a, mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 1e-3 * np.maximum(hi, 1.0)):
            break
    beta = 0.5 * (lo + hi)
    for _ in range(settings.max_iter):
        x = 2.0 * a * beta
        th = np.tanh(x)
        g = beta * th - a
        dg = th + x * (1.0 - th * th)
        step = g / dg
        beta = np.clip(beta - step, lo, hi)
        if np.all(np.abs(step) <= 1e-16 * beta):
            break
    res = np.abs(_residual(a, beta))
    if np.any(res >= settings.beta_tol):
        bad = float(a[np.argmax(res)])
        raise SolverError(
            f"beta solver did not converge for a={bad:.6g} (residual {res.max():.3g})"
        )
    return beta


def displacement_params(t_alpha: float, beta: float) -> OdGeometry:
    """Displacement magnitude and phase for the transmitted amplitude ``t|alpha|``."""
    t_alpha = float(t_alpha)
    beta = float(beta)
    if t_alpha < 0 or beta < 0:
        raise ValueError("t_alpha and beta must be non-negative")
    if t_alpha == 0 and beta == 0:
        raise ValueError("degenerate geometry: displacement phase undefined for t_alpha = beta = 0")
    a = t_alpha / SQRT2
    return OdGeometry(
        a=a,
        beta=beta,
        gamma2=t_alpha**2 / 2 + beta**2,
        phi=math.atan2(t_alpha, SQRT2 * beta),
    )


def od_geometry(alpha: float, split: SplitRatio, settings: OptimizerSettings | None = None) -> OdGeometry:
    t_alpha = split.t * alpha
    return displacement_params(t_alpha, solve_beta(t_alpha / SQRT2, settings))


def kennedy_geometry(alpha: float, split: SplitRatio) -> DisplacementSetting:
    """Displacement nulling state 1; stays well defined when ``t|alpha| = 0``."""
    t_alpha = split.t * alpha
    return DisplacementSetting(t_alpha**2, math.pi / 4)


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int = 200
) -> tuple[float, float]:
    """Golden-section search for the minimum of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = (lo, hi) if lo <= hi else (hi, lo)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    else:
        raise SolverError("golden-section search hit max_iter")
    return (c, fc) if fc <= fd else (d, fd)


def minimize_unit_interval(
    f: Callable, settings: OptimizerSettings | None = None, vectorized: bool = False
) -> tuple[float, float]:
    """Minimise ``f`` over ``[0, 1]``: coarse grid, then golden section around the best node.

    The returned value is never worse than the best grid node (endpoints
    included).
    """
    settings = settings or DEFAULT_SETTINGS
    grid = np.linspace(0.0, 1.0, settings.t2_grid)
    values = np.asarray(f(grid) if vectorized else [f(x) for x in grid], dtype=float)
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    scalar = (lambda x: float(f(np.asarray(x)))) if vectorized else f
    x, fx = golden_section(scalar, lo, hi, settings.t2_refine_tol, settings.max_iter)
    if values[i] < fx:
        return float(grid[i]), float(values[i])
    return float(x), float(fx)


def _objective(alpha: float, receiver: Receiver, settings: OptimizerSettings):
    if receiver == Receiver.HD_K:
        return lambda t2: _hd_k(alpha, t2)
    if receiver == Receiver.HD_OD:
        def f(t2):
            a = np.sqrt(t2) * alpha / SQRT2
            return _hd_od(alpha, t2, solve_beta(a, settings))
        return f
    raise ValueError(f"transmittance is only defined for hybrid receivers, got {receiver}")


def optimize_transmittance(
    alpha: float, receiver, settings: OptimizerSettings | None = None
) -> tuple[float, float]:
    """Best transmittance ``t2*`` and the attained error for a hybrid receiver."""
    settings = settings or DEFAULT_SETTINGS
    alpha = float(alpha)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    receiver = Receiver(receiver)
    return minimize_unit_interval(_objective(alpha, receiver, settings), settings, vectorized=True)


def _check_eta(eta_apd, eta_hd):
    for name, eta in (("eta_apd", eta_apd), ("eta_hd", eta_hd)):
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"{name} must lie in (0, 1], got {eta}")


def effective_splitting(t2: float, eta_apd: float, eta_hd: float) -> SplitRatio:
    """Fold detector efficiencies into the beam splitter.

    The remaining overall loss is the amplitude factor
    ``sqrt(eta_apd*T + eta_hd*R)`` applied at state generation.
    """
    _check_eta(eta_apd, eta_hd)
    t2 = SplitRatio(t2).t2
    num = eta_apd * t2
    return SplitRatio(num / (num + eta_hd * (1.0 - t2)))


def physical_splitting(t2_eff: float, eta_apd: float, eta_hd: float) -> SplitRatio:
    """Inverse of :func:`effective_splitting`."""
    _check_eta(eta_apd, eta_hd)
    t2_eff = SplitRatio(t2_eff).t2
    num = t2_eff * eta_hd
    return SplitRatio(num / (eta_apd * (1.0 - t2_eff) + num))
