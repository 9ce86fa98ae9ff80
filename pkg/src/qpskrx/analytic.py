"""Closed-form error rates for the hybrid receivers and their references.

All receiver functions take the signal *amplitude* ``|alpha|`` (not the
photon number).  The hybrid receivers split the signal on a beam splitter:
the reflected part goes to a P-quadrature homodyne detector that picks the
upper or lower half plane, the transmitted part is displaced and sent to an
on/off photon counter that separates the surviving pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfc

from .core import SQRT2, click_probability, p_quadrature_negative_prob, qpsk_states

__all__ = [
    "Receiver",
    "SplitRatio",
    "DisplacementSetting",
    "OdGeometry",
    "ConfusionMatrix",
    "hd_stage_error",
    "hd_k_error",
    "od_stage_error",
    "hd_od_error",
    "heterodyne_error",
    "helstrom_qpsk",
    "helstrom_asymptotic",
    "srm_error_circulant",
    "ber_from_confusion",
    "hybrid_confusion",
    "hybrid_error",
]


class Receiver(str, Enum):
    HD_K = "HD-K"
    HD_OD = "HD-OD"
    HETERODYNE = "heterodyne"
    HELSTROM = "helstrom"

    def __str__(self) -> str:
        return self.value


def _check_nonneg(name, x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    return x


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class SplitRatio:
    """Beam splitter with power transmittance ``t2`` towards the photon counter."""

    t2: float

    def __post_init__(self):
        t2 = float(self.t2)
        if not (0.0 <= t2 <= 1.0):
            raise ValueError(f"transmittance must lie in [0, 1], got {self.t2}")
        object.__setattr__(self, "t2", t2)

    @property
    def r2(self) -> float:
        return 1.0 - self.t2

    @property
    def t(self) -> float:
        return math.sqrt(self.t2)

    @property
    def r(self) -> float:
        return math.sqrt(self.r2)


@dataclass(frozen=True)
class DisplacementSetting:
    """Displacement applied before the photon counter for the upper pair.

    The lower pair uses ``-gamma``.  ``phi`` is measured from the X axis.
    """

    gamma2: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma2) and self.gamma2 >= 0):
            raise ValueError(f"gamma2 must be finite and >= 0, got {self.gamma2}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi}")

    @property
    def gamma(self) -> complex:
        return math.sqrt(self.gamma2) * complex(math.cos(self.phi), math.sin(self.phi))


@dataclass(frozen=True)
class OdGeometry:
    """Two-step displacement: ``i*a`` onto the X axis, then ``beta`` along it.

    ``a`` is the half-distance ``t|alpha|/sqrt(2)`` of the surviving binary
    pair, so ``gamma = beta + i*a``.
    """

    a: float
    beta: float
    gamma2: float
    phi: float

    def __post_init__(self):
        if self.a < 0 or self.beta < 0:
            raise ValueError("a and beta must be non-negative")
        if abs(self.gamma2 - (self.a**2 + self.beta**2)) > 1e-12 * (1 + self.gamma2):
            raise ValueError("gamma2 must equal a^2 + beta^2")
        if abs(math.tan(self.phi) * self.beta - self.a) > 1e-12 * (1 + self.a):
            raise ValueError("phi inconsistent with a and beta")

    @property
    def gamma(self) -> complex:
        return complex(self.beta, self.a)

    @property
    def setting(self) -> DisplacementSetting:
        return DisplacementSetting(self.gamma2, self.phi)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Decision statistics ``probs[m, l] = P(decide m+1 | sent l+1)``.

    ``counts`` is set for empirical matrices; ``probs`` is then exactly
    ``counts / shots``.
    """

    probs: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (4, 4):
            raise ValueError(f"confusion matrix must be 4x4, got {p.shape}")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
            raise ValueError("confusion entries must lie in [0, 1]")
        if not np.allclose(p.sum(axis=0), 1.0, atol=1e-9, rtol=0):
            raise ValueError("confusion matrix columns must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if self.counts is not None:
            c = np.array(self.counts, dtype=np.int64)
            c.setflags(write=False)
            object.__setattr__(self, "counts", c)

    @classmethod
    def from_counts(cls, counts) -> ConfusionMatrix:
        counts = np.asarray(counts, dtype=np.int64)
        shots = counts.sum(axis=0)
        if np.any(shots == 0):
            raise ValueError("every true state needs at least one shot")
        return cls(counts / shots, counts)

    @property
    def shots(self) -> np.ndarray | None:
        return None if self.counts is None else self.counts.sum(axis=0)

    @property
    def error_rate(self) -> float:
        return float(1.0 - 0.25 * np.trace(self.probs))

    def error_std(self) -> float:
        """Binomial standard error of :attr:`error_rate` (0 for analytic matrices)."""
        if self.counts is None:
            return 0.0
        q = 1.0 - np.diag(self.probs)
        return float(np.sqrt(np.sum(q * (1 - q) / self.shots)) / 4)

    @property
    def ber(self) -> float:
        return ber_from_confusion(self)


def hd_stage_error(r_alpha):
    """Homodyne half-plane error ``erfc(r|alpha|) / 2``."""
    r_alpha = _check_nonneg("r_alpha", r_alpha)
    return _scalar(0.5 * erfc(r_alpha))


def _hd_k(alpha, t2):
    h = 0.5 * erfc(np.sqrt(1.0 - t2) * alpha)
    k = 0.5 * np.exp(-2.0 * t2 * alpha**2)
    # 1 - (1 - h)(1 - k), written to keep relative precision for tiny errors
    return h + k - h * k


def hd_k_error(alpha, split: SplitRatio):
    alpha = _check_nonneg("alpha", alpha)
    return _scalar(_hd_k(alpha, split.t2))


def _od(a, beta):
    return 0.5 - np.exp(-(a * a + beta * beta)) * np.sinh(2.0 * a * beta)


def od_stage_error(a, beta):
    """Binary displacement-receiver error for ``|+-a>`` displaced by ``beta``."""
    a = _check_nonneg("a", a)
    beta = _check_nonneg("beta", beta)
    return _scalar(_od(a, beta))


def _hd_od(alpha, t2, beta):
    h = 0.5 * erfc(np.sqrt(1.0 - t2) * alpha)
    o = _od(np.sqrt(t2) * alpha / SQRT2, beta)
    return h + o - h * o


def hd_od_error(alpha, split: SplitRatio, beta):
    alpha = _check_nonneg("alpha", alpha)
    beta = _check_nonneg("beta", beta)
    return _scalar(_hd_od(alpha, split.t2, beta))


def heterodyne_error(alpha):
    """Ideal heterodyne detection with a quadrant decision."""
    alpha = _check_nonneg("alpha", alpha)
    # each quadrature independently lands on the wrong side with prob w
    w = 0.5 * erfc(alpha / SQRT2)
    return _scalar(2.0 * w - w * w)


def srm_error_circulant(first_row) -> float:
    """Square-root-measurement error for equiprobable symmetric pure states.

    ``first_row`` is the first row of the (circulant) Gram matrix.  Its DFT
    gives the eigenvalues ``lam``; the success probability is
    ``(sum sqrt(lam))^2 / M^2``.
    """
    c = np.asarray(first_row, dtype=complex)
    m = c.size
    lam = np.clip(np.fft.fft(c).real, 0.0, None)
    s = np.sqrt(lam)
    # M * sum(lam) - (sum s)^2 as a sum of squared differences; no cancellation
    diff = s[:, None] - s[None, :]
    return float(np.sum(np.triu(diff**2, 1)) / m**2)


def helstrom_qpsk(alpha) -> float:
    """Exact minimum error for the QPSK alphabet."""
    alpha = float(_check_nonneg("alpha", alpha))
    k = np.arange(4)
    gram_row = np.exp(alpha**2 * (1j**k - 1.0))
    return srm_error_circulant(gram_row)


def helstrom_asymptotic(alpha):
    """Large-amplitude form ``exp(-2|alpha|^2) / 2``."""
    alpha = _check_nonneg("alpha", alpha)
    return _scalar(0.5 * np.exp(-2.0 * alpha**2))


# r[m, l] = 1 for diametrically opposite states, 1/2 for neighbours
_BER_WEIGHTS = np.array(
    [[0.0 if m == l else (1.0 if abs(m - l) == 2 else 0.5) for l in range(4)] for m in range(4)]
)


def ber_from_confusion(cm: ConfusionMatrix) -> float:
    return float(0.25 * np.sum(_BER_WEIGHTS * cm.probs))


def _pair_stats(alpha, split, setting, dark_prob, pc_attenuation):
    states = qpsk_states(alpha).states
    hd = split.r * states
    p_lower = p_quadrature_negative_prob(hd)
    p_upper = p_quadrature_negative_prob(-hd)
    gamma = setting.gamma
    pc = pc_attenuation * split.t * states
    click_up = click_probability(pc - gamma, dark_prob)
    click_low = click_probability(pc + gamma, dark_prob)
    quiet_up = (1.0 - dark_prob) * np.exp(-np.abs(pc - gamma) ** 2)
    quiet_low = (1.0 - dark_prob) * np.exp(-np.abs(pc + gamma) ** 2)
    return p_upper, p_lower, click_up, quiet_up, click_low, quiet_low


def hybrid_confusion(
    alpha,
    split: SplitRatio,
    setting: DisplacementSetting,
    dark_prob: float = 0.0,
    pc_attenuation: float = 1.0,
) -> ConfusionMatrix:
    """Confusion matrix of a hybrid receiver with an arbitrary displacement.

    Upper half plane: no click -> state 1, click -> state 2.  Lower half
    plane (displacement ``-gamma``): no click -> 3, click -> 4.
    ``pc_attenuation`` scales the signal reaching the photon counter (the
    ``cos(theta)`` of a wave-plate displacement).
    """
    alpha = float(_check_nonneg("alpha", alpha))
    p_upper, p_lower, click_up, quiet_up, click_low, quiet_low = _pair_stats(
        alpha, split, setting, dark_prob, pc_attenuation
    )
    probs = np.vstack(
        [p_upper * quiet_up, p_upper * click_up, p_lower * quiet_low, p_lower * click_low]
    )
    return ConfusionMatrix(probs)


def hybrid_error(
    alpha,
    split: SplitRatio,
    setting: DisplacementSetting,
    dark_prob: float = 0.0,
    pc_attenuation: float = 1.0,
) -> float:
    """Average error of :func:`hybrid_confusion`, free of ``1 - trace`` cancellation."""
    alpha = float(_check_nonneg("alpha", alpha))
    p_upper, p_lower, click_up, quiet_up, click_low, quiet_low = _pair_stats(
        alpha, split, setting, dark_prob, pc_attenuation
    )
    hd_wrong = np.array([p_lower[0], p_lower[1], p_upper[2], p_upper[3]])
    pc_wrong = np.array([click_up[0], quiet_up[1], click_low[2], quiet_low[3]])
    per_state = hd_wrong + pc_wrong - hd_wrong * pc_wrong
    return float(np.mean(per_state))
