"""Coherent-state primitives shared by every receiver model.

Amplitudes are plain Python ``complex`` values (Cartesian storage; use
``abs`` and ``cmath.phase`` for the polar view).  Everything here is pure
and vectorises over numpy arrays where that makes sense.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

__all__ = [
    "QuadratureConvention",
    "QUADRATURE",
    "QpskAlphabet",
    "as_amplitude",
    "coherent_overlap",
    "qpsk_states",
    "p_quadrature_negative_prob",
    "click_probability",
]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class QuadratureConvention:
    """Homodyne statistics of a coherent state on the P quadrature.

    The outcome for amplitude ``a`` is Gaussian with mean
    ``mean_scale * a.imag`` and variance ``variance``.  With the defaults the
    probability of a non-positive outcome for ``r * alpha_1`` is
    ``0.5 * erfc(r * |alpha|)``.
    """

    mean_scale: float = SQRT2
    variance: float = 0.5

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def mean(self, a):
        return self.mean_scale * np.imag(a)


QUADRATURE = QuadratureConvention()


def as_amplitude(z) -> complex:
    """Coerce ``z`` to a finite complex amplitude or raise ``ValueError``."""
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"amplitude must be finite, got {z!r}")
    return z


def coherent_overlap(a, b) -> complex:
    """Inner product <a|b> of two coherent states."""
    a = as_amplitude(a)
    b = as_amplitude(b)
    return cmath.exp(-0.5 * abs(a) ** 2 - 0.5 * abs(b) ** 2 + a.conjugate() * b)


@dataclass(frozen=True)
class QpskAlphabet:
    """Four coherent states ``|alpha| exp(i (n - 1/2) pi/2)``, n = 1..4.

    ``states`` is 0-indexed; ``alphabet[n]`` is not provided on purpose, use
    :meth:`state` with the 1-based label instead.
    """

    amplitude: float
    states: np.ndarray = field(repr=False)
    prior: float = 0.25

    def state(self, n: int) -> complex:
        if n not in (1, 2, 3, 4):
            raise ValueError(f"state label must be 1..4, got {n}")
        return complex(self.states[n - 1])

    @property
    def photon_number(self) -> float:
        return self.amplitude**2


_PHASES = (np.arange(1, 5) - 0.5) * (np.pi / 2)
_UNIT_STATES = np.exp(1j * _PHASES)


def qpsk_states(amp: float) -> QpskAlphabet:
    amp = float(amp)
    if not math.isfinite(amp) or amp < 0:
        raise ValueError(f"amplitude must be a finite non-negative number, got {amp}")
    states = amp * _UNIT_STATES
    states.setflags(write=False)
    return QpskAlphabet(amplitude=amp, states=states)


def p_quadrature_negative_prob(a):
    """Probability that a P-quadrature measurement of ``|a>`` gives ``p <= 0``."""
    im = np.imag(a)
    # mean sqrt2*Im, variance 1/2  ->  P(p <= 0) = erfc(mean / (sqrt2 * std)) / 2
    out = 0.5 * erfc(QUADRATURE.mean(a) / (SQRT2 * QUADRATURE.std))
    if np.ndim(im) == 0:
        return float(out)
    return out


def click_probability(residual, dark_prob: float = 0.0):
    """Click probability of an on/off detector fed ``|residual>``.

    A dark count is an independent per-gate Bernoulli event, so the
    no-click probability is ``(1 - dark_prob) * exp(-|residual|^2)``.
    """
    if not 0.0 <= dark_prob <= 1.0:
        raise ValueError(f"dark_prob must lie in [0, 1], got {dark_prob}")
    # same as 1 - (1 - d) exp(-|r|^2); this form is exact at r = 0
    p = dark_prob - (1.0 - dark_prob) * np.expm1(-np.abs(residual) ** 2)
    if np.ndim(p) == 0:
        return float(p)
    return p
