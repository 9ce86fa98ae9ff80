"""Per-shot Monte Carlo of the hybrid receiver chain.

Randomness is counter based: every shot draws four uniforms from a Philox
block addressed by ``(seed, stream_id)`` as key and ``(shot_index, lane)``
as counter, so results do not depend on chunking, ordering or worker count.
Uniform 0 drives the homodyne outcome, 1 the click, 2 the commanded
displacement side in emulated campaigns, 3 is reserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import ndtri

from .analytic import ConfusionMatrix, DisplacementSetting, SplitRatio
from .core import QUADRATURE, click_probability, qpsk_states
from .optimizer import effective_splitting

__all__ = [
    "ImperfectionModel",
    "RngContract",
    "ShotRecord",
    "RECORD_DTYPE",
    "hwp_displacement",
    "hwp_angle",
    "dark_prob_from_extinction",
    "simulate_shot",
    "iter_trial_batches",
    "run_trials",
    "confusion_from_records",
    "simulate_heterodyne",
]

_U64 = 1 << 64
_TO_UNIT = 2.0**-53

RECORD_DTYPE = np.dtype(
    [
        ("shot", np.uint64),
        ("true_state", np.uint8),
        ("hd_outcome", np.float64),
        ("hd_upper", np.bool_),
        ("cmd_upper", np.bool_),
        ("gamma2", np.float64),
        ("phi", np.float64),
        ("clicked", np.bool_),
        ("decision", np.uint8),
    ]
)


def dark_prob_from_extinction(C: float, ao_photons: float, gate_efficiency: float) -> float:
    """Per-gate dark-click probability from auxiliary-oscillator leakage.

    A fraction ``C`` of the auxiliary oscillator leaks through the blocked
    modulator and is detected with ``gate_efficiency``.
    """
    if C < 0 or ao_photons < 0:
        raise ValueError("extinction ratio and AO photon number must be non-negative")
    if not 0.0 < gate_efficiency <= 1.0:
        raise ValueError(f"gate_efficiency must lie in (0, 1], got {gate_efficiency}")
    if C == 0:
        return 0.0
    return float(-math.expm1(-gate_efficiency * C * ao_photons))


def hwp_angle(gamma_abs: float, ao_photons: float) -> float:
    """Wave-plate rotation that couples ``|gamma|`` out of an AO with ``ao_photons``."""
    if math.isinf(ao_photons):
        return 0.0
    if gamma_abs > math.sqrt(ao_photons):
        raise ValueError("displacement larger than the auxiliary oscillator amplitude")
    return math.asin(gamma_abs / math.sqrt(ao_photons))


def hwp_displacement(signal, ao_amp, theta: float):
    """Wave-plate mixing ``cos(theta) * signal + sin(theta) * ao_amp``."""
    if not np.all(np.abs(theta) < math.pi / 2):
        raise ValueError(f"|theta| must be below pi/2, got {theta}")
    return np.cos(theta) * signal + np.sin(theta) * ao_amp


@dataclass(frozen=True)
class ImperfectionModel:
    """Detector and displacement imperfections.

    ``dark_prob=None`` derives the dark-click probability from the
    extinction ratio and AO power.  ``visibility`` is informational; it
    enters only through ``eta_hd`` (see :meth:`from_hardware`).
    """

    dark_prob: float | None = 0.0
    extinction_ratio: float = 0.0
    ao_photons: float = math.inf
    visibility: float = 1.0
    eta_hd: float = 1.0
    eta_apd: float = 1.0

    def __post_init__(self):
        if self.dark_prob is not None and not 0.0 <= self.dark_prob <= 1.0:
            raise ValueError(f"dark_prob must lie in [0, 1], got {self.dark_prob}")
        if self.extinction_ratio < 0:
            raise ValueError("extinction_ratio must be >= 0")
        if not self.ao_photons > 0:
            raise ValueError("ao_photons must be positive (inf for an ideal displacement)")
        for name in ("visibility", "eta_hd", "eta_apd"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @classmethod
    def ideal(cls) -> ImperfectionModel:
        return cls()

    @classmethod
    def laboratory(cls) -> ImperfectionModel:
        """Values reported for the experimental set-up."""
        return cls(
            dark_prob=0.0272,
            extinction_ratio=1 / 500,
            ao_photons=20.0,
            visibility=0.95,
            eta_hd=0.83,
            eta_apd=0.63,
        )

    @classmethod
    def from_hardware(cls, visibility: float, eta_diodes: float, **kw) -> ImperfectionModel:
        return cls(visibility=visibility, eta_hd=visibility**2 * eta_diodes, **kw)

    @property
    def effective_dark_prob(self) -> float:
        if self.dark_prob is not None:
            return self.dark_prob
        if self.extinction_ratio == 0:
            return 0.0
        if math.isinf(self.ao_photons):
            return 1.0
        return dark_prob_from_extinction(self.extinction_ratio, self.ao_photons, self.eta_apd)

    def effective(self, alpha: float, split: SplitRatio) -> tuple[float, SplitRatio]:
        """Move detector losses to the source: scaled amplitude and remapped split."""
        scale = self.eta_apd * split.t2 + self.eta_hd * split.r2
        return alpha * math.sqrt(scale), effective_splitting(split.t2, self.eta_apd, self.eta_hd)

    def pc_attenuation(self, gamma2: float) -> float:
        return math.cos(hwp_angle(math.sqrt(gamma2), self.ao_photons))


@dataclass(frozen=True)
class RngContract:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v < _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def raw(self, lane: int, start: int, n: int) -> np.ndarray:
        bg = np.random.Philox(key=[self.seed, self.stream_id], counter=[start, lane, 0, 0])
        return bg.random_raw(4 * n).reshape(n, 4)

    def uniforms(self, lane: int, start: int, n: int) -> np.ndarray:
        """``(n, 4)`` uniforms in the open interval (0, 1) for shots ``start..start+n-1``."""
        return ((self.raw(lane, start, n) >> np.uint64(11)).astype(np.float64) + 0.5) * _TO_UNIT


@dataclass(frozen=True)
class ShotRecord:
    true_state: int
    hd_outcome: float
    hd_decision: str
    displacement_used: DisplacementSetting
    clicked: bool
    decision: int


def _check_setting(setting) -> DisplacementSetting:
    if isinstance(setting, DisplacementSetting):
        return setting
    try:
        return DisplacementSetting(float(setting.gamma2), float(setting.phi))
    except (AttributeError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid displacement geometry: {setting!r}") from exc


def _simulate_core(amp, split_eff, gamma, imperfections, u, cmd_upper=None):
    """Vectorised shot kernel.

    ``amp`` holds the (loss-scaled) amplitude of each shot, ``gamma`` the
    upper-pair displacement (scalar or per shot), ``u`` the ``(n, 4)``
    uniforms.  ``cmd_upper`` overrides live feed-forward.
    """
    hd = QUADRATURE.mean(split_eff.r * amp) + QUADRATURE.std * ndtri(u[:, 0])
    hd_upper = hd >= 0  # ties go to the upper half plane
    cmd = hd_upper if cmd_upper is None else cmd_upper
    shift = np.where(cmd, -gamma, gamma)
    ao = imperfections.ao_photons
    if math.isinf(ao):
        displaced = split_eff.t * amp + shift
    else:
        g = np.abs(shift)
        if np.any(g > math.sqrt(ao)):
            raise ValueError("displacement larger than the auxiliary oscillator amplitude")
        unit = np.divide(shift, g, out=np.zeros_like(shift), where=g > 0)
        displaced = hwp_displacement(split_eff.t * amp, unit * math.sqrt(ao), np.arcsin(g / math.sqrt(ao)))
    clicked = u[:, 1] < click_probability(displaced, imperfections.effective_dark_prob)
    decision = (np.where(cmd, 1, 3) + clicked).astype(np.uint8)
    return hd, hd_upper, cmd, clicked, decision


def _simulate(states, alpha, split, setting, imperfections, u, cmd_upper=None):
    alpha_eff, split_eff = imperfections.effective(alpha, split)
    amp = qpsk_states(alpha_eff).states[states - 1]
    return _simulate_core(amp, split_eff, setting.gamma, imperfections, u, cmd_upper)


def simulate_shot(
    true_state: int,
    alpha: float,
    split: SplitRatio,
    geometry,
    imperfections: ImperfectionModel,
    rng: RngContract,
    shot_index: int = 0,
) -> ShotRecord:
    """One shot with live feed-forward; identical to shot ``shot_index`` of :func:`run_trials`."""
    if true_state not in (1, 2, 3, 4):
        raise ValueError(f"true_state must be 1..4, got {true_state}")
    setting = _check_setting(geometry)
    u = rng.uniforms(true_state, shot_index, 1)
    hd, up, cmd, clicked, decision = _simulate(
        np.array([true_state]), alpha, split, setting, imperfections, u
    )
    used = setting if cmd[0] else DisplacementSetting(setting.gamma2, setting.phi + math.pi)
    return ShotRecord(
        true_state=true_state,
        hd_outcome=float(hd[0]),
        hd_decision="upper" if up[0] else "lower",
        displacement_used=used,
        clicked=bool(clicked[0]),
        decision=int(decision[0]),
    )


def iter_trial_batches(
    n: int,
    alpha: float,
    split: SplitRatio,
    geometry,
    imperfections: ImperfectionModel,
    rng: RngContract,
    state_order=(1, 2, 3, 4),
    chunk: int = 1 << 20,
) -> Iterator[np.ndarray]:
    """Yield record arrays for ``ceil(n/4)`` shots of each true state."""
    if n < 1:
        raise ValueError("n must be >= 1")
    setting = _check_setting(geometry)
    per_state = -(-n // 4)
    for state in state_order:
        for start in range(0, per_state, chunk):
            m = min(chunk, per_state - start)
            u = rng.uniforms(state, start, m)
            states = np.full(m, state)
            hd, up, cmd, clicked, decision = _simulate(states, alpha, split, setting, imperfections, u)
            rec = np.empty(m, dtype=RECORD_DTYPE)
            rec["shot"] = np.arange(start, start + m, dtype=np.uint64)
            rec["true_state"] = state
            rec["hd_outcome"] = hd
            rec["hd_upper"] = up
            rec["cmd_upper"] = cmd
            rec["gamma2"] = setting.gamma2
            rec["phi"] = np.where(cmd, setting.phi, setting.phi + math.pi)
            rec["clicked"] = clicked
            rec["decision"] = decision
            yield rec


def confusion_from_records(batches) -> ConfusionMatrix:
    counts = np.zeros((4, 4), dtype=np.int64)
    for rec in batches:
        np.add.at(counts, (rec["decision"].astype(int) - 1, rec["true_state"].astype(int) - 1), 1)
    return ConfusionMatrix.from_counts(counts)


def run_trials(
    n: int,
    alpha: float,
    split: SplitRatio,
    geometry,
    imperfections: ImperfectionModel,
    rng: RngContract,
    state_order=(1, 2, 3, 4),
    chunk: int = 1 << 20,
) -> ConfusionMatrix:
    """Empirical confusion matrix from ``ceil(n/4)`` live-feed-forward shots per state."""
    if n < 1:
        raise ValueError("n must be >= 1")
    setting = _check_setting(geometry)
    per_state = -(-n // 4)
    counts = np.zeros((4, 4), dtype=np.int64)
    for state in state_order:
        for start in range(0, per_state, chunk):
            m = min(chunk, per_state - start)
            u = rng.uniforms(state, start, m)
            decision = _simulate(np.full(m, state), alpha, split, setting, imperfections, u)[-1]
            counts[:, state - 1] += np.bincount(decision - 1, minlength=4)
    return ConfusionMatrix.from_counts(counts)


def simulate_heterodyne(n: int, alpha: float, rng: RngContract, chunk: int = 1 << 20) -> ConfusionMatrix:
    """Ideal heterodyne detection: sample the Husimi distribution, decide by quadrant."""
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha = float(alpha)
    states = qpsk_states(alpha).states
    per_state = -(-n // 4)
    counts = np.zeros((4, 4), dtype=np.int64)
    std = math.sqrt(0.5)
    for label in (1, 2, 3, 4):
        for start in range(0, per_state, chunk):
            m = min(chunk, per_state - start)
            u = rng.uniforms(label, start, m)
            x = states[label - 1].real + std * ndtri(u[:, 0])
            y = states[label - 1].imag + std * ndtri(u[:, 1])
            right, top = x >= 0, y >= 0
            decision = np.where(top, np.where(right, 1, 2), np.where(right, 4, 3))
            counts[:, label - 1] += np.bincount(decision - 1, minlength=4)
    return ConfusionMatrix.from_counts(counts)
