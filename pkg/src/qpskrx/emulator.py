"""Emulation of the probe-sequence measurement campaign.

A campaign steps the displacement magnitude every ``runs_per_displacement``
passes through the probe sequence.  The displacement side is commanded
independently of the homodyne result (a fair coin per shot); live
feed-forward is recovered afterwards by keeping only the shots where the
commanded side matches the homodyne decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .analytic import DisplacementSetting, SplitRatio, heterodyne_error, hybrid_error
from .reporting import SweepResult, SweepRow
from .simulator import RECORD_DTYPE, ImperfectionModel, RngContract, ShotRecord, _simulate_core

__all__ = [
    "ProbeSequence",
    "CampaignConfig",
    "CAMPAIGN_DTYPE",
    "generate_campaign",
    "iter_shot_records",
    "postselect_feedforward",
    "cell_error_model",
    "estimate_error_rates",
    "hd_k_extraction",
    "hd_od_extraction",
]

CAMPAIGN_DTYPE = np.dtype(
    RECORD_DTYPE.descr
    + [("step", np.uint16), ("block", np.uint16), ("amp", np.uint16), ("alpha2", np.float64)]
)

_UNIT_STATES = np.exp(1j * (np.arange(1, 5) - 0.5) * np.pi / 2)


@dataclass(frozen=True)
class ProbeSequence:
    """Calibration pulses followed by probe blocks of the full alphabet.

    Block ``b`` uses relative AO phase ``phase_offsets[b]``; each block
    contains every amplitude with all four states.  ``alpha2_values``
    overrides the default uniform photon-number grid.
    """

    n_amplitudes: int = 34
    alpha2_max: float = 1.8
    n_blocks: int = 9
    phase_max: float = math.pi / 4
    calibration_pulses: int = 16
    alpha2_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_blocks < 1 or self.calibration_pulses < 0:
            raise ValueError("need at least one probe block and a non-negative calibration count")
        a = self.amplitudes
        if a.size < 1 or np.any(a < 0) or np.any(np.diff(a) < 0):
            raise ValueError("probe amplitudes must be non-negative and non-decreasing")

    @property
    def amplitudes(self) -> np.ndarray:
        """Photon numbers ``|alpha|^2`` of the probe amplitudes."""
        if self.alpha2_values is not None:
            return np.asarray(self.alpha2_values, dtype=float)
        return np.linspace(0.0, self.alpha2_max, self.n_amplitudes)

    @property
    def phase_offsets(self) -> np.ndarray:
        if self.n_blocks == 1:
            return np.array([self.phase_max])
        return np.linspace(0.0, self.phase_max, self.n_blocks)

    @property
    def probe_length(self) -> int:
        return self.n_blocks * self.amplitudes.size * 4

    @property
    def length(self) -> int:
        return self.calibration_pulses + self.probe_length


@dataclass(frozen=True)
class CampaignConfig:
    runs_per_displacement: int = 4000
    displacement_steps: tuple[float, ...] = tuple(round(0.1 * k, 10) for k in range(13))
    uncertainty_alpha: float = 0.01
    uncertainty_gamma: float = 0.039
    repeat_fluctuation: float = 0.005
    split: float = 0.53
    min_shots: int = 100

    def __post_init__(self):
        if self.runs_per_displacement < 1:
            raise ValueError("runs_per_displacement must be >= 1")
        if min(self.uncertainty_alpha, self.uncertainty_gamma, self.repeat_fluctuation) < 0:
            raise ValueError("uncertainties must be non-negative")
        if any(g < 0 for g in self.displacement_steps):
            raise ValueError("displacement steps must be non-negative")
        SplitRatio(self.split)

    @property
    def split_ratio(self) -> SplitRatio:
        return SplitRatio(self.split)


def generate_campaign(
    seq: ProbeSequence,
    cfg: CampaignConfig,
    imperfections: ImperfectionModel,
    rng: RngContract,
    runs_per_batch: int = 256,
) -> Iterator[np.ndarray]:
    """Yield the probe shots in sequence order as ``CAMPAIGN_DTYPE`` batches.

    Shot indices count every pulse, calibration included; calibration
    pulses only occupy their slots and are not emitted.
    """
    if not cfg.displacement_steps:
        raise ValueError("campaign needs at least one displacement step")
    alpha2 = seq.amplitudes
    phases = seq.phase_offsets
    n_amp = alpha2.size
    split = cfg.split_ratio
    scale = math.sqrt(imperfections.eta_apd * split.t2 + imperfections.eta_hd * split.r2)
    split_eff = imperfections.effective(1.0, split)[1]

    p = np.arange(seq.probe_length)
    block = p // (4 * n_amp)
    amp_idx = (p // 4) % n_amp
    state = (p % 4 + 1).astype(np.uint8)
    amp = scale * np.sqrt(alpha2[amp_idx]) * _UNIT_STATES[state - 1]
    unit_gamma = np.exp(1j * phases[block])

    runs = cfg.runs_per_displacement
    for step, gamma2 in enumerate(cfg.displacement_steps):
        gamma = math.sqrt(gamma2) * unit_gamma
        for run0 in range(0, runs, runs_per_batch):
            nrun = min(runs_per_batch, runs - run0)
            first = (step * runs + run0) * seq.length
            u = rng.uniforms(0, first, nrun * seq.length).reshape(nrun, seq.length, 4)
            u = u[:, seq.calibration_pulses:, :].reshape(-1, 4)
            cmd = u[:, 2] < 0.5
            tile = lambda x: np.tile(x, nrun)  # noqa: E731
            hd, up, cmd, clicked, decision = _simulate_core(
                tile(amp), split_eff, tile(gamma), imperfections, u, cmd_upper=cmd
            )
            rec = np.empty(u.shape[0], dtype=CAMPAIGN_DTYPE)
            offsets = (np.arange(nrun)[:, None] * seq.length + seq.calibration_pulses + p).ravel()
            rec["shot"] = first + offsets
            rec["true_state"] = tile(state)
            rec["hd_outcome"] = hd
            rec["hd_upper"] = up
            rec["cmd_upper"] = cmd
            rec["gamma2"] = gamma2
            rec["phi"] = np.where(cmd, tile(phases[block]), tile(phases[block]) + math.pi)
            rec["clicked"] = clicked
            rec["decision"] = decision
            rec["step"] = step
            rec["block"] = tile(block)
            rec["amp"] = tile(amp_idx)
            rec["alpha2"] = tile(alpha2[amp_idx])
            yield rec


def iter_shot_records(batches: Iterable[np.ndarray]) -> Iterator[ShotRecord]:
    """Expand record batches into :class:`ShotRecord` objects (small runs only)."""
    for batch in batches:
        for r in batch:
            yield ShotRecord(
                true_state=int(r["true_state"]),
                hd_outcome=float(r["hd_outcome"]),
                hd_decision="upper" if r["hd_upper"] else "lower",
                displacement_used=DisplacementSetting(float(r["gamma2"]), float(r["phi"])),
                clicked=bool(r["clicked"]),
                decision=int(r["decision"]),
            )


def postselect_feedforward(batches: Iterable[np.ndarray]) -> Iterator[np.ndarray]:
    """Keep the shots whose commanded displacement side matches the homodyne decision."""
    for batch in batches:
        yield batch[batch["hd_upper"] == batch["cmd_upper"]]


def cell_error_model(alpha: float, gamma: float, phi: float, split: SplitRatio, imperfections: ImperfectionModel) -> float:
    """Live-feed-forward error of one campaign cell (amplitudes, not photon numbers)."""
    alpha_eff, split_eff = imperfections.effective(alpha, split)
    return hybrid_error(
        alpha_eff,
        split_eff,
        DisplacementSetting(gamma * gamma, phi),
        imperfections.effective_dark_prob,
        imperfections.pc_attenuation(gamma * gamma),
    )


def _slope(f, x, h=1e-5):
    if x >= h:
        return (f(x + h) - f(x - h)) / (2 * h)
    return (f(x + h) - f(x)) / h


def estimate_error_rates(
    batches: Iterable[np.ndarray],
    seq: ProbeSequence,
    cfg: CampaignConfig,
    imperfections: ImperfectionModel,
) -> SweepResult:
    """Per-cell error rates with propagated uncertainties.

    A cell is one (amplitude, phase block, displacement step).  The error
    bar is the quadrature sum of the amplitude and displacement calibration
    terms (slopes of :func:`cell_error_model`), the repeat fluctuation and
    the binomial standard error.  Cells with no shots are flagged
    ``"empty"``, cells under ``cfg.min_shots`` ``"low-stat"``.
    """
    alpha2 = seq.amplitudes
    phases = seq.phase_offsets
    steps = np.asarray(cfg.displacement_steps, dtype=float)
    shape = (alpha2.size, phases.size, steps.size)
    size = int(np.prod(shape))
    n = np.zeros(size, dtype=np.int64)
    wrong = np.zeros(size, dtype=np.int64)
    for batch in batches:
        idx = np.ravel_multi_index(
            (batch["amp"].astype(np.int64), batch["block"].astype(np.int64), batch["step"].astype(np.int64)),
            shape,
        )
        n += np.bincount(idx, minlength=size)
        wrong += np.bincount(idx, weights=batch["decision"] != batch["true_state"], minlength=size).astype(np.int64)

    split = cfg.split_ratio
    result = SweepResult(meta={"kind": "emulated-cells"})
    for flat in range(size):
        i, b, s = np.unravel_index(flat, shape)
        alpha, gamma, phi = math.sqrt(alpha2[i]), math.sqrt(steps[s]), float(phases[b])
        count = int(n[flat])
        if count == 0:
            err = binom = math.nan
            flag = "empty"
        else:
            err = wrong[flat] / count
            binom = err * (1 - err) / count
            flag = "low-stat" if count < cfg.min_shots else ""
        d_alpha = _slope(lambda x: cell_error_model(x, gamma, phi, split, imperfections), alpha)
        d_gamma = _slope(lambda x: cell_error_model(alpha, x, phi, split, imperfections), gamma)
        sigma = math.sqrt(
            (d_alpha * cfg.uncertainty_alpha) ** 2
            + (d_gamma * cfg.uncertainty_gamma) ** 2
            + cfg.repeat_fluctuation**2
            + binom
        )
        result.append(
            SweepRow(
                alpha2=float(alpha2[i]),
                receiver="hybrid",
                err=err,
                t2=split.t2,
                gamma2=float(steps[s]),
                phi=phi,
                err_lo=err - sigma,
                err_hi=err + sigma,
                source="emulated",
                n=count,
                flag=flag,
            )
        )
    return result


def _by_amplitude(cells: SweepResult):
    groups: dict[float, list[SweepRow]] = {}
    for row in cells:
        if row.flag != "empty":
            groups.setdefault(row.alpha2, []).append(row)
    return groups


def hd_k_extraction(cells: SweepResult, imperfections: ImperfectionModel | None = None) -> SweepResult:
    """Per amplitude, the cell whose displaced state-1 power ``|t alpha_1 - gamma|^2`` is smallest."""
    imperfections = imperfections or ImperfectionModel()
    out = SweepResult(meta={"kind": "extraction", "receiver": "HD-K"})
    for alpha2, rows in _by_amplitude(cells).items():
        def residual(r):
            alpha_eff, split_eff = imperfections.effective(math.sqrt(alpha2), SplitRatio(r.t2))
            target = split_eff.t * alpha_eff * _UNIT_STATES[0]
            return abs(target - math.sqrt(r.gamma2) * complex(math.cos(r.phi), math.sin(r.phi))) ** 2
        best = min(rows, key=residual)
        out.append(_relabel(best, "HD-K"))
    return out


def hd_od_extraction(cells: SweepResult) -> SweepResult:
    """Per amplitude, the cell with the lowest measured error over all displacements and phases."""
    out = SweepResult(meta={"kind": "extraction", "receiver": "HD-OD"})
    for rows in _by_amplitude(cells).values():
        out.append(_relabel(min(rows, key=lambda r: r.err), "HD-OD"))
    return out


def _relabel(row: SweepRow, receiver: str) -> SweepRow:
    rel = row.err / heterodyne_error(math.sqrt(row.alpha2))
    return SweepRow(**{**row.__dict__, "receiver": receiver, "rel_het": rel})
