"""Plot-ready datasets: error-rate sweeps and optimal-parameter tables."""

from __future__ import annotations

import math

import numpy as np

from .analytic import (
    DisplacementSetting,
    Receiver,
    SplitRatio,
    heterodyne_error,
    helstrom_asymptotic,
    helstrom_qpsk,
    hybrid_error,
    od_stage_error,
)
from .core import SQRT2
from .optimizer import (
    OptimizerSettings,
    SolverError,
    displacement_params,
    kennedy_geometry,
    od_geometry,
    optimize_transmittance,
    solve_beta,
)
from .reporting import SweepResult, SweepRow
from .simulator import ImperfectionModel, RngContract, run_trials, simulate_heterodyne

HYBRID = (Receiver.HD_K, Receiver.HD_OD)
_STREAM = {Receiver.HD_K: 1, Receiver.HD_OD: 2, Receiver.HETERODYNE: 3}


def receiver_setup(alpha: float, receiver, split="optimize", settings: OptimizerSettings | None = None):
    """Split and displacement for a hybrid receiver at amplitude ``alpha``.

    Returns ``(split, setting, beta)``.  With ``split="optimize"`` the
    transmittance minimising the ideal error is used (0.5 at ``alpha = 0``,
    where every split is equivalent).
    """
    receiver = Receiver(receiver)
    if split == "optimize":
        t2 = optimize_transmittance(alpha, receiver, settings)[0] if alpha > 0 else 0.5
        split = SplitRatio(t2)
    elif not isinstance(split, SplitRatio):
        split = SplitRatio(float(split))
    if receiver == Receiver.HD_K:
        return split, kennedy_geometry(alpha, split), split.t * alpha / SQRT2
    geom = od_geometry(alpha, split, settings)
    return split, geom.setting, geom.beta


def _model_error(alpha, split, setting, imperfections):
    alpha_eff, split_eff = imperfections.effective(alpha, split)
    return hybrid_error(
        alpha_eff,
        split_eff,
        setting,
        imperfections.effective_dark_prob,
        imperfections.pc_attenuation(setting.gamma2),
    )


def _is_ideal(imp: ImperfectionModel) -> bool:
    return (
        imp.effective_dark_prob == 0
        and imp.eta_hd == 1
        and imp.eta_apd == 1
        and math.isinf(imp.ao_photons)
    )


def error_rate_sweep(
    alpha2_grid,
    receivers=("HD-K", "HD-OD", "heterodyne", "helstrom"),
    split="optimize",
    imperfections: ImperfectionModel | None = None,
    shots: int = 0,
    seed: int = 0,
    settings: OptimizerSettings | None = None,
) -> SweepResult:
    """Error rates against photon number, normalised to heterodyne in ``rel_het``.

    Ideal analytic rows always; ``analytic-dark`` rows when the imperfection
    model is not ideal; ``mc`` rows (with the imperfection model) when
    ``shots > 0``.
    """
    imperfections = imperfections or ImperfectionModel()
    receivers = [Receiver(r) for r in receivers]
    out = SweepResult(meta={"kind": "error-rate-sweep"})
    for i, alpha2 in enumerate(np.asarray(alpha2_grid, dtype=float)):
        if alpha2 < 0:
            raise ValueError(f"photon numbers must be non-negative, got {alpha2}")
        alpha = math.sqrt(alpha2)
        het = heterodyne_error(alpha)
        for rx in receivers:
            if rx in HYBRID:
                out.extend(_hybrid_rows(i, alpha, rx, split, imperfections, shots, seed, settings, het))
            elif rx == Receiver.HETERODYNE:
                out.append(SweepRow(alpha2, rx.value, het, rel_het=1.0))
                if shots > 0:
                    cm = simulate_heterodyne(shots, alpha, RngContract(seed, 16 * i + _STREAM[rx]))
                    out.append(_mc_row(alpha2, rx.value, cm, het))
            else:
                exact = helstrom_qpsk(alpha)
                out.append(SweepRow(alpha2, rx.value, exact, rel_het=exact / het))
                asym = helstrom_asymptotic(alpha)
                out.append(SweepRow(alpha2, "helstrom-asymptotic", asym, rel_het=asym / het))
    return out


def _mc_row(alpha2, name, cm, het, **kw):
    err, std = cm.error_rate, cm.error_std()
    return SweepRow(
        alpha2, name, err, err_lo=err - std, err_hi=err + std, source="mc",
        rel_het=err / het, n=int(cm.shots.sum()), **kw,
    )


def _hybrid_rows(i, alpha, rx, split, imperfections, shots, seed, settings, het):
    alpha2 = alpha * alpha
    try:
        sp, setting, beta = receiver_setup(alpha, rx, split, settings)
    except SolverError:
        return [SweepRow(alpha2, rx.value, math.nan, source="analytic", flag="solver-failure")]
    params = dict(t2=sp.t2, beta=beta, gamma2=setting.gamma2, phi=setting.phi)
    err = hybrid_error(alpha, sp, setting)
    rows = [SweepRow(alpha2, rx.value, err, rel_het=err / het, **params)]
    if not _is_ideal(imperfections):
        dark = _model_error(alpha, sp, setting, imperfections)
        rows.append(SweepRow(alpha2, rx.value, dark, source="analytic-dark", rel_het=dark / het, **params))
    if shots > 0:
        cm = run_trials(shots, alpha, sp, setting, imperfections, RngContract(seed, 16 * i + _STREAM[rx]))
        rows.append(_mc_row(alpha2, rx.value, cm, het, **params))
    return rows


def parameter_table(alpha2_grid, settings: OptimizerSettings | None = None) -> SweepResult:
    """Optimal transmittance and displacement per photon number for both hybrids."""
    out = SweepResult(meta={"kind": "optimal-parameters"})
    for alpha2 in np.asarray(alpha2_grid, dtype=float):
        alpha = math.sqrt(alpha2)
        het = heterodyne_error(alpha)
        for rx in HYBRID:
            try:
                sp, setting, beta = receiver_setup(alpha, rx, "optimize", settings)
            except SolverError:
                out.append(SweepRow(alpha2, rx.value, math.nan, source="optimized", flag="solver-failure"))
                continue
            err = hybrid_error(alpha, sp, setting)
            out.append(
                SweepRow(
                    alpha2, rx.value, err, t2=sp.t2, beta=beta, gamma2=setting.gamma2,
                    phi=setting.phi, source="optimized", rel_het=err / het,
                )
            )
    return out


def displacement_table(t_alpha2_grid, settings: OptimizerSettings | None = None) -> SweepResult:
    """Photon-counting stage alone, against transmitted photon number ``|t alpha|^2``.

    ``alpha2`` holds ``|t alpha|^2`` and ``t2`` is 1; ``err`` is the binary
    stage error.
    """
    out = SweepResult(meta={"kind": "stage-displacement"})
    for ta2 in np.asarray(t_alpha2_grid, dtype=float):
        t_alpha = math.sqrt(ta2)
        a = t_alpha / SQRT2
        out.append(
            SweepRow(ta2, "K", od_stage_error(a, a), t2=1.0, beta=a, gamma2=ta2, phi=math.pi / 4,
                     source="optimized-stage")
        )
        try:
            geom = displacement_params(t_alpha, solve_beta(a, settings))
        except SolverError:
            out.append(SweepRow(ta2, "OD", math.nan, t2=1.0, source="optimized-stage", flag="solver-failure"))
            continue
        out.append(
            SweepRow(ta2, "OD", od_stage_error(a, geom.beta), t2=1.0, beta=geom.beta,
                     gamma2=geom.gamma2, phi=geom.phi, source="optimized-stage")
        )
    return out


def displacement_sweep(
    alpha2: float = 0.97,
    t2: float = 0.53,
    gamma2_grid=None,
    imperfections: ImperfectionModel | None = None,
    settings: OptimizerSettings | None = None,
) -> SweepResult:
    """Hybrid error against displacement power at fixed amplitude and split.

    ``HD-K`` rows keep ``phi = pi/4``; ``HD-OD`` rows keep the optimal
    phase for this amplitude and split.  A heterodyne reference row is
    appended.
    """
    imperfections = imperfections or ImperfectionModel()
    gamma2_grid = np.linspace(0.0, 2.0, 201) if gamma2_grid is None else np.asarray(gamma2_grid, float)
    alpha = math.sqrt(alpha2)
    split = SplitRatio(t2)
    phi_opt = od_geometry(alpha, split, settings).phi
    het = heterodyne_error(alpha)
    ideal = _is_ideal(imperfections)
    out = SweepResult(meta={"kind": "displacement-sweep", "phi_opt": phi_opt})
    for name, phi in (("HD-K", math.pi / 4), ("HD-OD", phi_opt)):
        for g2 in gamma2_grid:
            setting = DisplacementSetting(float(g2), phi)
            err = hybrid_error(alpha, split, setting)
            out.append(SweepRow(alpha2, name, err, t2=t2, gamma2=float(g2), phi=phi, rel_het=err / het))
            if not ideal:
                dark = _model_error(alpha, split, setting, imperfections)
                out.append(SweepRow(alpha2, name, dark, t2=t2, gamma2=float(g2), phi=phi,
                                    source="analytic-dark", rel_het=dark / het))
    out.append(SweepRow(alpha2, "heterodyne", het, rel_het=1.0))
    return out
