"""QPSK hybrid receivers: homodyne pre-selection followed by photon counting."""

__version__ = "0.1.0"

from .analytic import (
    ConfusionMatrix,
    DisplacementSetting,
    OdGeometry,
    Receiver,
    SplitRatio,
    ber_from_confusion,
    hd_k_error,
    hd_od_error,
    hd_stage_error,
    helstrom_asymptotic,
    helstrom_qpsk,
    heterodyne_error,
    hybrid_confusion,
    hybrid_error,
    od_stage_error,
    srm_error_circulant,
)
from .config import ConfigError, RunConfig, load_config
from .core import QpskAlphabet, click_probability, coherent_overlap, p_quadrature_negative_prob, qpsk_states
from .emulator import CampaignConfig, ProbeSequence, estimate_error_rates, generate_campaign
from .estimators import HelstromBound, HeterodyneReceiver, HybridReceiver, check_alpha2
from .optimizer import (
    OptimizerSettings,
    SolverError,
    displacement_params,
    effective_splitting,
    kennedy_geometry,
    od_geometry,
    optimize_transmittance,
    physical_splitting,
    solve_beta,
)
from .reporting import FORMAT_VERSION, SweepResult, SweepRow
from .simulator import ImperfectionModel, RngContract, ShotRecord, run_trials, simulate_shot
from .sweeps import displacement_sweep, displacement_table, error_rate_sweep, parameter_table
