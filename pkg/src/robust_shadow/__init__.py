"""Noise-robust classical shadow estimation with calibrated measurement channels."""

from .calibration import (
    CalibrationEstimate,
    InfeasiblePlanError,
    NonInvertibleChannelError,
    SamplePlan,
    build_inverse,
    calibrate,
    estimate_all_patterns,
    nearest_neighbor_patterns,
    noise_est_global,
    noise_est_local,
    patterns_up_to_weight,
    plan_samples,
)
from .channels import (
    NoiseSpec,
    StatePrepSpec,
    amplitude_damping,
    depolarizing,
    expected_f_global,
    expected_f_local,
    gamma_lambda,
    identity,
    measurement_bitflip,
    noise_from_config,
    x_rotation,
    xx_rotation,
    z_basis_fidelity,
)
from .clifford import (
    CliffordTableau,
    LocalCliffordWord,
    StabilizerState,
    conjugate_pauli,
    sample_global_clifford,
    sample_local_clifford,
)
from .device import DeviceConfig, SampleBatch, ShadowSample, run_calibration_round, run_estimation_round
from .estimation import EstimationResult, estimate, single_round_estimate, standard_shadow_inverse
from .observables import PauliSum, StabilizerProjector, ghz_projector, parse_observables, tfim_hamiltonian, zz_correlator
from .pauli import BitString, PauliString, PTMDiagonal, pauli_multiply, support_pattern, symplectic_product
from .stats import MoMConfig, bootstrap_std, median_of_means

__version__ = "0.1.0"
