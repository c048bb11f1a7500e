"""Near-field DOA and range estimation for a ULA with unknown direction-dependent mutual coupling."""

from .array_model import (
    ArrayConfig,
    FresnelRegionError,
    SourcePosition,
    coupling_matrix,
    element_distance,
    exact_steering,
    farfield_steering,
    fresnel_steering,
    selection_matrices,
    transform_matrix,
)
from .estimators import (
    EstimateRecord,
    PeakSearchError,
    SearchGrid,
    algorithm1,
    algorithm2,
    find_peaks,
    initial_doa,
    music_known_coupling,
    music_spectrum_known_coupling,
    rank_reduced_spectrum,
    rank_reduced_value,
)
from .harness import ExperimentConfig, McResultRow, load_config, rmse, run_monte_carlo, run_timing
from .signal_sim import SimulationConfig, SourceTruth, generate_coupling, simulate_snapshots
from .subspace import SubspaceDecomposition, noise_subspace, sample_covariance

__version__ = "0.1.0"
