"""Stochastic differential equation simulation and filtering toolkit."""

from sdefl.core import (
    DegeneracyError,
    DegenerateSystemError,
    DomainError,
    InitError,
    Path,
    RandomSource,
    ScenarioError,
    ShapeError,
    normal_cdf,
    normal_pdf,
    rmse,
    standard_normals,
)
from sdefl.experiments import (
    RunReport,
    Scenario,
    benchmark,
    emit_csv,
    emit_plot,
    list_scenarios,
    load_scenario,
    reproduce,
    run_scenario,
    run_table5_sweep,
)
from sdefl.kalman import (
    GaussianState,
    LinearStateSpace,
    NonlinearSystem,
    bates_ekf_system,
    ekf_log_likelihood,
    ekf_run,
    ekf_step,
    estimate_kalman,
    heston_ekf_system,
    kalman_run,
    kalman_step,
    log_returns,
    ou_state_space,
)
from sdefl.mle import (
    Bounds,
    EstimationReport,
    bk_density,
    estimate_mle,
    log_likelihood,
    ou_density,
    ou_jump_density,
)
from sdefl.models import (
    BatesParams,
    BkParams,
    HestonParams,
    JumpParams,
    OuParams,
    simulate_bates,
    simulate_bk,
    simulate_heston,
    simulate_ou,
    simulate_ou_jump,
)
from sdefl.particle import (
    ParticleCloud,
    ProposalDensities,
    WeightContext,
    bates_densities,
    effective_sample_size,
    heston_densities,
    init_cloud,
    particle_ekf_run,
    particle_run,
    propagate_and_weight,
    resample,
)

__version__ = "0.1.0"

__all__ = [
    "BatesParams",
    "BkParams",
    "Bounds",
    "DegeneracyError",
    "DegenerateSystemError",
    "DomainError",
    "EstimationReport",
    "GaussianState",
    "HestonParams",
    "InitError",
    "JumpParams",
    "LinearStateSpace",
    "NonlinearSystem",
    "OuParams",
    "ParticleCloud",
    "Path",
    "ProposalDensities",
    "RandomSource",
    "RunReport",
    "Scenario",
    "ScenarioError",
    "ShapeError",
    "WeightContext",
    "bates_densities",
    "bates_ekf_system",
    "benchmark",
    "bk_density",
    "effective_sample_size",
    "ekf_log_likelihood",
    "ekf_run",
    "ekf_step",
    "estimate_kalman",
    "estimate_mle",
    "heston_densities",
    "heston_ekf_system",
    "emit_csv",
    "emit_plot",
    "init_cloud",
    "kalman_run",
    "kalman_step",
    "list_scenarios",
    "load_scenario",
    "log_likelihood",
    "log_returns",
    "normal_cdf",
    "normal_pdf",
    "ou_density",
    "ou_jump_density",
    "ou_state_space",
    "particle_ekf_run",
    "particle_run",
    "propagate_and_weight",
    "reproduce",
    "resample",
    "rmse",
    "run_scenario",
    "run_table5_sweep",
    "simulate_bates",
    "simulate_bk",
    "simulate_heston",
    "simulate_ou",
    "simulate_ou_jump",
    "standard_normals",
    "__version__",
]
