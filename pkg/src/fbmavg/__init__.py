"""Averaging for McKean-Vlasov SDEs driven by fractional Brownian motion."""

__version__ = "0.1.0"

from .fbm import (  # noqa: E402
    FbmBatch,
    TimeGrid,
    covariance,
    sample_cholesky,
    sample_circulant,
    sample_fbm,
    self_similar_rescale,
)
from .metrics import (  # noqa: E402
    EmpiricalMeasure,
    HolderNormTransformer,
    SamplePath,
    holder_norm,
    holder_seminorm,
    lambda_norm,
    second_moment,
    sup_norm,
    wasserstein2,
)
from .fractional import (  # noqa: E402
    ExponentTriple,
    beta_kernel_integral,
    beta_kernel_quadrature,
    rs_sum,
    weyl_left,
    weyl_right_adjusted,
    young_bound_check,
    zahle_integral,
)
from .solver import (  # noqa: E402
    DiffusionModel,
    DriftModel,
    ParticleSolver,
    ParticleTrajectories,
    ProbeSpec,
    SolverConfig,
    coupled_solve,
    drift_increment,
    solve_averaged,
    solve_oscillatory,
    validate_assumptions,
)
from .averaging import (  # noqa: E402
    AveragingStudy,
    convergence_study,
    khasminskii_block_diagnostic,
    l2_path_norm,
    numeric_average_drift,
    phi_estimate,
)
