"""Learning firmly nonexpansive operators as piecewise-affine maps on
simplicial partitions, with convergent Plug-and-Play denoising."""

from .errors import (
    DegenerateInput,
    EmptyInput,
    FneLearnError,
    NodeMismatch,
    NotNonexpansive,
    OutsideHull,
    ScaleExceeded,
    ShapeMismatch,
    SingularSystem,
    StepSizeViolation,
    UnsupportedDimension,
)
from .geometry import (
    BarycentricLocation,
    NodeSet,
    PartitionMetrics,
    SimplicialPartition,
    ValidationReport,
    bisect_longest_edge,
    delaunay_triangulate,
    locate,
    partition_metrics,
    project_hull,
    validate_partition,
)
from .operators import (
    FirmlyNonexpansiveOperator,
    LipschitzAudit,
    PiecewiseAffineOperator,
    check_fne,
    to_firmly_nonexpansive,
)
from .splitting import (
    IterationHistory,
    LinearHandle,
    PnPConfig,
    identity_linear_handle,
    moreau_check,
    pnp_cp,
    pnp_dr,
    pnp_fbs,
)
from .training import (
    AdmmConfig,
    ConvergenceLog,
    TrainingSet,
    admm_train,
    assemble_constraint_maps,
    empirical_risk,
    project_spectral_ball,
    solve_sololip,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
