"""chamferlab: point-cloud distance metrics, weighted Chamfer objectives with
analytic gradients and weight schedules, and a desk-scale descent lab."""

__version__ = "0.1.0"

from .cloud import (
    NNIndex,
    PointCloud,
    TriangleMesh,
    build_index,
    nearest,
    nearest_hit_counts,
    subsample,
)
from .errors import (
    ChamferLabError,
    ConstructionError,
    DivergenceError,
    InvalidInputError,
    MidpointAmbiguityError,
    NumericalError,
)
from .metrics import (
    MetricReport,
    cd_global,
    cd_local,
    chamfer_l1,
    chamfer_l2,
    dcd,
    emd_approx,
    emd_exact,
    fidelity,
    fscore,
    hausdorff,
    point_to_mesh,
)
from .objective import (
    FcdWeights,
    ScheduleSpec,
    StageLossSpec,
    UncertaintyState,
    fcd,
    fcd_gradient,
    multi_stage_loss,
    schedule_weights,
    uncertainty_loss,
)
from .descent import (
    HierarchySpec,
    ObjectiveSpec,
    OptimizationTrace,
    OptimizerConfig,
    clustered_grid_benchmark,
    optimize,
    optimize_hierarchical,
    support_pinning,
)
from .analysis import (
    AmbiguityReport,
    SweepConfig,
    SweepRow,
    build_ambiguity_pair,
    closed_form_gradients,
    default_sweep_config,
    sweep,
)

__all__ = [
    "__version__",
    "PointCloud",
    "NNIndex",
    "TriangleMesh",
    "build_index",
    "nearest",
    "nearest_hit_counts",
    "subsample",
    "ChamferLabError",
    "InvalidInputError",
    "NumericalError",
    "DivergenceError",
    "MidpointAmbiguityError",
    "ConstructionError",
    "MetricReport",
    "cd_local",
    "cd_global",
    "chamfer_l1",
    "chamfer_l2",
    "dcd",
    "emd_exact",
    "emd_approx",
    "fscore",
    "hausdorff",
    "point_to_mesh",
    "fidelity",
    "FcdWeights",
    "ScheduleSpec",
    "UncertaintyState",
    "StageLossSpec",
    "fcd",
    "fcd_gradient",
    "schedule_weights",
    "uncertainty_loss",
    "multi_stage_loss",
    "OptimizerConfig",
    "ObjectiveSpec",
    "OptimizationTrace",
    "HierarchySpec",
    "optimize",
    "optimize_hierarchical",
    "support_pinning",
    "clustered_grid_benchmark",
    "SweepConfig",
    "SweepRow",
    "AmbiguityReport",
    "default_sweep_config",
    "closed_form_gradients",
    "sweep",
    "build_ambiguity_pair",
]
