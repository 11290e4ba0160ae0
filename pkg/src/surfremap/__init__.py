"""High-order, essentially non-oscillatory field transfer between surface meshes.

Nodal scalar fields are remapped between non-matching triangle/quad meshes
by superconvergent weighted-least-squares fitting in smooth regions and
data-dependent (non-oscillatory) fitting near automatically detected value
and slope discontinuities.
"""

from .detector import (
    DetectorCache,
    IndicatorField,
    MarkerSet,
    build_alpha_operator,
    compute_beta,
    compute_field_stats,
    compute_indicators,
    dual_threshold,
    transfer_markers,
)
from .errors import (
    ConfigError,
    DegenerateNormalError,
    DimensionMismatchError,
    ElementNotFoundError,
    InsufficientStencilError,
    MissingFieldContextError,
    NonFiniteError,
    NonPositiveError,
    NotOnSphereError,
    OpenMeshError,
    SingularMatrixError,
    SurfremapError,
)
from .fields import (
    F1,
    F2,
    F3,
    F4,
    AnalyticField,
    Constant,
    PolynomialUV,
    convergence_rate,
    error_norms,
    field_by_name,
    to_spherical,
)
from .mesh import (
    ElementLocation,
    MeshMetrics,
    SurfaceMesh,
    cubed_sphere_for_level,
    gen_cubed_sphere,
    gen_icosphere,
    gen_planar_grid,
    icosphere_for_level,
    k_ring,
    load_mesh,
    locate_element,
    mesh_metrics,
    save_mesh,
)
from .numerics import QrcpFactors, SparseOperator, cond_estimate_1norm, qrcp, solve_truncated, spmv
from .remap import (
    LinearPlan,
    RemapConfig,
    RemapPlan,
    RemapResult,
    build_plan,
    conservation_error,
    integrate_sphere,
    linear_interp_remap,
    load_plan,
    repeated_transfer,
    save_plan,
)
from .wls import (
    FieldContext,
    LocalFrame,
    Stencil,
    WeightScheme,
    build_frame,
    build_stencil,
    build_transfer_row,
    equilibrate,
    eval_weight,
    vandermonde,
)

__version__ = "0.1.0"
