"""Numerical laboratory for generalized interval exchange transformations."""

__version__ = "0.1.0"

from .combinatorics import (
    CombinatorialDatum,
    SingularityStructure,
    singularity_structure,
    validate_combinatorics,
)
from .errors import (
    AtSingularity,
    BudgetExceeded,
    ConfigError,
    DegenerateSeries,
    DepthBudget,
    FloorBudgetExceeded,
    GietLabError,
    NotADiffeo,
    NotAPermutation,
    NotSameFloor,
    NumericalConnection,
    OnBoundary,
    OrbitHitsSingularity,
    PartitionMismatch,
    PositivityTimeout,
    RangeError,
    Reducible,
    RunLimitExceeded,
    ScaleNotFound,
    WindowExhausted,
)
from .birkhoff import (
    BrokenSumSpec,
    GeometricDecomposition,
    LogSlopeObservable,
    Observable,
    SpecialSumTable,
    birkhoff_sum,
    broken_sum,
    broken_sup_estimate,
    geometric_decomposition,
    log_slope_observable,
    special_sums,
)
from .diophantine import (
    GrowthFit,
    TpgReport,
    growth_fit,
    submultiplicativity_check,
    tpg_probe,
)
from .giet import (
    GIET,
    StandardIET,
    apply,
    boundary,
    c2_distance,
    c2_distance_to_iets,
    conjugate_by_diffeo,
    nonlinearity,
    total_nonlinearity,
)
from .induction import (
    InductionChain,
    InductionRecord,
    IncidenceMatrix,
    chain_for,
    cocycle_product,
    heights,
    keane_probe,
    positive_accel_step,
    renormalized_map,
    rv_step,
    zorich_step,
)
from .maps import (
    Affine,
    Chain,
    CubicPerturbation,
    InverseOf,
    SinePerturbation,
    compose,
    identity_map,
    map_from_descriptor,
)
from .precision import DEFAULT_PRECISION, tau, workprec
from .regularity import (
    ApproximationCertificate,
    RegularityReport,
    holder_fit,
    numeric_conjugacy,
    one_floor_subpairs,
    orbit_of_zero,
    orbit_variation_bound,
    phi_estimates,
    single_orbit_approximation,
    verify_certificate,
)
from .scenarios import (
    ScenarioConfig,
    build_input,
    config_from_dict,
    continued_fraction_quotients,
    load_config,
    run_scenario,
)
from .serialize import (
    giet_from_dict,
    giet_from_json,
    giet_to_dict,
    giet_to_json,
    induction_log_lines,
)
from .towers import (
    DynamicalPartition,
    FloorAddress,
    ScaleResult,
    build_partition,
    locate,
    locate_halfopen,
    mesh,
    scale_of_pair,
)
