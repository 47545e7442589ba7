"""Galton-Watson forests with batch births, their contours, and scaling limits."""

from .branching import (
    CapExceeded,
    Forest,
    Individual,
    PopulationPath,
    Tree,
    forest_from_jsonl,
    forest_to_jsonl,
    gillespie_population,
    mean_population,
    mean_rescaled,
    mean_square_source,
    population_path,
    quad_var_coefficient,
    rescale_path,
    second_moment_population,
    simulate_forest,
    simulate_tree,
)
from .core import (
    BranchingConstants,
    ModelParams,
    OffspringLaw,
    ScalingParams,
    derive_constants,
)
from .exploration import (
    EXCURSION_END,
    NEW_EVENT,
    SIBLING_REVISIT,
    ClockConvention,
    Excursion,
    HeightPath,
    contour_of_forest,
    contour_of_tree,
    crossing_pairs,
    descent_clock_at_events,
    effective_height_rates,
    exploration_params,
    explore_direct,
    height_clock,
    heightpath_from_extrema_csv,
    heightpath_from_vertex_csv,
    heightpath_to_extrema_csv,
    heightpath_to_vertex_csv,
    local_time,
    local_time_profile,
    occupation_check,
    paper_sde_clock,
    parametrize,
    tree_clock,
    tree_of_contour,
)
from .limits import (
    ExperimentReport,
    FellerSpec,
    ReflectedBMSpec,
    ReportRow,
    RescaledFamily,
    feller_euler_endpoint,
    feller_exact_sample,
    feller_limit,
    height_limit,
    h_convergence_experiment,
    poisson_property_report,
    rayknight_experiment,
    reflected_bm_sample,
    time_change_exponential_check,
    x_convergence_experiment,
)
from .poisson import last_point_before, poisson_points, splice
from .rng import RngStream
from .stats import (
    Chi2Result,
    KsResult,
    MomentSummary,
    SamplePool,
    chi2_gof,
    ks_critical_value,
    ks_two_sample,
    moments_with_se,
)

__version__ = "0.1.0"
