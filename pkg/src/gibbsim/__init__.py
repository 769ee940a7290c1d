"""Estimators for Gibbs distributions given sample access at chosen temperatures.

Core model and oracles: :mod:`gibbsim.instance`, :mod:`gibbsim.oracle`.
Estimators: :mod:`gibbsim.ratio` (partition ratios at all temperatures),
:mod:`gibbsim.counts_continuous` and :mod:`gibbsim.counts_integer`
(density of states), :mod:`gibbsim.schedule` (covering schedules),
:mod:`gibbsim.search` (noisy temperature search).  Applications and
fixtures: :mod:`gibbsim.instances`.  Batch experiments: the ``gibbs``
command line, backed by :mod:`gibbsim.harness`.
"""

from .errors import DomainError, EnumerationLimitError, GibbsError, ScheduleRetryError
from .instance import (
    GibbsInstance,
    canonical_json,
    delta_argmax,
    delta_max,
    energy_variance,
    find_betamax,
    induced_mu,
    instance_from_json,
    instance_to_json,
    log_partition,
    log_ratio,
    mean_energy,
)
from .oracle import ExactOracle, OracleHandle, TVPerturbedOracle, exact_oracle, tv_perturbed_oracle
from .pitable import PiTable, pcount_violations
from .profiles import DESK, PAPER, ConstantsProfile, get_profile
from .ratio import RatioEstimator, ppe, pratio_all, query_ratio, tpa
from .sampling import (
    EmpiricalDistribution,
    ProductEstimates,
    calibrated_sample_size,
    estimate_pi,
    estimate_products,
    sample_empirical,
    well_estimates,
)
from .schedule import (
    BOT,
    CoveringSchedule,
    Segment,
    build_pre_schedule,
    find_covering_schedule,
    find_interval,
    inv_weight,
    minimalize,
    schedule_is_proper,
    segment_is_extremal,
    segment_is_proper,
    uncross_schedule,
    validate_pre_schedule,
)
from .search import LambdaWitness, binary_search, lambda_witness, noisy_binary_search, quantized_search
from .counts_continuous import PcoefTrace, pcoef_continuous
from .counts_integer import (
    UNKNOWN,
    ScheduleRatios,
    derive_ptcoef,
    pcoef_integer,
    pcoef_logconcave,
    pratio_all_integer,
    pratio_covering_schedule,
    pratio_points_dovetail,
)
from .instances import (
    Graph,
    InstanceFamily,
    MatchingChainOracle,
    complete_graph,
    connected_subgraphs_instance,
    count_connected_spanning_subgraphs,
    count_matchings,
    cycle_graph,
    graph_from_adjacency_json,
    graph_from_edge_list,
    js_matching_oracle,
    logconcave_harmonic_check,
    logconcave_poly_instance,
    lower_bound_family,
    matchings_instance,
    path_graph,
    petersen_graph,
    rescale_instance,
)

__version__ = "0.1.0"
