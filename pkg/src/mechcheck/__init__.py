"""Exhaustive incentive-property checking for finite mechanism-design instances.

The library computes the replica-surrogate-matching transformation and
the VCG mechanism with exact rational arithmetic, and verifies their
incentive properties (truthfulness, distribution preservation, Bayesian
incentive compatibility) by complete enumeration over finite type
spaces, with a Monte Carlo fallback for instances too large to
enumerate.
"""

__version__ = "0.1.0"

from .core import (
    AgentType,
    Algorithm,
    BadSlotError,
    Constant,
    DeterministicTable,
    IncompleteAlgorithmError,
    Outcome,
    RandomizedTable,
    Rotated,
    Scenario,
    Valuation,
    WelfareMax,
    insert_at,
    remove_at,
    rotate_to_front,
    run_algorithm,
)
from .exactdist import EmptySupportError, ExactDist, dist_equal, product
from .vcg import (
    EmptyRangeError,
    MatchingResult,
    NonSquareError,
    VcgOutcome,
    is_permutation,
    matching_weight,
    solve_matching_brute,
    solve_matching_fast,
    vcg_general,
    vcg_matching,
)
from .rsm import (
    Coins,
    SurrogatePayment,
    expwts,
    my_util,
    others,
    rsmcoins,
    rsmdet,
    surrogate_transforms,
    util,
    weight_table,
)
from .checker import (
    BudgetExceededError,
    CheckConfig,
    CheckReport,
    MatchingGrid,
    SingleItemGrid,
    Witness,
    check_bic,
    check_dist_preservation,
    check_stage_chain,
    check_vcg_perm,
    check_vcg_truth,
    enumeration_size,
    estimate_utility,
    first_price_bic_control,
    random_rational_matrices,
    stage_distributions,
    util_first_price,
)
