"""Familywise error control by sequential rejection.

A procedure is a successor function on rejected sets; :func:`run` iterates
it to a fixed point. Critical-value schedules that are monotone and satisfy
a single-step error bound control the familywise error rate, and both
properties can be checked exhaustively for small families.
"""

from .adjusted import AdjustedReport, adjusted_pvalues, bisection_inverse
from .bonferroni import (
    ExtendedFamily,
    UserTable,
    bonferroni_combine,
    closed_testing,
    fisher_combine,
    gatekeeping_parallel,
    gatekeeping_serial,
    holm,
    hommel_p3,
    partitioning,
    shaffer_s2,
    sidak_stepdown,
    simes_combine,
)
from .core import (
    ProcedureTrace,
    Schedule,
    Step,
    Successor,
    Verdict,
    check_monotonicity,
    check_relaxed_monotonicity,
    check_single_step_bound,
    run,
    run_batch,
)
from .logic import (
    HypothesisUniverse,
    LogicalStructure,
    false_sets,
    improve_admissibility,
    max_true_count,
    pairwise_equality,
)
from .resampling import (
    MaxTProcedure,
    MaxTSchedule,
    PermutationEvidence,
    critical_value,
    permutation_evidence,
    quantile_index,
    sign_flip_group,
    stepdown_maxT,
    two_sample_permutation_group,
    user_group,
    verify_group,
)
from .simulation import (
    CounterexampleA,
    EquicorrelatedNormal,
    FwerEstimate,
    IndependentUniform,
    SignSymmetricNormal,
    counterexample_fwer,
    counterexample_procedure,
    estimate_fwer,
)
from .stepup import hochberg, shaffer_stepup, stepup_successor
from .tree import (
    HypothesisTree,
    tree_basic,
    tree_improved,
    tree_improved_II,
    tree_shaffer,
    tree_shaffer_improved,
)

__all__ = [
    "adjusted_pvalues",
    "AdjustedReport",
    "bisection_inverse",
    "bonferroni_combine",
    "check_monotonicity",
    "check_relaxed_monotonicity",
    "check_single_step_bound",
    "closed_testing",
    "counterexample_fwer",
    "counterexample_procedure",
    "CounterexampleA",
    "critical_value",
    "EquicorrelatedNormal",
    "estimate_fwer",
    "ExtendedFamily",
    "false_sets",
    "fisher_combine",
    "FwerEstimate",
    "gatekeeping_parallel",
    "gatekeeping_serial",
    "hochberg",
    "holm",
    "hommel_p3",
    "HypothesisTree",
    "HypothesisUniverse",
    "improve_admissibility",
    "IndependentUniform",
    "LogicalStructure",
    "max_true_count",
    "MaxTProcedure",
    "MaxTSchedule",
    "pairwise_equality",
    "partitioning",
    "permutation_evidence",
    "PermutationEvidence",
    "ProcedureTrace",
    "quantile_index",
    "run",
    "run_batch",
    "Schedule",
    "shaffer_s2",
    "shaffer_stepup",
    "sidak_stepdown",
    "sign_flip_group",
    "SignSymmetricNormal",
    "simes_combine",
    "Step",
    "stepdown_maxT",
    "stepup_successor",
    "Successor",
    "tree_basic",
    "tree_improved",
    "tree_improved_II",
    "tree_shaffer",
    "tree_shaffer_improved",
    "two_sample_permutation_group",
    "user_group",
    "UserTable",
    "Verdict",
    "verify_group",
]

__version__ = "0.1.0"
