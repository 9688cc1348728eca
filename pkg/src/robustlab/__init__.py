"""Finite-scale laboratory for semi-supervised adversarially robust learning.

The package is organized around explicit finite objects: instance spaces as
index ranges, perturbation maps as per-point attack sets, hypothesis
classes as boolean tables, and distributions as exact atom lists.  On top
of that substrate it provides exhaustive combinatorial dimensions
(``dims``), partial-concept conversion and one-inclusion-graph learners
(``partial``), boosting and compression (``compress``), the supervised and
semi-supervised robust learners (``robust``), generators for the
lower-bound families (``constructions``), and an experiment harness
(``bench``).
"""

from .bench import (
    AgnosticReport,
    EmpiricalComplexity,
    ExperimentConfig,
    agnostic_multiplier_experiment,
    enumerate_eta,
    estimate_complexity,
    separation_experiment,
)
from .compress import (
    BoostingFailureError,
    BoostState,
    CompressionScheme,
    WeakLearnerBudgetError,
    alpha_boost,
    bernstein_bound,
    graepel_bound,
    majority_outputs,
    sparsify,
)
from .constructions import (
    ConstructionMeta,
    gen_agnostic_sigma,
    gen_allfns_overlap,
    gen_gap,
    gen_improper,
    gen_three_halves,
    proper_rule_exhaustive,
)
from .core import (
    Distribution,
    HypothesisTable,
    InstanceSpace,
    PACParams,
    Perturbation,
    Predictor,
    ProblemInstance,
    RealizabilityError,
    SizeGuardError,
    empirical_risk,
    empirical_robust_risk,
    load_instance,
    restrict_consistent,
    risk,
    robust_loss,
    robust_risk,
    sample,
    sample_marginal,
    save_instance,
)
from .dims import DimensionReport, compute_report, dual_vc, partial_vc, rsu, vc, vcu
from .partial import (
    OneInclusionGraph,
    PartialTable,
    build_one_inclusion_graph,
    oig_predict,
    partial_agnostic_learn,
    partial_realizable_learn,
    to_partial,
)
from .robust import (
    bad_rerm,
    finite_subclass,
    grass,
    inflate,
    learn_01_robustly_realizable,
    learn_known_support,
    rerm,
    robust_agnostic_learn,
    robust_realizable_learn,
)

__version__ = "0.1.0"
