"""Experiment harness: empirical sample-complexity estimation and reports.

Budgets are probed with seeded trial batches (sample, learn, exact robust
risk against the generating distribution); a budget passes when the Wilson
95% lower confidence bound of its success rate reaches the confidence
target.  Minimal budgets come from doubling followed by bisection.  Every
reported number is reproducible from (config, seed): trial seeds derive
from the experiment seed and the budget coordinates, independent of
scheduling, and the CSV embeds the config.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from . import constructions
from .compress import BoostingFailureError, WeakLearnerBudgetError
from .core import (
    Distribution,
    PACParams,
    ProblemInstance,
    RealizabilityError,
    load_instance,
    robust_risk,
    sample,
    sample_marginal,
)
from .partial import partial_realizable_learn, to_partial
from .robust import (
    grass,
    learn_known_support,
    robust_agnostic_learn,
    robust_realizable_learn,
)

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "BudgetResult",
    "EmpiricalComplexity",
    "AgnosticReport",
    "enumerate_eta",
    "run_budget",
    "estimate_complexity",
    "separation_experiment",
    "agnostic_multiplier_experiment",
    "random_labeling_risk",
    "write_csv",
    "wilson_interval",
]

CSV_COLUMNS = (
    "family,n,learner,m_l,m_u,trials,successes,ci_low,ci_high,median_risk,seed"
)


def enumerate_eta(instance: ProblemInstance) -> float:
    """Optimal in-class robust risk, by exhaustive row enumeration."""
    if instance.distribution is None:
        raise ValueError("instance carries no distribution")
    best = 1.0
    for r in range(instance.hypotheses.n_rows):
        best = min(
            best,
            robust_risk(instance.hypotheses.labels[r], instance.perturbation, instance.distribution),
        )
    return best


def _learn_grass(instance, s_l, s_u, params, seed, hints):
    return grass(
        instance.hypotheses,
        instance.perturbation,
        s_l,
        s_u,
        params,
        seed,
        vc_hint=hints.get("vc_hint"),
        k_target=hints.get("k_target"),
    ).outputs


def _learn_supervised(instance, s_l, s_u, params, seed, hints):
    pred, _ = robust_realizable_learn(
        instance.hypotheses,
        instance.perturbation,
        s_l,
        params,
        seed,
        vc_hint=hints.get("vc_hint"),
        k_target=hints.get("k_target"),
    )
    return pred.outputs


def _learn_supervised_agnostic(instance, s_l, s_u, params, seed, hints):
    pred, _ = robust_agnostic_learn(
        instance.hypotheses,
        instance.perturbation,
        s_l,
        params,
        seed,
        vc_hint=hints.get("vc_hint"),
        k_target=hints.get("k_target"),
    )
    return pred.outputs


def _learn_known_support(instance, s_l, s_u, params, seed, hints):
    support = hints.get("support")
    if support is None:
        support = instance.distribution.support_x()
    return learn_known_support(
        instance.hypotheses, instance.perturbation, support, s_l
    ).outputs


def _learn_partial_realizable(instance, s_l, s_u, params, seed, hints):
    table = to_partial(instance.hypotheses, instance.perturbation)
    pred, _ = partial_realizable_learn(table, s_l, params, seed)
    return pred.outputs


LEARNERS: dict[str, Callable] = {
    "grass": _learn_grass,
    "robust-supervised": _learn_supervised,
    "robust-supervised-agnostic": _learn_supervised_agnostic,
    "known-support": _learn_known_support,
    "partial-realizable": _learn_partial_realizable,
}

_LEARNER_ERRORS = (
    RealizabilityError,
    BoostingFailureError,
    WeakLearnerBudgetError,
    ValueError,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sample-complexity estimation run, fully determined with its seed."""

    instance: ProblemInstance
    learner: str
    params: PACParams
    trials: int
    seed: int
    axis: str = "m_l"  # which budget coordinate the search varies
    fixed_m_l: int = 0
    fixed_m_u: int = 0
    start: int = 1
    max_budget: int = 4096
    alpha: float = 1.0  # success threshold is alpha * eta + epsilon
    hints: dict = field(default_factory=dict)
    family: str = "custom"
    n: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")
        if self.axis not in ("m_l", "m_u"):
            raise ValueError(f"axis must be m_l or m_u, got {self.axis!r}")

    def describe(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "learner": self.learner,
            "epsilon": self.params.epsilon,
            "delta": self.params.delta,
            "alpha": self.alpha,
            "trials": self.trials,
            "seed": self.seed,
            "axis": self.axis,
            "fixed_m_l": self.fixed_m_l,
            "fixed_m_u": self.fixed_m_u,
            "start": self.start,
            "max_budget": self.max_budget,
        }


@dataclass(frozen=True)
class BudgetResult:
    m_l: int
    m_u: int
    trials: int
    successes: int
    errors: int
    ci_low: float
    ci_high: float
    median_risk: float

    def passes(self, delta: float) -> bool:
        return self.ci_low >= 1.0 - delta


@dataclass(frozen=True)
class EmpiricalComplexity:
    epsilon: float
    delta: float
    alpha: float
    eta: float
    axis: str
    budgets: tuple[BudgetResult, ...]
    minimal: int | None


@dataclass(frozen=True)
class AgnosticReport:
    eta: float
    threshold: float
    member_median_risk: tuple[float, ...]
    member_success_rate: tuple[float, ...]
    multiplier: float | None
    worst_member: int | None
    excluded: tuple[int, ...]
    notes: tuple[str, ...] = ()


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _episode(args) -> float | None:
    instance, learner, m_l, m_u, params, seed_key, hints = args
    rng = np.random.default_rng(np.random.SeedSequence(seed_key))
    draw = rng.spawn(3)
    s_l = sample(instance.distribution, m_l, draw[0])
    s_u = sample_marginal(instance.distribution, m_u, draw[1])
    try:
        outputs = LEARNERS[learner](instance, s_l, s_u, params, draw[2], hints)
    except _LEARNER_ERRORS:
        return None
    return robust_risk(outputs, instance.perturbation, instance.distribution)


def run_budget(
    config: ExperimentConfig,
    m_l: int,
    m_u: int,
    threshold: float,
) -> BudgetResult:
    """Run the configured number of seeded trials at one budget."""
    tasks = [
        (
            config.instance,
            config.learner,
            m_l,
            m_u,
            config.params,
            (config.seed, m_l, m_u, t),
            config.hints,
        )
        for t in range(config.trials)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            risks = list(pool.map(_episode, tasks, chunksize=8))
    else:
        risks = [_episode(t) for t in tasks]
    errors = sum(1 for r in risks if r is None)
    effective = [1.0 if r is None else r for r in risks]
    successes = sum(1 for r in risks if r is not None and r <= threshold + 1e-12)
    lo, hi = wilson_interval(successes, config.trials)
    return BudgetResult(
        m_l=m_l,
        m_u=m_u,
        trials=config.trials,
        successes=successes,
        errors=errors,
        ci_low=lo,
        ci_high=hi,
        median_risk=float(np.median(effective)),
    )


def estimate_complexity(config: ExperimentConfig) -> EmpiricalComplexity:
    """Minimal budget whose success-rate lower confidence bound reaches 1-delta.

    Doubles the varied budget from ``start`` until a budget passes, then
    bisects down to the smallest passing value on that axis.  Success rates
    are reported raw; monotonicity is not assumed.
    """
    eta = enumerate_eta(config.instance)
    threshold = config.alpha * eta + config.params.epsilon
    delta = config.params.delta

    def budget(value: int) -> tuple[int, int]:
        if config.axis == "m_l":
            return value, config.fixed_m_u
        return config.fixed_m_l, value

    results: list[BudgetResult] = []
    tested: dict[int, BudgetResult] = {}

    def probe(value: int) -> BudgetResult:
        if value not in tested:
            res = run_budget(config, *budget(value), threshold)
            tested[value] = res
            results.append(res)
        return tested[value]

    value = max(1, config.start)
    passing = None
    last_fail = 0
    while value <= config.max_budget:
        res = probe(value)
        if res.passes(delta):
            passing = value
            break
        last_fail = value
        value *= 2

    if passing is None:
        return EmpiricalComplexity(
            config.params.epsilon, delta, config.alpha, eta, config.axis, tuple(results), None
        )

    lo, hi = last_fail, passing
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if probe(mid).passes(delta):
            hi = mid
        else:
            lo = mid
    return EmpiricalComplexity(
        config.params.epsilon, delta, config.alpha, eta, config.axis, tuple(results), hi
    )


def _rows_from(config: ExperimentConfig, complexity: EmpiricalComplexity) -> list[dict]:
    rows = []
    for b in complexity.budgets:
        rows.append(
            {
                "family": config.family,
                "n": config.n,
                "learner": config.learner,
                "m_l": b.m_l,
                "m_u": b.m_u,
                "trials": b.trials,
                "successes": b.successes,
                "ci_low": b.ci_low,
                "ci_high": b.ci_high,
                "median_risk": b.median_risk,
                "seed": config.seed,
            }
        )
    return rows


def generous_unlabeled_budget(n: int, epsilon: float, factor: int = 50) -> int:
    """Deliberately overshooting unlabeled budget isolating labeled complexity."""
    return factor * n * math.ceil(1.0 / epsilon)


def separation_experiment(
    n_values: Sequence[int],
    params: PACParams,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
    generous_factor: int = 50,
    max_budget: int = 4096,
) -> dict:
    """Labeled-budget curves: supervised robust learner vs the two-stage one.

    For each block count n the supervised learner sees labels only, while
    the semi-supervised learner gets a generous unlabeled budget; both
    curves report the minimal labeled budget at the same accuracy target.
    """
    rows: list[dict] = []
    minimal: dict[tuple[int, str], int | None] = {}
    for n in n_values:
        instance, meta = constructions.gen_gap(n)
        hints = {
            "vc_hint": meta.expected_vc,
            "k_target": 8 * meta.expected_dual_vc,
        }
        for learner, m_u in (
            ("robust-supervised", 0),
            ("grass", generous_unlabeled_budget(n, params.epsilon, generous_factor)),
        ):
            config = ExperimentConfig(
                instance=instance,
                learner=learner,
                params=params,
                trials=trials,
                seed=seed,
                axis="m_l",
                fixed_m_u=m_u,
                max_budget=max_budget,
                hints=hints,
                family="gap",
                n=n,
                workers=workers,
            )
            complexity = estimate_complexity(config)
            rows.extend(_rows_from(config, complexity))
            minimal[(n, learner)] = complexity.minimal
    return {"rows": rows, "minimal": minimal}


def agnostic_multiplier_experiment(
    members: Sequence[tuple[ProblemInstance, "constructions.ConstructionMeta"]],
    params: PACParams,
    m_l: int,
    m_u: int,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
    alpha: float = 3.0,
) -> AgnosticReport:
    """Measure the achieved-risk distribution of the two-stage learner.

    Each member's optimal robust error is enumerated exactly; realizable
    members (eta = 0) are excluded with a note since the multiplier is
    undefined there.  The report carries the worst member's measured
    multiplier ``(median risk - epsilon) / eta``.
    """
    medians: list[float] = []
    success_rates: list[float] = []
    excluded: list[int] = []
    notes: list[str] = []
    etas: list[float] = []
    for idx, (instance, meta) in enumerate(members):
        eta = enumerate_eta(instance)
        if eta <= 0:
            excluded.append(idx)
            notes.append(f"member {idx} is realizable (eta=0); multiplier undefined")
            medians.append(0.0)
            success_rates.append(1.0)
            continue
        etas.append(eta)
        threshold = alpha * eta + params.epsilon
        config = ExperimentConfig(
            instance=instance,
            learner="grass",
            params=params,
            trials=trials,
            seed=seed,
            fixed_m_u=m_u,
            family=str(meta.family),
            n=idx,
            workers=workers,
        )
        res = run_budget(config, m_l, m_u, threshold)
        medians.append(res.median_risk)
        success_rates.append(res.successes / res.trials)
    if not etas:
        return AgnosticReport(0.0, params.epsilon, tuple(medians), tuple(success_rates), None, None, tuple(excluded), tuple(notes))
    eta = etas[0]
    mults = [
        ((medians[i] - params.epsilon) / eta, i)
        for i in range(len(members))
        if i not in excluded
    ]
    worst_mult, worst_idx = max(mults)
    return AgnosticReport(
        eta=eta,
        threshold=alpha * eta + params.epsilon,
        member_median_risk=tuple(medians),
        member_success_rate=tuple(success_rates),
        multiplier=worst_mult,
        worst_member=worst_idx,
        excluded=tuple(excluded),
        notes=tuple(notes),
    )


def random_labeling_risk(instance: ProblemInstance, trials: int, seed: int) -> float:
    """Mean exact robust risk of uniformly random total labelings.

    The label-blind baseline: with paired-noise distributions a random
    labeling is robustly correct on an atom only when the whole attack set
    happens to match, which is what separates it from the in-class optimum.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        outputs = rng.integers(0, 2, size=instance.space.size).astype(np.int8)
        total += robust_risk(outputs, instance.perturbation, instance.distribution)
    return total / trials


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(rows: Sequence[dict], path, config_doc: dict | None = None) -> None:
    """Write result rows with the reproducibility header embedded."""
    lines = []
    if config_doc is not None:
        lines.append("# config=" + json.dumps(config_doc, sort_keys=True))
    lines.append(CSV_COLUMNS)
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS.split(",")))
    Path(path).write_text("\n".join(lines) + "\n")
