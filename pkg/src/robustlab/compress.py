"""Multiplicative-weights boosting, sample compression, and bound evaluators.

``alpha_boost`` is the fixed-step variant of boosting that returns a plain
majority vote: each round a weak learner is trained against the current
weights, correctly handled points are down-weighted by ``exp(-alpha)``, and
the loop stops once the unweighted majority is perfect on the working
sample.  Voters paired with the small subsamples they were built from form
a sample compression scheme; ``sparsify`` thins the voter list by rejection
sampling while preserving the perfect majority.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import LabeledSample, Perturbation, Predictor, robust_loss, zero_one_loss

__all__ = [
    "BoostingFailureError",
    "WeakLearnerBudgetError",
    "BoostState",
    "CompressionScheme",
    "alpha_boost",
    "majority_outputs",
    "sparsify",
    "graepel_bound",
    "bernstein_bound",
    "zero_one_loss_fn",
    "robust_loss_fn",
]

WEIGHT_TOL = 1e-9


class BoostingFailureError(RuntimeError):
    """Boosting exhausted its round budget without a perfect majority.

    ``margins`` holds, for every working-sample point, the fraction of
    voters that handled it correctly when the budget ran out.
    """

    def __init__(self, message: str, margins: Sequence[float]):
        super().__init__(message)
        self.margins = tuple(margins)


class WeakLearnerBudgetError(RuntimeError):
    """The weak-learner retry/doubling policy exceeded its cap."""


def zero_one_loss_fn() -> Callable:
    return zero_one_loss


def robust_loss_fn(perturbation: Perturbation) -> Callable:
    def loss(h, x: int, y: int) -> int:
        return robust_loss(h, perturbation, x, y)

    return loss


@dataclass(frozen=True, eq=False)
class BoostState:
    """Final boosting state: normalized weights, round count, voters."""

    weights: np.ndarray
    rounds: int
    voters: tuple[Predictor, ...]
    voter_supports: tuple[LabeledSample, ...]

    def __post_init__(self) -> None:
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError("boosting weights must stay normalized")
        if len(self.voters) != self.rounds:
            raise ValueError("voter count must equal the round count")


def majority_outputs(voter_outputs: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted majority vote; the empty vote and exact ties label 0."""
    if len(voter_outputs) == 0:
        raise ValueError("majority over zero voters has no defined width here")
    stack = np.asarray(voter_outputs, dtype=np.int16)
    votes = stack.sum(axis=0)
    return (2 * votes > stack.shape[0]).astype(np.int8)


def _loss_vector(outputs: np.ndarray, working: LabeledSample, loss: Callable) -> np.ndarray:
    return np.array([loss(outputs, x, y) for x, y in working], dtype=np.int8)


def alpha_boost(
    weak: Callable,
    working: LabeledSample,
    loss: Callable,
    *,
    alpha: float = 1.0 / 3.0,
    t_cap: int | None = None,
    seed=None,
    stop: Callable | None = None,
) -> BoostState:
    """Boost ``weak`` on ``working`` until the majority vote is perfect.

    ``weak(weights, rng)`` must return ``(outputs, support)`` where
    ``outputs`` is a total labeling and ``support`` the labeled subsample it
    was built from; the weak-learner protocol itself is responsible for
    validating its weighted loss.  The default round budget is
    ``ceil(12 ln |working|)``, extended up to eight times that before the
    run fails with per-point margins attached.
    """
    if len(working) == 0:
        raise ValueError("boosting needs a non-empty working sample")
    rng = np.random.default_rng(seed)
    base_cap = t_cap if t_cap is not None else max(1, math.ceil(12 * math.log(len(working))))
    max_rounds = 8 * base_cap

    weights = np.full(len(working), 1.0 / len(working))
    voters: list[Predictor] = []
    supports: list[LabeledSample] = []
    outputs_list: list[np.ndarray] = []

    if stop is None:
        stop = lambda maj: not _loss_vector(maj, working, loss).any()

    for t in range(1, max_rounds + 1):
        outputs, support = weak(weights, rng)
        outputs = np.asarray(outputs, dtype=np.int8)
        outputs_list.append(outputs)
        voters.append(Predictor(outputs, {"round": t, "support": list(map(list, support))}))
        supports.append(tuple(support))

        correct = 1 - _loss_vector(outputs, working, loss)
        weights = weights * np.exp(-alpha * correct)
        weights = weights / weights.sum()

        maj = majority_outputs(outputs_list)
        if stop(maj):
            return BoostState(weights, t, tuple(voters), tuple(supports))

    per_point_correct = np.zeros(len(working))
    for outputs in outputs_list:
        per_point_correct += 1 - _loss_vector(outputs, working, loss)
    margins = per_point_correct / max(len(outputs_list), 1)
    raise BoostingFailureError(
        f"majority vote still imperfect after {max_rounds} rounds", margins
    )


def sparsify(
    state: BoostState,
    sample_points: LabeledSample,
    loss: Callable,
    k_target: int,
    seed=None,
    *,
    max_tries: int = 64,
) -> tuple[tuple[int, ...], bool]:
    """Thin the voter list to ``k_target`` voters keeping a perfect majority.

    Voters are sampled uniformly with replacement (boosting's implicit
    distribution is uniform over rounds); a draw is accepted once its
    majority has zero loss on ``sample_points``.  After ``max_tries``
    rejections the full voter set is returned with the fallback flag set.
    """
    if k_target < 1:
        raise ValueError(f"k_target must be positive, got {k_target}")
    n = len(state.voters)
    full = tuple(range(n))
    all_outputs = [v.outputs for v in state.voters]
    if _loss_vector(majority_outputs(all_outputs), sample_points, loss).any():
        raise ValueError("sparsify requires a perfect full-voter majority")
    if k_target >= n:
        return full, False
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        picked = tuple(int(i) for i in rng.integers(0, n, size=k_target))
        maj = majority_outputs([all_outputs[i] for i in picked])
        if not _loss_vector(maj, sample_points, loss).any():
            return picked, False
    return full, True


@dataclass(frozen=True, eq=False)
class CompressionScheme:
    """A compressor/reconstructor pair with per-voter support segments.

    ``compress`` returns the ordered concatenation of the voter supports
    (a labeled subset of the training sample); ``reconstruct`` splits a flat
    subset back into segments of the declared sizes and rebuilds the
    majority predictor.  The segment sizes are fixed at construction and are
    part of the reconstructor's definition.
    """

    supports: tuple[LabeledSample, ...]
    rebuild: Callable[[tuple[LabeledSample, ...]], Predictor]
    size_bound: int
    info: dict = field(default_factory=dict)

    @property
    def segment_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.supports)

    def flat(self) -> LabeledSample:
        return tuple(pt for seg in self.supports for pt in seg)

    def compress(self, sample_points: LabeledSample) -> LabeledSample:
        out = self.flat()
        pool = set(sample_points)
        for pt in out:
            if tuple(pt) not in pool:
                raise ValueError(f"compression point {pt} does not come from the sample")
        if len(out) > self.size_bound:
            raise ValueError(
                f"compression set of size {len(out)} exceeds declared bound {self.size_bound}"
            )
        return out

    def reconstruct(self, flat: LabeledSample) -> Predictor:
        segments = []
        pos = 0
        for size in self.segment_sizes:
            segments.append(tuple(flat[pos : pos + size]))
            pos += size
        if pos != len(flat):
            raise ValueError("flat compression set does not match the declared segments")
        return self.rebuild(tuple(segments))

    def round_trip(self, sample_points: LabeledSample) -> Predictor:
        return self.reconstruct(self.compress(sample_points))


def _bound_ingredients(kappa_size: int, m: int, delta: float) -> float:
    if not 0 < kappa_size <= m:
        raise ValueError(f"need 0 < compression size <= m, got {kappa_size} vs {m}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return (kappa_size * math.log(m) + math.log(1.0 / delta)) / m


def graepel_bound(kappa_size: int, m: int, delta: float) -> float:
    """Classic compression generalization bound, sqrt((l log m + log 1/d)/m).

    All constants are set to one; the value is indicative, for reporting and
    relative comparisons, not a certified bound.
    """
    return math.sqrt(_bound_ingredients(kappa_size, m, delta))


def bernstein_bound(kappa_size: int, m: int, delta: float, empirical_risk: float) -> float:
    """Empirical-Bernstein compression bound; linear in 1/m at zero risk.

    Evaluates sqrt(risk * (l log m + log 1/d) / m) + (l log m + log 1/d)/m
    with unit constants.  The vanishing first term at zero empirical risk is
    what turns the 1/sqrt(m) rate into 1/m on nearly-realizable data.
    """
    if not 0 <= empirical_risk <= 1:
        raise ValueError(f"empirical risk must be in [0, 1], got {empirical_risk}")
    t = _bound_ingredients(kappa_size, m, delta)
    return math.sqrt(empirical_risk * t) + t
