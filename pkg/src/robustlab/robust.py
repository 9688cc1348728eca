"""Robust empirical risk minimization and the supervised/semi-supervised learners.

The supervised robust learner follows the inflate/discretize/boost recipe:
inflate the sample to every reachable perturbation point with first-covering
labels, build the finite subclass of minimizers of small subsamples,
discretize the inflated set to one representative per distinct loss pattern,
and boost robust minimizers on the representatives until the majority vote
is robustly perfect on the original sample.  Sparsification then thins the
voters, and the surviving subsamples form the compression scheme.

The semi-supervised learner runs a partial-concept learner on the labeled
data, transfers its labels to the unlabeled sample, and finishes with the
agnostic supervised learner on the self-labeled data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import dims
from .compress import (
    CompressionScheme,
    WeakLearnerBudgetError,
    alpha_boost,
    majority_outputs,
    robust_loss_fn,
    sparsify,
)
from .core import (
    HypothesisTable,
    LabeledSample,
    PACParams,
    Perturbation,
    Predictor,
    RealizabilityError,
    consistent_row_indices,
    constant_on_sets,
    zero_one_loss,
)
from .partial import PartialTable, partial_agnostic_learn, partial_realizable_learn, to_partial

__all__ = [
    "SUBCLASS_CAP",
    "InflatedSample",
    "FiniteSubclass",
    "DiscretizedSample",
    "rerm",
    "bad_rerm",
    "learn_known_support",
    "inflate",
    "finite_subclass",
    "discretize",
    "robust_realizable_learn",
    "robust_agnostic_learn",
    "learn_01_robustly_realizable",
    "grass",
]

# Cap on generating subsets when materializing the finite subclass.
SUBCLASS_CAP = 200_000


def _canon(sample_points: Sequence[tuple[int, int]]) -> LabeledSample:
    return tuple((int(x), int(y)) for x, y in sample_points)


class _Evaluator:
    """Cached robust-correctness structure for one (table, perturbation) pair."""

    def __init__(self, table: HypothesisTable, perturbation: Perturbation):
        self.table = table
        self.perturbation = perturbation
        self.c0, self.c1 = constant_on_sets(table, perturbation)
        r = table.n_rows
        self.n_words = (r + 63) // 64
        self._mask0 = self._pack(self.c0)
        self._mask1 = self._pack(self.c1)

    def _pack(self, correct: np.ndarray) -> np.ndarray:
        r, n = correct.shape
        padded = np.zeros((self.n_words * 64, n), dtype=np.uint64)
        padded[:r] = correct
        bits = padded.reshape(self.n_words, 64, n)
        weights = (np.uint64(1) << np.arange(64, dtype=np.uint64))[None, :, None]
        return (bits * weights).sum(axis=1, dtype=np.uint64).T  # (n, words)

    def correct_mask(self, x: int, y: int) -> np.ndarray:
        return self._mask1[x] if y else self._mask0[x]

    def point_wrong(self, row: int, x: int, y: int) -> int:
        c = self.c1 if y else self.c0
        return int(not c[row, x])

    def row_wrong_counts(self, sample_points: LabeledSample) -> np.ndarray:
        """Per-row count of robustly-wrong sample points (multiplicity aware)."""
        counts: dict[tuple[int, int], int] = {}
        for pt in sample_points:
            counts[pt] = counts.get(pt, 0) + 1
        total = np.zeros(self.table.n_rows, dtype=np.int64)
        for (x, y), c in counts.items():
            corr = self.c1[:, x] if y else self.c0[:, x]
            total += c * (~corr)
        return total

    def rerm(self, sample_points: LabeledSample) -> int:
        """Lowest-index row minimizing the empirical robust risk."""
        if not sample_points:
            return 0
        distinct = sorted(set(sample_points))
        acc = self.correct_mask(*distinct[0]).copy()
        for pt in distinct[1:]:
            acc &= self.correct_mask(*pt)
        row = _lowest_bit(acc)
        if row >= 0:
            return row
        return int(np.argmin(self.row_wrong_counts(sample_points)))

    def outputs_wrong_count(self, outputs: np.ndarray, sample_points: LabeledSample) -> int:
        counts: dict[tuple[int, int], int] = {}
        for pt in sample_points:
            counts[pt] = counts.get(pt, 0) + 1
        wrong = 0
        for (x, y), c in counts.items():
            zs = list(self.perturbation[x])
            if (outputs[zs] != y).any():
                wrong += c
        return wrong


def _lowest_bit(words: np.ndarray) -> int:
    for w, v in enumerate(words):
        v = int(v)
        if v:
            return w * 64 + (v & -v).bit_length() - 1
    return -1


def _lowest_rows_batch(acc: np.ndarray) -> np.ndarray:
    """Per-row lowest set bit of packed masks; -1 where empty."""
    nz = acc != 0
    has = nz.any(axis=1)
    first = np.argmax(nz, axis=1)
    vals = acc[np.arange(len(acc)), first]
    low = (vals & (~vals + np.uint64(1))).astype(np.float64)
    bit = np.round(np.log2(np.maximum(low, 1.0))).astype(np.int64)
    return np.where(has, first.astype(np.int64) * 64 + bit, -1)


def rerm(table: HypothesisTable, perturbation: Perturbation, sample_points: Sequence[tuple[int, int]]) -> int:
    """Robust empirical risk minimizer; ties break to the lowest row index.

    The empty sample returns row 0 by convention.
    """
    return _Evaluator(table, perturbation).rerm(_canon(sample_points))


def _shared_points(perturbation: Perturbation) -> set[int]:
    common = set(perturbation[0])
    for x in range(1, perturbation.size):
        common &= set(perturbation[x])
    return common


def bad_rerm(
    table: HypothesisTable,
    perturbation: Perturbation,
    sample_points: Sequence[tuple[int, int]],
    seed=None,
    *,
    force: bool = False,
) -> Predictor:
    """The adversarial robust minimizer that labels unseen points at random.

    Intended for the shared-attack-point family (all binary functions, one
    point common to every attack set, realizable labels all 1): it labels
    the sampled points and the shared point 1, which keeps it a genuine
    robust minimizer, and flips a fair coin everywhere else.  A structural
    check rejects other instances unless ``force`` is passed.
    """
    s = _canon(sample_points)
    shared = _shared_points(perturbation)
    structural = table.n_rows == (1 << table.n_instances) and bool(shared)
    if not structural and not force:
        raise ValueError(
            "instance does not look like the shared-attack-point family; "
            "pass force=True to run the adversarial minimizer anyway"
        )
    rng = np.random.default_rng(seed)
    outputs = rng.integers(0, 2, size=table.n_instances).astype(np.int8)
    for z in shared:
        outputs[z] = 1
    for x, y in s:
        outputs[x] = y
    return Predictor(
        outputs,
        {"learner": "bad-rerm", "sampled": sorted({x for x, _ in s}), "forced": not structural},
    )


def learn_known_support(
    table: HypothesisTable,
    perturbation: Perturbation,
    support: Sequence[int],
    sample_points: Sequence[tuple[int, int]],
) -> Predictor:
    """Proper learner for a known marginal support.

    Keeps the rows that are robustly self-consistent on the support and runs
    plain 0-1 empirical risk minimization over them.  The output is always a
    row of the original table.
    """
    s = _canon(sample_points)
    support_set = {int(x) for x in support}
    sampled = {x for x, _ in s}
    if not sampled <= support_set:
        raise ValueError(f"sampled instances {sorted(sampled - support_set)} outside the support")
    idx = consistent_row_indices(table, perturbation, support_set)
    if len(idx) == 0:
        raise RealizabilityError("no row is robustly self-consistent on the support")
    if s:
        xs = [x for x, _ in s]
        ys = np.array([y for _, y in s], dtype=np.uint8)
        errors = (table.labels[np.ix_(idx, xs)] != ys).sum(axis=1)
        row = int(idx[int(np.argmin(errors))])
    else:
        row = int(idx[0])
    return Predictor(
        table.labels[row].astype(np.int8),
        {"learner": "known-support", "row": row, "support": sorted(support_set)},
    )


@dataclass(frozen=True)
class InflatedSample:
    """Every reachable perturbation point once, labeled by its first coverer.

    ``origin[k]`` is the index (into the generating sample) of the earliest
    draw whose attack set contains ``pairs[k][0]``.
    """

    pairs: tuple[tuple[int, int], ...]
    origin: tuple[int, ...]


def inflate(sample_points: Sequence[tuple[int, int]], perturbation: Perturbation) -> InflatedSample:
    s = _canon(sample_points)
    seen: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    origin: list[int] = []
    for i, (x, y) in enumerate(s):
        for z in perturbation[x]:
            if z not in seen:
                seen[z] = i
                pairs.append((z, y))
                origin.append(i)
    return InflatedSample(tuple(pairs), tuple(origin))


@dataclass(frozen=True)
class FiniteSubclass:
    """Distinct robust minimizers of size-d subsamples of the training set."""

    row_indices: tuple[int, ...]
    d: int
    mode: str  # "exact" | "exact-point-sets" | "sampled"
    n_subsets: int


def finite_subclass(
    table: HypothesisTable,
    perturbation: Perturbation,
    sample_points: Sequence[tuple[int, int]],
    d: int,
    *,
    cap: int = SUBCLASS_CAP,
    seed=None,
    _evaluator: _Evaluator | None = None,
) -> FiniteSubclass:
    """Materialize the robust minimizers of all d-point subsamples.

    The minimizer of a subsample depends only on its set of distinct labeled
    points, so when the raw subset count exceeds the cap but the distinct
    point-set space is small the enumeration switches to point sets and
    stays exact.  Only when both spaces exceed the cap are ``cap`` subsets
    sampled at random (recorded in the mode).
    """
    s = _canon(sample_points)
    ev = _evaluator or _Evaluator(table, perturbation)
    if d < 0:
        raise ValueError(f"subclass dimension must be non-negative, got {d}")
    d_eff = min(d, len(s))
    if d_eff == 0:
        return FiniteSubclass((ev.rerm(()),), d, "exact", 1)

    pts = sorted(set(s))
    mult = {pt: 0 for pt in pts}
    for pt in s:
        mult[pt] += 1
    n_exact = comb(len(s), d_eff)
    n_pointsets = sum(comb(len(pts), k) for k in range(1, min(d_eff, len(pts)) + 1))

    rows: set[int] = set()
    if n_exact <= cap:
        memo: dict[frozenset, int] = {}
        for combo in itertools.combinations(range(len(s)), d_eff):
            key = frozenset(s[i] for i in combo)
            if key not in memo:
                memo[key] = ev.rerm(tuple(key))
            rows.add(memo[key])
        return FiniteSubclass(tuple(sorted(rows)), d, "exact", n_exact)

    if n_pointsets <= cap:
        count = 0
        for k in range(1, min(d_eff, len(pts)) + 1):
            for combo in itertools.combinations(pts, k):
                if sum(mult[pt] for pt in combo) < d_eff:
                    continue  # not realizable as a d-point subsample
                count += 1
                rows.add(ev.rerm(combo))
        return FiniteSubclass(tuple(sorted(rows)), d, "exact-point-sets", count)

    rng = np.random.default_rng(seed)
    pt_index = {pt: i for i, pt in enumerate(pts)}
    pt_of_pos = np.array([pt_index[pt] for pt in s], dtype=np.int64)
    masks = np.stack([ev.correct_mask(*pt) for pt in pts])  # (P, words)
    chunk = 50_000
    remaining = cap
    while remaining > 0:
        b = min(chunk, remaining)
        remaining -= b
        draws = rng.integers(0, len(s), size=(b, d_eff))
        # d-subsets need distinct positions; redraw the rare colliding rows
        for _ in range(64):
            bad = np.array([len(set(row)) != d_eff for row in draws])
            if not bad.any():
                break
            draws[bad] = rng.integers(0, len(s), size=(int(bad.sum()), d_eff))
        ids = pt_of_pos[draws]
        acc = masks[ids[:, 0]].copy()
        for j in range(1, d_eff):
            acc &= masks[ids[:, j]]
        found = _lowest_rows_batch(acc)
        for r, row_ids in zip(found, ids):
            if r >= 0:
                rows.add(int(r))
            else:
                rows.add(ev.rerm(tuple(pts[i] for i in set(row_ids))))
    return FiniteSubclass(tuple(sorted(rows)), d, "sampled", cap)


@dataclass(frozen=True)
class DiscretizedSample:
    """One inflated pair per distinct loss pattern over the finite subclass."""

    indices: tuple[int, ...]
    n_distinct_columns: int


def _loss_matrix(table: HypothesisTable, rows: Sequence[int], pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    zs = [z for z, _ in pairs]
    ys = np.array([y for _, y in pairs], dtype=np.uint8)
    return (table.labels[np.ix_(list(rows), zs)] != ys).astype(np.uint8)


def discretize(
    inflated: InflatedSample, table: HypothesisTable, subclass: FiniteSubclass
) -> DiscretizedSample:
    z = _loss_matrix(table, subclass.row_indices, inflated.pairs)
    seen: dict[bytes, int] = {}
    idx: list[int] = []
    for p in range(z.shape[1]):
        key = z[:, p].tobytes()
        if key not in seen:
            seen[key] = p
            idx.append(p)
    disc = DiscretizedSample(tuple(idx), len(seen))
    if len(disc.indices) != disc.n_distinct_columns:
        raise RuntimeError("representative count must equal the distinct column count")
    return disc


def robust_realizable_learn(
    table: HypothesisTable,
    perturbation: Perturbation,
    sample_points: Sequence[tuple[int, int]],
    params: PACParams,
    seed=None,
    *,
    vc_hint: int | None = None,
    k_target: int | None = None,
    subclass_cap: int = SUBCLASS_CAP,
) -> tuple[Predictor, CompressionScheme]:
    """Supervised robust learner for robustly realizable samples.

    Returns a majority-vote predictor with zero empirical robust risk on the
    sample together with its compression scheme (the per-voter generating
    subsamples, in voter order).  ``vc_hint``/``k_target`` skip the
    dimension computations when the caller already knows them; the values
    themselves are unchanged.
    """
    s = _canon(sample_points)
    ev = _Evaluator(table, perturbation)
    n = table.n_instances

    def rebuild(segments: tuple[LabeledSample, ...]) -> Predictor:
        if not segments:
            return Predictor(table.labels[0].astype(np.int8), {"learner": "robust-realizable/reconstructed"})
        outs = [table.labels[rerm(table, perturbation, seg)].astype(np.int8) for seg in segments]
        return Predictor(majority_outputs(outs), {"learner": "robust-realizable/reconstructed"})

    if not s:
        pred = Predictor(
            table.labels[0].astype(np.int8),
            {"learner": "robust-realizable", "convention": "empty-sample-row-0"},
        )
        return pred, CompressionScheme((), rebuild, 0, {"rounds": 0})

    wrong = ev.row_wrong_counts(s)
    if wrong.min() > 0:
        raise RealizabilityError("no row attains zero empirical robust risk on the sample")

    rng = np.random.default_rng(seed)
    child = rng.spawn(3)
    d = vc_hint if vc_hint is not None else dims.vc(table)[0]
    subclass = finite_subclass(
        table, perturbation, s, d, cap=subclass_cap, seed=child[0], _evaluator=ev
    )
    inflated = inflate(s, perturbation)
    disc = discretize(inflated, table, subclass)
    reps = tuple(inflated.pairs[i] for i in disc.indices)
    z_reps = _loss_matrix(table, subclass.row_indices, reps)

    weak_state = {"size": max(1, min(d + 1, len(reps))), "max_size": 1}
    voter_rows: list[int] = []

    def weak(weights: np.ndarray, w_rng: np.random.Generator):
        while True:
            for _ in range(8):
                k = weak_state["size"]
                pos = w_rng.choice(len(reps), size=k, p=weights)
                uniq = sorted(set(int(i) for i in pos))
                zero_rows = np.flatnonzero(z_reps[:, uniq].sum(axis=1) == 0)
                if len(zero_rows):
                    worst = float((z_reps[zero_rows] @ weights).max())
                    if worst > 1.0 / 3.0 + 1e-12:
                        continue
                support: list[tuple[int, int]] = []
                for i in uniq:
                    orig = s[inflated.origin[disc.indices[i]]]
                    if orig not in support:
                        support.append(orig)
                h_row = ev.rerm(tuple(support))
                own = float(
                    sum(
                        w
                        for w, (zz, yy) in zip(weights, reps)
                        if table.labels[h_row, zz] != yy
                    )
                )
                if own <= 1.0 / 3.0 + 1e-12:
                    weak_state["max_size"] = max(weak_state["max_size"], k)
                    voter_rows.append(h_row)
                    return table.labels[h_row].astype(np.int8), tuple(support)
            if weak_state["size"] >= len(reps):
                raise WeakLearnerBudgetError(
                    "weak robust minimizer failed at the full representative size"
                )
            weak_state["size"] = min(2 * weak_state["size"], len(reps))

    stop = lambda maj: ev.outputs_wrong_count(maj, s) == 0
    state = alpha_boost(weak, reps, zero_one_loss, seed=child[1], stop=stop)

    kt = k_target if k_target is not None else 8 * dims.dual_vc(table)
    kept, fell_back = sparsify(state, s, robust_loss_fn(perturbation), kt, seed=child[2])
    maj = majority_outputs([state.voters[i].outputs for i in kept])
    supports = tuple(state.voter_supports[i] for i in kept)
    size = sum(len(sup) for sup in supports)
    prov = {
        "learner": "robust-realizable",
        "epsilon": params.epsilon,
        "delta": params.delta,
        "d": d,
        "rounds": state.rounds,
        "weak_size": weak_state["max_size"],
        "subclass_mode": subclass.mode,
        "subclass_rows": len(subclass.row_indices),
        "representatives": len(reps),
        "voter_rows": [voter_rows[i] for i in kept],
        "sparsify_fallback": fell_back,
        "compression_size": size,
    }
    scheme = CompressionScheme(
        supports, rebuild, size, {"rounds": state.rounds, "kept": list(kept)}
    )
    return Predictor(maj, prov), scheme


def robust_agnostic_learn(
    table: HypothesisTable,
    perturbation: Perturbation,
    sample_points: Sequence[tuple[int, int]],
    params: PACParams,
    seed=None,
    *,
    vc_hint: int | None = None,
    k_target: int | None = None,
    subclass_cap: int = SUBCLASS_CAP,
) -> tuple[Predictor, CompressionScheme]:
    """Agnostic wrapper: realizable pipeline on a maximum realizable subsample.

    The subsample is exact: realizability means one row is robustly correct
    on all of it, so the best row's robustly-correct subsequence is maximal.
    The output's empirical robust risk on the full sample never exceeds the
    best row's.
    """
    s = _canon(sample_points)
    if not s:
        raise ValueError("agnostic learning needs at least one labeled point")
    ev = _Evaluator(table, perturbation)
    wrong = ev.row_wrong_counts(s)
    best = int(np.argmin(wrong))
    kept = tuple(pt for pt in s if not ev.point_wrong(best, *pt))
    pred, scheme = robust_realizable_learn(
        table,
        perturbation,
        kept,
        params,
        seed,
        vc_hint=vc_hint,
        k_target=k_target,
        subclass_cap=subclass_cap,
    )
    prov = dict(pred.provenance)
    prov.update(
        learner="robust-agnostic",
        best_row=best,
        best_row_wrong=int(wrong[best]),
        kept=len(kept),
        dropped=len(s) - len(kept),
    )
    return Predictor(pred.outputs, prov), scheme


def learn_01_robustly_realizable(
    table: HypothesisTable,
    perturbation: Perturbation,
    sample_points: Sequence[tuple[int, int]],
    params: PACParams,
    seed=None,
) -> Predictor:
    """Non-robust 0-1 learner for robustly realizable data.

    Converts the class to its partial form and runs the realizable
    partial-concept learner; the output is improper in general.  Guarantees
    zero empirical 0-1 error on the sample.
    """
    s = _canon(sample_points)
    p = to_partial(table, perturbation)
    if len(p.rows_matching(s)) == 0:
        raise RealizabilityError(
            "sample is not consistent with the robustly self-consistent class"
        )
    pred, _ = partial_realizable_learn(p, s, params, seed)
    prov = dict(pred.provenance)
    prov["learner"] = "zero-one-robustly-realizable"
    return Predictor(pred.outputs, prov)


def grass(
    table: HypothesisTable,
    perturbation: Perturbation,
    labeled: Sequence[tuple[int, int]],
    unlabeled: Sequence[int],
    params: PACParams,
    seed=None,
    *,
    partial_learner=None,
    vc_hint: int | None = None,
    k_target: int | None = None,
    subclass_cap: int = SUBCLASS_CAP,
) -> Predictor:
    """Generic adversarially-robust semi-supervised learner.

    Stage one learns the converted partial class on the labeled sample with
    a third of the accuracy budget and half the confidence budget (the
    realizable partial learner when the sample is consistent with some
    partial row, the agnostic one otherwise).  Stage two labels the
    unlabeled points with the stage-one hypothesis and runs the agnostic
    supervised robust learner on the self-labeled sample.  Undefined values
    never reach the unlabeled sample: stage-one predictors are total, with
    undefined resolved to 0 at prediction time.

    A custom ``partial_learner(partial_table, labeled, stage_params, seed)``
    may replace stage one; it must return a total predictor (optionally with
    a compression scheme attached).
    """
    s_l = _canon(labeled)
    s_u = tuple(int(x) for x in unlabeled)
    stage = params.split_for_stages()
    rng = np.random.default_rng(seed)
    child = rng.spawn(2)
    p = to_partial(table, perturbation)

    if partial_learner is not None:
        out = partial_learner(p, s_l, stage, child[0])
        h1 = out[0] if isinstance(out, tuple) else out
        regime = "custom"
    elif len(p.rows_matching(s_l)) > 0:
        h1, _ = partial_realizable_learn(p, s_l, stage, child[0])
        regime = "realizable"
    else:
        h1, _ = partial_agnostic_learn(p, s_l, stage, child[0])
        regime = "agnostic"

    self_labeled = tuple((x, int(h1.outputs[x])) for x in s_u)
    prov = {
        "learner": "grass",
        "regime": regime,
        "epsilon": params.epsilon,
        "delta": params.delta,
        "m_l": len(s_l),
        "m_u": len(s_u),
        "h1_outputs": h1.outputs.tolist(),
        "h1_provenance": dict(h1.provenance),
        "self_labeled": [list(pt) for pt in self_labeled],
    }
    if not s_u:
        # Degenerate budget: nothing to transfer labels to, so stage one is
        # the final hypothesis.
        prov["h2_provenance"] = None
        return Predictor(h1.outputs, prov)

    h2, _ = robust_agnostic_learn(
        table,
        perturbation,
        self_labeled,
        stage,
        child[1],
        vc_hint=vc_hint,
        k_target=k_target,
        subclass_cap=subclass_cap,
    )
    prov["h2_provenance"] = dict(h2.provenance)
    return Predictor(h2.outputs, prov)
