"""Exact combinatorial dimensions with witness extraction.

Four dimensions are computed exhaustively: the classic VC dimension, its
dual, the perturbation-set shattering dimension ``vcu`` (every binary
pattern realized constantly on whole attack sets), and the robust
shattering dimension ``rsu`` (shattering through witness points whose
attack sets receive constant labels).  The chain ``vcu <= rsu <= vc``
holds on every instance.

The searches prune aggressively but are intentionally exponential, so they
refuse oversized inputs unless ``override=True``.  Independent
literal-definition checkers (`is_shattered` and friends) re-verify every
witness through a separate code path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    HypothesisTable,
    Perturbation,
    ProblemInstance,
    SizeGuardError,
    constant_on_sets,
)

__all__ = [
    "MAX_INSTANCES",
    "MAX_ROWS",
    "STAR",
    "vc",
    "dual_vc",
    "vcu",
    "rsu",
    "partial_vc",
    "is_shattered",
    "is_u_shattered",
    "is_robustly_shattered",
    "is_partially_shattered",
    "DimensionReport",
    "compute_report",
]

# Search-size guard: prevents accidental blow-ups in CI, not a hard limit.
MAX_INSTANCES = 24
MAX_ROWS = 4096

# Ternary tables encode the undefined value as 2.
STAR = 2


def _guard(n_instances: int, n_rows: int, override: bool) -> None:
    if override:
        return
    if n_instances > MAX_INSTANCES or n_rows > MAX_ROWS:
        raise SizeGuardError(
            f"exhaustive dimension search refused for {n_rows} rows x "
            f"{n_instances} instances (pass override=True to force)"
        )


def _pattern_count(labels: np.ndarray, subset: Sequence[int]) -> int:
    """Number of distinct binary patterns the rows realize on the subset."""
    proj = labels[:, list(subset)].astype(np.int64)
    codes = proj @ (1 << np.arange(len(subset), dtype=np.int64))
    return len(np.unique(codes))


def _level_search(labels: np.ndarray, shattered) -> tuple[int, tuple[int, ...]]:
    """Grow shattered sets one point at a time; returns (dim, witness).

    A subset's projection loses patterns monotonically, so any superset of a
    non-shattered set is dead and the level-wise growth is exhaustive.
    """
    n = labels.shape[1]
    best: tuple[int, ...] = ()
    level: list[tuple[int, ...]] = [()]
    while True:
        nxt = []
        for s in level:
            start = s[-1] + 1 if s else 0
            for j in range(start, n):
                t = s + (j,)
                if shattered(t):
                    nxt.append(t)
        if not nxt:
            return len(best), best
        best = nxt[0]
        level = nxt


def vc(table: HypothesisTable, *, override: bool = False) -> tuple[int, tuple[int, ...]]:
    """Exact VC dimension and one maximum shattered set."""
    _guard(table.n_instances, table.n_rows, override)
    labels = table.labels
    max_possible = int(np.floor(np.log2(max(table.n_rows, 1))))

    def shattered(subset: tuple[int, ...]) -> bool:
        if len(subset) > max_possible:
            return False
        return _pattern_count(labels, subset) == 1 << len(subset)

    return _level_search(labels, shattered)


def dual_vc(table: HypothesisTable, *, override: bool = False) -> int:
    """VC dimension of the transposed, row-deduplicated table."""
    _guard(table.n_instances, table.n_rows, override)
    d, _ = vc(table.dual(), override=True)
    return d


def _row_masks(table: HypothesisTable, perturbation: Perturbation) -> tuple[list[int], list[int]]:
    """Per instance x, bitmasks over rows constant 0 / constant 1 on U(x)."""
    c0, c1 = constant_on_sets(table, perturbation)

    def mask(col: np.ndarray) -> int:
        out = 0
        for r in np.flatnonzero(col):
            out |= 1 << int(r)
        return out

    m0 = [mask(c0[:, x]) for x in range(table.n_instances)]
    m1 = [mask(c1[:, x]) for x in range(table.n_instances)]
    return m0, m1


def vcu(
    table: HypothesisTable, perturbation: Perturbation, *, override: bool = False
) -> tuple[int, tuple[int, ...]]:
    """Largest set shattered through constant labels on whole attack sets.

    For each candidate point and label the set of usable rows is
    precomputed as a bitmask; the DFS keeps one intersection mask per
    realized sign pattern and aborts a branch as soon as any mask empties.
    """
    _guard(table.n_instances, table.n_rows, override)
    m0, m1 = _row_masks(table, perturbation)
    usable = [x for x in range(table.n_instances) if m0[x] and m1[x]]

    best: list[tuple[int, ...]] = [()]

    def extend(chosen: tuple[int, ...], masks: list[int], cands: list[int]) -> None:
        if len(chosen) > len(best[0]):
            best[0] = chosen
        for i, x in enumerate(cands):
            if len(chosen) + len(cands) - i <= len(best[0]):
                return
            new_masks = []
            ok = True
            for p in masks:
                a = p & m0[x]
                b = p & m1[x]
                if not a or not b:
                    ok = False
                    break
                new_masks.append(a)
                new_masks.append(b)
            if ok:
                extend(chosen + (x,), new_masks, cands[i + 1 :])

    full = (1 << table.n_rows) - 1
    extend((), [full], usable)
    return len(best[0]), best[0]


def rsu(
    table: HypothesisTable, perturbation: Perturbation, *, override: bool = False
) -> tuple[int, tuple[tuple[int, int, int], ...]]:
    """Robust shattering dimension with witnesses.

    Returns the maximum k and a tuple of triples ``(x, z_plus, z_minus)``:
    x lies in both attack sets and for every sign pattern some row is
    constant 1 on U(z_plus) / constant 0 on U(z_minus) of the selected
    coordinates.  Witness points range over the full space, not just the
    support of any distribution.
    """
    _guard(table.n_instances, table.n_rows, override)
    n = table.n_instances
    m0, m1 = _row_masks(table, perturbation)

    # z is a witness candidate for x whenever x lies in U(z).
    containing: list[list[int]] = [[] for _ in range(n)]
    for z in range(n):
        for x in perturbation[z]:
            containing[x].append(z)

    cand_pairs: list[list[tuple[int, int]]] = []
    for x in range(n):
        pairs = [
            (zp, zm)
            for zp in containing[x]
            if m1[zp]
            for zm in containing[x]
            if m0[zm]
        ]
        cand_pairs.append(pairs)
    points = [x for x in range(n) if cand_pairs[x]]

    best: list[tuple[tuple[int, int, int], ...]] = [()]

    # Pairs with identical row-mask signatures are interchangeable, so each
    # distinct (constant-1 mask, constant-0 mask) signature is tried once.
    def extend_full(
        chosen: tuple[tuple[int, int, int], ...], masks: list[int], cands: list[int]
    ) -> None:
        if len(chosen) > len(best[0]):
            best[0] = chosen
        for i, x in enumerate(cands):
            if len(chosen) + len(cands) - i <= len(best[0]):
                return
            rest = cands[i + 1 :]
            tried: set[tuple[int, int]] = set()
            for zp, zm in cand_pairs[x]:
                key = (m1[zp], m0[zm])
                if key in tried:
                    continue
                tried.add(key)
                new_masks = []
                ok = True
                for p in masks:
                    a = p & key[0]
                    b = p & key[1]
                    if not a or not b:
                        ok = False
                        break
                    new_masks.append(a)
                    new_masks.append(b)
                if ok:
                    extend_full(chosen + ((x, zp, zm),), new_masks, rest)

    full = (1 << table.n_rows) - 1
    extend_full((), [full], points)
    return len(best[0]), best[0]


def partial_vc(labels, *, override: bool = False) -> int:
    """VC dimension of a ternary table; the undefined value never matches.

    Accepts a raw ternary matrix or any object with a ``labels`` attribute
    (a partial-concept table).  A set is shattered when every binary pattern
    appears among the fully-defined projections.
    """
    arr = np.asarray(getattr(labels, "labels", labels), dtype=np.int8)
    if arr.ndim != 2:
        raise ValueError("partial table must be a 2-d matrix")
    _guard(arr.shape[1], arr.shape[0], override)

    def shattered(subset: tuple[int, ...]) -> bool:
        if (1 << len(subset)) > arr.shape[0]:
            return False
        proj = arr[:, list(subset)]
        ok = (proj != STAR).all(axis=1)
        if not ok.any():
            return False
        codes = proj[ok].astype(np.int64) @ (1 << np.arange(len(subset), dtype=np.int64))
        return len(np.unique(codes)) == 1 << len(subset)

    d, _ = _level_search(arr, shattered)
    return d


# ---------------------------------------------------------------------------
# Literal-definition checkers.  These test the shattering definitions
# verbatim, independently of the bitmask searches, and re-verify witnesses.
# ---------------------------------------------------------------------------


def is_shattered(table: HypothesisTable, subset: Sequence[int]) -> bool:
    rows = [tuple(r) for r in table.labels]
    pts = list(subset)
    for pattern in itertools.product((0, 1), repeat=len(pts)):
        if not any(all(r[x] == y for x, y in zip(pts, pattern)) for r in rows):
            return False
    return True


def is_u_shattered(
    table: HypothesisTable, perturbation: Perturbation, subset: Sequence[int]
) -> bool:
    rows = [tuple(r) for r in table.labels]
    pts = list(subset)
    for pattern in itertools.product((0, 1), repeat=len(pts)):
        found = False
        for r in rows:
            if all(
                all(r[z] == y for z in perturbation[x]) for x, y in zip(pts, pattern)
            ):
                found = True
                break
        if not found:
            return False
    return True


def is_robustly_shattered(
    table: HypothesisTable,
    perturbation: Perturbation,
    triples: Sequence[tuple[int, int, int]],
) -> bool:
    rows = [tuple(r) for r in table.labels]
    for x, zp, zm in triples:
        if x not in perturbation[zp] or x not in perturbation[zm]:
            return False
    for pattern in itertools.product((0, 1), repeat=len(triples)):
        found = False
        for r in rows:
            good = True
            for (x, zp, zm), y in zip(triples, pattern):
                z = zp if y == 1 else zm
                if not all(r[w] == y for w in perturbation[z]):
                    good = False
                    break
            if good:
                found = True
                break
        if not found:
            return False
    return True


def is_partially_shattered(labels, subset: Sequence[int]) -> bool:
    arr = np.asarray(getattr(labels, "labels", labels), dtype=np.int8)
    pts = list(subset)
    rows = [tuple(r) for r in arr]
    for pattern in itertools.product((0, 1), repeat=len(pts)):
        if not any(all(r[x] == y for x, y in zip(pts, pattern)) for r in rows):
            return False
    return True


@dataclass(frozen=True)
class DimensionReport:
    """All four dimensions of an instance plus re-verified witnesses."""

    vc: int
    dual_vc: int
    vc_u: int
    rs_u: int
    witnesses: dict = field(default_factory=dict)

    def as_dict(self, *, include_witnesses: bool = True) -> dict:
        doc = {"vc": self.vc, "dual_vc": self.dual_vc, "vc_u": self.vc_u, "rs_u": self.rs_u}
        if include_witnesses:
            doc["witnesses"] = {
                k: [list(t) if isinstance(t, tuple) else t for t in v]
                for k, v in self.witnesses.items()
            }
        return doc


def compute_report(
    instance_or_table,
    perturbation: Perturbation | None = None,
    *,
    override: bool = False,
) -> DimensionReport:
    """Compute every dimension, check the chain, and re-verify witnesses."""
    if isinstance(instance_or_table, ProblemInstance):
        table = instance_or_table.hypotheses
        pert = instance_or_table.perturbation
    else:
        table = instance_or_table
        if perturbation is None:
            raise ValueError("perturbation required when passing a bare table")
        pert = perturbation

    d_vc, w_vc = vc(table, override=override)
    d_dual = dual_vc(table, override=override)
    d_vcu, w_vcu = vcu(table, pert, override=override)
    d_rsu, w_rsu = rsu(table, pert, override=override)

    if not (d_vcu <= d_rsu <= d_vc):
        raise RuntimeError(
            f"dimension chain violated: vcu={d_vcu}, rsu={d_rsu}, vc={d_vc}"
        )
    if not is_shattered(table, w_vc):
        raise RuntimeError("vc witness failed literal re-verification")
    if not is_u_shattered(table, pert, w_vcu):
        raise RuntimeError("vcu witness failed literal re-verification")
    if not is_robustly_shattered(table, pert, w_rsu):
        raise RuntimeError("rsu witness failed literal re-verification")

    return DimensionReport(
        vc=d_vc,
        dual_vc=d_dual,
        vc_u=d_vcu,
        rs_u=d_rsu,
        witnesses={"vc": list(w_vc), "vc_u": list(w_vcu), "rs_u": list(w_rsu)},
    )
