"""Partial-concept conversion and learners built on one-inclusion graphs.

A total class plus a perturbation map collapses into a ternary table: a row
keeps its value where it is constant on the whole attack set and becomes
undefined (``STAR``) where the attacker can force a mistake regardless of
the prediction.  Learning the converted class with the 0-1 loss is what
makes the labeled sample complexity scale with the perturbation-set
dimension instead of the raw VC dimension.

The realizable learner boosts one-inclusion-graph predictors; the graph
orientation minimizing the maximum out-degree is computed exactly by binary
search over the degree bound with a max-flow feasibility check at each step.
Undefined values map to label 0 at prediction time so that runs stay
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .compress import (
    CompressionScheme,
    WeakLearnerBudgetError,
    alpha_boost,
    majority_outputs,
)
from .core import (
    HypothesisTable,
    LabeledSample,
    PACParams,
    Perturbation,
    Predictor,
    RealizabilityError,
    constant_on_sets,
    zero_one_loss,
)
from .dims import STAR, partial_vc

__all__ = [
    "PartialTable",
    "to_partial",
    "OneInclusionGraph",
    "build_one_inclusion_graph",
    "oig_predict",
    "partial_realizable_learn",
    "partial_agnostic_learn",
]


class PartialTable:
    """Ternary label matrix over {0, 1, star}; rows are partial concepts.

    ``origin`` optionally maps each row back to the source rows of the total
    table it was converted from (several total rows may collapse into one
    partial row).
    """

    __slots__ = ("labels", "origin")

    def __init__(self, labels, origin: tuple[tuple[int, ...], ...] | None = None) -> None:
        arr = np.ascontiguousarray(labels, dtype=np.int8)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("partial table must be a non-empty 2-d matrix")
        if not np.isin(arr, (0, 1, STAR)).all():
            raise ValueError(f"partial labels must be 0, 1 or {STAR} (undefined)")
        seen = set()
        for i in range(arr.shape[0]):
            key = arr[i].tobytes()
            if key in seen:
                raise ValueError(f"duplicate partial row at index {i}")
            seen.add(key)
        arr.setflags(write=False)
        self.labels = arr
        self.origin = origin

    @property
    def n_rows(self) -> int:
        return self.labels.shape[0]

    @property
    def n_instances(self) -> int:
        return self.labels.shape[1]

    def rows_matching(self, sample: Sequence[tuple[int, int]]) -> np.ndarray:
        """Indices of rows that binary-match every labeled point (star fails)."""
        if len(sample) == 0:
            return np.arange(self.n_rows)
        xs = [x for x, _ in sample]
        ys = np.array([y for _, y in sample], dtype=np.int8)
        return np.flatnonzero((self.labels[:, xs] == ys).all(axis=1))

    def __repr__(self) -> str:
        return f"PartialTable({self.n_rows} rows x {self.n_instances} instances)"


def to_partial(table: HypothesisTable, perturbation: Perturbation) -> PartialTable:
    """Convert a total class: undefined wherever a row splits an attack set.

    Rows that collide after conversion are merged; ``origin`` records every
    source row behind each merged one.
    """
    c0, c1 = constant_on_sets(table, perturbation)
    vals = np.where(c1, 1, np.where(c0, 0, STAR)).astype(np.int8)
    order: dict[bytes, int] = {}
    rows: list[np.ndarray] = []
    origins: list[list[int]] = []
    for i in range(vals.shape[0]):
        key = vals[i].tobytes()
        if key in order:
            origins[order[key]].append(i)
        else:
            order[key] = len(rows)
            rows.append(vals[i])
            origins.append([i])
    return PartialTable(np.array(rows, dtype=np.int8), tuple(tuple(o) for o in origins))


@dataclass(frozen=True, eq=False)
class OneInclusionGraph:
    """One-inclusion graph over the projections onto a coordinate set.

    Vertices are the distinct (possibly partial) patterns; the hyperedge for
    coordinate j and pattern f collects every vertex agreeing with f off j.
    The stored orientation assigns each hyperedge one member vertex.  The
    out-degree bound is enforced on fully-labeled vertices, which is what
    the leave-one-out mistake bound rests on; vertices containing undefined
    values may be oriented to but act as unconstrained sinks (their
    predictions already count as mistakes).
    """

    coords: tuple[int, ...]
    vertices: np.ndarray
    edges: tuple[tuple[int, ...], ...]
    edge_coord: tuple[int, ...]
    orientation: tuple[int, ...]
    max_out_degree: int
    certificate: int
    _lookup: dict = field(default_factory=dict, repr=False)

    def consistent_vertices(self, known: dict[int, int]) -> np.ndarray:
        pos = [self.coords.index(x) for x in known]
        want = np.array([known[x] for x in known], dtype=np.int8)
        if not pos:
            return np.arange(len(self.vertices))
        return np.flatnonzero((self.vertices[:, pos] == want).all(axis=1))

    def predict(self, s_known: Sequence[tuple[int, int]], x_test: int) -> int:
        """Label for the test coordinate given the labels of all others.

        A test instance that also appears labeled is answered from its
        label, which keeps rotations of a sample mutually consistent.
        """
        known: dict[int, int] = {}
        for x, y in s_known:
            if x in known and known[x] != y:
                raise RealizabilityError(f"conflicting labels for instance {x}")
            known[x] = int(y)
        if x_test in known:
            return known[x_test]
        if x_test not in self.coords:
            raise ValueError(f"test instance {x_test} is not a graph coordinate")
        j = self.coords.index(x_test)
        missing = [x for k, x in enumerate(self.coords) if k != j and x not in known]
        if missing:
            raise ValueError(f"coordinates {missing} lack labels")
        if len(self.consistent_vertices(known)) == 0:
            raise RealizabilityError("no vertex is consistent with the labeled points")
        pattern = np.array(
            [known[x] for k, x in enumerate(self.coords) if k != j], dtype=np.int8
        )
        edge_idx = self._lookup[(j, pattern.tobytes())]
        val = int(self.vertices[self.orientation[edge_idx], j])
        return 0 if val == STAR else val


def _orient(
    edges: list[tuple[int, ...]],
    n_vertices: int,
    binary: np.ndarray,
    bound: int,
) -> tuple[list[int], bool]:
    """Try to orient every hyperedge with out-degree <= bound on binary vertices.

    Out-degree of v counts hyperedges containing v oriented elsewhere, so a
    vertex of degree g needs at least g - bound hyperedges assigned to it.
    Feasibility is a bipartite assignment (hyperedges are unit sources,
    demand vertices are sinks) solved exactly by max-flow.
    """
    deg = np.zeros(n_vertices, dtype=int)
    multi = [i for i, e in enumerate(edges) if len(e) >= 2]
    for i in multi:
        for v in edges[i]:
            deg[v] += 1
    demand = {
        v: int(deg[v] - bound)
        for v in range(n_vertices)
        if binary[v] and deg[v] > bound
    }
    orientation = [e[0] for e in edges]  # placeholder; singletons are final
    if not demand:
        return orientation, True

    total = sum(demand.values())
    vert_node = {v: 1 + len(multi) + k for k, v in enumerate(sorted(demand))}
    sink = 1 + len(multi) + len(demand)
    rows, cols, caps = [], [], []
    for k, i in enumerate(multi):
        rows.append(0)
        cols.append(1 + k)
        caps.append(1)
        for v in edges[i]:
            if v in vert_node:
                rows.append(1 + k)
                cols.append(vert_node[v])
                caps.append(1)
    for v, node in vert_node.items():
        rows.append(node)
        cols.append(sink)
        caps.append(demand[v])
    graph = csr_matrix((caps, (rows, cols)), shape=(sink + 1, sink + 1), dtype=np.int32)
    result = maximum_flow(graph, 0, sink)
    if result.flow_value < total:
        return orientation, False
    flow = result.flow
    for k, i in enumerate(multi):
        assigned = None
        for v in edges[i]:
            if v in vert_node and flow[1 + k, vert_node[v]] > 0:
                assigned = v
                break
        orientation[i] = assigned if assigned is not None else edges[i][0]
    return orientation, True


def build_one_inclusion_graph(table: PartialTable, coords: Sequence[int]) -> OneInclusionGraph:
    """Construct the graph on the given coordinates and orient it exactly.

    The minimum feasible out-degree bound is found by binary search; the
    result is certified against the partial VC dimension of the projected
    pattern class.
    """
    coords = tuple(sorted({int(x) for x in coords}))
    if not coords:
        raise ValueError("a one-inclusion graph needs at least one coordinate")
    proj = table.labels[:, list(coords)]
    vertices = np.unique(proj, axis=0)
    m = len(coords)
    binary = (vertices != STAR).all(axis=1)

    groups: dict[tuple[int, bytes], list[int]] = {}
    for v in range(len(vertices)):
        for j in range(m):
            off = np.delete(vertices[v], j)
            groups.setdefault((j, off.tobytes()), []).append(v)
    keys = sorted(groups, key=lambda k: (k[0], k[1]))
    edges = [tuple(groups[k]) for k in keys]
    edge_coord = [k[0] for k in keys]
    lookup = {k: i for i, k in enumerate(keys)}

    deg = np.zeros(len(vertices), dtype=int)
    for e in edges:
        if len(e) >= 2:
            for v in e:
                deg[v] += 1
    hi = int(deg[binary].max()) if binary.any() else 0
    lo = 0
    feasible_orientation, ok = _orient(edges, len(vertices), binary, hi)
    if not ok:
        raise RuntimeError("orientation infeasible at the trivial bound")
    best_k = hi
    while lo < best_k:
        mid = (lo + best_k) // 2
        orientation, ok = _orient(edges, len(vertices), binary, mid)
        if ok:
            best_k = mid
            feasible_orientation = orientation
        else:
            lo = mid + 1

    vertex_table = PartialTable(vertices)
    certificate = partial_vc(vertex_table, override=True)
    if best_k > certificate:
        raise RuntimeError(
            f"orientation out-degree {best_k} exceeds the partial VC certificate "
            f"{certificate}"
        )

    return OneInclusionGraph(
        coords=coords,
        vertices=vertices,
        edges=tuple(edges),
        edge_coord=tuple(edge_coord),
        orientation=tuple(int(v) for v in feasible_orientation),
        max_out_degree=best_k,
        certificate=certificate,
        _lookup=lookup,
    )


def oig_predict(table: PartialTable, s_known: Sequence[tuple[int, int]], x_test: int) -> int:
    """One-shot transductive prediction for a single test instance."""
    coords = sorted({x for x, _ in s_known} | {int(x_test)})
    graph = build_one_inclusion_graph(table, coords)
    return graph.predict(s_known, x_test)


def _predict_all(table: PartialTable, subsample: LabeledSample, cache: dict) -> np.ndarray:
    """Materialize one-inclusion predictions for every instance."""
    known: dict[int, int] = {}
    for x, y in subsample:
        if known.get(x, y) != y:
            raise RealizabilityError(f"conflicting labels for instance {x}")
        known[x] = int(y)
    outs = np.empty(table.n_instances, dtype=np.int8)
    base = tuple(sorted(known))
    for x in range(table.n_instances):
        if x in known:
            outs[x] = known[x]
            continue
        coords = tuple(sorted(set(base) | {x}))
        graph = cache.get(coords)
        if graph is None:
            graph = build_one_inclusion_graph(table, coords)
            cache[coords] = graph
        outs[x] = graph.predict(tuple(known.items()), x)
    return outs


def _constant_zero(n: int, note: str) -> Predictor:
    return Predictor(np.zeros(n, dtype=np.int8), {"learner": note, "convention": "constant-0"})


def partial_realizable_learn(
    table: PartialTable,
    sample_points: Sequence[tuple[int, int]],
    params: PACParams,
    seed=None,
) -> tuple[Predictor, CompressionScheme]:
    """Boost one-inclusion predictors to a perfect majority on the sample.

    Weak learners are one-inclusion predictions trained on subsamples drawn
    from the current boosting weights.  The weak subsample size starts at
    the partial VC dimension plus one and doubles after eight failed
    validations (weighted 0-1 error above 1/3), capped at the sample size.
    Returns the majority predictor and the compression scheme behind it.
    """
    s = tuple((int(x), int(y)) for x, y in sample_points)
    n = table.n_instances
    prov = {"learner": "partial-realizable", "epsilon": params.epsilon, "delta": params.delta}

    def rebuild(segments: tuple[LabeledSample, ...]) -> Predictor:
        if not segments:
            return _constant_zero(n, "partial-realizable/reconstructed")
        outs = [_predict_all(table, seg, {}) for seg in segments]
        return Predictor(majority_outputs(outs), {"learner": "partial-realizable/reconstructed"})

    if not s:
        pred = _constant_zero(n, "partial-realizable")
        return pred, CompressionScheme((), rebuild, 0, {"rounds": 0})

    if len(table.rows_matching(s)) == 0:
        raise RealizabilityError("no partial row is consistent with the sample")

    pdim = partial_vc(table, override=True)
    cache: dict = {}
    weak_state = {"size": max(1, min(pdim + 1, len(s))), "max_size": 1}

    def weak(weights: np.ndarray, rng: np.random.Generator):
        while True:
            for _ in range(8):
                k = weak_state["size"]
                pos = rng.choice(len(s), size=k, p=weights)
                sub = tuple(s[i] for i in pos)
                outs = _predict_all(table, sub, cache)
                err = float(
                    sum(w for w, (x, y) in zip(weights, s) if outs[x] != y)
                )
                if err <= 1.0 / 3.0 + 1e-12:
                    weak_state["max_size"] = max(weak_state["max_size"], k)
                    return outs, sub
            if weak_state["size"] >= len(s):
                raise WeakLearnerBudgetError(
                    "weak one-inclusion learner failed at the full sample size"
                )
            weak_state["size"] = min(2 * weak_state["size"], len(s))

    state = alpha_boost(weak, s, zero_one_loss, seed=seed)
    maj = majority_outputs([v.outputs for v in state.voters])
    size = sum(len(sup) for sup in state.voter_supports)
    prov.update(
        rounds=state.rounds,
        weak_size=weak_state["max_size"],
        partial_dim=pdim,
        compression_size=size,
        compression_supports=[list(map(list, sup)) for sup in state.voter_supports],
    )
    scheme = CompressionScheme(
        state.voter_supports,
        rebuild,
        size,
        {"rounds": state.rounds, "weak_size": weak_state["max_size"]},
    )
    return Predictor(maj, prov), scheme


def partial_agnostic_learn(
    table: PartialTable,
    sample_points: Sequence[tuple[int, int]],
    params: PACParams,
    seed=None,
) -> tuple[Predictor, CompressionScheme]:
    """Reduce to the realizable learner on a maximum realizable subsample.

    Realizability of a subsample means a single row fits all of it, so the
    exact maximum is the best row's agreement set (undefined counts as a
    disagreement).  The returned empirical 0-1 error never exceeds the best
    row's.
    """
    s = tuple((int(x), int(y)) for x, y in sample_points)
    if not s:
        raise ValueError("agnostic learning needs at least one labeled point")
    xs = [x for x, _ in s]
    ys = np.array([y for _, y in s], dtype=np.int8)
    agree = (table.labels[:, xs] == ys).sum(axis=1)
    best = int(np.argmax(agree))
    kept = tuple(pt for pt in s if table.labels[best, pt[0]] == pt[1])
    pred, scheme = partial_realizable_learn(table, kept, params, seed)
    prov = dict(pred.provenance)
    prov.update(
        learner="partial-agnostic",
        best_row=best,
        best_row_agreement=int(agree[best]),
        kept=len(kept),
    )
    return Predictor(pred.outputs, prov), scheme
