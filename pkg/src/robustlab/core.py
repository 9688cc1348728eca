"""Finite instance spaces, perturbation maps, hypothesis tables, and exact risks.

Everything downstream runs on these types.  Instances are dense indices
``0..size-1``, hypothesis classes are explicit boolean label tables,
distributions are exact atom lists, and every risk is an exact weighted sum
(never Monte Carlo).  All types are immutable after construction and safe to
share across threads; sampling is pure given ``(distribution, m, seed)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "PROB_TOL",
    "LabeledSample",
    "UnlabeledSample",
    "RealizabilityError",
    "SizeGuardError",
    "InstanceSpace",
    "Perturbation",
    "HypothesisTable",
    "Distribution",
    "Predictor",
    "PACParams",
    "ProblemInstance",
    "robust_loss",
    "zero_one_loss",
    "robust_risk",
    "risk",
    "empirical_robust_risk",
    "empirical_risk",
    "sample",
    "sample_marginal",
    "constant_on_sets",
    "consistent_row_indices",
    "restrict_consistent",
    "load_instance",
    "save_instance",
]

# Distributions must sum to one within this tolerance.  Fixed once so that
# instance files stay portable across machines.
PROB_TOL = 1e-9

LabeledSample = tuple[tuple[int, int], ...]
UnlabeledSample = tuple[int, ...]


class RealizabilityError(ValueError):
    """A learner's realizability precondition does not hold on its input."""


class SizeGuardError(ValueError):
    """An exhaustive search was refused because the instance is too large."""


@dataclass(frozen=True)
class InstanceSpace:
    """A finite instance space; points are referred to by index everywhere."""

    size: int
    names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"instance space needs at least one point, got {self.size}")
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))
            if len(self.names) != self.size:
                raise ValueError(
                    f"got {len(self.names)} names for {self.size} instances"
                )

    def name(self, x: int) -> str:
        return self.names[x] if self.names is not None else str(x)


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Per-instance attack sets: ``sets[x]`` is the set reachable from x.

    The only structural requirement is ``x in sets[x]``; sets may otherwise
    overlap arbitrarily.  Sets are stored as sorted tuples of indices.
    """

    sets: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.sets)
        if n == 0:
            raise ValueError("perturbation must cover a non-empty instance space")
        canon = []
        for x, s in enumerate(self.sets):
            pts = tuple(sorted({int(z) for z in s}))
            if not pts:
                raise ValueError(f"perturbation set of instance {x} is empty")
            if pts[0] < 0 or pts[-1] >= n:
                raise ValueError(f"perturbation set of instance {x} leaves the space")
            if x not in pts:
                raise ValueError(f"instance {x} is missing from its own perturbation set")
            canon.append(pts)
        object.__setattr__(self, "sets", tuple(canon))

    @classmethod
    def identity(cls, size: int) -> "Perturbation":
        return cls(tuple((x,) for x in range(size)))

    @property
    def size(self) -> int:
        return len(self.sets)

    def __getitem__(self, x: int) -> tuple[int, ...]:
        return self.sets[x]


class HypothesisTable:
    """Explicit boolean label matrix; rows are hypotheses, columns instances.

    Rows must be distinct: dual-class and dimension computations assume
    distinct behaviours.  ``restrict_consistent`` may legitimately produce an
    empty class, which is representable via ``allow_empty``.
    """

    __slots__ = ("labels",)

    def __init__(self, labels, *, allow_empty: bool = False) -> None:
        arr = np.ascontiguousarray(labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("hypothesis table must be a 2-d matrix")
        if arr.shape[1] < 1:
            raise ValueError("hypothesis table needs at least one instance column")
        if arr.shape[0] < 1 and not allow_empty:
            raise ValueError("hypothesis table needs at least one row")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("hypothesis labels must be 0 or 1")
        if arr.shape[0] > 1:
            seen = set()
            for i in range(arr.shape[0]):
                key = arr[i].tobytes()
                if key in seen:
                    raise ValueError(f"duplicate hypothesis row at index {i}")
                seen.add(key)
        arr.setflags(write=False)
        self.labels = arr

    @property
    def n_rows(self) -> int:
        return self.labels.shape[0]

    @property
    def n_instances(self) -> int:
        return self.labels.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.n_rows == 0

    def row(self, i: int) -> np.ndarray:
        return self.labels[i]

    def dual(self) -> "HypothesisTable":
        """Transpose of the table with duplicate rows removed.

        The rows of the dual are the point-evaluation functions h -> h(x),
        deduplicated in first-occurrence order.
        """
        t = self.labels.T
        seen: dict[bytes, None] = {}
        keep = []
        for i in range(t.shape[0]):
            key = t[i].tobytes()
            if key not in seen:
                seen[key] = None
                keep.append(i)
        return HypothesisTable(t[keep])

    def __repr__(self) -> str:
        return f"HypothesisTable({self.n_rows} rows x {self.n_instances} instances)"


@dataclass(frozen=True)
class Distribution:
    """Exact atom list over (instance, label) pairs.

    Probabilities are strictly positive and sum to one within ``PROB_TOL``;
    risks computed against a Distribution are exact sums, never estimates.
    """

    atoms: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        canon = []
        seen = set()
        total = 0.0
        for x, y, p in self.atoms:
            x, y, p = int(x), int(y), float(p)
            if y not in (0, 1):
                raise ValueError(f"label of atom ({x}, {y}) must be 0 or 1")
            if p <= 0:
                raise ValueError(f"atom ({x}, {y}) has non-positive probability {p}")
            if (x, y) in seen:
                raise ValueError(f"duplicate atom ({x}, {y})")
            seen.add((x, y))
            total += p
            canon.append((x, y, p))
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "atoms", tuple(canon))

    @classmethod
    def uniform(cls, pairs: Iterable[tuple[int, int]]) -> "Distribution":
        pairs = list(pairs)
        p = 1.0 / len(pairs)
        return cls(tuple((x, y, p) for x, y in pairs))

    def support_x(self) -> tuple[int, ...]:
        return tuple(sorted({x for x, _, _ in self.atoms}))

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, _, p in self.atoms])


@dataclass(frozen=True)
class PACParams:
    """Accuracy/confidence budget, with the approximation multiplier alpha.

    ``alpha_factor`` is 1 for the standard agnostic contract and 3 for the
    relaxed contract the semi-supervised learner satisfies agnostically.
    """

    epsilon: float
    delta: float
    alpha_factor: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.alpha_factor < 1:
            raise ValueError(f"alpha_factor must be >= 1, got {self.alpha_factor}")

    def split_for_stages(self) -> "PACParams":
        """Per-stage budget used by the two-stage semi-supervised learner."""
        return PACParams(self.epsilon / 3, self.delta / 2, self.alpha_factor)


@dataclass(frozen=True, eq=False)
class Predictor:
    """A materialized total labeling of the instance space plus provenance."""

    outputs: np.ndarray
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.outputs, dtype=np.int8)
        if arr.ndim != 1:
            raise ValueError("predictor outputs must be a flat vector")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("predictor outputs must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "outputs", arr)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def __call__(self, x: int) -> int:
        return int(self.outputs[x])


def _as_outputs(h) -> np.ndarray:
    if isinstance(h, Predictor):
        return h.outputs
    if isinstance(h, np.ndarray):
        return h
    return np.asarray(h)


def _check_index(x: int, n: int) -> None:
    if not 0 <= x < n:
        raise ValueError(f"instance index {x} outside space of size {n}")


def robust_loss(h, perturbation: Perturbation, x: int, y: int) -> int:
    """1 iff some point of the attack set of x is labeled differently from y."""
    outs = _as_outputs(h)
    _check_index(x, len(outs))
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    zs = list(perturbation[x])
    return int((outs[zs] != y).any())


def zero_one_loss(h, x: int, y: int) -> int:
    outs = _as_outputs(h)
    _check_index(x, len(outs))
    return int(outs[x] != y)


def robust_risk(h, perturbation: Perturbation, dist: Distribution) -> float:
    """Exact robust risk: sum of atom probability times robust loss."""
    outs = _as_outputs(h)
    total = 0.0
    for x, y, p in dist.atoms:
        zs = list(perturbation[x])
        if (outs[zs] != y).any():
            total += p
    return total


def risk(h, dist: Distribution) -> float:
    """Exact 0-1 risk against an atom-list distribution."""
    outs = _as_outputs(h)
    return float(sum(p for x, y, p in dist.atoms if outs[x] != y))


def empirical_robust_risk(h, perturbation: Perturbation, s: Sequence[tuple[int, int]]) -> float:
    if len(s) == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    outs = _as_outputs(h)
    wrong = 0
    for x, y in s:
        zs = list(perturbation[x])
        if (outs[zs] != y).any():
            wrong += 1
    return wrong / len(s)


def empirical_risk(h, s: Sequence[tuple[int, int]]) -> float:
    if len(s) == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    outs = _as_outputs(h)
    return sum(int(outs[x] != y) for x, y in s) / len(s)


def sample(dist: Distribution, m: int, seed) -> LabeledSample:
    """m i.i.d. draws from the distribution; deterministic given the seed.

    ``sample_marginal`` with the same seed drops the labels of exactly these
    draws, which lets experiments pair labeled and unlabeled views.
    """
    if m < 0:
        raise ValueError(f"sample size must be non-negative, got {m}")
    rng = np.random.default_rng(seed)
    probs = dist.probabilities()
    idx = rng.choice(len(dist.atoms), size=m, p=probs)
    return tuple((dist.atoms[i][0], dist.atoms[i][1]) for i in idx)


def sample_marginal(dist: Distribution, m: int, seed) -> UnlabeledSample:
    """Marginal draws: the same points ``sample`` yields, labels dropped."""
    return tuple(x for x, _ in sample(dist, m, seed))


def constant_on_sets(table: HypothesisTable, perturbation: Perturbation) -> tuple[np.ndarray, np.ndarray]:
    """(C0, C1) boolean matrices: ``Cy[r, x]`` iff row r is constant y on U(x)."""
    if perturbation.size != table.n_instances:
        raise ValueError("perturbation and table cover different spaces")
    labels = table.labels
    n = table.n_instances
    c0 = np.empty((table.n_rows, n), dtype=bool)
    c1 = np.empty((table.n_rows, n), dtype=bool)
    for x in range(n):
        sub = labels[:, list(perturbation[x])]
        c1[:, x] = sub.all(axis=1)
        c0[:, x] = (1 - sub).all(axis=1)
    return c0, c1


def consistent_row_indices(
    table: HypothesisTable, perturbation: Perturbation, support: Iterable[int]
) -> np.ndarray:
    """Indices of rows constant on every attack set of the support."""
    pts = sorted({int(x) for x in support})
    if not pts:
        raise ValueError("support must be non-empty")
    for x in pts:
        _check_index(x, table.n_instances)
    c0, c1 = constant_on_sets(table, perturbation)
    ok = (c0[:, pts] | c1[:, pts]).all(axis=1)
    return np.flatnonzero(ok)


def restrict_consistent(
    table: HypothesisTable, perturbation: Perturbation, support: Iterable[int]
) -> HypothesisTable:
    """Subclass of rows that are robustly self-consistent on the support.

    The result may be empty; agnostic callers need to observe emptiness, so
    an empty class is returned as a value rather than raised as an error.
    """
    idx = consistent_row_indices(table, perturbation, support)
    return HypothesisTable(table.labels[idx], allow_empty=True)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """The universal input bundle: space, attack map, class, distribution."""

    space: InstanceSpace
    perturbation: Perturbation
    hypotheses: HypothesisTable
    distribution: Distribution | None = None

    def __post_init__(self) -> None:
        if self.perturbation.size != self.space.size:
            raise ValueError("perturbation does not cover the instance space")
        if self.hypotheses.n_instances != self.space.size:
            raise ValueError("hypothesis table does not cover the instance space")
        if self.distribution is not None:
            for x, _, _ in self.distribution.atoms:
                _check_index(x, self.space.size)

    def to_json_dict(self) -> dict:
        doc: dict = {
            "space": {"size": self.space.size},
            "perturbation": {
                str(x): list(self.perturbation[x]) for x in range(self.space.size)
            },
            "hypotheses": self.hypotheses.labels.astype(int).tolist(),
        }
        if self.space.names is not None:
            doc["space"]["names"] = list(self.space.names)
        if self.distribution is not None:
            doc["distribution"] = [[x, y, p] for x, y, p in self.distribution.atoms]
        return doc

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "ProblemInstance":
        size = int(doc["space"]["size"])
        names = doc["space"].get("names")
        space = InstanceSpace(size, tuple(names) if names is not None else None)
        pert_doc = doc["perturbation"]
        sets = tuple(tuple(pert_doc[str(x)]) for x in range(size))
        dist = None
        if doc.get("distribution"):
            dist = Distribution(tuple((int(x), int(y), float(p)) for x, y, p in doc["distribution"]))
        return cls(space, Perturbation(sets), HypothesisTable(doc["hypotheses"]), dist)


def save_instance(instance: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_json_dict(), indent=1) + "\n")


def load_instance(path) -> ProblemInstance:
    return ProblemInstance.from_json_dict(json.loads(Path(path).read_text()))
