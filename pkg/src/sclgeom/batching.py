"""Mini-batch sets, the batch interaction graph and batch-binding.

Two examples *interact* when some batch contains both of them.  The
interaction graph drives the uniqueness check: the mini-batch loss has the
orthogonal frame as its unique minimizing geometry exactly when every class
induces a connected subgraph and every pair of classes shares at least one
edge.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import LabelSet

MAX_ENUMERATION_N = 8


@dataclass(frozen=True)
class BatchSet:
    """Ordered collection of index batches over the universe ``0..n-1``."""

    batches: tuple
    n: int

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("n must be >= 1")
        out = []
        for bi, b in enumerate(self.batches):
            b = tuple(int(i) for i in b)
            if not b:
                raise ValueError(f"batch {bi} is empty")
            bad = [i for i in b if not 0 <= i < n]
            if bad:
                raise ValueError(f"batch {bi} has indices out of range 0..{n - 1}: {bad}")
            if len(set(b)) != len(b):
                raise ValueError(f"batch {bi} repeats an index")
            out.append(b)
        object.__setattr__(self, "batches", tuple(out))
        object.__setattr__(self, "n", n)

    @classmethod
    def full(cls, n: int) -> "BatchSet":
        return cls((tuple(range(n)),), n)

    def __len__(self):
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)

    def is_partition(self) -> bool:
        seen = [i for b in self.batches for i in b]
        return len(seen) == self.n and len(set(seen)) == self.n

    def union(self, other: "BatchSet") -> "BatchSet":
        if other.n != self.n:
            raise ValueError("batch sets over different universes")
        return BatchSet(self.batches + other.batches, self.n)

    def to_dict(self) -> dict:
        return {"n": self.n, "batches": [list(b) for b in self.batches]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj) -> "BatchSet":
        try:
            return cls(tuple(obj["batches"]), obj["n"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed batch set: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "BatchSet":
        return cls.from_dict(json.loads(text))


class UnionFind:
    def __init__(self, num):
        self.parents = list(range(num))
        self.rank = [0] * num

    def find(self, x):
        root = x
        while self.parents[root] != root:
            root = self.parents[root]
        while self.parents[x] != root:
            self.parents[x], x = root, self.parents[x]
        return root

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x == y:
            return
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        self.parents[y] = x
        if self.rank[x] == self.rank[y]:
            self.rank[x] += 1


@dataclass
class InteractionGraph:
    n: int
    edges: set = field(default_factory=set)
    labels: LabelSet | None = None

    def add_batch(self, batch) -> None:
        for u, v in itertools.combinations(sorted(set(batch)), 2):
            self.edges.add((u, v))

    def has_edge(self, u, v) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1) // 2

    def class_subgraph(self, c: int) -> tuple[np.ndarray, set]:
        """Vertices and edges of the subgraph induced by class ``c``."""
        if self.labels is None:
            raise ValueError("graph was built without labels")
        verts = self.labels.members(c)
        vs = set(verts.tolist())
        return verts, {e for e in self.edges if e[0] in vs and e[1] in vs}

    def components(self, vertices) -> list[list[int]]:
        """Connected components of the subgraph induced by ``vertices``."""
        vertices = [int(v) for v in vertices]
        pos = {v: i for i, v in enumerate(vertices)}
        uf = UnionFind(len(vertices))
        for u, v in self.edges:
            if u in pos and v in pos:
                uf.union(pos[u], pos[v])
        groups = {}
        for v in vertices:
            groups.setdefault(uf.find(pos[v]), []).append(v)
        return sorted(groups.values())


def build_graph(batches: BatchSet, y: LabelSet | None = None) -> InteractionGraph:
    if y is not None and y.n != batches.n:
        raise ValueError(f"batch universe has {batches.n} examples but there are {y.n} labels")
    g = InteractionGraph(batches.n, labels=y)
    for b in batches:
        g.add_batch(b)
    return g


@dataclass
class ConditionReport:
    per_class_connected: list
    missing_cross_pairs: list
    satisfied: bool
    components: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "per_class_connected": list(self.per_class_connected),
            "missing_cross_pairs": [list(p) for p in self.missing_cross_pairs],
            "satisfied": self.satisfied,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_cor_conditions(g: InteractionGraph, y: LabelSet) -> ConditionReport:
    """Check (1) each class subgraph is connected, (2) each class pair shares an edge."""
    if g.n != y.n:
        raise ValueError("graph and labels disagree on n")
    connected = []
    comps = {}
    for c in range(y.k):
        parts = g.components(y.members(c))
        comps[c] = parts
        connected.append(len(parts) == 1)

    linked = set()
    lab = y.labels
    for u, v in g.edges:
        cu, cv = int(lab[u]), int(lab[v])
        if cu != cv:
            linked.add((min(cu, cv), max(cu, cv)))
    missing = [p for p in itertools.combinations(range(y.k), 2) if p not in linked]
    return ConditionReport(connected, missing, all(connected) and not missing, comps)


def check_batches(batches: BatchSet, y: LabelSet) -> ConditionReport:
    return check_cor_conditions(build_graph(batches, y), y)


def choose_binding(y: LabelSet, seed=None) -> list[int]:
    """One example per class: the lowest index, or a seeded random member."""
    if seed is None:
        return [int(y.members(c)[0]) for c in range(y.k)]
    rng = np.random.default_rng(seed)
    return [int(rng.choice(y.members(c))) for c in range(y.k)]


def batch_binding(batches: BatchSet, y: LabelSet, binding=None, seed=None) -> BatchSet:
    """Append the binding examples (one per class) to every batch.

    Binding examples already present in a batch are not repeated.
    """
    if y.n != batches.n:
        raise ValueError("labels and batches disagree on n")
    if binding is None:
        binding = choose_binding(y, seed)
    binding = [int(i) for i in binding]
    if len(binding) != y.k:
        raise ValueError(f"binding set must have exactly k={y.k} examples, got {len(binding)}")
    if any(not 0 <= i < y.n for i in binding):
        raise ValueError("binding index out of range")
    classes = [int(y.labels[i]) for i in binding]
    if len(set(classes)) != y.k:
        raise ValueError(f"binding set must hold one example per class, got classes {classes}")
    out = []
    for b in batches:
        present = set(b)
        out.append(tuple(b) + tuple(i for i in binding if i not in present))
    return BatchSet(tuple(out), batches.n)


def _rng(seed, epoch=None):
    key = [int(seed)] if epoch is None else [int(seed), int(epoch)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def make_partition(n_or_labels, batch_size: int, scheme: str = "fixed", epoch: int = 0,
                   seed: int = 0) -> BatchSet:
    """Shuffle ``0..n-1`` and cut consecutive blocks of ``batch_size``.

    ``fixed`` draws the permutation from ``seed`` alone; ``reshuffle`` draws
    a fresh one for each ``(seed, epoch)``.  PCG64 seeded via SeedSequence is
    the generator in both cases.  The final block may be short.
    """
    n = n_or_labels.n if isinstance(n_or_labels, LabelSet) else int(n_or_labels)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch_size = min(batch_size, n)
    if scheme == "fixed":
        perm = _rng(seed).permutation(n)
    elif scheme == "reshuffle":
        perm = _rng(seed, epoch).permutation(n)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    blocks = [tuple(int(i) for i in perm[s:s + batch_size]) for s in range(0, n, batch_size)]
    return BatchSet(tuple(blocks), n)


def reshuffle_union(n, batch_size: int, epochs: int, seed: int = 0) -> BatchSet:
    """All batches seen over ``epochs`` reshuffled epochs."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    out = make_partition(n, batch_size, "reshuffle", 0, seed)
    for e in range(1, epochs):
        out = out.union(make_partition(n, batch_size, "reshuffle", e, seed))
    return out


def all_permutation_batches(n: int, b: int) -> InteractionGraph:
    """Interaction graph of every batch from every permutation of ``0..n-1``."""
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"n={n} too large to enumerate ({math.factorial(n)} permutations); cap is "
                         f"{MAX_ENUMERATION_N}")
    if not 2 <= b <= n:
        raise ValueError("need 2 <= b <= n")
    g = InteractionGraph(n)
    for perm in itertools.permutations(range(n)):
        for s in range(0, n, b):
            g.add_batch(perm[s:s + b])
    return g
