"""Dense adjacency-matrix DAGs.

``adj[i, j] == 1`` encodes the directed edge ``i -> j``. Node sets are plain
``frozenset`` objects of integer indices.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, InvalidInputError

NodeSet = frozenset


def _as_matrix(adj) -> np.ndarray:
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"adjacency must be square, got shape {a.shape}")
    if a.size and not np.isin(a, (0, 1)).all():
        raise InvalidInputError("adjacency entries must be 0 or 1")
    return a.astype(np.uint8)


def is_acyclic(adj) -> bool:
    """Return True iff ``adj`` admits a topological order (Kahn elimination)."""
    a = _as_matrix(adj)
    if np.any(np.diag(a)):
        return False
    return _kahn(a) is not None


def _kahn(a: np.ndarray) -> list[int] | None:
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(np.int64)
    order = []
    # ascending-index tie-break: always pop the smallest available root
    ready = [i for i in range(d) if indeg[i] == 0]
    while ready:
        i = ready.pop(0)
        order.append(i)
        changed = False
        for j in np.flatnonzero(a[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
                changed = True
        if changed:
            ready.sort()
    return order if len(order) == d else None


def creates_cycle(adj: np.ndarray, i: int, j: int) -> bool:
    """Would adding ``i -> j`` to the acyclic ``adj`` close a directed cycle?

    True iff ``i`` is reachable from ``j``. Used as the single-edge shortcut in
    the sampler hot path.
    """
    if i == j:
        return True
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [j]
    seen[j] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if v == i:
                return True
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return False


class Dag:
    """Immutable DAG over nodes ``0..d-1``.

    Parameters
    ----------
    adj : array-like
        Square 0/1 matrix, zero diagonal, acyclic.
    """

    __slots__ = ("adj", "_key", "_order")

    def __init__(self, adj, *, _checked: bool = False):
        if _checked:
            a = adj
        else:
            a = _as_matrix(adj)
            if np.any(np.diag(a)):
                raise InvalidInputError("self-loops are not allowed")
            if _kahn(a) is None:
                raise InvalidInputError("adjacency contains a directed cycle")
            a = a.copy()
        a.setflags(write=False)
        self.adj = a
        self._key = None
        self._order = None

    @classmethod
    def empty(cls, d: int) -> "Dag":
        return cls(np.zeros((d, d), dtype=np.uint8), _checked=True)

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[Sequence[int]]) -> "Dag":
        a = np.zeros((d, d), dtype=np.uint8)
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise InvalidInputError(f"edge ({i}, {j}) out of range for d={d}")
            a[i, j] = 1
        return cls(a)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def key(self) -> bytes:
        if self._key is None:
            self._key = self.adj.tobytes()
        return self._key

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def n_edges(self) -> int:
        return int(self.adj.sum())

    def __eq__(self, other):
        return isinstance(other, Dag) and self.d == other.d and self.key == other.key

    def __hash__(self):
        return hash((self.d, self.key))

    def __repr__(self):
        return f"Dag(d={self.d}, edges={self.edges()})"

    def toggled(self, i: int, j: int) -> np.ndarray:
        """Copy of the adjacency with entry (i, j) flipped; may be cyclic."""
        a = self.adj.copy()
        a[i, j] ^= 1
        return a

    def to_json(self) -> dict:
        return {"d": self.d, "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_json(cls, obj: dict) -> "Dag":
        return cls.from_edges(int(obj["d"]), obj["edges"])

    def to_edge_list(self, names: Sequence[str] | None = None) -> str:
        lab = names if names is not None else [str(i) for i in range(self.d)]
        return "".join(f"{lab[i]} -> {lab[j]}\n" for i, j in self.edges())

    @classmethod
    def from_edge_list(cls, text: str, d: int, names: Sequence[str] | None = None) -> "Dag":
        index = {n: k for k, n in enumerate(names)} if names is not None else None
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "->" not in line:
                raise InvalidInputError(f"line {lineno}: expected 'i -> j'")
            u, v = (s.strip() for s in line.split("->", 1))
            try:
                edges.append((index[u], index[v]) if index else (int(u), int(v)))
            except (KeyError, ValueError):
                raise InvalidInputError(f"line {lineno}: unknown node in {line!r}") from None
        return cls.from_edges(d, edges)


def _check_node(g: Dag, i: int) -> int:
    if not 0 <= i < g.d:
        raise InvalidInputError(f"node {i} out of range for d={g.d}")
    return int(i)


def topological_order(g: Dag) -> list[int]:
    if g._order is None:
        order = _kahn(np.asarray(g.adj))
        if order is None:
            raise ContractViolation("topological_order called on a cyclic graph")
        g._order = tuple(order)
    return list(g._order)


def parents(g: Dag, i: int) -> NodeSet:
    i = _check_node(g, i)
    return frozenset(int(j) for j in np.flatnonzero(g.adj[:, i]))


def children(g: Dag, i: int) -> NodeSet:
    i = _check_node(g, i)
    return frozenset(int(j) for j in np.flatnonzero(g.adj[i]))


def _reach(adj: np.ndarray, start: Iterable[int]) -> set[int]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            v = int(v)
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def descendants(g: Dag, nodes: Iterable[int]) -> set[int]:
    """Nodes reachable from ``nodes`` by directed paths, ``nodes`` included."""
    return _reach(np.asarray(g.adj), nodes)


def ancestors(g: Dag, nodes: Iterable[int]) -> set[int]:
    """Nodes with a directed path into ``nodes``, ``nodes`` included."""
    return _reach(np.asarray(g.adj).T, nodes)


def d_separated(g: Dag, x: int, y: int, z: Iterable[int] = ()) -> bool:
    """Test ``x _||_ y | z`` via the moralized ancestral graph."""
    x, y = _check_node(g, x), _check_node(g, y)
    z = frozenset(_check_node(g, k) for k in z)
    if x == y or x in z or y in z:
        raise InvalidInputError("x, y and z must be pairwise disjoint")
    return d_separated_sets(g, {x}, {y}, z)


def d_separated_sets(g: Dag, xs: Iterable[int], ys: Iterable[int], z: Iterable[int] = ()) -> bool:
    """Set version of :func:`d_separated`; the three sets must be disjoint."""
    xs, ys, z = set(xs), set(ys), set(z)
    if xs & ys or xs & z or ys & z:
        raise InvalidInputError("x, y and z must be pairwise disjoint")
    keep = sorted(ancestors(g, xs | ys | z))
    sub = np.asarray(g.adj)[np.ix_(keep, keep)].astype(bool)
    moral = sub | sub.T
    for c in range(len(keep)):
        pa = np.flatnonzero(sub[:, c])
        for a, b in itertools.combinations(pa, 2):
            moral[a, b] = moral[b, a] = True
    pos = {n: k for k, n in enumerate(keep)}
    blocked = {pos[k] for k in z}
    targets = {pos[k] for k in ys}
    seen = {pos[k] for k in xs}
    stack = list(seen)
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(moral[u]):
            v = int(v)
            if v in targets:
                return False
            if v not in seen and v not in blocked:
                seen.add(v)
                stack.append(v)
    return True


def mutilate(g: Dag, nodes: Iterable[int]) -> Dag:
    """Remove every edge pointing into ``nodes`` (the do-operator surgery)."""
    a = g.adj.copy()
    for k in nodes:
        a[:, k] = 0
    return Dag(a, _checked=True)


def enumerate_dags(d: int) -> list[Dag]:
    """All labeled DAGs on ``d <= 5`` nodes, ordered by adjacency bytes.

    Brute force over every off-diagonal 0/1 matrix; a matrix is kept when it
    is nilpotent (``A**d == 0``), which is equivalent to acyclicity.
    """
    if d > 5:
        raise InvalidInputError("enumerate_dags refuses d > 5")
    if d < 1:
        raise InvalidInputError("d must be positive")
    off = [(i, j) for i in range(d) for j in range(d) if i != j]
    m = len(off)
    rows, cols = np.array([p[0] for p in off], dtype=int), np.array([p[1] for p in off], dtype=int)
    out = []
    chunk = 1 << 15
    total = 1 << m
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(m)) & 1).astype(np.int32)
        mats = np.zeros((len(codes), d, d), dtype=np.int32)
        if m:
            mats[:, rows, cols] = bits
        p = mats.copy()
        for _ in range(d - 1):
            p = np.minimum(p @ mats, 1)
        ok = ~p.reshape(len(codes), -1).any(axis=1)
        for mat in mats[ok]:
            out.append(Dag(mat.astype(np.uint8), _checked=True))
    out.sort(key=lambda g: g.key)
    return out


def skeleton_and_vstructures(g: Dag) -> tuple[frozenset, frozenset]:
    """Markov-equivalence signature: undirected skeleton plus v-structures."""
    a = np.asarray(g.adj)
    skel = frozenset(frozenset((int(i), int(j))) for i, j in zip(*np.nonzero(a)))
    vs = set()
    for k in range(g.d):
        pa = np.flatnonzero(a[:, k])
        for i, j in itertools.combinations(pa, 2):
            if not a[i, j] and not a[j, i]:
                vs.add((int(i), k, int(j)))
    return skel, frozenset(vs)


def dumps_json(g: Dag) -> str:
    return json.dumps(g.to_json(), sort_keys=True)
