"""PC-stable constraint-based discovery.

Skeleton search by conditional-independence tests, v-structure orientation,
Meek propagation, and a deterministic DAG extension of the resulting CPDAG
(used to seed the structure sampler).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import chi2, norm

from .data import Dataset
from .errors import InvalidInputError
from .graph import Dag

log = logging.getLogger(__name__)


def _partial_corr(corr: np.ndarray, i: int, j: int, s: Sequence[int]) -> float | None:
    idx = [i, j, *s]
    sub = corr[np.ix_(idx, idx)]
    try:
        if s:
            if np.linalg.cond(sub) > 1e12:
                return None
            prec = np.linalg.inv(sub)
            if not np.isfinite(prec).all():
                return None
            r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
        else:
            r = sub[0, 1]
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not math.isfinite(r):
        return None
    return float(r)


def fisher_z_pvalue(r: float, n: int, k: int) -> float:
    if n - k - 3 <= 0:
        raise InvalidInputError(f"Fisher-z test needs N > |S| + 3 (N={n}, |S|={k})")
    r = min(max(r, -1.0), 1.0)
    if abs(r) >= 1.0:
        return 0.0
    stat = math.sqrt(n - k - 3) * abs(math.atanh(r))
    return float(min(1.0, 2.0 * norm.sf(stat)))


def g2_pvalue(ds: Dataset, i: int, j: int, s: Sequence[int]) -> float:
    ci, ki, _ = ds.codes(i)
    cj, kj, _ = ds.codes(j)
    cfg = np.zeros(ds.n, dtype=np.int64)
    ks = 1
    for m in s:
        cm, km, _ = ds.codes(m)
        cfg = cfg * km + cm
        ks *= km
    tab = np.bincount((cfg * ki + ci) * kj + cj, minlength=ks * ki * kj).reshape(ks, ki, kj).astype(float)
    n_s = tab.sum(axis=(1, 2), keepdims=True)
    n_si = tab.sum(axis=2, keepdims=True)
    n_sj = tab.sum(axis=1, keepdims=True)
    expected = n_si * n_sj / np.where(n_s > 0, n_s, 1.0)
    mask = tab > 0
    g2 = 2.0 * float(np.sum(tab[mask] * np.log(tab[mask] / expected[mask])))
    df = (ki - 1) * (kj - 1) * ks
    return float(chi2.sf(max(g2, 0.0), df))


class CITester:
    """Conditional-independence tests on one dataset.

    All-discrete triples use the G^2 likelihood-ratio test; anything involving a
    continuous column uses Fisher's z on the partial correlation of the raw codes.
    """

    def __init__(self, ds: Dataset):
        self.ds = ds
        self.n_tests = 0
        self._corr = None

    @property
    def corr(self) -> np.ndarray:
        if self._corr is None:
            x = self.ds.rows
            sd = x.std(axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.corrcoef(x, rowvar=False) if x.shape[1] > 1 else np.ones((1, 1))
            c = np.atleast_2d(c)
            c[:, sd == 0] = 0.0
            c[sd == 0, :] = 0.0
            np.fill_diagonal(c, 1.0)
            self._corr = c
        return self._corr

    def __call__(self, i: int, j: int, s=()) -> float:
        s = sorted(s)
        if i == j or i in s or j in s:
            raise InvalidInputError("ci_test needs i != j and i, j outside the conditioning set")
        self.n_tests += 1
        sch = self.ds.schema
        if all(sch[k].is_discrete for k in (i, j, *s)):
            return g2_pvalue(self.ds, i, j, s)
        r = _partial_corr(self.corr, i, j, s)
        if r is None:
            log.warning("singular correlation submatrix for (%d, %d | %s); treating as dependent", i, j, s)
            return 0.0
        return fisher_z_pvalue(r, self.ds.n, len(s))


def ci_test(ds: Dataset, i: int, j: int, s=()) -> float:
    return CITester(ds)(i, j, s)


@dataclass
class Skeleton:
    adj: np.ndarray
    sepset: dict = field(default_factory=dict)
    n_tests: int = 0

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    def adjacent(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j])

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.d) for j in range(i + 1, self.d) if self.adj[i, j]]


def pc_skeleton(ds: Dataset, alpha: float = 0.05, max_cond: int = 3,
                tester: CITester | None = None) -> Skeleton:
    """PC-stable edge removal: neighborhoods are frozen at the start of each level."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    tester = tester or CITester(ds)
    d = ds.d
    adj = ~np.eye(d, dtype=bool)
    sepset: dict = {}
    level = 0
    while level <= max_cond:
        frozen = {i: [int(k) for k in np.flatnonzero(adj[i])] for i in range(d)}
        if all(len(frozen[i]) - 1 < level for i in range(d)):
            break
        for i in range(d):
            for j in frozen[i]:
                if j <= i or not adj[i, j]:
                    continue
                removed = False
                for side, other in ((i, j), (j, i)):
                    cand = [k for k in frozen[side] if k != other]
                    for s in itertools.combinations(cand, level):
                        if tester(i, j, s) > alpha:
                            adj[i, j] = adj[j, i] = False
                            sepset[frozenset((i, j))] = frozenset(s)
                            removed = True
                            break
                    if removed:
                        break
        level += 1
    return Skeleton(adj=adj.astype(np.uint8), sepset=sepset, n_tests=tester.n_tests)


class Cpdag:
    """Partially directed graph. ``m[i, j] = m[j, i] = 1`` is undirected ``i -- j``;
    ``m[i, j] = 1, m[j, i] = 0`` is the directed edge ``i -> j``."""

    def __init__(self, m):
        self.m = np.array(m, dtype=np.uint8)

    @property
    def d(self) -> int:
        return self.m.shape[0]

    def copy(self) -> "Cpdag":
        return Cpdag(self.m)

    def adjacent(self, i, j) -> bool:
        return bool(self.m[i, j] or self.m[j, i])

    def directed(self, i, j) -> bool:
        return bool(self.m[i, j] and not self.m[j, i])

    def undirected(self, i, j) -> bool:
        return bool(self.m[i, j] and self.m[j, i])

    def orient(self, i, j):
        self.m[i, j] = 1
        self.m[j, i] = 0

    def skeleton(self) -> np.ndarray:
        return ((self.m + self.m.T) > 0).astype(np.uint8)

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.d) for j in range(self.d) if self.directed(i, j)]

    def undirected_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.d) for j in range(i + 1, self.d) if self.undirected(i, j)]

    def __eq__(self, other):
        return isinstance(other, Cpdag) and np.array_equal(self.m, other.m)

    def __repr__(self):
        return f"Cpdag(directed={self.directed_edges()}, undirected={self.undirected_edges()})"

    def to_edge_list(self, names: Sequence[str] | None = None) -> str:
        lab = names if names is not None else [str(i) for i in range(self.d)]
        lines = [f"{lab[i]} -> {lab[j]}" for i, j in self.directed_edges()]
        lines += [f"{lab[i]} -- {lab[j]}" for i, j in self.undirected_edges()]
        return "".join(line + "\n" for line in sorted(lines))

    @classmethod
    def from_dag(cls, g: Dag) -> "Cpdag":
        """Markov equivalence class of ``g``: skeleton, v-structures, Meek closure."""
        sk = ((g.adj + g.adj.T) > 0).astype(np.uint8)
        c = Cpdag(sk)
        a = g.adj
        for k in range(g.d):
            pa = np.flatnonzero(a[:, k])
            for i, j in itertools.combinations(pa, 2):
                if not sk[i, j]:
                    c.orient(int(i), k)
                    c.orient(int(j), k)
        return meek_rules(c)


def orient_v_structures(sk: Skeleton) -> Cpdag:
    """Orient unshielded colliders; on conflict the earlier triple wins."""
    c = Cpdag(sk.adj)
    d = sk.d
    for i in range(d):
        for j in range(i + 1, d):
            if sk.adj[i, j]:
                continue
            sep = sk.sepset.get(frozenset((i, j)), frozenset())
            for k in range(d):
                if k in (i, j) or not (sk.adj[i, k] and sk.adj[j, k]) or k in sep:
                    continue
                for a in (i, j):
                    if c.undirected(a, k):
                        c.orient(a, k)
                    elif c.directed(k, a):
                        log.warning("v-structure %d -> %d <- %d conflicts with earlier orientation %d -> %d; kept earlier",
                                    i, k, j, k, a)
    return c


def meek_rules(c: Cpdag) -> Cpdag:
    """Apply Meek's rules R1-R4 until nothing changes."""
    c = c.copy()
    d = c.d
    changed = True
    while changed:
        changed = False
        for a in range(d):
            for b in range(d):
                if a == b or not c.undirected(a, b):
                    continue
                if _meek_fires(c, a, b):
                    c.orient(a, b)
                    changed = True
    return c


def _meek_fires(c: Cpdag, a: int, b: int) -> bool:
    d = c.d
    # R1: x -> a -- b, x and b non-adjacent
    for x in range(d):
        if c.directed(x, a) and not c.adjacent(x, b) and x != b:
            return True
    # R2: a -> x -> b
    for x in range(d):
        if c.directed(a, x) and c.directed(x, b):
            return True
    # R3: a -- x -> b, a -- y -> b, x and y non-adjacent
    xs = [x for x in range(d) if c.undirected(a, x) and c.directed(x, b)]
    for x, y in itertools.combinations(xs, 2):
        if not c.adjacent(x, y):
            return True
    # R4: a -- x, x -> y -> b, a adjacent to y, x and b non-adjacent
    for x in range(d):
        if x == b or not c.undirected(a, x) or c.adjacent(x, b):
            continue
        for y in range(d):
            if y not in (a, b) and c.directed(x, y) and c.directed(y, b) and c.adjacent(a, y):
                return True
    return False


def cpdag_to_dag(c: Cpdag) -> Dag:
    """Consistent DAG extension by sink elimination (Dor and Tarsi).

    Among eligible sinks the highest index is removed first, so undirected
    edges tend to point from lower to higher index.
    """
    m = c.m.astype(bool).copy()
    out = np.zeros_like(c.m)
    for i, j in c.directed_edges():
        out[i, j] = 1
    alive = set(range(c.d))
    while alive:
        chosen = None
        for x in sorted(alive, reverse=True):
            outgoing = [y for y in alive if m[x, y] and not m[y, x]]
            if outgoing:
                continue
            und = [y for y in alive if m[x, y] and m[y, x]]
            adj = [y for y in alive if y != x and (m[x, y] or m[y, x])]
            if all(m[y, z] or m[z, y] for y in und for z in adj if z != y):
                chosen = x
                break
        if chosen is None:
            log.warning("CPDAG admits no consistent extension; using its directed part only")
            return Dag(np.array([[int(c.directed(i, j)) for j in range(c.d)] for i in range(c.d)], dtype=np.uint8))
        for y in list(alive):
            if m[chosen, y] and m[y, chosen]:
                out[y, chosen] = 1
        alive.remove(chosen)
    return Dag(out)


@dataclass
class PCResult:
    skeleton: Skeleton
    cpdag: Cpdag
    alpha: float

    @property
    def n_tests(self) -> int:
        return self.skeleton.n_tests


def pc(ds: Dataset, alpha: float = 0.05, max_cond: int = 3) -> PCResult:
    sk = pc_skeleton(ds, alpha, max_cond)
    return PCResult(sk, meek_rules(orient_v_structures(sk)), alpha)
