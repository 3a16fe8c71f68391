"""Per-graph causal machinery: identification and interventional moments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import BudgetExceeded, ConfigError, ContractViolation
from .graph import (Dag, ancestors, d_separated_sets, descendants, mutilate, parents,
                    topological_order)
from .score import (Hyper, NodeParams, _params_from_posterior, node_posterior,
                    posterior_mean_params)

DEFAULT_BUDGET = 10 ** 6
MAX_SUBSET_CHECKS = 5000


@dataclass(frozen=True)
class InterventionSpec:
    """``do(assignments)`` with a deterministic cost in value units."""

    assignments: Mapping[int, float]
    cost: float = 0.0
    name: str = ""

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.assignments)

    def label(self, names: Sequence[str] | None = None) -> str:
        if self.name:
            return self.name
        lab = (lambda k: names[k]) if names is not None else str
        return ", ".join(f"{lab(k)}={v:g}" for k, v in sorted(self.assignments.items()))


def validate_spec(spec: InterventionSpec, ds: Dataset) -> None:
    if not spec.assignments:
        raise ConfigError("intervention assigns no variables")
    for k, v in spec.assignments.items():
        if not 0 <= k < ds.d:
            raise ConfigError(f"intervention node {k} out of range")
        c = ds.schema[k]
        if c.role != "intervention":
            raise ConfigError(f"column {c.name!r} is not an intervention variable")
        if c.is_discrete and (v != int(v) or not 0 <= v < c.cardinality):
            raise ConfigError(f"column {c.name!r}: value {v} outside [0, {c.cardinality})")


@dataclass(frozen=True)
class IdentificationResult:
    status: str  # "good" | "bad"
    strategy: str | None = None  # "backdoor" | "frontdoor" | "direct"
    adjustment: frozenset = frozenset()
    reason: str | None = None  # "unidentified" | "budget-exceeded"
    terms: int = 1

    @property
    def good(self) -> bool:
        return self.status == "good"


def _without_outgoing(g: Dag, nodes: Iterable[int]) -> Dag:
    a = g.adj.copy()
    for k in nodes:
        a[k, :] = 0
    return Dag(a, _checked=True)


def _as_set(x) -> set[int]:
    return {int(x)} if isinstance(x, (int, np.integer)) else {int(k) for k in x}


def is_backdoor_set(g: Dag, x, y, z) -> bool:
    """Generalized backdoor check: no member of ``z`` descends from ``x`` and
    ``z`` separates ``x`` from ``y`` once ``x``'s outgoing edges are cut."""
    xs, ys, z = _as_set(x), _as_set(y), set(z)
    if z & (xs | ys):
        return False
    if z & (descendants(g, xs) - xs):
        return False
    return d_separated_sets(_without_outgoing(g, xs), xs, ys, z)


def backdoor_set(g: Dag, x, y) -> frozenset | None:
    """Parents of ``x`` (minus ``x`` itself), verified by d-separation."""
    xs, ys = _as_set(x), _as_set(y)
    if xs & ys:
        raise ContractViolation("treatment and outcome overlap")
    z = set().union(*(parents(g, k) for k in xs)) - xs
    return frozenset(z) if is_backdoor_set(g, xs, ys, z) else None


def minimal_backdoor_set(g: Dag, x, y, weight=None) -> frozenset | None:
    """Cheapest valid adjustment set among ancestors of x and y that do not
    descend from x; ``weight(set)`` defaults to set size."""
    xs, ys = _as_set(x), _as_set(y)
    cand = sorted(ancestors(g, xs | ys) - descendants(g, xs) - ys)
    weight = weight or len
    best, best_w, checks = None, math.inf, 0
    for size in range(len(cand) + 1):
        for z in itertools.combinations(cand, size):
            checks += 1
            if checks > MAX_SUBSET_CHECKS:
                return best
            w = weight(z)
            if w < best_w and is_backdoor_set(g, xs, ys, z):
                best, best_w = frozenset(z), w
        if best is not None and weight is len:
            return best
    return best


def _blocks_directed_paths(g: Dag, xs: set, ys: set, m: set) -> bool:
    a = g.adj.copy()
    for k in m:
        a[k, :] = 0
        a[:, k] = 0
    reach = descendants(Dag(a, _checked=True), xs)
    return not (reach & ys)


def frontdoor_set(g: Dag, x, y) -> frozenset | None:
    """Smallest mediator set satisfying the front-door criterion, or None."""
    xs, ys = _as_set(x), _as_set(y)
    cand = sorted((descendants(g, xs) & ancestors(g, ys)) - xs - ys)
    if not cand:
        return None
    g_x = _without_outgoing(g, xs)
    for size in range(1, len(cand) + 1):
        for m in itertools.combinations(cand, size):
            m = set(m)
            if not _blocks_directed_paths(g, xs, ys, m):
                continue
            if not d_separated_sets(g_x, xs, m, ()):
                continue
            if not d_separated_sets(_without_outgoing(g, m), m, ys, xs):
                continue
            return frozenset(m)
    return None


def _terms(ds: Dataset | None, nodes: Iterable[int], cards: Sequence[int] | None = None) -> int:
    out = 1
    for k in nodes:
        if cards is not None:
            out *= cards[k]
        elif ds is not None and ds.schema[k].is_discrete:
            out *= ds.schema[k].cardinality
    return out


def classify(g: Dag, spec: InterventionSpec, q: Iterable[int], budget: float = DEFAULT_BUDGET,
             ds: Dataset | None = None, cards: Sequence[int] | None = None) -> IdentificationResult:
    """G-good/G-bad classification of ``(spec, q)``.

    The cost of a formula is the number of discrete configurations its
    summation runs over (continuous members count as 1). ``cards`` overrides the
    per-node cardinalities taken from ``ds``.
    """
    xs, ys = set(spec.nodes), _as_set(q)
    if xs & ys:
        raise ContractViolation("quality node is also intervened on")
    if not (descendants(g, xs) & ys):
        return IdentificationResult("good", "direct")
    # intervened nodes with no causal path to q once every intervened node is cut
    # from its parents can be dropped (do-calculus rule 3)
    xs &= ancestors(mutilate(g, xs), ys)

    def cost(z):
        return _terms(ds, z, cards)

    found = []
    z = backdoor_set(g, xs, ys)
    if z is not None:
        found.append(("backdoor", z))
    if z is None or cost(z) > budget:
        zmin = minimal_backdoor_set(g, xs, ys, weight=None if z is None else cost)
        if zmin is not None:
            found.append(("backdoor", zmin))
    for strategy, s in found:
        if cost(s) <= budget:
            return IdentificationResult("good", "direct" if not s else strategy, frozenset(s), terms=cost(s))
    m = frontdoor_set(g, xs, ys)
    if m is not None:
        found.append(("frontdoor", m))
        if cost(m) <= budget:
            return IdentificationResult("good", "frontdoor", frozenset(m), terms=cost(m))
    if not found:
        return IdentificationResult("bad", reason="unidentified")
    return IdentificationResult("bad", reason="budget-exceeded", terms=min(cost(s) for _, s in found))


# ---------------------------------------------------------------- moments


@dataclass(frozen=True)
class Moments:
    mean: float
    var: float
    within_var: float = 0.0
    between_var: float = 0.0
    mc_se: float = 0.0


def _relevant(g: Dag, xs: set, ys: set) -> tuple[Dag, list[int]]:
    gm = mutilate(g, xs)
    rel = ancestors(gm, ys)
    return gm, [k for k in topological_order(gm) if k in rel]


def _linear_moments(params: Sequence[NodeParams], order, fixed, weights, offset) -> tuple[float, float]:
    idx = {k: n for n, k in enumerate(order)}
    m = np.zeros(len(order))
    c = np.zeros((len(order), len(order)))
    for k in order:
        i = idx[k]
        if k in fixed:
            m[i] = fixed[k]
            continue
        p = params[k]
        coefs = np.zeros(len(order))
        for par in p.parents:
            coefs[idx[par]] = p.coef_of(par)[0]
        m[i] = p.intercept + coefs @ m
        row = coefs @ c
        c[i, :] = row
        c[:, i] = row
        c[i, i] = coefs @ c @ coefs + p.sigma ** 2
    w = np.zeros(len(order))
    for k, wk in weights.items():
        w[idx[k]] = wk
    return float(w @ m + offset), float(max(w @ c @ w, 0.0))


def _config_index(codes: np.ndarray, parents: Sequence[int], cards: Sequence[int]) -> np.ndarray:
    out = np.zeros(codes.shape[0], dtype=np.int64)
    for p, k in zip(parents, cards):
        out = out * k + codes[:, p]
    return out


def _discrete_moments(params, order, fixed, weights, offset, d, budget) -> tuple[float, float]:
    free = [k for k in order if k not in fixed]
    cards = [params[k].cpt.shape[1] for k in free]
    total = int(np.prod(cards)) if cards else 1
    if total > budget:
        raise BudgetExceeded(total, budget)
    codes = np.zeros((total, d), dtype=np.int64)
    if free:
        grid = np.indices(cards).reshape(len(free), -1).T
        codes[:, free] = grid
    for k, v in fixed.items():
        codes[:, k] = int(v)
    prob = np.ones(total)
    for k in free:
        p = params[k]
        j = _config_index(codes, p.parents, p.parent_cards)
        prob *= p.cpt[j, codes[:, k]]
    val = offset + sum(w * codes[:, k] for k, w in weights.items())
    mean = float(prob @ val)
    return mean, float(max(prob @ (val - mean) ** 2, 0.0))


def forward_sample(params: Sequence[NodeParams], order: Sequence[int], fixed: Mapping[int, float],
                   n: int, rng: np.random.Generator, d: int) -> np.ndarray:
    """Ancestral sampling of the nodes in ``order`` under the given parameters."""
    x = np.zeros((n, d))
    codes = np.zeros((n, d), dtype=np.int64)
    for k in order:
        if k in fixed:
            x[:, k] = fixed[k]
            codes[:, k] = int(fixed[k]) if params[k].kind == "discrete" else 0
            continue
        p = params[k]
        if p.kind == "continuous":
            mu = np.full(n, p.intercept)
            for par, width in zip(p.parents, p.parent_widths):
                b = p.coef_of(par)
                if params[par].kind == "discrete":
                    onehot = codes[:, par][:, None] == np.arange(1, width + 1)[None, :]
                    mu += onehot @ b
                else:
                    mu += x[:, par] * b[0]
            x[:, k] = mu + p.sigma * rng.standard_normal(n)
        else:
            pc = np.zeros((n, len(p.parents)), dtype=np.int64)
            for col, (par, edges) in enumerate(zip(p.parents, p.parent_bins)):
                pc[:, col] = codes[:, par] if edges is None else np.searchsorted(edges, x[:, par], side="right")
            j = np.zeros(n, dtype=np.int64)
            for col, kc in enumerate(p.parent_cards):
                j = j * kc + pc[:, col]
            cum = np.cumsum(p.cpt[j], axis=1)
            u = rng.random(n)[:, None]
            v = np.minimum((u > cum).sum(axis=1), p.cpt.shape[1] - 1)
            codes[:, k] = v
            x[:, k] = v
    return x


def moments_under_params(g: Dag, params: Sequence[NodeParams], spec: InterventionSpec,
                         weights: Mapping[int, float], offset: float = 0.0,
                         budget: float = DEFAULT_BUDGET, rng: np.random.Generator | None = None,
                         n_mc: int = 4000) -> tuple[float, float]:
    """Exact (or, for mixed families, Monte Carlo) mean and variance of
    ``offset + sum(w * q)`` under ``do(spec)`` for one parameter set."""
    xs, ys = set(spec.nodes), set(weights)
    _, order = _relevant(g, xs, ys)
    fixed = {k: v for k, v in spec.assignments.items() if k in order}
    kinds = {params[k].kind for k in order if k not in fixed}
    kinds |= {params[k].kind for k in fixed}
    if kinds <= {"continuous"}:
        return _linear_moments(params, order, fixed, weights, offset)
    if kinds == {"discrete"}:
        return _discrete_moments(params, order, fixed, weights, offset, g.d, budget)
    rng = rng if rng is not None else np.random.default_rng(0)
    x = forward_sample(params, order, fixed, n_mc, rng, g.d)
    v = offset + sum(w * x[:, k] for k, w in weights.items())
    return float(v.mean()), float(v.var())


@dataclass
class ParamDraws:
    """Posterior-mean parameters plus ``m`` posterior draws for one graph."""

    mean: list[NodeParams]
    draws: list[list[NodeParams]] = field(default_factory=list)


def param_draws(g: Dag, ds: Dataset, hyper: Hyper | None, m_draws: int, rng: np.random.Generator) -> ParamDraws:
    hyper = hyper or Hyper()
    fams = [(i, tuple(sorted(parents(g, i)))) for i in range(g.d)]
    posts = [node_posterior(ds, i, pa, hyper) for i, pa in fams]
    mean = [_params_from_posterior(ds, i, pa, post) for (i, pa), post in zip(fams, posts)]
    draws = [[_params_from_posterior(ds, i, pa, post, rng) for (i, pa), post in zip(fams, posts)]
             for _ in range(m_draws)]
    return ParamDraws(mean, draws)


def moments_from_draws(g: Dag, pd: ParamDraws, spec: InterventionSpec, weights: Mapping[int, float],
                       offset: float = 0.0, budget: float = DEFAULT_BUDGET,
                       rng: np.random.Generator | None = None) -> Moments:
    rng = rng if rng is not None else np.random.default_rng(0)
    per = np.array([moments_under_params(g, p, spec, weights, offset, budget, rng) for p in pd.draws]) \
        if pd.draws else np.zeros((0, 2))
    all_discrete = all(pd.mean[k].kind == "discrete" for k in range(g.d))
    if all_discrete or not len(per):
        mean, within = moments_under_params(g, pd.mean, spec, weights, offset, budget, rng)
    else:
        mean, within = float(per[:, 0].mean()), float(per[:, 1].mean())
    between = float(per[:, 0].var()) if len(per) > 1 else 0.0
    se = float(per[:, 0].std(ddof=1) / math.sqrt(len(per))) if len(per) > 1 else 0.0
    return Moments(mean, within + between, within, between, se)


def interventional_moments(g: Dag, ds: Dataset, spec: InterventionSpec, q, hyper: Hyper | None = None,
                           m_draws: int = 200, rng: np.random.Generator | None = None,
                           budget: float = DEFAULT_BUDGET, offset: float = 0.0) -> Moments:
    """Moments of ``v(Q)`` under ``do(spec)`` on graph ``g``.

    ``q`` is a node or a mapping node -> weight (the linear value function).
    Continuous graphs pool ``m_draws`` parameter draws by the law of total
    variance; discrete graphs take the mean from the posterior-mean CPTs and
    add the across-draw spread.
    """
    weights = {int(q): 1.0} if isinstance(q, (int, np.integer)) else dict(q)
    res = classify(g, spec, weights, budget, ds)
    if not res.good:
        raise ContractViolation(f"interventional_moments called on a G-bad pair ({res.reason})")
    rng = rng if rng is not None else np.random.default_rng(0)
    pd = param_draws(g, ds, hyper, m_draws, rng)
    return moments_from_draws(g, pd, spec, weights, offset, budget, rng)


def total_causal_coefficient(g: Dag, ds: Dataset, x: int, y: int, hyper: Hyper | None = None,
                             params: Sequence[NodeParams] | None = None) -> float:
    """Sum over directed x -> y paths of products of posterior-mean edge coefficients."""
    if x == y:
        raise ContractViolation("x and y must differ")
    reach = descendants(g, {x}) & ancestors(g, {y})
    if y not in reach:
        return 0.0
    params = params if params is not None else posterior_mean_params(g, ds, hyper)
    effect = {x: 1.0}
    for k in topological_order(g):
        if k == x or k not in reach:
            continue
        p = params[k]
        if p.kind != "continuous":
            raise ContractViolation(f"node {k} on a causal path is discrete; coefficient undefined")
        tot = 0.0
        for par in p.parents:
            if par in effect:
                b = p.coef_of(par)
                if len(b) != 1:
                    raise ContractViolation(f"parent {par} of {k} has a multi-column design")
                tot += float(b[0]) * effect[par]
        effect[k] = tot
    return float(effect[y])
