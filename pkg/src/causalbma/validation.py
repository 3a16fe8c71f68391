"""Ground-truth models and brute-force oracles.

Nothing in here reuses the estimation code paths it is meant to check: the
sampler, the exact interventional distributions and the linear closed forms
are written from scratch on plain arrays.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .causal import InterventionSpec
from .data import ColumnMeta, Dataset
from .errors import BudgetExceeded, ContractViolation, InvalidInputError
from .graph import Dag, enumerate_dags
from .prior import PriorMatrix, log_prior
from .score import Hyper, Scorer

ORACLE_BUDGET = 10 ** 6


@dataclass
class TruthNode:
    kind: str
    cardinality: int = 2
    cpt: np.ndarray | None = None  # (parent configs, cardinality); parents ascending, first most significant
    intercept: float = 0.0
    coefs: dict = field(default_factory=dict)
    sigma: float = 1.0


@dataclass
class GroundTruthModel:
    g: Dag
    nodes: list[TruthNode]
    names: list[str]
    roles: list[str] | None = None

    def __post_init__(self):
        if len(self.nodes) != self.g.d or len(self.names) != self.g.d:
            raise InvalidInputError("one node spec and one name per graph node required")
        kinds = {n.kind for n in self.nodes}
        if len(kinds) != 1 or not kinds <= {"discrete", "continuous"}:
            raise InvalidInputError("ground-truth models are all-discrete or all-linear-Gaussian")
        for i, nd in enumerate(self.nodes):
            pa = self.parents(i)
            if nd.kind == "discrete":
                q = int(np.prod([self.nodes[p].cardinality for p in pa])) if pa else 1
                cpt = np.asarray(nd.cpt, dtype=float)
                if cpt.shape != (q, nd.cardinality):
                    raise InvalidInputError(f"node {i}: cpt shape {cpt.shape}, expected {(q, nd.cardinality)}")
                if np.any(cpt < 0) or not np.allclose(cpt.sum(axis=1), 1.0, atol=1e-12):
                    raise InvalidInputError(f"node {i}: cpt rows must lie on the simplex")
                nd.cpt = cpt
            else:
                if set(nd.coefs) != set(pa):
                    raise InvalidInputError(f"node {i}: coefficients must match the parents {pa}")
                if nd.sigma < 0:
                    raise InvalidInputError(f"node {i}: sigma must be non-negative")

    @property
    def d(self) -> int:
        return self.g.d

    @property
    def discrete(self) -> bool:
        return self.nodes[0].kind == "discrete"

    def parents(self, i: int) -> list[int]:
        return [int(p) for p in np.flatnonzero(self.g.adj[:, i])]

    def schema(self) -> list[ColumnMeta]:
        roles = self.roles or ["other"] * self.d
        if self.discrete:
            return [ColumnMeta(n, "discrete", nd.cardinality, r) for n, nd, r in zip(self.names, self.nodes, roles)]
        return [ColumnMeta(n, "continuous", None, r) for n, r in zip(self.names, roles)]

    def to_json(self) -> dict:
        nodes = []
        for nd in self.nodes:
            if nd.kind == "discrete":
                nodes.append({"kind": "discrete", "cardinality": nd.cardinality, "cpt": nd.cpt.tolist()})
            else:
                nodes.append({"kind": "continuous", "intercept": nd.intercept,
                              "coefs": {str(k): v for k, v in sorted(nd.coefs.items())}, "sigma": nd.sigma})
        out = {"names": self.names, "edges": [list(e) for e in self.g.edges()], "nodes": nodes}
        if self.roles:
            out["roles"] = self.roles
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruthModel":
        names = list(obj["names"])
        g = Dag.from_edges(len(names), obj["edges"])
        nodes = []
        for rec in obj["nodes"]:
            if rec["kind"] == "discrete":
                nodes.append(TruthNode("discrete", int(rec["cardinality"]), np.array(rec["cpt"], dtype=float)))
            else:
                nodes.append(TruthNode("continuous", intercept=float(rec.get("intercept", 0.0)),
                                       coefs={int(k): float(v) for k, v in rec.get("coefs", {}).items()},
                                       sigma=float(rec.get("sigma", 1.0))))
        return cls(g, nodes, names, obj.get("roles"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruthModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _order(m: GroundTruthModel) -> list[int]:
    done, order = set(), []
    while len(order) < m.d:
        for i in range(m.d):
            if i not in done and all(p in done for p in m.parents(i)):
                done.add(i)
                order.append(i)
                break
    return order


def _row_index(m: GroundTruthModel, i: int, values) -> int:
    idx = 0
    for p in m.parents(i):
        idx = idx * m.nodes[p].cardinality + int(values[p])
    return idx


def sample_data(m: GroundTruthModel, n: int, rng: np.random.Generator) -> Dataset:
    """Ancestral sampling of ``n`` rows."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    x = np.zeros((n, m.d))
    for i in _order(m):
        nd = m.nodes[i]
        pa = m.parents(i)
        if nd.kind == "discrete":
            idx = np.zeros(n, dtype=np.int64)
            for p in pa:
                idx = idx * m.nodes[p].cardinality + x[:, p].astype(np.int64)
            probs = nd.cpt[idx]
            u = rng.random(n)
            x[:, i] = np.minimum((u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), nd.cardinality - 1)
        else:
            x[:, i] = nd.intercept + sum(nd.coefs[p] * x[:, p] for p in pa) + nd.sigma * rng.standard_normal(n)
    return Dataset(m.schema(), x)


def true_interventional(m: GroundTruthModel, spec: InterventionSpec, q: int,
                        budget: int = ORACLE_BUDGET) -> dict:
    """Exact law of node ``q`` under ``do(spec)``.

    Discrete models: full enumeration of the joint with the intervened factors
    dropped; returns ``{"dist": {value: prob}, "mean", "var"}``. Linear models:
    closed-form mean and variance from ``(I - B^T)^-1``.
    """
    fixed = {int(k): v for k, v in spec.assignments.items()}
    if q in fixed:
        raise ContractViolation("quality node is intervened on")
    if m.discrete:
        cards = [nd.cardinality for nd in m.nodes]
        total = int(np.prod([cards[i] for i in range(m.d) if i not in fixed]))
        if total > budget:
            raise BudgetExceeded(total, budget)
        dist = {v: 0.0 for v in range(cards[q])}
        ranges = [[int(fixed[i])] if i in fixed else range(cards[i]) for i in range(m.d)]
        for values in itertools.product(*ranges):
            p = 1.0
            for i in range(m.d):
                if i in fixed:
                    continue
                p *= m.nodes[i].cpt[_row_index(m, i, values), values[i]]
                if p == 0.0:
                    break
            dist[values[q]] += p
        mean = sum(v * p for v, p in dist.items())
        var = sum((v - mean) ** 2 * p for v, p in dist.items())
        return {"dist": dist, "mean": mean, "var": var}
    b = np.zeros((m.d, m.d))
    c = np.zeros(m.d)
    s2 = np.zeros(m.d)
    for i, nd in enumerate(m.nodes):
        if i in fixed:
            c[i] = fixed[i]
            continue
        c[i] = nd.intercept
        s2[i] = nd.sigma ** 2
        for p, coef in nd.coefs.items():
            b[p, i] = coef
    t = np.linalg.inv(np.eye(m.d) - b.T)
    mean = t @ c
    cov = t @ np.diag(s2) @ t.T
    return {"mean": float(mean[q]), "var": float(cov[q, q])}


@dataclass
class ExactPosterior:
    dags: list[Dag]
    probs: np.ndarray

    def prob_of(self, g: Dag) -> float:
        for h, p in zip(self.dags, self.probs):
            if h == g:
                return float(p)
        return 0.0

    def edge_probability(self, i: int, j: int) -> float:
        return float(sum(p for g, p in zip(self.dags, self.probs) if g.adj[i, j]))

    def total_variation(self, counts: dict) -> float:
        """TV distance to an empirical distribution given as ``{adjacency bytes: frequency}``."""
        tot = sum(counts.values())
        return 0.5 * float(sum(abs(counts.get(g.key, 0) / tot - p) for g, p in zip(self.dags, self.probs)))


def exact_posterior(ds: Dataset, a: PriorMatrix | None = None, hyper: Hyper | None = None) -> ExactPosterior:
    """Normalized posterior over every DAG on ``d <= 4`` nodes."""
    if ds.d > 4:
        raise InvalidInputError("exact_posterior refuses d > 4")
    a = a if a is not None else PriorMatrix.uniform(ds.d)
    scorer = Scorer(ds, hyper)
    dags = enumerate_dags(ds.d)
    logp = np.array([log_prior(g, a) for g in dags])
    ok = np.isfinite(logp)
    logt = np.full(len(dags), -np.inf)
    logt[ok] = [scorer.total(g) + lp for g, lp, k in zip(dags, logp, ok) if k]
    probs = np.exp(logt - logsumexp(logt))
    return ExactPosterior(dags, probs)


# ---------------------------------------------------------------- fixtures


def _bin_node(p_true) -> TruthNode:
    p = np.atleast_1d(np.asarray(p_true, dtype=float))
    return TruthNode("discrete", 2, np.stack([1 - p, p], axis=1))


LUCAS_NAMES = ["Anxiety", "Peer_Pressure", "Smoking", "Yellow_Fingers", "Genetics", "Lung_Cancer",
               "Allergy", "Coughing", "Fatigue", "Attention_Disorder", "Car_Accident"]


def lucas_model() -> GroundTruthModel:
    """11-node binary network in the shape of LUCAS (1 = True).

    The four families queried below carry reference ground-truth
    probabilities; the remaining CPTs are illustrative.
    """
    ix = {n: k for k, n in enumerate(LUCAS_NAMES)}
    edges = [("Anxiety", "Smoking"), ("Peer_Pressure", "Smoking"), ("Smoking", "Yellow_Fingers"),
             ("Smoking", "Lung_Cancer"), ("Genetics", "Lung_Cancer"), ("Genetics", "Attention_Disorder"),
             ("Lung_Cancer", "Coughing"), ("Allergy", "Coughing"), ("Lung_Cancer", "Fatigue"),
             ("Coughing", "Fatigue"), ("Attention_Disorder", "Car_Accident"), ("Fatigue", "Car_Accident")]
    g = Dag.from_edges(len(LUCAS_NAMES), [(ix[u], ix[v]) for u, v in edges])
    nodes = [
        _bin_node(0.64),                                    # Anxiety
        _bin_node(0.33),                                    # Peer_Pressure
        _bin_node([0.43118, 0.74591, 0.8686, 0.91576]),     # Smoking | Anxiety, Peer_Pressure
        _bin_node([0.23, 0.95]),                            # Yellow_Fingers | Smoking
        _bin_node(0.30),                                    # Genetics
        _bin_node([0.23146, 0.86996, 0.83934, 0.99351]),    # Lung_Cancer | Smoking, Genetics
        _bin_node(0.33),                                    # Allergy
        _bin_node([0.135, 0.64592, 0.7664, 0.99947]),       # Coughing | Lung_Cancer, Allergy
        _bin_node([0.35212, 0.80016, 0.56514, 0.89589]),    # Fatigue | Lung_Cancer, Coughing
        _bin_node([0.28, 0.68]),                            # Attention_Disorder | Genetics
        _bin_node([0.23, 0.60, 0.70, 0.78]),                # Car_Accident | Fatigue, Attention_Disorder
    ]
    return GroundTruthModel(g, nodes, list(LUCAS_NAMES))


@dataclass(frozen=True)
class Query:
    quality: int
    spec: InterventionSpec
    label: str


def lucas_queries() -> list[Query]:
    """The fifteen (quality, do) queries of the LUCAS recovery check."""
    ix = {n: k for k, n in enumerate(LUCAS_NAMES)}

    def rows(q, a, b, settings, prefix):
        out = []
        for n, (va, vb) in enumerate(settings, 1):
            spec = InterventionSpec({ix[a]: float(va), ix[b]: float(vb)}, name=f"{prefix}/IV{n}")
            out.append(Query(ix[q], spec, f"{prefix}/IV{n}: {a}={'TF'[1 - va]}, {b}={'TF'[1 - vb]}"))
        return out

    ff_tf_ft_tt = [(0, 0), (1, 0), (0, 1), (1, 1)]
    return (rows("Lung_Cancer", "Genetics", "Smoking", ff_tf_ft_tt, "QoI1")
            + rows("Coughing", "Allergy", "Lung_Cancer", [(1, 0), (0, 1), (1, 1)], "QoI2")
            + rows("Fatigue", "Lung_Cancer", "Coughing", ff_tf_ft_tt, "QoI3")
            + rows("Smoking", "Peer_Pressure", "Anxiety", ff_tf_ft_tt, "QoI4"))


def _linear(edges: dict, d: int, names=None, sigma=1.0) -> GroundTruthModel:
    g = Dag.from_edges(d, list(edges))
    nodes = []
    for i in range(d):
        coefs = {p: b for (p, c), b in edges.items() if c == i}
        nodes.append(TruthNode("continuous", coefs=coefs, sigma=sigma))
    return GroundTruthModel(g, nodes, names or [f"x{i}" for i in range(d)])


def chain5_model() -> GroundTruthModel:
    return _linear({(0, 1): 0.8, (1, 2): 0.8, (2, 3): 0.8, (3, 4): 0.8}, 5)


def collider5_model() -> GroundTruthModel:
    """x0 -> x1 -> x2 <- x3 <- x4: one v-structure, outer edges stay undirected."""
    return _linear({(0, 1): 0.8, (1, 2): 0.8, (3, 2): 0.8, (4, 3): 0.8}, 5)


def compelled5_model() -> GroundTruthModel:
    """x0 -> x2 <- x1, x2 -> x3 -> x4: every edge is compelled."""
    return _linear({(0, 2): 0.8, (1, 2): 0.8, (2, 3): 0.8, (3, 4): 0.8}, 5)


def confounded_triangle_model(direct: float = 2.0, confound: float = 1.0) -> GroundTruthModel:
    """s -> x (1.0), s -> y (``confound``), x -> y (``direct``); unit noise."""
    m = _linear({(0, 1): 1.0, (0, 2): confound, (1, 2): direct}, 3, ["s", "x", "y"])
    m.roles = ["other", "intervention", "quality"]
    return m


def binary5_model() -> GroundTruthModel:
    """Small binary network: x0 -> x2 <- x1, x2 -> x3, x2 -> x4."""
    g = Dag.from_edges(5, [(0, 2), (1, 2), (2, 3), (2, 4)])
    nodes = [_bin_node(0.4), _bin_node(0.6), _bin_node([0.1, 0.6, 0.5, 0.9]),
             _bin_node([0.2, 0.8]), _bin_node([0.7, 0.25])]
    return GroundTruthModel(g, nodes, [f"b{i}" for i in range(5)])


# ---------------------------------------------------------------- end to end


@dataclass
class PipelineConfig:
    n_steps: int = 5000
    burn_in: float = 0.25
    tau: float | None = None
    pc_alpha: float = 0.05
    m_draws: int = 50
    hyper: Hyper = field(default_factory=Hyper)
    budget: int = 10 ** 6


@dataclass
class QueryResult:
    label: str
    estimate: float
    sd: float
    truth: float
    good_mass: float

    @property
    def error(self) -> float:
        return abs(self.estimate - self.truth)

    @property
    def covered(self) -> bool:
        return self.error <= 2 * self.sd


def end_to_end_check(truth: GroundTruthModel, n: int, queries: Sequence[Query],
                     cfg: PipelineConfig | None = None, seed: int = 0) -> list[QueryResult]:
    """sample -> PC start -> MH sampling -> model-averaged interventions, per query."""
    from .decision import BadValueModel, ValueFunction, evaluate_interventions
    from .mcmc import ChainConfig, run_chain
    from .pc import cpdag_to_dag, pc

    cfg = cfg or PipelineConfig()
    rng = np.random.default_rng(seed)
    ds = sample_data(truth, n, rng)
    init = cpdag_to_dag(pc(ds, cfg.pc_alpha).cpdag)
    prior = PriorMatrix.uniform(ds.d)
    scorer = Scorer(ds, cfg.hyper)
    post = run_chain(ChainConfig(n_steps=cfg.n_steps, tau=cfg.tau, burn_in=cfg.burn_in, seed=seed, init=init),
                     ds, prior, cfg.hyper, scorer)
    results = []
    for qi, qu in enumerate(queries):
        roles = ["other"] * ds.d
        roles[qu.quality] = "quality"
        for k in qu.spec.nodes:
            roles[k] = "intervention"
        view = ds.with_roles(roles)
        vf = ValueFunction({qu.quality: 1.0})
        rep = evaluate_interventions(post, view, [qu.spec], vf, BadValueModel.default(view, vf), cfg.hyper,
                                     cfg.m_draws, seed=seed * 1000 + qi, budget=cfg.budget)[0]
        t = true_interventional(truth, qu.spec, qu.quality)["mean"]
        results.append(QueryResult(qu.label, rep.e_value, math.sqrt(rep.risk), t, rep.good_mass))
    return results
