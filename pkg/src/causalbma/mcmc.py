"""Metropolis-Hastings over DAGs with the independent edge-toggle proposal.

Every free ordered pair is flipped independently with probability ``tau``.
The proposal is symmetric, so a candidate is accepted with probability
``min(1, exp(delta))`` where ``delta`` is the change in log prior plus log
marginal likelihood. Cyclic candidates have prior zero and are rejected
without being scored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, EmptyPosteriorError
from .graph import Dag, _kahn, creates_cycle
from .prior import PriorMatrix
from .score import Hyper, Scorer


def default_tau(d: int) -> float:
    """One toggled edge per proposal in expectation."""
    return 1.0 / (d * (d - 1)) if d > 1 else 0.5


@dataclass(frozen=True)
class ChainConfig:
    n_steps: int = 10_000
    tau: float | None = None
    burn_in: float = 0.25
    seed: int = 0
    init: Dag | None = None
    thinning: int = 1

    def __post_init__(self):
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        if not 0.0 <= self.burn_in < 1.0:
            raise ConfigError("burn_in must lie in [0, 1)")
        if self.thinning < 1:
            raise ConfigError("thinning must be a positive stride")

    def resolved_tau(self, d: int) -> float:
        return default_tau(d) if self.tau is None else self.tau


@dataclass
class ChainState:
    adj: np.ndarray
    local: np.ndarray  # per-node log marginal likelihood
    prior_cols: np.ndarray  # per-node log prior of incoming edges
    log_target: float


def init_state(g: Dag, scorer: Scorer, a: PriorMatrix) -> ChainState:
    adj = np.array(g.adj, dtype=np.uint8)
    local = np.array([scorer.local_adj(adj, j) for j in range(g.d)])
    prior_cols = np.array([a.column_logprob(adj, j) for j in range(g.d)])
    return ChainState(adj, local, prior_cols, float(local.sum() + prior_cols.sum()))


def propose(g, tau: float, a: PriorMatrix, rng: np.random.Generator) -> np.ndarray:
    """Candidate adjacency: each free pair flipped with probability ``tau``."""
    adj = g.adj if isinstance(g, Dag) else g
    flips = (rng.random(adj.shape) < tau) & a.free
    return adj ^ flips.astype(np.uint8)


def proposal_prob(g: np.ndarray, g2: np.ndarray, tau: float, a: PriorMatrix) -> float:
    """q(g2 | g); zero when a pinned entry differs."""
    diff = np.asarray(g) != np.asarray(g2)
    if np.any(diff & ~a.free):
        return 0.0
    k = int(diff.sum())
    m = int(a.free.sum())
    return tau ** k * (1.0 - tau) ** (m - k)


def accept_probability(delta: float) -> float:
    if delta == -math.inf:
        return 0.0
    return 1.0 if delta >= 0 else math.exp(delta)


def mh_step(state: ChainState, tau: float, scorer: Scorer, a: PriorMatrix,
            rng: np.random.Generator) -> tuple[ChainState, bool]:
    """One proposal plus accept/reject; only families whose parent sets changed are rescored."""
    cand = propose(state.adj, tau, a, rng)
    u = rng.random()
    diff = cand != state.adj
    if not diff.any():
        return state, True
    added = np.argwhere(diff & (cand == 1))
    if len(added):
        if int(diff.sum()) == 1:
            i, j = added[0]
            cyclic = creates_cycle(state.adj, int(i), int(j))
        else:
            cyclic = _kahn(cand) is None
        if cyclic:
            return state, False
    cols = np.flatnonzero(diff.any(axis=0))
    new_local = np.array([scorer.local_adj(cand, j) for j in cols])
    new_prior = np.array([a.column_logprob(cand, j) for j in cols])
    delta = float((new_local - state.local[cols]).sum() + (new_prior - state.prior_cols[cols]).sum())
    if not math.isfinite(delta) and delta < 0:
        return state, False
    if delta >= 0 or u < math.exp(delta):
        local = state.local.copy()
        local[cols] = new_local
        prior_cols = state.prior_cols.copy()
        prior_cols[cols] = new_prior
        return ChainState(cand, local, prior_cols, float(local.sum() + prior_cols.sum())), True
    return state, False


@dataclass
class PosteriorEntry:
    dag: Dag
    count: int
    log_posterior: float


@dataclass
class GraphPosterior:
    """Distinct sampled graphs with visit counts (the model-averaging weights)."""

    entries: list[PosteriorEntry]
    total: int
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    burn_in_steps: int = 0
    tau: float | None = None

    def __post_init__(self):
        if self.total <= 0 or not self.entries:
            raise EmptyPosteriorError("posterior has no kept samples")
        if sum(e.count for e in self.entries) != self.total:
            raise EmptyPosteriorError("visit counts do not sum to the kept-sample total")
        self.entries.sort(key=lambda e: (-e.count, e.dag.key))

    @property
    def d(self) -> int:
        return self.entries[0].dag.d

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.count for e in self.entries], dtype=float) / self.total

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if len(self.accepted) else float("nan")

    def edge_marginals(self) -> np.ndarray:
        out = np.zeros((self.d, self.d))
        for e, w in zip(self.entries, self.weights):
            out += w * e.dag.adj
        return out

    def to_json(self, names: Sequence[str] | None = None) -> list[dict]:
        lab = list(names) if names is not None else None
        out = []
        for e in self.entries:
            edges = [[lab[i], lab[j]] if lab else [i, j] for i, j in e.dag.edges()]
            out.append({"edges": edges, "count": e.count, "log_posterior": e.log_posterior})
        return out

    @classmethod
    def from_json(cls, obj: list[dict], d: int, names: Sequence[str] | None = None) -> "GraphPosterior":
        index = {n: k for k, n in enumerate(names)} if names is not None else None
        entries = []
        for rec in obj:
            edges = [(index[u], index[v]) if index else (int(u), int(v)) for u, v in rec["edges"]]
            entries.append(PosteriorEntry(Dag.from_edges(d, edges), int(rec["count"]), float(rec["log_posterior"])))
        return cls(entries, sum(e.count for e in entries))

    def trace_csv(self) -> str:
        rows = ["step,log_posterior,accepted"]
        rows += [f"{k},{v!r},{int(acc)}" for k, (v, acc) in enumerate(zip(self.trace.tolist(), self.accepted.tolist()))]
        return "\n".join(rows) + "\n"


def _aggregate(keys: list[bytes], states: dict, d: int) -> list[PosteriorEntry]:
    counts: dict[bytes, int] = {}
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    entries = []
    for k, c in counts.items():
        adj = np.frombuffer(k, dtype=np.uint8).reshape(d, d).copy()
        entries.append(PosteriorEntry(Dag(adj, _checked=True), c, states[k]))
    return entries


def run_chain(cfg: ChainConfig, ds: Dataset, a: PriorMatrix, hyper: Hyper | None = None,
              scorer: Scorer | None = None) -> GraphPosterior:
    d = ds.d
    if a.d != d:
        raise ConfigError(f"prior has d={a.d}, dataset has d={d}")
    scorer = scorer if scorer is not None else Scorer(ds, hyper)
    init = cfg.init
    if init is None:
        init = Dag(a.pinned_on.astype(np.uint8))
    if init.d != d:
        raise ConfigError("initial graph has the wrong dimension")
    if not a.satisfies_pins(init.adj):
        raise ConfigError("initial graph violates the hard (0/1) prior entries")
    tau = cfg.resolved_tau(d)
    rng = np.random.default_rng(cfg.seed)
    state = init_state(init, scorer, a)
    if not math.isfinite(state.log_target):
        raise ConfigError("initial graph has zero posterior density")
    burn = int(math.floor(cfg.burn_in * cfg.n_steps))
    trace = np.empty(cfg.n_steps)
    accepted = np.zeros(cfg.n_steps, dtype=bool)
    kept: list[bytes] = []
    logpost: dict[bytes, float] = {}
    for step in range(cfg.n_steps):
        state, acc = mh_step(state, tau, scorer, a, rng)
        trace[step] = state.log_target
        accepted[step] = acc
        if step >= burn and (step - burn) % cfg.thinning == 0:
            key = state.adj.tobytes()
            kept.append(key)
            logpost[key] = state.log_target
    if not kept:
        raise EmptyPosteriorError("no samples kept after burn-in; increase n_steps")
    return GraphPosterior(_aggregate(kept, logpost, d), len(kept), trace, accepted, burn, tau)


def split_rhat(chains: Sequence[np.ndarray]) -> float:
    """Split-R-hat of scalar traces (each chain halved, Gelman-Rubin on the halves)."""
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        h = len(c) // 2
        if h < 2:
            return float("nan")
        halves += [c[:h], c[len(c) - h:]]
    n = min(len(x) for x in halves)
    x = np.array([s[:n] for s in halves])
    w = x.var(axis=1, ddof=1).mean()
    b = n * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


@dataclass
class ChainDiagnostics:
    seed: int
    tau: float
    acceptance_rate: float
    split_rhat: float
    kept: int


def run_multichain(cfg: ChainConfig, ds: Dataset, a: PriorMatrix, hyper: Hyper | None = None,
                   k: int = 3, taus: Sequence[float] | None = None,
                   scorer: Scorer | None = None) -> tuple[GraphPosterior, list[ChainDiagnostics], float]:
    """Run ``k`` chains with seeds ``seed + c`` and pool their kept samples.

    Default tau ladder is 1x, 4x, 16x the base tau (capped at 0.5), cycled over
    the chains. Returns the merged posterior, per-chain diagnostics and the
    split-R-hat across all chains.
    """
    if k < 1:
        raise ConfigError("need at least one chain")
    d = ds.d
    base = cfg.resolved_tau(d)
    if taus is None:
        ladder = [min(base * f, 0.5) for f in (1, 4, 16)]
        taus = [ladder[c % 3] for c in range(k)]
    elif len(taus) != k:
        raise ConfigError("need one tau per chain")
    scorer = scorer if scorer is not None else Scorer(ds, hyper)
    posts, diags = [], []
    for c in range(k):
        sub = replace(cfg, seed=cfg.seed + c, tau=taus[c])
        p = run_chain(sub, ds, a, hyper, scorer)
        posts.append(p)
        kept = p.trace[p.burn_in_steps:]
        diags.append(ChainDiagnostics(sub.seed, taus[c], p.acceptance_rate, split_rhat([kept]), p.total))
    merged = merge_posteriors(posts)
    rhat = split_rhat([p.trace[p.burn_in_steps:] for p in posts])
    return merged, diags, rhat


def merge_posteriors(posts: Sequence[GraphPosterior]) -> GraphPosterior:
    if len(posts) == 1:
        return posts[0]
    pool: dict[bytes, PosteriorEntry] = {}
    for p in posts:
        for e in p.entries:
            if e.dag.key in pool:
                pool[e.dag.key].count += e.count
            else:
                pool[e.dag.key] = PosteriorEntry(e.dag, e.count, e.log_posterior)
    return GraphPosterior(
        list(pool.values()), sum(p.total for p in posts),
        np.concatenate([p.trace for p in posts]), np.concatenate([p.accepted for p in posts]),
        0, None,
    )
