"""Conjugate marginal likelihoods, parameter posteriors and parameter draws.

Discrete families use the Dirichlet-multinomial (BDeu) score. Continuous
families use the Normal-Inverse-Wishart (BGe) score, computed as the score of
the family block minus the score of the parent block, so both families are
likelihood equivalent.
"""

from __future__ import annotations

import hashlib
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import gammaln, multigammaln
from scipy.stats import invwishart

from .data import ContinuousStats, Dataset, DiscreteStats, sufficient_stats
from .errors import ConfigError, DataError, InvalidInputError
from .graph import Dag, parents as graph_parents

LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class ContinuousHyper:
    """Normal-Inverse-Wishart hyperparameters.

    ``alpha_w`` defaults to ``D + 2`` and ``t`` to
    ``alpha_mu * (alpha_w - D - 1) / (alpha_mu + 1)``, where ``D`` is the width of
    the dataset's Gaussian design; the prior scale matrix is ``t * I`` and the
    prior mean is 0.
    """

    alpha_mu: float = 1.0
    alpha_w: float | None = None
    t: float | None = None

    def resolve(self, dim: int) -> tuple[float, float, float]:
        if not self.alpha_mu > 0:
            raise ConfigError("alpha_mu must be positive")
        aw = float(dim + 2) if self.alpha_w is None else float(self.alpha_w)
        if not aw > dim - 1:
            raise ConfigError(f"alpha_w must exceed D - 1 = {dim - 1}, got {aw}")
        t = self.alpha_mu * (aw - dim - 1) / (self.alpha_mu + 1) if self.t is None else float(self.t)
        if not t > 0:
            raise ConfigError(f"prior scale t must be positive, got {t} (raise alpha_w above D + 1)")
        return float(self.alpha_mu), aw, t


@dataclass(frozen=True)
class DiscreteHyper:
    alpha_ess: float = 1.0

    def __post_init__(self):
        if not self.alpha_ess > 0:
            raise ConfigError("alpha_ess must be positive")


@dataclass(frozen=True)
class Hyper:
    continuous: ContinuousHyper = field(default_factory=ContinuousHyper)
    discrete: DiscreteHyper = field(default_factory=DiscreteHyper)

    @classmethod
    def from_dict(cls, obj: dict | None) -> "Hyper":
        obj = obj or {}
        try:
            return cls(
                ContinuousHyper(
                    alpha_mu=float(obj.get("alpha_mu", 1.0)),
                    alpha_w=None if obj.get("alpha_w") is None else float(obj["alpha_w"]),
                    t=None if obj.get("t") is None else float(obj["t"]),
                ),
                DiscreteHyper(alpha_ess=float(obj.get("alpha_ess", 1.0))),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad hyperparameters: {exc}") from None

    @property
    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- posteriors


@dataclass(frozen=True)
class DirichletPosterior:
    alpha: np.ndarray  # (q, r)
    parent_cards: tuple[int, ...]

    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class NIWPosterior:
    """NIW over the joint block ``[parent design columns, target]``.

    Covariance ~ InvWishart(df, scale); mean | covariance ~ N(nu, covariance / alpha_mu).
    """

    alpha_mu: float
    df: float
    nu: np.ndarray
    scale: np.ndarray
    parent_widths: tuple[int, ...]

    def update(self, stats: ContinuousStats) -> "NIWPosterior":
        n = stats.n
        if n == 0:
            return self
        xbar = stats.mean
        diff = self.nu - xbar
        scale = self.scale + stats.scatter + (self.alpha_mu * n / (self.alpha_mu + n)) * np.outer(diff, diff)
        nu = (self.alpha_mu * self.nu + n * xbar) / (self.alpha_mu + n)
        return NIWPosterior(self.alpha_mu + n, self.df + n, nu, (scale + scale.T) / 2, self.parent_widths)

    def mean_cov(self) -> np.ndarray:
        l = len(self.nu)
        if self.df > l + 1:
            return self.scale / (self.df - l - 1)
        return self.scale / self.df


def _niw_prior(ds: Dataset, hyper: Hyper, l: int, parent_widths) -> NIWPosterior:
    alpha_mu, aw, t = hyper.continuous.resolve(ds.gaussian_dim)
    return NIWPosterior(alpha_mu, aw - ds.gaussian_dim + l, np.zeros(l), t * np.eye(l), tuple(parent_widths))


def _dirichlet_prior(stats: DiscreteStats, hyper: Hyper) -> np.ndarray:
    q, r = stats.counts.shape
    return np.full((q, r), hyper.discrete.alpha_ess / (q * r))


def node_posterior(ds: Dataset, target: int, parents: Iterable[int], hyper: Hyper):
    stats = sufficient_stats(ds, target, parents)
    if isinstance(stats, DiscreteStats):
        return DirichletPosterior(_dirichlet_prior(stats, hyper) + stats.counts, stats.parent_cards)
    l = stats.xtx.shape[0] - 1
    return _niw_prior(ds, hyper, l, stats.parent_widths).update(stats)


# ---------------------------------------------------------------- scores


def bdeu_from_counts(counts: np.ndarray, alpha_ess: float) -> float:
    q, r = counts.shape
    a_jk = alpha_ess / (q * r)
    a_j = alpha_ess / q
    n_j = counts.sum(axis=1)
    return float(
        np.sum(gammaln(a_j) - gammaln(a_j + n_j))
        + np.sum(gammaln(a_jk + counts) - gammaln(a_jk))
    )


def _bge_block(n: int, alpha_mu: float, df0: float, t_block: np.ndarray, r_block: np.ndarray) -> float:
    l = t_block.shape[0]
    if l == 0:
        return 0.0
    s_t, ld_t = np.linalg.slogdet(t_block)
    s_r, ld_r = np.linalg.slogdet(r_block)
    if s_t <= 0 or s_r <= 0:
        raise np.linalg.LinAlgError("scale matrix not positive definite")
    return float(
        -0.5 * n * l * LOG_PI
        + 0.5 * l * (math.log(alpha_mu) - math.log(alpha_mu + n))
        + multigammaln(0.5 * (df0 + n), l) - multigammaln(0.5 * df0, l)
        + 0.5 * df0 * ld_t - 0.5 * (df0 + n) * ld_r
    )


def _bge_family(ds: Dataset, stats: ContinuousStats, hyper: Hyper, target: int, parents) -> float:
    alpha_mu, aw, t = hyper.continuous.resolve(ds.gaussian_dim)
    dim = ds.gaussian_dim
    l = stats.xtx.shape[0] - 1
    lp = l - 1
    n = stats.n
    xbar = stats.mean
    r = t * np.eye(l) + stats.scatter + (alpha_mu * n / (alpha_mu + n)) * np.outer(xbar, xbar)
    try:
        full = _bge_block(n, alpha_mu, aw - dim + l, t * np.eye(l), r)
        base = _bge_block(n, alpha_mu, aw - dim + lp, t * np.eye(lp), r[:lp, :lp])
    except np.linalg.LinAlgError:
        raise DataError(f"singular posterior scale for family {target} <- {sorted(parents)}") from None
    return full - base


def node_log_marginal(ds: Dataset, target: int, parents: Iterable[int], hyper: Hyper) -> float:
    """Closed-form log marginal likelihood of one node given its parents."""
    parents = tuple(sorted(set(parents)))
    stats = sufficient_stats(ds, target, parents)
    if isinstance(stats, DiscreteStats):
        return bdeu_from_counts(stats.counts, hyper.discrete.alpha_ess)
    return _bge_family(ds, stats, hyper, target, parents)


class Scorer:
    """Family-score cache for one (dataset, hyper) pair.

    Keys are ``(fingerprint, target, parents, hyper digest)``. ``max_entries``
    bounds the cache with least-recently-used eviction; ``None`` is unbounded.
    """

    def __init__(self, ds: Dataset, hyper: Hyper | None = None, max_entries: int | None = None):
        self.ds = ds
        self.hyper = hyper or Hyper()
        self.max_entries = max_entries
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._prefix = (ds.fingerprint, self.hyper.digest)
        self.misses = 0

    def local(self, target: int, parents: Iterable[int]) -> float:
        pa = tuple(sorted(parents))
        key = (self._prefix, target, pa)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        val = node_log_marginal(self.ds, target, pa, self.hyper)
        with self._lock:
            self.misses += 1
            self._cache[key] = val
            if self.max_entries is not None and len(self._cache) > self.max_entries:
                self._cache.popitem(last=False)
        return val

    def local_adj(self, adj: np.ndarray, j: int) -> float:
        return self.local(j, np.flatnonzero(adj[:, j]).tolist())

    def total(self, g: Dag) -> float:
        if g.d != self.ds.d:
            raise InvalidInputError(f"graph has d={g.d}, dataset has d={self.ds.d}")
        adj = np.asarray(g.adj)
        return float(sum(self.local_adj(adj, j) for j in range(g.d)))

    def __len__(self):
        return len(self._cache)


def log_marginal_likelihood(g: Dag, ds: Dataset, hyper: Hyper | None = None,
                            scorer: Scorer | None = None) -> float:
    if g.d != ds.d:
        raise InvalidInputError(f"graph has d={g.d}, dataset has d={ds.d}")
    scorer = scorer if scorer is not None else Scorer(ds, hyper)
    return scorer.total(g)


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class NodeParams:
    """Parameters of one structural equation.

    Continuous node: ``x = intercept + coefs . design(parents) + sigma * U``.
    Discrete node: ``cpt[j, k] = P(x = k | parent configuration j)``; continuous
    parents enter through ``parent_bins`` edges.
    """

    node: int
    parents: tuple[int, ...]
    kind: str
    intercept: float = 0.0
    coefs: np.ndarray | None = None
    sigma: float = 1.0
    parent_widths: tuple[int, ...] = ()
    cpt: np.ndarray | None = None
    parent_cards: tuple[int, ...] = ()
    parent_bins: tuple = ()

    def coef_of(self, parent: int) -> np.ndarray:
        k = self.parents.index(parent)
        start = sum(self.parent_widths[:k])
        return self.coefs[start:start + self.parent_widths[k]]


def _regression(mu: np.ndarray, cov: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Conditional law of the last coordinate given the others."""
    lp = len(mu) - 1
    if lp == 0:
        return float(mu[0]), np.zeros(0), float(math.sqrt(max(cov[0, 0], 0.0)))
    spp = cov[:lp, :lp]
    spt = cov[:lp, lp]
    b = np.linalg.solve(spp, spt)
    var = float(cov[lp, lp] - spt @ b)
    return float(mu[lp] - b @ mu[:lp]), b, math.sqrt(max(var, 1e-300))


def _parent_bins(ds: Dataset, parents) -> tuple:
    return tuple(ds.codes(p)[2] for p in parents)


def _params_from_posterior(ds, node, parents, post, rng=None) -> NodeParams:
    if isinstance(post, DirichletPosterior):
        if rng is None:
            cpt = post.mean()
        else:
            gam = rng.standard_gamma(post.alpha)
            gam = np.maximum(gam, np.finfo(float).tiny)
            cpt = gam / gam.sum(axis=1, keepdims=True)
        return NodeParams(node, parents, "discrete", cpt=cpt, parent_cards=post.parent_cards,
                          parent_bins=_parent_bins(ds, parents))
    if rng is None:
        mu, cov = post.nu, post.mean_cov()
    else:
        l = len(post.nu)
        if l == 1:
            cov = np.array([[float(invwishart.rvs(df=post.df, scale=post.scale[0, 0], random_state=rng))]])
        else:
            cov = np.atleast_2d(invwishart.rvs(df=post.df, scale=post.scale, random_state=rng))
        mu = rng.multivariate_normal(post.nu, cov / post.alpha_mu)
    b0, b, sigma = _regression(mu, cov)
    return NodeParams(node, parents, "continuous", intercept=b0, coefs=b, sigma=sigma,
                      parent_widths=post.parent_widths)


def posterior_mean_params(g: Dag, ds: Dataset, hyper: Hyper | None = None) -> list[NodeParams]:
    """Plug-in parameters: Dirichlet means, or regression read off the NIW mean covariance."""
    hyper = hyper or Hyper()
    out = []
    for i in range(g.d):
        pa = tuple(sorted(graph_parents(g, i)))
        out.append(_params_from_posterior(ds, i, pa, node_posterior(ds, i, pa, hyper)))
    return out


def draw_params(g: Dag, ds: Dataset, hyper: Hyper | None, rng: np.random.Generator) -> list[NodeParams]:
    """One joint posterior draw of every node's parameters (independent across nodes)."""
    hyper = hyper or Hyper()
    out = []
    for i in range(g.d):
        pa = tuple(sorted(graph_parents(g, i)))
        out.append(_params_from_posterior(ds, i, pa, node_posterior(ds, i, pa, hyper), rng))
    return out


def relative_likelihood(theta: NodeParams, ds: Dataset, target: int, parents: Iterable[int]) -> float:
    """``L(theta) / L(theta_mle)`` for one family; lies in [0, 1]."""
    pa = tuple(sorted(parents))
    stats = sufficient_stats(ds, target, pa)
    if isinstance(stats, DiscreteStats):
        n = stats.counts.astype(float)
        nj = n.sum(axis=1, keepdims=True)
        mle = np.divide(n, nj, out=np.zeros_like(n), where=nj > 0)
        with np.errstate(divide="ignore"):
            lt = np.where(n > 0, n * np.log(theta.cpt), 0.0).sum()
            lm = np.where(n > 0, n * np.log(mle), 0.0).sum()
        return float(np.exp(min(lt - lm, 0.0))) if np.isfinite(lt) else 0.0
    xtx = stats.xtx
    p = xtx.shape[0] - 1
    a, c, yy, n = xtx[:p, :p], xtx[:p, p], xtx[p, p], stats.n

    def rss(beta):
        return float(yy - 2 * beta @ c + beta @ a @ beta)

    beta_hat = np.linalg.lstsq(a, c, rcond=None)[0]
    s2_hat = rss(beta_hat) / n
    if not s2_hat > 1e-12 * max(yy / n, 1.0):
        raise DataError(f"maximum-likelihood noise variance is zero for node {target}")
    beta = np.concatenate([[theta.intercept], theta.coefs])
    s2 = theta.sigma ** 2
    log_l = -0.5 * n * math.log(s2) - rss(beta) / (2 * s2)
    log_hat = -0.5 * n * math.log(s2_hat) - n / 2
    return float(math.exp(min(log_l - log_hat, 0.0)))
