"""Model-averaged value and risk of interventions, and the Pareto front."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .causal import (DEFAULT_BUDGET, InterventionSpec, classify, moments_from_draws,
                     param_draws, total_causal_coefficient)
from .data import Dataset
from .errors import BudgetExceeded, ConfigError, ContractViolation, DataError, EmptyPosteriorError
from .mcmc import GraphPosterior
from .score import Hyper


@dataclass(frozen=True)
class ValueFunction:
    """``v(q) = sum(weights[k] * q_k) + offset`` over quality columns."""

    weights: Mapping[int, float]
    offset: float = 0.0

    def validate(self, ds: Dataset):
        if not self.weights:
            raise ConfigError("value function has no quality columns")
        for k in self.weights:
            if not 0 <= k < ds.d or ds.schema[k].role != "quality":
                raise ConfigError(f"value function weight on non-quality column {k}")

    def evaluate(self, rows: np.ndarray) -> np.ndarray:
        return self.offset + sum(w * rows[:, k] for k, w in self.weights.items())

    def to_working_scale(self, ds: Dataset) -> "ValueFunction":
        """Re-express a value function stated in original units on standardized columns."""
        offset = self.offset
        weights = {}
        for k, w in self.weights.items():
            mu, sd = ds.scaling.get(ds.schema[k].name, (0.0, 1.0))
            weights[k] = w * sd
            offset += w * mu
        return ValueFunction(weights, offset)


@dataclass(frozen=True)
class BadValueModel:
    """Gaussian belief ``N(v_bad, r_bad)`` about the value of an unidentified intervention."""

    v_bad: float
    r_bad: float

    def __post_init__(self):
        if not self.r_bad > 0:
            raise ConfigError("r_bad must be positive")

    @classmethod
    def default(cls, ds: Dataset, vf: ValueFunction) -> "BadValueModel":
        """Mean of v(Q) over the data, ten times its sample variance."""
        v = vf.evaluate(ds.rows)
        var = float(v.var(ddof=1)) if len(v) > 1 else 0.0
        if not var > 0:
            raise ConfigError("v(Q) has zero sample variance; set r_bad explicitly")
        return cls(float(v.mean()), 10.0 * var)


@dataclass
class InterventionReport:
    spec: InterventionSpec
    label: str
    e_value: float
    risk: float
    good_mass: float
    pareto: bool = False
    breakdown: list = field(default_factory=list)

    def row(self) -> dict:
        return {"intervention": self.label, "e_value": self.e_value, "risk": self.risk,
                "good_mass": self.good_mass, "pareto": self.pareto}


def bma_moments(weights: Sequence[float], per_graph: Sequence[tuple[float, float, bool]],
                bad: BadValueModel, cost: float = 0.0) -> tuple[float, float]:
    """Mixture mean and variance; bad graphs contribute ``(v_bad, r_bad)``.

    The deterministic cost shifts the mean only.
    """
    w = np.asarray(weights, dtype=float)
    if len(w) == 0 or len(w) != len(per_graph):
        raise EmptyPosteriorError("need one moment triple per posterior graph")
    if np.any(w < 0) or not w.sum() > 0 or not np.isfinite(w).all():
        raise ContractViolation("posterior weights cannot be normalized")
    w = w / w.sum()
    means = np.array([m if good else bad.v_bad for m, _, good in per_graph], dtype=float)
    varis = np.array([v if good else bad.r_bad for _, v, good in per_graph], dtype=float)
    e_raw = math.fsum(w * means)
    # E[V^2] - E[V]^2 written as within + between to avoid cancellation
    var = math.fsum(w * varis) + math.fsum(w * (means - e_raw) ** 2)
    return e_raw - cost, var


def evaluate_interventions(post: GraphPosterior, ds: Dataset, specs: Sequence[InterventionSpec],
                           vf: ValueFunction, bad: BadValueModel | None = None,
                           hyper: Hyper | None = None, m_draws: int = 200, seed: int = 0,
                           budget: float = DEFAULT_BUDGET) -> list[InterventionReport]:
    """One report per intervention, model-averaged over the sampled graphs."""
    if not specs:
        raise ConfigError("no interventions to evaluate")
    vf.validate(ds)
    bad = bad if bad is not None else BadValueModel.default(ds, vf)
    weights = post.weights
    per_spec: list[list] = [[] for _ in specs]
    audit: list[list] = [[] for _ in specs]
    for gi, entry in enumerate(post.entries):
        g = entry.dag
        rng = np.random.default_rng([seed, gi])
        draws = None
        for si, spec in enumerate(specs):
            res = classify(g, spec, vf.weights, budget, ds)
            mom = None
            if res.good:
                if draws is None:
                    draws = param_draws(g, ds, hyper, m_draws, rng)
                try:
                    mom = moments_from_draws(g, draws, spec, vf.weights, vf.offset, budget,
                                             np.random.default_rng([seed, gi, si]))
                except BudgetExceeded:
                    res = replace(res, status="bad", reason="budget-exceeded")
            good = mom is not None
            per_spec[si].append((mom.mean if good else 0.0, mom.var if good else 0.0, good))
            audit[si].append({
                "edges": g.edges(), "weight": float(weights[gi]), "status": res.status,
                "strategy": res.strategy, "reason": res.reason,
                "adjustment": sorted(res.adjustment),
                "mean": mom.mean if good else None, "var": mom.var if good else None,
                "mc_se": mom.mc_se if good else None,
            })
    reports = []
    for si, spec in enumerate(specs):
        e, r = bma_moments(weights, per_spec[si], bad, spec.cost)
        good_mass = float(sum(w for w, (_, _, ok) in zip(weights, per_spec[si]) if ok))
        reports.append(InterventionReport(spec, spec.label(ds.names), e, r, min(good_mass, 1.0),
                                          breakdown=audit[si]))
    return pareto_front(reports)


def dominates(a: InterventionReport, b: InterventionReport, eps: float = 1e-9) -> bool:
    no_worse = a.e_value >= b.e_value - eps and a.risk <= b.risk + eps
    better = a.e_value > b.e_value + eps or a.risk < b.risk - eps
    return no_worse and better


def pareto_front(reports: Sequence[InterventionReport], eps: float = 1e-9) -> list[InterventionReport]:
    """Copies of ``reports`` with ``pareto`` set on the non-dominated ones."""
    if not reports:
        raise ConfigError("no reports")
    out = []
    for r in reports:
        dominated = any(dominates(o, r, eps) for o in reports if o is not r)
        out.append(replace(r, pareto=not dominated))
    return out


def _condition_mask(ds: Dataset, spec: InterventionSpec, band: float) -> np.ndarray:
    mask = np.ones(ds.n, dtype=bool)
    for k, v in spec.assignments.items():
        col = ds.column(k)
        if ds.schema[k].is_discrete:
            mask &= col == v
        else:
            m = max(1, int(math.ceil(band * ds.n)))
            nearest = np.argsort(np.abs(col - v), kind="stable")[:m]
            sel = np.zeros(ds.n, dtype=bool)
            sel[nearest] = True
            mask &= sel
    return mask


def naive_moments(ds: Dataset, spec: InterventionSpec, vf: ValueFunction, cost: float | None = None,
                  band: float = 0.10) -> tuple[float, float]:
    """Evidential baseline: moments of v(Q) among rows that match ``I = i``.

    Discrete columns match exactly; a continuous column keeps the ``band``
    fraction of rows nearest to the assigned value.
    """
    cost = spec.cost if cost is None else cost
    mask = _condition_mask(ds, spec, band)
    if not mask.any():
        raise DataError(f"no rows match the conditioning event {spec.label(ds.names)}")
    v = vf.evaluate(ds.rows[mask])
    return float(v.mean()) - cost, float(v.var(ddof=1)) if len(v) > 1 else 0.0


def naive_slope(ds: Dataset, x: int, vf: ValueFunction) -> float:
    """Least-squares slope of v(Q) on column ``x``: the regression (evidential) effect."""
    v = vf.evaluate(ds.rows)
    col = ds.column(x)
    cx = col - col.mean()
    return float(cx @ (v - v.mean()) / (cx @ cx))


def bma_causal_coefficient(post: GraphPosterior, ds: Dataset, x: int, y: int,
                           hyper: Hyper | None = None) -> float:
    """Posterior-weighted total causal coefficient of ``x`` on ``y``."""
    vals = [total_causal_coefficient(e.dag, ds, x, y, hyper) for e in post.entries]
    return math.fsum(w * v for w, v in zip(post.weights, vals))
