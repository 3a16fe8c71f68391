"""Edge-probability prior over DAGs.

Each ordered pair (i, j) carries the practitioner's probability ``a[i, j]`` that
``i -> j`` exists. The graph prior is the product of independent Bernoulli
terms restricted to acyclic graphs; it is left unnormalized.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError
from .graph import Dag, _kahn

NEG_INF = float("-inf")


def edge_prior_logprob(g_ij: int, a_ij: float) -> float:
    if not 0.0 <= a_ij <= 1.0:
        raise InvalidInputError(f"edge probability {a_ij} outside [0, 1]")
    p = a_ij if g_ij else 1.0 - a_ij
    return math.log(p) if p > 0 else NEG_INF


class PriorMatrix:
    """d x d matrix of edge-existence probabilities; the diagonal is stored as 0."""

    def __init__(self, a):
        a = np.array(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError("prior matrix must be square")
        np.fill_diagonal(a, 0.0)
        if np.any(a < 0) or np.any(a > 1) or not np.isfinite(a).all():
            raise InvalidInputError("prior entries must lie in [0, 1]")
        a.setflags(write=False)
        self.a = a
        off = ~np.eye(len(a), dtype=bool)
        with np.errstate(divide="ignore"):
            self._log_on = np.where(off, np.log(a), 0.0)
            self._log_off = np.where(off, np.log1p(-a), 0.0)
        self.pinned_on = (a == 1.0) & off
        self.pinned_off = (a == 0.0) & off
        self.free = off & ~self.pinned_on & ~self.pinned_off
        self._check_pins()

    @classmethod
    def uniform(cls, d: int, p: float = 0.5) -> "PriorMatrix":
        return cls(np.full((d, d), p))

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def _check_pins(self):
        if _kahn(self.pinned_on.astype(np.uint8)) is None:
            raise ConfigError("edges pinned present (p = 1) form a directed cycle; no DAG satisfies the prior")

    def with_entry(self, i: int, j: int, p: float) -> "PriorMatrix":
        a = np.array(self.a)
        a[i, j] = p
        return PriorMatrix(a)

    def satisfies_pins(self, adj) -> bool:
        adj = np.asarray(adj).astype(bool)
        return bool(np.all(adj[self.pinned_on]) and not np.any(adj[self.pinned_off]))

    def edge_terms(self, adj) -> np.ndarray:
        """Per-entry log prior terms, ignoring the acyclicity indicator."""
        adj = np.asarray(adj).astype(bool)
        return np.where(adj, self._log_on, self._log_off)

    def column_logprob(self, adj, j: int) -> float:
        """Log prior contribution of the incoming edges of node ``j``."""
        col = np.asarray(adj)[:, j].astype(bool)
        return float(np.where(col, self._log_on[:, j], self._log_off[:, j]).sum())

    def to_json(self, names: Sequence[str], default: float = 0.5) -> dict:
        entries = [
            {"from": names[i], "to": names[j], "p": float(self.a[i, j])}
            for i in range(self.d) for j in range(self.d)
            if i != j and self.a[i, j] != default
        ]
        return {"default": default, "entries": entries}


def log_prior(g, a: PriorMatrix) -> float:
    adj = g.adj if isinstance(g, Dag) else np.asarray(g)
    if adj.shape != a.a.shape:
        raise InvalidInputError(f"graph has d={adj.shape[0]}, prior has d={a.d}")
    if not isinstance(g, Dag):
        if np.any(np.diag(adj)) or _kahn(adj.astype(np.uint8)) is None:
            return NEG_INF
    return float(a.edge_terms(adj).sum())


def prior_from_json(obj: dict, names: Sequence[str]) -> PriorMatrix:
    """Build a prior from ``{"default": p, "entries": [{"from", "to", "p"}, ...]}``."""
    if not isinstance(obj, dict):
        raise ConfigError("prior must be a JSON object")
    extra = set(obj) - {"default", "entries"}
    if extra:
        raise ConfigError(f"prior: unknown fields {sorted(extra)}")
    d = len(names)
    default = float(obj.get("default", 0.5))
    if not 0.0 <= default <= 1.0:
        raise ConfigError(f"prior default {default} outside [0, 1]")
    a = np.full((d, d), default)
    index = {n: k for k, n in enumerate(names)}
    for e in obj.get("entries", []):
        try:
            i, j, p = index[e["from"]], index[e["to"]], float(e["p"])
        except KeyError as exc:
            raise ConfigError(f"prior entry {e}: unknown column or missing field {exc}") from None
        if i == j:
            raise ConfigError(f"prior entry {e}: self-loop")
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"prior entry {e}: probability outside [0, 1]")
        a[i, j] = p
    try:
        return PriorMatrix(a)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def load_prior(path, names: Sequence[str]) -> PriorMatrix:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"prior file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"prior file {p}: {exc}") from None
    return prior_from_json(obj, names)
