"""Bayesian model averaging over causal DAGs for ranking interventions.

The typical flow is data -> structure posterior (PC start, Metropolis-Hastings
over DAGs) -> per-graph interventional moments -> model-averaged expected value
and risk of each candidate intervention -> Pareto front.
"""

from .causal import InterventionSpec, classify, interventional_moments, total_causal_coefficient
from .data import ColumnMeta, Dataset, load_csv, standardize, sufficient_stats
from .decision import (BadValueModel, InterventionReport, ValueFunction, bma_moments,
                       evaluate_interventions, naive_moments, pareto_front)
from .errors import (BudgetExceeded, CausalBMAError, ConfigError, ContractViolation, DataError,
                     DegenerateColumnError, EmptyPosteriorError, InvalidInputError)
from .graph import Dag, d_separated, enumerate_dags, mutilate, topological_order
from .mcmc import ChainConfig, GraphPosterior, run_chain, run_multichain
from .pc import Cpdag, pc
from .prior import PriorMatrix, log_prior
from .score import Hyper, Scorer, log_marginal_likelihood

__version__ = "0.1.0"

__all__ = [
    "BadValueModel", "BudgetExceeded", "CausalBMAError", "ChainConfig", "ColumnMeta", "ConfigError",
    "ContractViolation", "Cpdag", "Dag", "DataError", "Dataset", "DegenerateColumnError",
    "EmptyPosteriorError", "GraphPosterior", "Hyper", "InterventionReport", "InterventionSpec",
    "InvalidInputError", "PriorMatrix", "Scorer", "ValueFunction", "bma_moments", "classify",
    "d_separated", "enumerate_dags", "evaluate_interventions", "interventional_moments", "load_csv",
    "log_marginal_likelihood", "log_prior", "mutilate", "naive_moments", "pareto_front", "pc",
    "run_chain", "run_multichain", "standardize", "sufficient_stats", "topological_order",
    "total_causal_coefficient",
]
