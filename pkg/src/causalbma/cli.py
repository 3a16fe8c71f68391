"""Command-line front end.

One JSON document fully specifies a run. Every output file is a pure function
of that document (after command-line overrides) and the data, and text outputs
open with a ``# config_digest=...`` comment line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 contract violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .causal import DEFAULT_BUDGET, InterventionSpec, validate_spec
from .data import ColumnMeta, Dataset, load_csv, standardize
from .decision import BadValueModel, ValueFunction, bma_causal_coefficient, evaluate_interventions
from .errors import CausalBMAError, ConfigError, ContractViolation, DataError
from .graph import Dag, creates_cycle
from .mcmc import ChainConfig, GraphPosterior, run_chain, run_multichain
from .pc import cpdag_to_dag, pc
from .prior import PriorMatrix, load_prior, prior_from_json
from .score import Hyper, Scorer

log = logging.getLogger("causalbma")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONTRACT = 0, 2, 3, 4


# ---------------------------------------------------------------- config


@dataclass
class RunContext:
    cfg: dict
    base: Path
    out: Path
    seed: int
    digest: str
    ds: Dataset | None = None
    prior: PriorMatrix | None = None
    hyper: Hyper | None = None


def _read_config(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    if args.seed is not None:
        cfg["seed"] = args.seed
    chain = cfg.setdefault("chain", {})
    if args.steps is not None:
        chain["n_steps"] = args.steps
    if args.chains is not None:
        chain["chains"] = args.chains
    if "seed" not in cfg:
        raise ConfigError("field 'seed' is mandatory (no wall-clock seeding)")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        raise ConfigError("field 'seed' must be a non-negative integer")
    return cfg


def config_digest(cfg: dict, data_fingerprint: str = "") -> str:
    """Hash of the canonical config (output location excluded) and the data."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    h = hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode())
    h.update(data_fingerprint.encode())
    return h.hexdigest()[:16]


def _resolve(base: Path, p) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _section(cfg: dict, key: str) -> dict:
    sec = cfg.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"field {key!r} must be an object")
    return sec


def load_dataset(cfg: dict, base: Path) -> Dataset:
    if "data" not in cfg:
        raise ConfigError("field 'data' is required")
    if not isinstance(cfg.get("schema"), list) or not cfg["schema"]:
        raise ConfigError("field 'schema' must be a non-empty list of columns")
    schema = []
    for k, rec in enumerate(cfg["schema"]):
        if not isinstance(rec, dict):
            raise ConfigError(f"schema[{k}] must be an object")
        schema.append(ColumnMeta.from_dict(rec))
    n_bins = int(_section(cfg, "pc").get("n_bins", 3))
    ds = load_csv(_resolve(base, cfg["data"]), schema, n_bins=n_bins)
    if cfg.get("standardize", True):
        ds = standardize(ds)
    return ds


def _load_prior(cfg: dict, base: Path, names) -> PriorMatrix:
    p = cfg.get("prior")
    if p is None:
        return PriorMatrix.uniform(len(names))
    if isinstance(p, str):
        return load_prior(_resolve(base, p), names)
    return prior_from_json(p, names)


def build_context(args) -> RunContext:
    path = Path(args.config)
    cfg = _apply_overrides(_read_config(path), args)
    base = path.parent
    out = Path(args.out) if args.out else _resolve(base, cfg.get("output", "out"))
    ctx = RunContext(cfg, base, out, cfg["seed"], "")
    if args.command != "validate":
        ctx.ds = load_dataset(cfg, base)
        ctx.prior = _load_prior(cfg, base, ctx.ds.names)
        ctx.hyper = Hyper.from_dict(_section(cfg, "hyper"))
        ctx.digest = config_digest(cfg, ctx.ds.fingerprint)
    else:
        ctx.digest = config_digest(cfg)
    return ctx


def _to_working(ds: Dataset, k: int, v: float) -> float:
    mu, sd = ds.scaling.get(ds.names[k], (0.0, 1.0))
    return (v - mu) / sd


def parse_interventions(cfg: dict, ds: Dataset) -> list[InterventionSpec]:
    recs = cfg.get("interventions")
    if not isinstance(recs, list) or not recs:
        raise ConfigError("field 'interventions' must be a non-empty list")
    specs = []
    for n, rec in enumerate(recs):
        assign = rec.get("assign") if isinstance(rec, dict) else None
        if not isinstance(assign, dict) or not assign:
            raise ConfigError(f"interventions[{n}].assign must be a non-empty object")
        values = {}
        for name, v in assign.items():
            k = ds.index(name)
            v = float(v)
            if not ds.schema[k].is_discrete:
                v = _to_working(ds, k, v)
            values[k] = v
        spec = InterventionSpec(values, float(rec.get("cost", 0.0)), str(rec.get("name", "")))
        if not spec.name:
            spec = InterventionSpec(values, spec.cost, ", ".join(f"{k}={assign[k]}" for k in sorted(assign)))
        validate_spec(spec, ds)
        specs.append(spec)
    return specs


def parse_value_function(cfg: dict, ds: Dataset) -> ValueFunction:
    sec = _section(cfg, "value_function")
    w = sec.get("weights")
    if not isinstance(w, dict) or not w:
        raise ConfigError("value_function.weights must be a non-empty object")
    vf = ValueFunction({ds.index(k): float(v) for k, v in w.items()}, float(sec.get("offset", 0.0)))
    vf.validate(ds)
    return vf.to_working_scale(ds)


def chain_config(cfg: dict, seed: int, init: Dag | None) -> tuple[ChainConfig, int]:
    sec = _section(cfg, "chain")
    try:
        cc = ChainConfig(
            n_steps=int(sec.get("n_steps", 10000)),
            tau=None if sec.get("tau") is None else float(sec["tau"]),
            burn_in=float(sec.get("burn_in", 0.25)),
            seed=seed,
            init=init,
            thinning=int(sec.get("thinning", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"chain: {exc}") from None
    k = int(sec.get("chains", 1))
    if k < 1:
        raise ConfigError("chain.chains must be >= 1")
    return cc, k


def initial_graph(ds: Dataset, prior: PriorMatrix, alpha: float, max_cond: int) -> Dag:
    """PC estimate with the hard prior entries forced; falls back to the pins alone."""
    g = cpdag_to_dag(pc(ds, alpha, max_cond).cpdag)
    adj = g.adj.copy()
    adj[prior.pinned_off] = 0
    base = prior.pinned_on.astype(np.uint8)
    for i, j in zip(*np.nonzero(base)):
        if adj[i, j]:
            continue
        adj[j, i] = 0
        if creates_cycle(adj, int(i), int(j)):
            log.warning("PC start conflicts with the pinned edges; starting from the pins only")
            return Dag(base)
        adj[i, j] = 1
    return Dag(adj)


def sample_posterior(ctx: RunContext, prior: PriorMatrix | None = None) -> tuple[GraphPosterior, dict]:
    prior = prior if prior is not None else ctx.prior
    pcs = _section(ctx.cfg, "pc")
    init = initial_graph(ctx.ds, prior, float(pcs.get("alpha", 0.05)), int(pcs.get("max_cond", 3)))
    cc, k = chain_config(ctx.cfg, ctx.seed, init)
    scorer = Scorer(ctx.ds, ctx.hyper)
    if k == 1:
        post = run_chain(cc, ctx.ds, prior, ctx.hyper, scorer)
        diag = {"chains": 1, "tau": post.tau, "acceptance_rate": post.acceptance_rate}
    else:
        post, diags, rhat = run_multichain(cc, ctx.ds, prior, ctx.hyper, k=k, scorer=scorer)
        diag = {"chains": k, "acceptance_rate": post.acceptance_rate, "split_rhat": rhat,
                "per_chain": [vars(d) for d in diags]}
    return post, diag


# ---------------------------------------------------------------- writers


def _header(ctx: RunContext) -> str:
    return f"# config_digest={ctx.digest}\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv(ctx: RunContext, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(_header(ctx))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_discover(ctx: RunContext) -> int:
    sec = _section(ctx.cfg, "pc")
    alpha = float(sec.get("alpha", 0.05))
    if not 0 < alpha < 1:
        raise ConfigError("pc.alpha must lie in (0, 1)")
    res = pc(ctx.ds, alpha, int(sec.get("max_cond", 3)))
    _write(ctx.out / "cpdag.txt", _header(ctx) + res.cpdag.to_edge_list(ctx.ds.names))
    run_log = (_header(ctx) + f"alpha={alpha!r}\nci_tests={res.n_tests}\n"
               f"edges={len(res.cpdag.directed_edges()) + len(res.cpdag.undirected_edges())}\n")
    _write(ctx.out / "discover.log", run_log)
    log.info("discover: %d CI tests, output in %s", res.n_tests, ctx.out)
    return EXIT_OK


def _write_sample(ctx: RunContext, post: GraphPosterior, diag: dict):
    names = ctx.ds.names
    _write(ctx.out / "posterior.json", _json(post.to_json(names)))
    _write(ctx.out / "trace.csv", _header(ctx) + post.trace_csv())
    em = post.edge_marginals()
    rows = [[names[i], names[j], float(em[i, j])] for i in range(post.d) for j in range(post.d) if i != j]
    _write(ctx.out / "edge_marginals.csv", _csv(ctx, ["from", "to", "probability"], rows))
    summary = {"config_digest": ctx.digest, "distinct_graphs": len(post.entries), "kept_samples": post.total,
               "edge_marginals": {"names": names, "matrix": em.tolist()}, **diag}
    _write(ctx.out / "summary.json", _json(summary))


def cmd_sample(ctx: RunContext) -> int:
    post, diag = sample_posterior(ctx)
    _write_sample(ctx, post, diag)
    log.info("sample: %d distinct graphs, acceptance %.3f", len(post.entries), post.acceptance_rate)
    return EXIT_OK


def _posterior_for_decision(ctx: RunContext) -> GraphPosterior:
    p = ctx.cfg.get("posterior")
    if p is None:
        post, diag = sample_posterior(ctx)
        return post
    path = _resolve(ctx.base, p)
    if not path.is_file():
        raise ConfigError(f"posterior file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        return GraphPosterior.from_json(obj, ctx.ds.d, ctx.ds.names)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"posterior file {path}: {exc}") from None


def cmd_decide(ctx: RunContext) -> int:
    ds = ctx.ds
    specs = parse_interventions(ctx.cfg, ds)
    vf = parse_value_function(ctx.cfg, ds)
    bsec = ctx.cfg.get("bad_value")
    if bsec is None:
        bad = BadValueModel.default(ds, vf)
    else:
        bad = BadValueModel(float(bsec["v_bad"]), float(bsec["r_bad"]))
    dsec = _section(ctx.cfg, "decision")
    post = _posterior_for_decision(ctx)
    reports = evaluate_interventions(post, ds, specs, vf, bad, ctx.hyper,
                                     m_draws=int(dsec.get("m_draws", 200)), seed=ctx.seed,
                                     budget=float(dsec.get("budget", DEFAULT_BUDGET)))
    rows = [[r.label, r.e_value, r.risk, r.good_mass, str(r.pareto).lower()] for r in reports]
    _write(ctx.out / "decide.csv", _csv(ctx, ["intervention", "e_value", "risk", "good_mass", "pareto"], rows))
    audit = {
        "config_digest": ctx.digest,
        "bad_value": {"v_bad": bad.v_bad, "r_bad": bad.r_bad, "source": "config" if bsec else "default"},
        "interventions": [{**r.row(), "graphs": r.breakdown} for r in reports],
    }
    _write(ctx.out / "decide_audit.json", _json(audit))
    log.info("decide: v_bad=%g r_bad=%g", bad.v_bad, bad.r_bad)
    return EXIT_OK


def cmd_sensitivity(ctx: RunContext) -> int:
    ds = ctx.ds
    sec = _section(ctx.cfg, "sensitivity")
    edge = sec.get("edge")
    if not isinstance(edge, list) or len(edge) != 2:
        raise ConfigError("sensitivity.edge must be [from, to]")
    i, j = ds.index(edge[0]), ds.index(edge[1])
    pair = sec.get("pair", edge)
    if not isinstance(pair, list) or len(pair) != 2:
        raise ConfigError("sensitivity.pair must be [cause, effect]")
    x, y = ds.index(pair[0]), ds.index(pair[1])
    grid = [float(a) for a in sec.get("grid", [0.0, 0.25, 0.5, 0.75, 1.0])]
    if not grid or any(not 0.0 <= a <= 1.0 for a in grid):
        raise ConfigError("sensitivity.grid values must lie in [0, 1]")
    rows = []
    for a in grid:
        prior = ctx.prior.with_entry(i, j, a)
        post, _ = sample_posterior(ctx, prior)
        coef = bma_causal_coefficient(post, ds, x, y, ctx.hyper)
        rows.append([a, coef, float(post.edge_marginals()[i, j])])
        log.info("sensitivity: a=%g coefficient=%.4f", a, coef)
    _write(ctx.out / "sensitivity.csv", _csv(ctx, ["a_ij", "coefficient", "edge_marginal"], rows))
    return EXIT_OK


def cmd_validate(ctx: RunContext) -> int:
    from .validation import PipelineConfig, end_to_end_check, lucas_model, lucas_queries

    sec = _section(ctx.cfg, "validate")
    model = sec.get("model", "lucas")
    if model != "lucas":
        raise ConfigError("validate.model currently supports only 'lucas'")
    truth, queries = lucas_model(), lucas_queries()
    n = int(sec.get("n", 10000))
    n_seeds = int(sec.get("seeds", 20))
    tol = float(sec.get("tolerance", 0.05))
    pcfg = PipelineConfig(n_steps=int(_section(ctx.cfg, "chain").get("n_steps", 5000)),
                          m_draws=int(sec.get("m_draws", 50)), hyper=Hyper.from_dict(_section(ctx.cfg, "hyper")))
    rows, passed = [], 0
    for s in range(ctx.seed, ctx.seed + n_seeds):
        res = end_to_end_check(truth, n, queries, pcfg, seed=s)
        ok = all(r.error <= tol for r in res)
        passed += ok
        rows += [[s, r.label, r.estimate, r.sd, r.truth, r.error, str(r.covered).lower()] for r in res]
        log.info("validate: seed %d max error %.4f", s, max(r.error for r in res))
    _write(ctx.out / "validation.csv",
           _csv(ctx, ["seed", "query", "estimate", "sd", "truth", "abs_error", "covered"], rows))
    summary = {"config_digest": ctx.digest, "model": model, "n": n, "seeds": n_seeds, "tolerance": tol,
               "seeds_all_within_tolerance": passed}
    _write(ctx.out / "validation_summary.json", _json(summary))
    print(f"validate: {passed}/{n_seeds} seeds within +/-{tol:g} on every query")
    return EXIT_OK


COMMANDS = {
    "discover": cmd_discover,
    "sample": cmd_sample,
    "decide": cmd_decide,
    "sensitivity": cmd_sensitivity,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causalbma",
                                 description="Bayesian model averaging over causal DAGs for intervention ranking.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, metavar="DIR", help="output directory")
        p.add_argument("--chains", type=int, default=None, help="number of MCMC chains")
        p.add_argument("--steps", type=int, default=None, help="MCMC steps per chain")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        ctx = build_context(args)
        return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ContractViolation, CausalBMAError) as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc!r}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
