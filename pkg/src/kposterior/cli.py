"""Command-line front end.

Exit codes: 0 success (no violations / all identities hold), 1 constraint
violations found or an identity failed, 2 usage or input error, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .activeset import ConvergenceError
from .bounds import bounds_table
from .config import ExplicitWeights, ModelConfig, Uniform
from .correction import CovarianceSpec, RejectionTooSlow, posterior_mean, project_mode
from .occupancy import marginal_likelihood_h, posterior_h, prior_h, prior_h_given_k_dist
from .oracle import run_identity_suite
from .transforms import MarginalEstimates, check_constraints, f_to_fdagger

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["n", "alpha", "k_prior", "estimates"],
    "additionalProperties": False,
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "k_prior": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type", "k_max"],
                    "additionalProperties": False,
                    "properties": {"type": {"const": "uniform"}, "k_max": {"type": "integer", "minimum": 1}},
                },
                {
                    "type": "object",
                    "required": ["type", "values"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "weights"},
                        "values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                        "tail_ratio": {"type": "number", "minimum": 0},
                    },
                },
            ]
        },
        "estimates": {
            "type": "object",
            "required": ["kind", "values"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["posterior_probs", "raw_marginals", "log_marginals"]},
                "values": _number_list,
                "residual_tail_mass": {"type": "number", "minimum": 0},
            },
        },
        "covariance": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "variances"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "diagonal"}, "variances": _number_list},
                },
                {
                    "type": "object",
                    "required": ["kind", "matrix"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "full"}, "matrix": {"type": "array", "items": _number_list}},
                },
                {
                    "type": "object",
                    "required": ["kind", "mcmc_draws"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "multinomial"}, "mcmc_draws": {"type": "integer", "minimum": 1}},
                },
            ]
        },
        "mcmc_draws": {"type": "integer", "minimum": 1},
    },
}


class InputError(ValueError):
    pass


@dataclass
class EstimateFile:
    config: ModelConfig
    estimates: MarginalEstimates
    covariance: CovarianceSpec | None


def _field_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _branch_errors(err: jsonschema.ValidationError) -> list[jsonschema.ValidationError]:
    """For a failed ``oneOf``, the errors of the branch whose type tag matched."""
    if err.validator != "oneOf" or not err.context:
        return [err]
    by_branch: dict[int, list] = {}
    for sub in err.context:
        by_branch.setdefault(sub.schema_path[0], []).append(sub)
    tagged = [subs for subs in by_branch.values() if not any(s.validator == "const" for s in subs)]
    return tagged[0] if len(tagged) == 1 else [err]


def parse_estimate_file(path: str | Path) -> EstimateFile:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    errors = sorted(jsonschema.Draft202012Validator(ESTIMATE_SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    errors = [sub for e in errors for sub in _branch_errors(e)]
    if errors:
        raise InputError("; ".join(f"{_field_path(e)}: {e.message}" for e in errors))
    try:
        kp = raw["k_prior"]
        if kp["type"] == "uniform":
            prior = Uniform(kp["k_max"])
        else:
            prior = ExplicitWeights(tuple(kp["values"]), kp.get("tail_ratio"))
        config = ModelConfig(raw["n"], raw["alpha"], prior)
        e = raw["estimates"]
        est = MarginalEstimates(tuple(e["values"]), e["kind"], e.get("residual_tail_mass"))
        cov = None
        c = raw.get("covariance")
        if c is not None:
            if c["kind"] == "diagonal":
                cov = CovarianceSpec.diagonal(c["variances"])
            elif c["kind"] == "full":
                cov = CovarianceSpec.full(c["matrix"])
            else:
                cov = CovarianceSpec.multinomial(c["mcmc_draws"])
        elif "mcmc_draws" in raw:
            cov = CovarianceSpec.multinomial(raw["mcmc_draws"])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    K = est.K
    if prior.support_max is not None and K > prior.support_max:
        raise InputError(f"estimates/values: {K} estimates but the prior on k stops at {prior.support_max}")
    if cov is not None and cov.kind == "diagonal" and len(cov.variances) != K:
        raise InputError(f"covariance/variances: {len(cov.variances)} variances for {K} estimates")
    if cov is not None and cov.kind == "full" and cov.matrix.shape != (K, K):
        raise InputError(f"covariance/matrix: shape {cov.matrix.shape} for {K} estimates")
    return EstimateFile(config, est, cov)


def _clean(x):
    """JSON-safe nested structure: arrays to lists, non-finite floats to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _dump(obj, out) -> None:
    out.write(json.dumps(_clean(obj), sort_keys=True, indent=2))
    out.write("\n")


def _parse_int_list(text: str) -> list[int]:
    """``"20,50,100"`` or ``"1..10"`` (inclusive), or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def _cmd_check(args, out, err) -> int:
    ef = parse_estimate_file(args.file)
    rep = check_constraints(ef.estimates, ef.config)
    _dump(
        {
            "ok": rep.ok,
            "full_check": rep.full_check,
            "fdagger": rep.fdagger,
            "condition_estimates": rep.condition_estimates,
            "pairwise_margins": rep.pairwise_margins,
            "violations": [{"k": v.k, "kind": v.kind, "value": v.value} for v in rep.violations],
            "suspect": rep.suspect,
            "notices": rep.notices,
            "residual_tail_mass": ef.estimates.residual_tail_mass,
        },
        out,
    )
    ks = sorted(rep.violation_set())
    summary = f"{len(ks)} constraint violation(s) at k={ks}" if ks else "all constraints satisfied"
    err.write(summary + "\n")
    for note in rep.notices:
        err.write(f"note: {note}\n")
    return EXIT_VIOLATION if ks else EXIT_OK


def _cmd_correct(args, out, err) -> int:
    ef = parse_estimate_file(args.file)
    cov = ef.covariance
    if cov is None:
        raise InputError("correction needs a covariance (give 'covariance' or 'mcmc_draws' in the input file)")
    if args.mode == "mode":
        res = project_mode(ef.estimates, cov, ef.config, fix_f1=args.fix_f1)
        diag = {k: v for k, v in res.diagnostics.items()}
    else:
        draws = args.draws if args.draws is not None else 20_000
        res = posterior_mean(
            ef.estimates, cov, ef.config, method=args.method, draws=draws,
            burn_in=args.burn_in, seed=args.seed, chains=args.chains, fix_f1=args.fix_f1,
        )
        diag = res.diagnostics
    _dump(
        {
            "method": res.method,
            "corrected_f": res.corrected_f,
            "corrected_fdagger": res.corrected_fdagger,
            "rescaled_f": res.rescaled(),
            "residual_tail_mass": res.residual_tail_mass,
            "diagnostics": diag,
        },
        out,
    )
    return EXIT_OK


def _cmd_bounds(args, out, err) -> int:
    if args.kmax is not None and args.weights is not None:
        raise InputError("give either --kmax or --weights, not both")
    if args.weights is not None:
        prior = ExplicitWeights(tuple(float(v) for v in args.weights.split(",")), args.tail_ratio)
    else:
        prior = Uniform(args.kmax if args.kmax is not None else 50)
    base = ModelConfig(1, args.alpha, prior)
    table = bounds_table(args.n, args.k, base)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["n"] + [f"k={k}" for k in table.k_list])
    for n, row in zip(table.n_list, table.values):
        w.writerow([n] + ["" if np.isnan(v) else f"{v:.4f}" for v in row])
    for (n, k), msg in sorted(table.errors.items()):
        err.write(f"n={n}, k={k}: {msg}\n")
    return EXIT_OK


def _fdagger_for(args, ef: EstimateFile | None, config: ModelConfig) -> np.ndarray:
    if args.fdagger is not None:
        return np.array([float(v) for v in args.fdagger.split(",")])
    if ef is None:
        raise InputError("posterior and marginal kinds need an estimate file or --fdagger")
    fd = f_to_fdagger(ef.estimates, config)
    if np.any(fd < 0):
        bad = [k for k, v in enumerate(fd, 1) if v < 0]
        raise InputError(f"estimates violate the constraints at k={bad}; run 'correct' first and pass --fdagger")
    return fd


def _cmd_occupancy(args, out, err) -> int:
    ef = parse_estimate_file(args.file) if args.file else None
    if ef is not None:
        config = ef.config
    else:
        if args.n is None:
            raise InputError("give an estimate file or --n")
        config = ModelConfig(args.n, args.alpha, Uniform(args.kmax))
    kinds = args.kind
    cols: dict[str, np.ndarray] = {}
    notices: list[str] = []
    prior_dist = None
    for kind in kinds:
        if kind == "prior" or (kind == "marginal" and prior_dist is None):
            prior_dist = prior_h(config, args.method, seed=args.seed, draws=args.draws)
            notices += prior_dist.notices
        if kind == "prior":
            cols["prior"] = prior_dist.values
        elif kind == "given_k":
            if args.k is None:
                raise InputError("--kind given_k needs --k")
            cols[f"prior_given_k={args.k}"] = prior_h_given_k_dist(args.k, config, args.method).values
        elif kind == "posterior":
            cols["posterior"] = posterior_h(_fdagger_for(args, ef, config), config).values
        elif kind == "marginal":
            d = marginal_likelihood_h(_fdagger_for(args, ef, config), config, prior=prior_dist)
            cols["marginal_likelihood_h"] = d.values
            notices += d.notices
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["h"] + list(cols))
    for h in range(1, config.n + 1):
        w.writerow([h] + ["" if np.isnan(c[h - 1]) else f"{c[h - 1]:.17g}" for c in cols.values()])
    for note in notices:
        err.write(f"note: {note}\n")
    return EXIT_OK


def _cmd_verify(args, out, err) -> int:
    results = run_identity_suite(args.grid, args.seed)
    failed = [r for r in results if not r.passed]
    by_identity: dict[str, dict] = {}
    for r in results:
        d = by_identity.setdefault(r.identity, {"checks": 0, "failed": 0, "max_rel_error": 0.0})
        d["checks"] += 1
        d["failed"] += int(not r.passed)
        d["max_rel_error"] = max(d["max_rel_error"], r.rel_error)
    _dump(
        {
            "grid": args.grid,
            "seed": args.seed,
            "checks": len(results),
            "failed": len(failed),
            "identities": by_identity,
            "failures": [vars(r) for r in failed[:50]],
        },
        out,
    )
    err.write(f"{len(results) - len(failed)}/{len(results)} identity checks passed\n")
    return EXIT_OK if not failed else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kposterior", description="Audit, bound and correct posteriors on the number of mixture components.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="check estimates against the inequality constraints")
    c.add_argument("file")
    c.set_defaults(func=_cmd_check)

    c = sub.add_parser("correct", help="constraint-satisfying estimates (mode or mean)")
    c.add_argument("file")
    c.add_argument("--mode", choices=["mode", "mean"], default="mode")
    c.add_argument("--method", choices=["gibbs", "rejection"], default="gibbs")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--draws", type=int)
    c.add_argument("--burn-in", type=int, dest="burn_in")
    c.add_argument("--chains", type=int, default=1)
    c.add_argument("--fix-f1", action="store_true", dest="fix_f1", help="hold f[1] at its (exact) estimate")
    c.set_defaults(func=_cmd_correct)

    c = sub.add_parser("bounds", help="upper bounds on pi(k | x) over all data sets (CSV)")
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--kmax", type=int)
    c.add_argument("--weights", help="comma-separated prior weights for k = 1, 2, ...")
    c.add_argument("--tail-ratio", type=float, dest="tail_ratio")
    c.add_argument("--n", type=_parse_int_list, required=True, help="e.g. 20,50,100,500")
    c.add_argument("--k", type=_parse_int_list, required=True, help="e.g. 1..10")
    c.set_defaults(func=_cmd_bounds)

    c = sub.add_parser("occupancy", help="distributions of the number of nonempty components (CSV)")
    c.add_argument("file", nargs="?")
    c.add_argument("--n", type=int)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--kmax", type=int, default=30)
    c.add_argument("--kind", nargs="+", choices=["prior", "given_k", "posterior", "marginal"], default=["prior"])
    c.add_argument("--k", type=int)
    c.add_argument("--fdagger", help="comma-separated nonnegative fdagger values")
    c.add_argument("--method", choices=["enumerate", "convolution", "monte_carlo"], default="enumerate")
    c.add_argument("--seed", type=int)
    c.add_argument("--draws", type=int)
    c.set_defaults(func=_cmd_occupancy)

    c = sub.add_parser("verify", help="run the exact-enumeration identity suite")
    c.add_argument("--grid", choices=["small", "full"], default="small")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_verify)
    return p


def run_command(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    buf = io.StringIO()
    try:
        code = args.func(args, buf, err)
    except (InputError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (ConvergenceError, RejectionTooSlow, OverflowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        err.write(f"numerical failure: {exc}\n")
        trace = getattr(exc, "trace", None)
        if trace:
            err.write(f"last solver iterations: {json.dumps(_clean(trace[-3:]))}\n")
        return EXIT_NUMERIC
    out.write(buf.getvalue())
    return code


def main() -> None:
    sys.exit(run_command())
