"""Command-line frontend: design quantizers, estimate regret, run sweeps,
evaluate bounds, and run posterior-concentration diagnostics.

Subcommands are thin adapters over the library; no numeric logic lives
here. Exit codes: 0 success, 2 configuration/input error, 3 numerical
degeneracy, 4 convergence failure. Every handled error prints a single
machine-parseable line ``error: <kind>: <detail>`` to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import config as cfgmod
from .bounds import (
    bvm_diagnostics,
    BoundReport,
    corollary_rhs,
    thm1_rhs,
    thm1_rhs_gaussian,
    thm2_bound_moment,
    thm2_bound_subgaussian,
    weakened_thm2,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    CoveringAuditError,
    DomainError,
    InvalidInputError,
    NumericalDegeneracyError,
    QuantileInversionError,
)
from .experiments import emit_csv, sweep_scalar, sweep_vector
from .model import ScalarChannelModel
from .quantizer import covering_codebook, lloyd_max_1d, panter_dite_1d, save_codebook, load_codebook
from .regret import estimate_decomposition

_ERROR_TABLE = (
    (ConfigError, "config", 2),
    (QuantileInversionError, "quantile-inversion", 2),
    (DomainError, "domain", 2),
    (InvalidInputError, "invalid-input", 2),
    (NumericalDegeneracyError, "numerical-degeneracy", 3),
    (CoveringAuditError, "covering-audit", 3),
    (np.linalg.LinAlgError, "linear-algebra", 3),
    (ConvergenceError, "convergence", 4),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmmse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="design a quantizer and write a codebook file")
    p_design.add_argument("--model", required=True, help="model config file")
    p_design.add_argument("--k", type=int, required=True)
    p_design.add_argument("--method", required=True, choices=("lloyd", "panter-dite", "covering"))
    p_design.add_argument("--r", type=float, default=None, help="ball radius (covering only)")
    p_design.add_argument("--out", required=True)

    p_regret = sub.add_parser("regret", help="estimate regret for a codebook file")
    p_regret.add_argument("--model", required=True)
    p_regret.add_argument("--codebook", required=True)
    p_regret.add_argument("--n", type=int, required=True, help="observations per sample")
    p_regret.add_argument("--N", type=int, required=True, help="Monte Carlo sample count")
    p_regret.add_argument("--seed", type=int, default=None)
    p_regret.add_argument("--out", required=True)

    p_sweep = sub.add_parser("sweep", help="run a (n, k) sweep and write a CSV table")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--seed", type=int, default=None, help="override sweep.seed")
    p_sweep.add_argument("--N", type=int, default=None, help="override sweep.N")

    p_bounds = sub.add_parser("bounds", help="evaluate a bound and print its report")
    p_bounds.add_argument("--config", required=True)

    p_bvm = sub.add_parser("bvm", help="posterior-concentration diagnostics")
    p_bvm.add_argument("--model", required=True)
    p_bvm.add_argument("--n", type=int, required=True)
    p_bvm.add_argument("--N", type=int, required=True)
    p_bvm.add_argument("--seed", type=int, default=None)
    p_bvm.add_argument("--l0", type=float, default=1.0)
    return parser


def _seed_or_default(cli_seed, model_seed) -> int:
    if cli_seed is not None:
        return cli_seed
    if model_seed is not None:
        return model_seed
    raise ConfigError("no seed: pass --seed or set model.seed in the config")


def _cmd_design(args) -> int:
    cfg = cfgmod.load_config(args.model)
    model, _ = cfgmod.parse_model_config(cfg, args.model)
    scalar = isinstance(model, ScalarChannelModel)
    if args.method == "covering":
        if args.r is None:
            raise ConfigError("--r is required for method=covering")
        p = 1 if scalar else model.p_dim
        quantizer = covering_codebook(p, args.r, args.k)
    else:
        if not scalar:
            raise ConfigError(f"method={args.method} needs a scalar model")
        density = lambda y: np.exp(np.asarray(model.prior_log_density(y), dtype=float))
        if args.method == "lloyd":
            quantizer = lloyd_max_1d(density, model.half_width, args.k)
        else:
            quantizer = panter_dite_1d(density, model.half_width, args.k)
    save_codebook(quantizer, args.out)
    return 0


def _cmd_regret(args) -> int:
    cfg = cfgmod.load_config(args.model)
    model, model_seed = cfgmod.parse_model_config(cfg, args.model)
    seed = _seed_or_default(args.seed, model_seed)
    quantizer = load_codebook(args.codebook)
    if isinstance(model, ScalarChannelModel):
        est = estimate_decomposition(model, args.n, quantizer, args.N, seed)
    else:
        if args.n != model.n_dim:
            raise ConfigError(f"--n {args.n} does not match the model dimension {model.n_dim}")
        est = estimate_decomposition(model, None, quantizer, args.N, seed)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(est.to_json() + "\n")
    return 0


def _cmd_sweep(args) -> int:
    cfg = cfgmod.load_config(args.config)
    model, _, sweep = cfgmod.parse_sweep_config(cfg, args.config)
    seed = args.seed if args.seed is not None else sweep["seed"]
    n_samples = args.N if args.N is not None else sweep["N"]
    if isinstance(model, ScalarChannelModel):
        rows = sweep_scalar(model, sweep["k"], sweep["n"], n_samples, seed)
    else:
        rows = sweep_vector(model, sweep["k"], n_samples, seed, sweep["r_policy"])
    emit_csv(rows, args.out)
    return 0


def _cmd_bounds(args) -> int:
    cfg = cfgmod.load_config(args.config)
    name, par = cfgmod.parse_bounds_config(cfg, args.config)
    if name == "thm1":
        value = thm1_rhs(par["L"], par["delta"], par["n"], par["e_inv_sqrt_fisher"], par["mmse"])
        report = BoundReport(name, value, inputs=par, config={"L": par["L"]})
    elif name == "thm1-gaussian":
        value = thm1_rhs_gaussian(par["L"], par["delta"], par["n"], par["sigma"])
        report = BoundReport(name, value, inputs=par, config={"L": par["L"]})
    elif name == "corollary":
        value = corollary_rhs(par["k"], par["n"], par["e_inv_sqrt_fisher"], par["mmse"], par["c"])
        report = BoundReport(name, value, inputs=par, config={"c": par["c"]})
    elif name == "thm2-moment":
        value = thm2_bound_moment(par["e2"], par["e4"], par["k"], par["p"], par["c"])
        report = BoundReport(name, value, inputs=par, config={"c": par["c"]})
    elif name == "thm2-subgaussian":
        value, r_star = thm2_bound_subgaussian(
            par["e1"], par["e4"], par["v"], par["k"], par["p"], par["c1"], par["c2"]
        )
        report = BoundReport(
            name, value, inputs=par, r_star=r_star, config={"c1": par["c1"], "c2": par["c2"]}
        )
    else:
        value = weakened_thm2(par["k"], par["p"], par["c"])
        report = BoundReport(name, value, inputs=par, config={"c": par["c"]})
    print(report.to_json())
    return 0


def _cmd_bvm(args) -> int:
    cfg = cfgmod.load_config(args.model)
    model, model_seed = cfgmod.parse_model_config(cfg, args.model)
    if not isinstance(model, ScalarChannelModel):
        raise ConfigError("bvm diagnostics need a scalar model")
    seed = _seed_or_default(args.seed, model_seed)
    diag = bvm_diagnostics(model, args.n, args.N, seed, l0=args.l0)
    print(json.dumps(diag))
    return 0


_COMMANDS = {
    "design": _cmd_design,
    "regret": _cmd_regret,
    "sweep": _cmd_sweep,
    "bounds": _cmd_bounds,
    "bvm": _cmd_bvm,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO)
    try:
        return _COMMANDS[args.command](args)
    except tuple(exc for exc, _, _ in _ERROR_TABLE) as err:
        for exc_type, kind, code in _ERROR_TABLE:
            if isinstance(err, exc_type):
                print(f"error: {kind}: {err}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
