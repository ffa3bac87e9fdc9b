"""Command-line interface: ``signmf {fit,select,simulate,residuals}``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import residual_report
from .engine import FitConfig, fit_model
from .io import (
    file_digest,
    load_counts,
    load_signatures,
    read_alphas,
    read_matrix,
    write_alphas,
    write_counts,
    write_json,
    write_matrix,
    write_residuals,
    write_signatures,
)
from .model import (
    DispersionVector,
    Factorization,
    Model,
    NumericalError,
    SignmfError,
    ValidationError,
    normalize_factorization,
)
from .selection import SigmosConfig, default_threads, information_criteria, select_by_ic, sigmos
from .simulation import SimConfig, random_signatures, simulate_dataset

log = logging.getLogger("signmf")

MODELS = {"poisson": Model.POISSON, "nb": Model.NB_PATIENT, "nb-shared": Model.NB_SHARED}
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _fit_options(p):
    p.add_argument("--epsilon", type=_positive_float, default=1e-8,
                   help="convergence tolerance on successive objective values")
    p.add_argument("--tol-mode", choices=("relative", "absolute"), default="relative")
    p.add_argument("--max-iters", type=_positive_int, default=100_000)
    p.add_argument("--restarts", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="signmf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="factorize a count matrix at a fixed rank")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=tuple(MODELS), default="poisson")
    p.add_argument("--k", type=_positive_int, required=True)
    _fit_options(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("select", help="choose the number of signatures")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("sigmos", "aic", "bic"), default="sigmos")
    p.add_argument("--model", choices=tuple(MODELS), default="poisson")
    p.add_argument("--k-min", type=_positive_int, default=2)
    p.add_argument("--k-max", type=_positive_int, required=True)
    p.add_argument("--splits", type=_positive_int, default=10, help="number of train/test splits J")
    p.add_argument("--test-fraction", type=float, default=0.10)
    p.add_argument("--cost", choices=("gkl", "frobenius", "nb"), default="gkl")
    p.add_argument("--bic-n-obs", choices=("patients", "cells"), default="patients")
    p.add_argument("--no-align", action="store_true",
                   help="use training signatures in fitted order (no matching to the full fit)")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes (default: $SIGNMF_THREADS or 1)")
    _fit_options(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic catalog")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--signatures", help="reference signature CSV")
    src.add_argument("--random-signatures", type=_positive_int, metavar="N",
                     help="draw N Dirichlet stand-in signatures instead of reading a file")
    p.add_argument("--patients", type=_positive_int, default=20)
    p.add_argument("--n-signatures", type=_positive_int, default=5)
    p.add_argument("--required", nargs="*", default=None,
                   help="signature names always included (default: SBS1 SBS5 when present)")
    p.add_argument("--noise", choices=("poisson", "nb", "nb-uniform"), default="poisson")
    p.add_argument("--alpha", type=_positive_float, default=10.0)
    p.add_argument("--alpha-range", type=_positive_float, nargs=2, default=(10.0, 500.0))
    p.add_argument("--exposure-mean", type=_positive_float, default=6000.0)
    p.add_argument("--exposure-dispersion", type=_positive_float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("residuals", help="residual diagnostics for a fit directory")
    p.add_argument("--input", required=True)
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--threshold", type=_positive_float, default=1.5,
                   help="quantile widening factor for the overdispersion flag")
    p.add_argument("--out-dir", required=True)
    return parser


def _fit_config(args, k):
    return FitConfig(k, epsilon=args.epsilon, max_iters=args.max_iters,
                     restarts=args.restarts, seed=args.seed, tol_mode=args.tol_mode)


def cmd_fit(args, out: Path):
    V = load_counts(args.input)
    fit = normalize_factorization(fit_model(V, _fit_config(args, args.k), MODELS[args.model]))
    names = [f"S{k + 1}" for k in range(fit.rank)]
    write_matrix(out / "W.csv", fit.exposures, V.patient_ids, names, corner="patient")
    write_matrix(out / "H.csv", fit.signatures, names, V.mutation_types, corner="signature")
    written = ["W.csv", "H.csv"]
    if fit.dispersion is not None:
        write_alphas(out / "alphas.csv", fit.dispersion, V.patient_ids)
        written.append("alphas.csv")
    summary = {
        "model": args.model,
        "model_tag": fit.model.value,
        "rank": fit.rank,
        "divergence": fit.divergence,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "seed": fit.seed,
        **information_criteria(V, fit),
    }
    write_json(out / "fit.json", summary)
    written.append("fit.json")
    return [args.input], written


def cmd_select(args, out: Path):
    if args.k_min > args.k_max:
        raise ValidationError(f"--k-min ({args.k_min}) exceeds --k-max ({args.k_max})")
    V = load_counts(args.input)
    ks = list(range(args.k_min, args.k_max + 1))
    threads = args.threads or default_threads()
    model = MODELS[args.model]
    if args.method == "sigmos":
        cfg = SigmosConfig(ks, J=args.splits, test_fraction=args.test_fraction,
                           cost=args.cost, nmf_method=model, seed=args.seed,
                           epsilon=args.epsilon, max_iters=args.max_iters,
                           restarts=args.restarts, threads=threads, align=not args.no_align)
        res = sigmos(V, cfg)
        header = ["K", *(f"cost_{j + 1}" for j in range(args.splits)), "median"]
    else:
        res = select_by_ic(V, ks, model, args.method, n_obs=args.bic_n_obs, seed=args.seed,
                           epsilon=args.epsilon, max_iters=args.max_iters,
                           restarts=args.restarts, threads=threads)
        header = ["K", args.method]
    with (out / "selection.csv").open("w") as fh:
        fh.write(",".join(header) + "\n")
        for k in ks:
            vals = res.per_k_costs[k] if args.method == "sigmos" else []
            row = [str(k), *(format(c, ".17g") for c in vals), format(res.scores[k], ".17g")]
            fh.write(",".join(row) + "\n")
    write_json(out / "selection.json", {
        "chosen_k": res.chosen_k,
        "method": args.method,
        "method_label": res.method_label,
        "model": args.model,
        "scores": {str(k): v for k, v in res.scores.items()},
    })
    return [args.input], ["selection.csv", "selection.json"]


def cmd_simulate(args, out: Path):
    inputs = []
    if args.signatures:
        sigs = load_signatures(args.signatures)
        inputs.append(args.signatures)
    else:
        sigs = random_signatures(args.random_signatures, seed=args.seed)
    cfg = SimConfig(args.patients, args.n_signatures, sigs, required_signatures=args.required,
                    exposure_mean=args.exposure_mean, exposure_dispersion=args.exposure_dispersion,
                    noise=args.noise, alpha=args.alpha, alpha_range=tuple(args.alpha_range),
                    seed=args.seed)
    sim = simulate_dataset(cfg)
    truth = out / "truth"
    truth.mkdir(exist_ok=True)
    write_counts(out / "V.csv", sim.counts)
    write_matrix(truth / "W_true.csv", sim.exposures, sim.counts.patient_ids,
                 sim.signature_names, corner="patient")
    write_matrix(truth / "H_true.csv", sim.signatures, sim.signature_names,
                 sim.counts.mutation_types, corner="signature")
    write_alphas(truth / "alphas.csv", sim.alphas, sim.counts.patient_ids)
    written = ["V.csv", "truth/W_true.csv", "truth/H_true.csv", "truth/alphas.csv"]
    if not args.signatures:
        write_signatures(out / "signatures.csv", sigs)
        written.append("signatures.csv")
    return inputs, written


def _load_fit(fit_dir: Path, V) -> Factorization:
    meta = json.loads((fit_dir / "fit.json").read_text())
    W, w_rows, _ = read_matrix(fit_dir / "W.csv")
    H, _, h_cols = read_matrix(fit_dir / "H.csv")
    if list(w_rows) != list(V.patient_ids) or list(h_cols) != list(V.mutation_types):
        raise ValidationError("fit directory labels do not match the input catalog")
    model = Model(meta["model_tag"])
    alphas = None
    if model is not Model.POISSON:
        alphas = read_alphas(fit_dir / "alphas.csv")
    return Factorization(W, H, model, alphas, divergence=meta.get("divergence", float("nan")))


def cmd_residuals(args, out: Path):
    V = load_counts(args.input)
    fit_dir = Path(args.fit_dir)
    fit = _load_fit(fit_dir, V)
    rep = residual_report(V, fit, threshold=args.threshold)
    write_residuals(out / "residuals.csv", rep, V.patient_ids, V.mutation_types)
    q = rep.quantiles
    write_json(out / "summary.json", {
        "model_tag": fit.model.value,
        "observed_quantiles": list(q.observed),
        "reference_quantiles": list(q.reference),
        "overdispersed": q.overdispersed,
        "threshold": args.threshold,
        "fraction_abs_normalized_gt_2": rep.exceedance(2.0),
    })
    inputs = [args.input] + [str(fit_dir / n) for n in ("fit.json", "W.csv", "H.csv")]
    return inputs, ["residuals.csv", "summary.json"]


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate,
            "residuals": cmd_residuals}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out_dir)
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs, written = COMMANDS[args.command](args, out)
    except NumericalError as exc:
        print(f"signmf {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SignmfError, OSError) as exc:
        print(f"signmf {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    config = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    write_json(out / "manifest.json", {
        "command": args.command,
        "config": json.loads(json.dumps(config, default=list)),
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "version": __version__,
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "elapsed_seconds": round(time.time() - started, 3),
        "outputs": written,
    })
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
