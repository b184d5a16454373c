"""Command-line front end: simulate, predict, experiment <kind>, oracle-check.

Exit status is 0 when every assertion passes, 1 on a statistical failure and
2 on a configuration error or an experiment that cannot run for the model
(inapplicable regime, insufficient replicates).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import List, Optional, Sequence

from . import analytics
from .experiments import KINDS, ConfigError, ExperimentConfig, derive_substream, run_experiment
from .genealogy import DefectiveLawError, simulate
from .mutation import allele_spectrum, haplotype_keys, overlay, site_spectrum
from .scale_model import format_model, parse_model

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> List[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _common(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--model", default="yule:a=1.0", help="e.g. yule:a=1.0, bd:b=1.0,d=2.0, stable:alpha=1.5,c=1.0")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=_int_list, default=[1000], help="sample sizes, comma separated")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalpoint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one sample, overlay mutations, report both spectra")
    _common(p)
    p.add_argument("--dump", default=None, help="also write the sample as index,length CSV")

    p = sub.add_parser("predict", help="analytic predictions as formula_id,k,value,error_bound")
    _common(p, seed_required=False)
    p.add_argument("--k-max", type=int, default=5)

    p = sub.add_parser("experiment", help="replicated Monte Carlo checks against analytic values")
    p.add_argument("kind", choices=[k for k in KINDS if k != "oracle"])
    _common(p)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--lambdas", type=_float_list, default=[1.0])
    p.add_argument("--target", choices=("auto", "limit", "exact"), default="auto")
    p.add_argument("--z-max", type=float, default=4.0)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--census-p", type=float, default=0.5)
    p.add_argument("--compare-model", default=None)
    p.add_argument("--draws", type=int, default=10**5)
    p.add_argument("--pooled", type=int, default=10**4)

    p = sub.add_parser("oracle-check", help="fast spectra against brute force on random small instances")
    _common(p)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--repro-path", default=None, help="where to dump mismatching instances")
    return parser


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _simulate(args) -> int:
    model = parse_model(args.model)
    if len(args.n) != 1:
        raise ConfigError("simulate takes a single sample size")
    n = args.n[0]
    stream = derive_substream(args.seed, 0, n)
    sample = simulate(model, n, stream)
    ov = overlay(sample, args.theta, stream, collapse=True)
    sites = site_spectrum(sample, ov)
    alleles = allele_spectrum(haplotype_keys(sample, ov))
    if args.dump:
        _emit(sample.to_csv(), args.dump)
    if args.format == "json":
        doc = {
            "model": format_model(model), "theta": args.theta, "n": n, "seed": args.seed,
            "sites": {str(k): v for k, v in sites.as_dict().items()}, "S_n": sites.total,
            "alleles": {str(k): v for k, v in alleles.as_dict().items()}, "A_n": alleles.total,
        }
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        _emit(sites.to_csv() + "\n" + alleles.to_csv(), args.out)
    return EXIT_OK


def _optional(func, *args):
    try:
        return [func(*args)]
    except ValueError:
        return []


def _predictions(model, theta: float, n: int, k_max: int):
    out = [analytics.limit_sites_rate(model, theta)]
    out += _optional(analytics.clt_variance, model, theta)
    out += _optional(analytics.brownian_growth_constant, model, theta)
    if analytics.spectrum_limit_applicable(model)[0]:
        out += [analytics.limit_site_spectrum(model, theta, k) for k in range(1, k_max + 1)]
    out += [analytics.expected_site_count_exact(model, theta, n, k) for k in range(1, min(k_max, n - 1) + 1)]
    if theta > 0:
        out.append(analytics.limit_allele_fraction(model, theta))
        out += [analytics.limit_allele_spectrum(model, theta, k) for k in range(1, k_max + 1)]
    return out


def _predict(args) -> int:
    model = parse_model(args.model)
    if len(args.n) != 1:
        raise ConfigError("predict takes a single sample size for the finite-n rows")
    preds = _predictions(model, args.theta, args.n[0], args.k_max)
    if args.format == "json":
        doc = [
            {"formula_id": p.formula_id, "k": p.inputs.get("k"), "value": p.value, "error_bound": p.error_bound}
            for p in preds
        ]
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["formula_id", "k", "value", "error_bound"])
    for p in preds:
        writer.writerow([p.formula_id, p.inputs.get("k", ""), repr(float(p.value)), repr(float(p.error_bound))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _report(config: ExperimentConfig, args) -> int:
    report = run_experiment(config)
    _emit(report.to_json() + "\n" if args.format == "json" else report.to_csv(), args.out)
    for row in report.failures:
        print(f"FAIL {row.check} n={row.n} k={row.k}: {row.note}", file=sys.stderr)
    if report.status != "ok":
        print(f"{report.status}: {report.notes}", file=sys.stderr)
    return report.exit_code


def _experiment(args) -> int:
    config = ExperimentConfig(
        kind=args.kind, seed=args.seed, model=args.model, theta=args.theta, n=tuple(args.n),
        reps=args.reps, k_max=args.k_max, lambdas=tuple(args.lambdas), target=args.target,
        z_max=args.z_max, tolerance=args.tolerance, census_p=args.census_p,
        compare_model=args.compare_model, draws=args.draws, pooled=args.pooled, workers=args.workers,
    )
    return _report(config, args)


def _oracle(args) -> int:
    config = ExperimentConfig(
        kind="oracle", seed=args.seed, instances=args.instances,
        workers=args.workers, repro_path=args.repro_path,
    )
    return _report(config, args)


_COMMANDS = {"simulate": _simulate, "predict": _predict, "experiment": _experiment, "oracle-check": _oracle}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DefectiveLawError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
