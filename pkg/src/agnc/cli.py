"""Command-line entry point: ``agnc {linreg,icp,fitloss,curves}``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments or config.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from agnc.adaptive import AlphaSearchConfig, fit_residual_mode, select_alpha, select_alpha_modeshifted
from agnc.errors import ConfigurationError
from agnc.experiments.config import ConfigError, load_icp_config, load_linreg_config
from agnc.experiments.icp_bench import IcpBenchConfig, run_icp_bench
from agnc.experiments.linreg import LinRegConfig, run_linreg_mc
from agnc.losses import KERNEL_TAGS, KernelFamily


def _method_list(text):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agnc", description="Adaptive GNC robust estimation benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = argparse.ArgumentParser(add_help=False)
    bench.add_argument("--config", type=Path, help="flat TOML config file")
    bench.add_argument("--seed", type=_seed, help="override the config seed")
    bench.add_argument("--out", type=Path, default=Path("results"), help="output directory for the CSV files")
    bench.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
    bench.add_argument("--methods", type=_method_list, help="comma-separated method names")

    sub.add_parser("linreg", parents=[bench], help="robust linear regression Monte-Carlo")
    sub.add_parser("icp", parents=[bench], help="synthetic ICP benchmark")

    fit = sub.add_parser("fitloss", help="fit MB mode and shape parameters to a residual file")
    fit.add_argument("residuals", type=Path, help="text file with one residual per line")
    fit.add_argument("--n-e", type=int, default=3, help="residual dimension")
    fit.add_argument("--tau", type=float, default=5.0, help="truncation bound")
    fit.add_argument("--bins", type=int, default=100)
    fit.add_argument("--seed", type=_seed, help="accepted for symmetry; the fit is deterministic")

    curves = sub.add_parser("curves", help="CSV of loss and weight against the residual")
    curves.add_argument("--kernel", action="append", choices=KERNEL_TAGS, help="kernel tag (repeatable)")
    curves.add_argument("--alpha", type=float, action="append", help="shape parameter(s) for adaptive and amb")
    curves.add_argument("--mode", type=float, default=math.sqrt(2.0), help="mode for the amb kernel")
    curves.add_argument("--scale", type=float, default=1.0, help="scale c (or inlier bound for tls)")
    curves.add_argument("--max-eps", type=float, default=5.0)
    curves.add_argument("--points", type=int, default=501)
    curves.add_argument("--out", type=Path, help="write here instead of stdout")
    curves.add_argument("--seed", type=_seed, help="accepted for symmetry; the output is deterministic")
    return parser


def _overrides(args):
    return {"seed": args.seed, "threads": args.threads, "methods": args.methods}


def _print_summary(report):
    metrics = report.metrics
    for row in report.summary():
        parts = [f"{row['method']:8s}", f"{row['condition']:24s}"]
        for m in metrics:
            parts.append(f"{m} " + "/".join(f"{row[f'{m}_p{p}']:.4g}" for p in (50, 75, 90)))
        if "success_rate" in row:
            parts.append(f"success {row['success_rate']:.2f}")
        parts.append(f"t {row['mean_wall_time']:.3g}s")
        print("  ".join(parts))


def _run_linreg(args):
    if args.config is not None:
        cfg = load_linreg_config(args.config, **_overrides(args))
    else:
        cfg = LinRegConfig(**{k: v for k, v in _overrides(args).items() if v is not None})
    report = run_linreg_mc(cfg)
    out = report.write(args.out)
    _print_summary(report)
    print(f"wrote {out / 'rows.csv'}, {out / 'summary.csv'}, {out / 'stages.csv'}")


def _run_icp(args):
    if args.config is not None:
        cfg = load_icp_config(args.config, **_overrides(args))
    else:
        cfg = IcpBenchConfig(**{k: v for k, v in _overrides(args).items() if v is not None})
    report = run_icp_bench(cfg)
    out = report.write(args.out)
    _print_summary(report)
    print(f"wrote {out / 'rows.csv'}, {out / 'summary.csv'}, {out / 'stages.csv'}")


def read_residuals(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for number, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ConfigError(f"{path}:{number}: not a number: {text!r}") from None
    if not values:
        raise ConfigError(f"{path}:1: no residuals found")
    return np.asarray(values)


def _run_fitloss(args):
    eps = read_residuals(args.residuals)
    cfg = AlphaSearchConfig(tau=args.tau)
    fit = fit_residual_mode(eps, args.n_e, args.tau, args.bins)
    mode = min(fit.mode, float(np.nextafter(args.tau, 0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha_amb = select_alpha_modeshifted(eps, mode, cfg)
    print(f"a_star {fit.a_star!r}")
    print(f"mode {fit.mode!r}")
    print(f"alpha_star {alpha_amb!r}")
    print(f"alpha_star_unshifted {select_alpha(eps, cfg)!r}")


def _kernels(args):
    tags = args.kernel or ["adaptive"]
    alphas = args.alpha or [0.0]
    out = []
    for tag in tags:
        if tag == "quadratic":
            out.append((KernelFamily.quadratic(), math.nan, math.nan))
        elif tag in ("cauchy", "welsch", "geman_mcclure"):
            out.append((getattr(KernelFamily, tag)(args.scale), math.nan, math.nan))
        elif tag == "tls":
            out.append((KernelFamily.truncated_ls(args.scale), math.nan, math.nan))
        elif tag == "adaptive":
            out.extend((KernelFamily.adaptive(a), a, math.nan) for a in alphas)
        else:
            out.extend((KernelFamily.amb(a, args.mode), a, args.mode) for a in alphas)
    return out


def _run_curves(args):
    if args.points < 2 or not args.max_eps > 0:
        raise ConfigError("<args>:0: need --points >= 2 and --max-eps > 0")
    # i * max / (n - 1) keeps grid values like 1.0 exact
    eps = np.arange(args.points) * args.max_eps / (args.points - 1)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["kernel", "alpha", "mode", "eps", "rho", "weight"])
        for kernel, alpha, mode in _kernels(args):
            rho, w = kernel.rho(eps), kernel.weight(eps)
            for e, r, wi in zip(eps, rho, w):
                writer.writerow([kernel.tag, repr(float(alpha)), repr(float(mode)), repr(float(e)), repr(float(r)), repr(float(wi))])
    finally:
        if args.out:
            fh.close()


COMMANDS = {"linreg": _run_linreg, "icp": _run_icp, "fitloss": _run_fitloss, "curves": _run_curves}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"agnc: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"agnc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
