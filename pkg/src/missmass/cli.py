"""Command-line front end.

Subcommands: sample, estimate, certify, coupling-demo, pac-curve, singletons.
Every file written under ``--out PREFIX`` is accompanied by
``PREFIX.manifest.json``; data files carry no timestamps, so rerunning the
recorded argv reproduces them byte for byte.

Exit codes: 0 success/pass, 1 certificate failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .certificate import (
    DEFAULT_BETA, DEFAULT_C, DEFAULT_K, DEFAULT_M, DEFAULT_THRESHOLD, eta1, eta2, eta_certificate, separation_ratio,
)
from .config import ConfigError, load_pac_config_file
from .coupling import CouplingParams, binomial_halfwidth, coupled_missing_masses, harvest_pivotal, sample_size
from .distributions import dist_from_spec, draw_n
from .estimators import ESTIMATOR_IDS, estimate, expected_missing_mass, expected_singletons, missing_mass_true
from .pac_harness import failure_curve, good_turing_bridge, pac_verdict

SEED_ENV = "MISSMASS_SEED"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _add_dist_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("distribution")
    g.add_argument("--family", required=True, choices=["geometric", "dithered", "zipf", "stretched_exp"])
    g.add_argument("--alpha", type=float, help="geometric/zipf/stretched_exp parameter")
    g.add_argument("--beta", type=float, help="dithered split, in (0, 1/2)")
    g.add_argument("--m", type=int, help="dithered head length")
    g.add_argument("--theta", default="", help="dithered flags, '-' = beta, '+' = 1-beta")
    g.add_argument("--theta-default", default="-", help="flag for blocks past --theta")


def _dist_from_args(args):
    spec = {"family": args.family, "alpha": args.alpha, "beta": args.beta, "m": args.m,
            "theta": args.theta, "theta_default": args.theta_default}
    try:
        return dist_from_spec({k: v for k, v in spec.items() if v is not None})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_common(p: argparse.ArgumentParser, threads: bool = False) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--out", default=None, help="output prefix; files get .csv/.json/.manifest.json")
    if threads:
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


class Outputs:
    """Collects data files for one run and writes them with a manifest."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.start = time.time()
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.paths: list[str] = []

    def write(self, suffix: str, text: str) -> None:
        if self.args.out is None:
            sys.stdout.write(text)
            return
        path = Path(f"{self.args.out}{suffix}")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.paths.append(str(path))

    def close(self) -> None:
        if self.args.out is None or not self.paths:
            return
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "out", "threads")}
        manifest = {
            "command": self.command,
            "params": params,
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "outputs": self.paths,
            "argv": sys.argv[1:],
            "started_at": self.started_at,
            "wall_clock_s": round(time.time() - self.start, 3),
        }
        Path(f"{self.args.out}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_sample(args) -> int:
    dist = _dist_from_args(args)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    s = draw_n(dist, args.n, args.seed)
    out = Outputs(args, "sample")
    out.write(".csv", _csv(sorted(s.counts.items()), ["symbol", "count"]))
    out.close()
    return EXIT_OK


def cmd_estimate(args) -> int:
    dist = _dist_from_args(args)
    if args.n < 1 or args.reps < 1:
        raise UsageError("--n and --reps must be >= 1")
    rows, fails, defined = [], 0, 0
    for rep in range(args.reps):
        s = draw_n(dist, args.n, [args.seed, args.n, rep])
        est = estimate(args.estimator, s).estimate
        truth = missing_mass_true(dist, s)
        ratio = None if truth is None else est / truth
        if ratio is not None:
            defined += 1
            fails += abs(ratio - 1.0) > args.eps
        rows.append([rep, args.n, args.estimator, repr(est), "" if truth is None else repr(truth),
                     "" if ratio is None else repr(ratio)])
    out = Outputs(args, "estimate")
    out.write(".csv", _csv(rows, ["rep", "n", "estimator", "estimate", "truth", "ratio"]))
    summary = {"n": args.n, "reps": args.reps, "estimator": args.estimator, "eps": args.eps,
               "failure_freq": fails / defined if defined else None,
               "ci": binomial_halfwidth(fails, defined, 1.959963984540054), "undefined": args.reps - defined,
               "dist": dist.to_spec()}
    if args.check_identity:
        summary["identity"] = good_turing_bridge(dist, args.n, args.reps, [args.seed, args.n, 0xB1D6E])
    out.write(".json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    out.close()
    return EXIT_OK


def cmd_certify(args) -> int:
    try:
        report = eta_certificate(args.K, args.beta, args.m, args.C, args.threshold, args.rigorous)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(report.to_table())
    if args.out is not None:
        out = Outputs(args, "certify")
        out.write(".json", report.to_json() + "\n")
        out.close()
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_coupling_demo(args) -> int:
    if args.k < 1 or args.reps < 0:
        raise UsageError("--k must be >= 1 and --reps >= 0")
    try:
        params = CouplingParams(args.beta, args.m, args.k)
        n = sample_size(args.C, args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bound = eta1(args.k, args.beta, args.m, args.C) * eta2(args.k, args.beta, args.m, args.C)
    report = {"k": args.k, "n": n, "reps": args.reps, "beta": args.beta, "m": args.m, "C": args.C,
              "eta_bound": bound, "expected_ratio": separation_ratio(args.beta)}
    if args.reps == 0:
        report.update(p_hat=None, ci=None, pivotal=0, ratios={}, marginals_identical=True)
    else:
        found, hits = harvest_pivotal(params, n, args.reps, args.seed)
        ratios: dict[str, int] = {}
        identical = True
        for cs in found:
            mass, mass_p = coupled_missing_masses(cs)
            key = repr(mass / mass_p)
            ratios[key] = ratios.get(key, 0) + 1
            identical &= cs.x == cs.x_prime
        report.update(p_hat=hits / args.reps, ci=binomial_halfwidth(hits, args.reps), pivotal=hits,
                      ratios=ratios, marginals_identical=identical)
    out = Outputs(args, "coupling-demo")
    out.write(".json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    out.close()
    return EXIT_OK


def cmd_pac_curve(args) -> int:
    try:
        cfg = load_pac_config_file(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        cfg.seed = args.seed
    curve = failure_curve(cfg, workers=args.threads)
    verdict = pac_verdict(curve, cfg.delta)
    out = Outputs(args, "pac-curve")
    out.write(".csv", curve.to_csv())
    payload = json.loads(curve.to_json())
    payload.update(verdict=verdict, delta=cfg.delta, reps=cfg.reps, seed=cfg.seed)
    out.write(".json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    out.close()
    sys.stderr.write(f"verdict: {verdict}\n")
    return EXIT_OK


def cmd_singletons(args) -> int:
    from .config import parse_grid

    dist = _dist_from_args(args)
    try:
        grid = parse_grid(args.n_grid)
    except ValueError as exc:
        raise UsageError(f"bad --n-grid: {exc}") from None
    rows = [[n, repr(expected_singletons(dist, n)), repr(expected_missing_mass(dist, n))] for n in grid]
    out = Outputs(args, "singletons")
    out.write(".csv", _csv(rows, ["n", "expected_singletons", "expected_missing_mass"]))
    out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="missmass", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a sample and write symbol counts")
    _add_dist_args(p)
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="per-replicate estimates, truths and ratios")
    _add_dist_args(p)
    p.add_argument("--estimator", choices=ESTIMATOR_IDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--check-identity", action="store_true", help="also compare mean G_n with E[M_{n-1}]")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("certify", help="tabulate eta1*eta2 and check the threshold")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--C", type=float, default=DEFAULT_C)
    p.add_argument("--K", type=int, default=DEFAULT_K)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--rigorous", action="store_true", help="interval arithmetic lower endpoints")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("coupling-demo", help="pivotal frequency and M/M' on pivotal replicates")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--C", type=float, default=DEFAULT_C)
    _add_common(p)
    p.set_defaults(func=cmd_coupling_demo)

    p = sub.add_parser("pac-curve", help="failure-frequency curve from a config file")
    p.add_argument("config", help="config path, or the name of a shipped config")
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_pac_curve)

    p = sub.add_parser("singletons", help="expected singletons and missing mass over n")
    _add_dist_args(p)
    p.add_argument("--n-grid", default="2^10,2^12,2^14,2^16,2^18,2^20")
    _add_common(p)
    p.set_defaults(func=cmd_singletons)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if "seed" in vars(args) and args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"missmass {args.command}: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
