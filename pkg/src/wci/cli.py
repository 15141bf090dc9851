"""Command line interface: ``wci test|risk|rate|calibrate|verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .citest import DEFAULT_ZETA, ConfigError, TestConfig, calibrate_zeta, run_test
from .genmodels import REGISTRY, ModelError, build_model
from .measures import DataError, read_csv
from .seeding import ENV_SEED, derive_rng, key_of, master_seed

log = logging.getLogger("wci")

EXIT_ACCEPT, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def _eta(value: int | None) -> int | None:
    return None if value in (None, 0) else value


def _common(p: argparse.ArgumentParser, *, eta_default=None) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"master seed (falls back to ${ENV_SEED})")
    p.add_argument("--eta-subsample", type=int, default=eta_default, metavar="M",
                   help="average over M random eta grid points instead of all (0 = all)")
    p.add_argument("--no-poissonize", action="store_true", help="use all n rows instead of N ~ Poisson(n/2)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_flags(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--model", action="append", choices=sorted(REGISTRY), default=None,
                   help=f"model name, repeatable (default {default})")
    p.add_argument("--theta", type=float, default=None, help="perturbation size for alt_four_corner")
    p.add_argument("--nu-seed", type=int, default=0, help="seed of the bump signs for alt_four_corner")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wci", description="Wasserstein-smooth conditional independence test")
    parser.add_argument("--version", action="version", version=f"wci {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the test on a CSV file with columns x,y,z")
    p.add_argument("file", type=Path)
    p.add_argument("--n", type=int, default=None, help="sample budget (default: number of rows)")
    p.add_argument("--d", type=int, default=None, help="number of Z bins (default ceil(n^(2/5)))")
    p.add_argument("--zeta", type=float, default=None, help=f"threshold constant (default {DEFAULT_ZETA}; calibrate it)")
    _common(p)

    p = sub.add_parser("risk", help="empirical rejection rates over an n-grid")
    _model_flags(p, "null_independent_uniform")
    p.add_argument("--n", type=_int_list, required=True, help="comma separated n-grid")
    p.add_argument("--d", type=int, default=None, help="bump count of alt_four_corner")
    p.add_argument("--bins", type=int, default=None, help="number of Z bins (default ceil(n^(2/5)))")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--zeta", type=float, default=None, help="fixed zeta (default: calibrate per n)")
    p.add_argument("--calib-reps", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)
    _common(p)

    p = sub.add_parser("rate", help="detectable separation versus n for alt_four_corner")
    p.add_argument("--n", type=_int_list, required=True, help="comma separated n-grid")
    p.add_argument("--d", type=int, default=None, help="bump count (default half the bin count)")
    p.add_argument("--nu-seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=200, help="replications per bisection probe")
    p.add_argument("--iterations", type=int, default=10, help="bisection steps")
    p.add_argument("--calib-reps", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)
    _common(p, eta_default=64)

    p = sub.add_parser("calibrate", help="calibrate zeta on a null model")
    p.add_argument("--model", choices=sorted(n for n in REGISTRY if n.startswith("null")),
                   default="null_independent_uniform")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=None, help="number of Z bins")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    _common(p)

    p = sub.add_parser("verify", help="run a property suite against the exact OT oracle")
    p.add_argument("suite", help="facts, weedbach, indykthaper, ustat, lowerbound or all")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _emit(payload: dict, out: Path | None, name: str = "report.json") -> None:
    from .harness import _json_safe

    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def _metadata(seed: int, eta) -> dict:
    return {"seed": seed, "versions": {"wci": __version__}, "eta_policy": "full" if eta is None else f"subsample(M={eta})"}


def cmd_test(args) -> int:
    data = read_csv(args.file)
    n = args.n if args.n is not None else len(data)
    if args.zeta is None:
        log.warning("using the default zeta=%s; run `wci calibrate` for your null family", DEFAULT_ZETA)
    cfg = TestConfig(n=n, d=args.d, zeta=args.zeta or DEFAULT_ZETA, eta_subsample=_eta(args.eta_subsample),
                     poissonize=not args.no_poissonize)
    seed = master_seed(args.seed)
    report = run_test(data, cfg, derive_rng(seed, key_of("test"), n))
    _emit({"schema_version": "1.0", "command": "test", "report": report.to_dict(),
           "metadata": _metadata(seed, cfg.eta_subsample)}, args.out)
    return EXIT_REJECT if report.reject else EXIT_ACCEPT


def _model_specs(args):
    from .harness import ModelSpec

    names = args.model or ["null_independent_uniform"]
    specs = []
    for name in names:
        spec = ModelSpec(name, args.d, args.theta, args.nu_seed) if name == "alt_four_corner" else ModelSpec(name)
        build_model(spec.name, d=spec.d, theta=spec.theta, nu_seed=spec.nu_seed)  # validate early
        specs.append(spec)
    return specs


def _finish(result, out: Path | None) -> None:
    from .harness import to_csv_text, write_result

    if out is not None:
        written = write_result(result, out)
        log.info("wrote %s", ", ".join(str(p) for p in [written["csv"], written["json"], *written["plots"]]))
    sys.stdout.write(to_csv_text(result.columns, result.rows))


def cmd_risk(args) -> int:
    from .harness import ExperimentSpec, run_risk

    spec = ExperimentSpec(models=_model_specs(args), n_grid=args.n, reps=args.reps, zeta=args.zeta, bins=args.bins,
                          eta_subsample=_eta(args.eta_subsample), poissonize=not args.no_poissonize,
                          seed=master_seed(args.seed), jobs=args.jobs, calib_reps=args.calib_reps, alpha=args.alpha)
    _finish(run_risk(spec), args.out)
    return 0


def cmd_rate(args) -> int:
    from .harness import RateSpec, run_rate

    spec = RateSpec(n_grid=args.n, reps=args.reps, nu_seed=args.nu_seed, model_d=args.d, iterations=args.iterations,
                    eta_subsample=_eta(args.eta_subsample), poissonize=not args.no_poissonize,
                    seed=master_seed(args.seed), jobs=args.jobs, calib_reps=args.calib_reps, alpha=args.alpha)
    result = run_rate(spec)
    _finish(result, args.out)
    print(f"slope {result.extra['slope']:.4f}")
    return 0


def cmd_calibrate(args) -> int:
    seed = master_seed(args.seed)
    eta = _eta(args.eta_subsample)
    start = time.perf_counter()
    zeta, draws = calibrate_zeta(build_model(args.model), args.n, args.reps, args.alpha, seed=seed, d=args.d,
                                 eta_subsample=eta, poissonize=not args.no_poissonize, return_draws=True)
    meta = _metadata(seed, eta)
    meta["wall_time_s"] = time.perf_counter() - start
    payload = {"schema_version": "1.0", "command": "calibrate", "zeta": zeta, "model": args.model, "n": args.n,
               "d": TestConfig(n=args.n, d=args.d).bins, "reps": args.reps, "alpha": args.alpha, "metadata": meta}
    _emit(payload, args.out)
    if args.out is not None:
        from .plots import plot_calibration

        plot_calibration(draws, zeta, args.out)
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.suite not in SUITES + ("all",):
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES + ('all',))}", file=sys.stderr)
        return EXIT_ERROR
    results = run_suite(args.suite)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status} {r.suite:12s} {r.name:40s} {r.passed}/{r.checked} worst slack {r.worst_slack:.3g}")
    if args.out is not None:
        _emit({"schema_version": "1.0", "command": "verify", "suites": [r.to_dict() for r in results],
               "metadata": {"seed": 0, "versions": {"wci": __version__}, "eta_policy": "full"}}, args.out)
    return 0 if all(r.ok for r in results) else 1


COMMANDS = {"test": cmd_test, "risk": cmd_risk, "rate": cmd_rate, "calibrate": cmd_calibrate, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DataError, ConfigError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
