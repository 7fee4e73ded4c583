"""Command line front end: simulate, perturb, distance, verify.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_flow, build_generator, config_dict, load_config, with_overrides
from .cocycle import lyapunov_spectrum
from .errors import BudgetError, ConfigurationError, NumericalError, PipelineError
from .lpmetric import LpConfig, bounded, sigma_hat_p
from .perturb import is_schrodinger, run_pipeline

log = logging.getLogger("kinetic_cocycles")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CSV_HEADER = ("t", "lambda1_ft", "lambda2_ft", "logdet_avg")
N_CHECKPOINTS = 100

EXPRESSION_HELP = """\
scalar fields (alpha, beta, potential) are four coefficients a0,a1,a2,a3:
    a0 + a1 cos(2 pi w1) + a2 sin(2 pi w1) + a3 cos(2 pi s / roof_h0)
where w1 is the first base coordinate and s the height in the tower.
presets: damped_pendulum (alpha, beta), traceless (beta), schrodinger
(potential, energy; beta = energy - potential).
"""


# ------------------------------------------------------------- JSON output


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if all(c in "-0123456789" for c in s):
        s += ".0"
    return s


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_report(out: Path, report: dict, elapsed: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(to_json(report) + "\n")
    # wall-clock lives apart from the report so that reports are reproducible
    (out / "timing.json").write_text(to_json({"wall_clock_seconds": elapsed}) + "\n")


def write_finite_time(out: Path, rows) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "finite_time.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([_fmt_float(float(x)) for x in row])


def checkpoints(T: float, n: int = N_CHECKPOINTS) -> list[float]:
    return [T * k / n for k in range(1, n + 1)]


def _header(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": config_dict(cfg)}


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: ExperimentConfig) -> tuple[int, dict, list]:
    gen = build_generator(cfg)
    rep = lyapunov_spectrum(gen, cfg.horizon, cfg.samples, cfg.step, cfg.seed,
                            checkpoints=checkpoints(cfg.horizon), workers=cfg.workers)
    report = _header(cfg, "simulate")
    report["field_class"] = gen.field_class
    report["spectrum"] = rep.as_dict()
    report["sum_rule_residual"] = rep.lambda1 + rep.lambda2 - rep.sum_via_trace
    return EXIT_OK, report, list(rep.finite_time)


def cmd_perturb(cfg: ExperimentConfig) -> tuple[int, dict, list]:
    gen = build_generator(cfg)
    energy = cfg.energy if cfg.generator == "schrodinger" else None
    B, prep = run_pipeline(
        gen, cfg.p, cfg.eps, cfg.seed, T=cfg.horizon, n_samples=cfg.samples, step=cfg.step,
        r=cfg.r, enforce_budget=cfg.enforce_budget, energy=energy,
        checkpoints=checkpoints(cfg.horizon), workers=cfg.workers,
    )
    report = _header(cfg, "perturb")
    report["input_field_class"] = gen.field_class
    report["output_field_class"] = B.field_class
    report["traceless_input"] = is_schrodinger(gen) or gen.is_traceless
    report["pipeline"] = prep.as_dict()
    report["sigma_total"] = prep.sigma_total
    report["simple"] = prep.simple
    rows = list(prep.spectrum.finite_time) if prep.spectrum is not None else []
    ok = prep.simple and prep.sigma_total < cfg.eps
    if prep.verdict is not None:
        ok = ok and prep.verdict.passed
    report["passed"] = ok
    return (EXIT_OK if ok else EXIT_VERIFY), report, rows


def cmd_distance(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig) -> tuple[int, dict]:
    fa, fb = build_flow(cfg_a), build_flow(cfg_b)
    if fa != fb:
        raise ConfigurationError("base: both configs must describe the same suspension flow")
    A = build_generator(cfg_a, fa)
    B = build_generator(cfg_b, fa)
    est = sigma_hat_p(A, B, LpConfig(cfg_a.p, cfg_a.mc_samples, cfg_a.seed))
    report = {
        "command": "distance",
        "version": __version__,
        "seed": cfg_a.seed,
        "p": cfg_a.p,
        "sigma_hat_p": est.value,
        "sigma_hat_p_stderr": est.stderr,
        "sigma_p": bounded(est.value),
        # d/dx x/(1+x) = 1/(1+x)^2
        "sigma_p_stderr": est.stderr / (1.0 + est.value) ** 2 if math.isfinite(est.value) else 0.0,
        "method": est.method,
    }
    return EXIT_OK, report


def cmd_verify(seed: int, out=None) -> int:
    from .verify import format_table, run_checks

    results = run_checks(seed)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} invariants passed")
    if out is not None:
        write_report(Path(out), {
            "command": "verify",
            "version": __version__,
            "seed": seed,
            "results": [{"name": r.name, "defect": r.defect, "tolerance": r.tolerance, "passed": r.passed}
                        for r in results],
        }, 0.0)
    if failed:
        print(f"first failing invariant: {failed[0].name}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcoc",
        description="Lyapunov spectra and simple-spectrum perturbations of kinetic cocycles over suspension flows.",
        epilog=EXPRESSION_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True, action="store"):
        p.add_argument("--config", required=config_required, action=action, metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--samples", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--step", type=float)

    common(sub.add_parser("simulate", help="estimate the Lyapunov spectrum of a configured field",
                          epilog=EXPRESSION_HELP, formatter_class=argparse.RawDescriptionHelpFormatter))
    common(sub.add_parser("perturb", help="run the perturbation pipeline and check the splitting",
                          epilog=EXPRESSION_HELP, formatter_class=argparse.RawDescriptionHelpFormatter))
    common(sub.add_parser("distance", help="sigma_p between two configured fields (give --config twice)"),
           action="append")
    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR")
    return parser


def _load(path, args) -> ExperimentConfig:
    cfg = load_config(path)
    return with_overrides(cfg, seed=args.seed, out=args.out, samples=args.samples,
                          horizon=args.horizon, step=args.step)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        if args.command == "verify":
            return cmd_verify(args.seed, args.out)
        if args.command == "distance":
            if len(args.config) != 2:
                raise ConfigurationError("config: distance needs exactly two --config files")
            cfg_a, cfg_b = (_load(p, args) for p in args.config)
            code, report = cmd_distance(cfg_a, cfg_b)
            print(f"sigma_hat_p = {report['sigma_hat_p']:.10g} +- {report['sigma_hat_p_stderr']:.3g}")
            print(f"sigma_p     = {report['sigma_p']:.10g} +- {report['sigma_p_stderr']:.3g}")
            if args.out:
                write_report(Path(args.out), report, time.perf_counter() - start)
            return code
        cfg = _load(args.config, args)
        if args.command == "simulate":
            code, report, rows = cmd_simulate(cfg)
            s = report["spectrum"]
            print(f"lambda1 = {s['lambda1']:.10g}  lambda2 = {s['lambda2']:.10g}  (stderr {s['stderr']:.3g})")
        else:
            code, report, rows = cmd_perturb(cfg)
            print(f"simple = {report['simple']}  sigma_total = {report['sigma_total']:.6g}  passed = {report['passed']}")
        out = Path(cfg.out)
        write_report(out, report, time.perf_counter() - start)
        write_finite_time(out, rows)
        log.info("wrote %s", out)
        return code
    except (ConfigurationError, BudgetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (ConfigurationError, BudgetError)):
            return EXIT_CONFIG
        return EXIT_NUMERIC
    except (NumericalError, OverflowError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
