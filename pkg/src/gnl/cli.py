"""Command-line entry point: ``gnl {certify,sample,moments,partitions,experiment}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import rng as _rng
from .bounds import DEFAULT_EPS, SSTAR_RESTARTS, assemble, sigma_star
from .experiments import (
    EXAMPLES, emit_csv, fmt_float, format_rows, make_row, run_example,
)
from .model import ENSEMBLES, ModelError, as_selfadjoint, gen_named, load_model_file
from .moments import mc_trace_moment, partition_terms, run_checks
from .montecarlo import default_samples, default_threads, estimate_opnorm_mean
from .partitions import catalan, double_factorial, verify_phi

EPS_SWEEP = (0.05, 0.1, 0.25)
DEFAULT_DELTA = 0.01
SEEDED_ENSEMBLES = {"subspace", "glued", "block", "indep_rows"}

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _kv(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def _dims(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list '{text}'") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed (default: $GNL_SEED or 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--config", type=Path, help="JSON file with flag defaults")
    p.add_argument("--json", action="store_true", help="emit JSON")


def _add_model(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", choices=ENSEMBLES, help="named ensemble")
    g.add_argument("--model-file", type=Path, help="JSON model file")
    p.add_argument("--d", type=int, help="dimension for a named ensemble")
    p.add_argument("--r", type=int, help="cell or block size")
    p.add_argument("--dim", type=int, help="subspace dimension")
    p.add_argument("--param", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="extra ensemble parameter (JSON value)")


def build_parser() -> _Parser:
    parser = _Parser(prog="gnl", description="Gaussian random matrix norm bounds toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("certify", help="variance parameters and bound shapes")
    _add_common(p)
    _add_model(p)
    p.add_argument("--eps", type=float, help="epsilon (default: sweep 0.05, 0.1, 0.25)")
    p.add_argument("--restarts", type=int, default=SSTAR_RESTARTS)

    p = sub.add_parser("sample", help="Monte Carlo estimate of E||X||")
    _add_common(p)
    _add_model(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--restarts", type=int, default=SSTAR_RESTARTS)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--csv", type=Path, help="append a row in the experiment schema")

    p = sub.add_parser("moments", help="Wick moments, Monte Carlo, and trace inequality checks")
    _add_common(p)
    _add_model(p)
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--samples", type=int)
    p.add_argument("--trials", type=int, default=200)

    p = sub.add_parser("partitions", help="pair partition counts and phi verification")
    _add_common(p)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--verify-phi", action="store_true")
    p.add_argument("--dump-fibers", action="store_true")

    p = sub.add_parser("experiment", help="run a named experiment and emit CSV")
    _add_common(p)
    p.add_argument("name", choices=EXAMPLES)
    p.add_argument("--d", type=int, help="single dimension")
    p.add_argument("--dims", type=_dims, help="comma-separated dimensions")
    p.add_argument("--param", type=_kv, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--samples", type=int)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--restarts", type=int, default=SSTAR_RESTARTS)
    p.add_argument("--csv", type=Path, help="append rows here instead of printing")
    return parser


# -- argument plumbing ----------------------------------------------------------------


def _parse(parser: _Parser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage() + "gnl: error: a subcommand is required")
    if getattr(args, "config", None) is None:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ModelError("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = set(cfg) - known - {"config"}
    if unknown:
        raise ModelError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "model_file" in cfg:
        cfg["model_file"] = Path(cfg["model_file"])
    if "param" in cfg:
        cfg["param"] = list(dict(cfg["param"]).items())
    sub.set_defaults(**cfg)
    # argparse's mutually exclusive group would reject a config model plus a flag model
    if "model" in cfg and "--model-file" in argv:
        sub.set_defaults(model=None)
    if "model_file" in cfg and "--model" in argv:
        sub.set_defaults(model_file=None)
    return parser.parse_args(argv)


def _seed(args) -> int:
    return _rng.check_seed(args.seed) if args.seed is not None else _rng.default_seed()


def _threads(args) -> int:
    t = args.threads if args.threads is not None else default_threads()
    if t < 1:
        raise ModelError("--threads must be positive")
    return t


def _model(args, seed: int):
    if args.model_file is not None:
        return load_model_file(args.model_file), Path(args.model_file).stem
    if args.model is None:
        raise ModelError("give --model NAME or --model-file PATH")
    params: dict[str, Any] = {}
    if args.d is not None:
        params["d"] = args.d
        if args.model == "indep_rows":
            params.update(d1=args.d, d2=args.d)
    if args.r is not None:
        params["r"] = args.r
    if args.dim is not None:
        params["dim"] = args.dim
    if args.model in SEEDED_ENSEMBLES:
        params["seed"] = seed
    params.update(dict(args.param))
    return gen_named(args.model, params), args.model


def _num(x: Any) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return fmt_float(x)
    return str(x)


def _print_fields(fields: dict[str, Any], out) -> None:
    width = max(len(k) for k in fields)
    for k, v in fields.items():
        print(f"{k:>{width}}={_num(v)}", file=out)


def _dump(doc: Any, out) -> None:
    print(json.dumps(doc, indent=2, sort_keys=False), file=out)


# -- subcommands -----------------------------------------------------------------------


def cmd_certify(args, out) -> int:
    seed = _seed(args)
    m, label = _model(args, seed)
    eps_list = [args.eps] if args.eps is not None else list(EPS_SWEEP)
    base = assemble(m, eps_list[0], restarts=args.restarts, seed=seed, threads=_threads(args))
    reports = [base] + [base.with_epsilon(e) for e in eps_list[1:]]
    if args.json:
        _dump({"model": label, "seed": seed, "reports": [r.to_dict() for r in reports]}, out)
        return EXIT_OK
    print(f"model={label}", file=out)
    print(f"seed={seed}", file=out)
    for r in reports:
        print(file=out)
        _print_fields(r.to_dict(), out)
    return EXIT_OK


def cmd_sample(args, out) -> int:
    seed = _seed(args)
    threads = _threads(args)
    m, label = _model(args, seed)
    n = args.samples if args.samples is not None else default_samples(m.dim)
    if args.csv is not None:
        report = assemble(m, args.eps, restarts=args.restarts, seed=seed, threads=threads)
        ss = report.sigma_star
    else:
        report = None
        ss = sigma_star(m, restarts=args.restarts, seed=seed, threads=threads).value
    est = estimate_opnorm_mean(m, n, seed, threads, sigma_star=ss)
    fields = {
        "mean": est.mean,
        "stderr": est.stderr,
        "n_samples": est.n_samples,
        "seed": est.seed,
        "sigma_star": ss,
        "delta": args.delta,
        "concentration_halfwidth": est.concentration_halfwidth(args.delta),
    }
    if args.csv is not None:
        emit_csv([make_row(label, m, {}, report, est, seed)], args.csv)
    if args.json:
        _dump({"model": label, **fields}, out)
    else:
        print(f"model={label}", file=out)
        _print_fields(fields, out)
    return EXIT_OK


def cmd_moments(args, out) -> int:
    seed = _seed(args)
    m, label = _model(args, seed)
    p = args.p
    if p < 2 or p % 2:
        raise ModelError("--p must be an even integer >= 2")
    s = as_selfadjoint(m)
    n = args.samples if args.samples is not None else default_samples(s.dim)
    terms = partition_terms(s, p)
    wick = float(sum(terms.values()))
    mc = mc_trace_moment(s, p, n, seed)
    checks = run_checks(s, p, args.trials, seed, terms)
    failed = not all(c.passed for c in checks)
    fields = {
        "p": p,
        "dilated": s is not m,
        "wick": wick,
        "mc_mean": mc.mean,
        "mc_stderr": mc.stderr,
        "n_samples": mc.n_samples,
        "seed": seed,
    }
    if args.json:
        doc = {"model": label, **fields, "checks": [
            {"name": c.name, "passed": c.passed, "n_checks": c.n_checks,
             "max_ratio": c.max_ratio, "violations": c.violations} for c in checks]}
        _dump(doc, out)
    else:
        print(f"model={label}", file=out)
        _print_fields(fields, out)
        for c in checks:
            print(c.line(), file=out)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_partitions(args, out) -> int:
    seed = _seed(args)
    p = args.p
    if p < 2 or p % 2:
        raise ModelError("--p must be an even integer >= 2")
    n_pair = double_factorial(p - 1)
    n_nc = catalan(p // 2)
    line = f"P2={n_pair} NC2={n_nc} Cr2={n_pair - n_nc}"
    status = EXIT_OK
    report = None
    if args.verify_phi or args.dump_fibers:
        report = verify_phi(p)
    if args.verify_phi:
        line = report.summary()
        if not report.passed:
            status = EXIT_CHECK
    if args.json:
        doc: dict[str, Any] = {"p": p, "seed": seed, "P2": n_pair, "NC2": n_nc,
                               "Cr2": n_pair - n_nc}
        if report is not None:
            doc.update(fibers=report.n_fibers, fiber_cap=report.fiber_cap,
                       phi_props="PASS" if report.passed else "FAIL")
            if args.dump_fibers:
                doc["fiber_members"] = {str(k): v for k, v in report.fiber_members.items()}
        _dump(doc, out)
        return status
    print(line, file=out)
    print(f"seed={seed}", file=out)
    if report is not None:
        print(f"fibers={report.n_fibers} cap={report.fiber_cap}", file=out)
    if args.dump_fibers:
        for sigma, count in report.fiber_members.items():
            print(f"fiber: {sigma} members: {count}", file=out)
    return status


def cmd_experiment(args, out) -> int:
    seed = _seed(args)
    dims = args.dims or ([args.d] if args.d is not None else None)
    rows = run_example(args.name, dict(args.param), dims, args.samples, seed,
                       args.eps, args.restarts, _threads(args))
    if args.csv is not None:
        emit_csv(rows, args.csv)
        print(f"seed={seed}", file=out)
        print(f"rows={len(rows)} csv={args.csv}", file=out)
    elif args.json:
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()}
                 for r in rows]
        _dump({"seed": seed, "rows": clean}, out)
    else:
        out.write(format_rows(rows, header=True))
    return EXIT_OK


COMMANDS = {
    "certify": cmd_certify,
    "sample": cmd_sample,
    "moments": cmd_moments,
    "partitions": cmd_partitions,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ModelError, ValueError, OSError) as exc:
        print(f"gnl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
