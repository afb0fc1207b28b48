"""Command line: ``qsft run``, ``qsft sweep`` and ``qsft plot``.

Exit codes: 0 success, 1 decoder did not converge, 2 usage or input error,
3 oracle failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import OracleError, QSFTError, UsageError
from .experiments import ExperimentConfig, build_plan, read_rows, run_sweep, run_transform, summarize
from .plans import SamplingPlan
from .spectral import format_spectrum

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE, EXIT_ORACLE = 0, 1, 2, 3

# flag dest -> ExperimentConfig field
FIELD_OF = {
    "q": "q", "n": "n", "b": "b", "c_groups": "C", "p1": "p1", "t": "t", "regime": "regime",
    "gamma": "gamma", "snr_db": "snr_db", "sigma2": "sigma2", "sparsity": "sparsity",
    "mode": "mode", "rho": "rho", "kappa": "kappa", "eta": "eta", "seed": "seed", "oracle": "oracle",
    "success_nmse": "success_nmse", "max_iterations": "max_iterations",
}
SWEEPABLE = {"q": int, "n": int, "b": int, "c_groups": int, "p1": int, "t": int, "regime": str,
             "gamma": float, "snr_db": float, "sigma2": float, "sparsity": int}


def _add_common(p, listy=False):
    def kind(conv):
        return str if listy else conv

    g = p.add_argument_group("problem")
    g.add_argument("--q", type=kind(int), help="alphabet size")
    g.add_argument("--n", type=kind(int), help="number of variables")
    g.add_argument("--sparsity", "-S", type=kind(int), help="number of nonzero coefficients (synthetic)")
    g.add_argument("--mode", choices=["general", "assumption2"],
                   help="synthetic values: uniform magnitudes or a fixed constellation")
    g.add_argument("--rho", type=float, help="constellation magnitude")
    g.add_argument("--kappa", type=int, help="constellation size")
    g.add_argument("--oracle", help="synthetic, table:PATH or cmd:TEMPLATE")
    g.add_argument("--no-cache", action="store_true", help="draw fresh noise for repeated queries")
    g = p.add_argument_group("plan")
    g.add_argument("--b", type=kind(int), help="log_q of the bin count (default from sparsity)")
    g.add_argument("--c-groups", type=kind(int), help="number of subsampling groups C")
    g.add_argument("--regime", type=str, help="noiseless, robust-nl, robust-sl or coded")
    g.add_argument("--p1", type=kind(int), help="random offsets per group (robust regimes)")
    g.add_argument("--t", type=kind(int), help="degree bound (coded regime)")
    g.add_argument("--eta", type=float, help="redundancy B/S used to pick the default b")
    g = p.add_argument_group("detection")
    g.add_argument("--gamma", type=kind(float), help="threshold margin in (0, 1)")
    g.add_argument("--snr-db", type=kind(float), help="synthetic SNR in dB")
    g.add_argument("--sigma2", type=kind(float), help="noise variance")
    g.add_argument("--success-nmse", type=float, help="NMSE below which a trial counts as a success")
    g.add_argument("--max-iterations", type=int, help="peeling iteration cap")
    p.add_argument("--seed", type=int, help="master seed (sweeps: seed of trial 0)")
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="recover one sparse spectrum")
    _add_common(run)
    run.add_argument("--plan", help="load the sampling plan from this JSON file")
    run.add_argument("--emit-plan", action="store_true", help="write the plan JSON and exit without querying")
    run.add_argument("--out", help="spectrum (or plan) output path; default stdout")
    run.add_argument("--report", help="write diagnostics JSON here instead of stderr")
    run.add_argument("--events", help="write the peel event log (JSON lines) here")
    run.add_argument("--truth", help="write the synthetic ground truth spectrum here")

    sweep = sub.add_parser("sweep", help="seeded trials over a parameter grid")
    _add_common(sweep, listy=True)
    sweep.add_argument("--spec", help="sweep spec JSON with base/grid/cells/trials")
    sweep.add_argument("--trials", type=int, default=None)
    sweep.add_argument("--out", required=True, help="per-trial CSV (appended to, so sweeps resume)")
    sweep.add_argument("--summary", help="per-cell summary CSV (default: <out>.summary.csv)")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--figures", help="also render figures into this directory")

    plot = sub.add_parser("plot", help="render figures from a summary or per-trial CSV")
    plot.add_argument("csv")
    plot.add_argument("--figures", required=True, help="output directory")
    plot.add_argument("--format", default="png")
    return parser


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise QSFTError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise QSFTError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise QSFTError(f"config {path} must hold a JSON object")
    return data


def _overrides(args) -> dict:
    out = {}
    for dest, name in FIELD_OF.items():
        val = getattr(args, dest, None)
        if val is not None:
            out[name] = val
    if getattr(args, "no_cache", False):
        out["cache"] = False
    return out


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_run(args) -> int:
    settings = _load_config(args.config)
    settings.update(_overrides(args))
    plan = None
    if args.plan:
        try:
            with open(args.plan) as fh:
                plan = SamplingPlan.from_json(fh.read())
        except OSError as exc:
            raise QSFTError(f"cannot read plan {args.plan}: {exc}") from exc
        settings.setdefault("q", plan.q)
        settings.setdefault("n", plan.n)
        settings.setdefault("regime", plan.regime)
        settings.setdefault("t", plan.t)
    cfg = ExperimentConfig.from_dict(settings)
    if plan is None:
        plan = build_plan(cfg)
    if args.emit_plan:
        _write(args.out, plan.to_json() + "\n")
        return EXIT_OK
    if cfg.regime == "coded":
        sys.stderr.write("qsft: note: the coded regime is heuristic; it assumes every nonzero "
                         f"frequency has Hamming weight <= {cfg.t}\n")
    result, truth, report = run_transform(cfg, plan)
    # all outputs are produced only after a successful decode
    _write(args.out, format_spectrum(result.spectrum))
    text = json.dumps(report, indent=1, sort_keys=True, default=str) + "\n"
    if args.report:
        _write(args.report, text)
    else:
        sys.stderr.write(text)
    if args.events:
        _write(args.events, result.event_log(plan.q, plan.b))
    if args.truth and truth is not None:
        _write(args.truth, format_spectrum(truth))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _split(val, conv):
    try:
        return [conv(x) for x in str(val).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {val!r} as a comma-separated list") from None


def cmd_sweep(args) -> int:
    spec = _load_config(args.spec)
    base = dict(spec.get("base", {}))
    base.update(_load_config(args.config))
    grid = dict(spec.get("grid", {}))
    for dest, name in FIELD_OF.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest in SWEEPABLE:
            vals = _split(val, SWEEPABLE[dest])
            if len(vals) == 1:
                base[name] = vals[0]
                grid.pop(name, None)
            else:
                grid[name] = vals
        else:
            base[name] = val
    if args.no_cache:
        base["cache"] = False
    spec = dict(spec, base=base, grid=grid)
    if args.trials is not None:
        spec["trials"] = args.trials
    if args.seed is not None:
        spec["seed_base"] = args.seed
    summary = args.summary or os.path.splitext(args.out)[0] + ".summary.csv"
    rows = run_sweep(spec, args.out, workers=args.workers, summary=summary)
    sys.stderr.write(f"{len(rows)} rows in {args.out}; summary in {summary}\n")
    if args.figures:
        from .plotting import plot_summary

        for path in plot_summary(summarize(rows), args.figures):
            sys.stderr.write(f"wrote {path}\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_summary

    if not os.path.isfile(args.csv):
        raise QSFTError(f"no such file {args.csv}")
    rows = read_rows(args.csv)
    if rows and "trial" in rows[0]:
        rows = summarize(rows)
    for path in plot_summary(rows, args.figures, args.format):
        sys.stderr.write(f"wrote {path}\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "plot": cmd_plot}[args.command]
    try:
        return handler(args)
    except OracleError as exc:
        sys.stderr.write(f"qsft: oracle error: {exc}\n")
        return EXIT_ORACLE
    except QSFTError as exc:
        sys.stderr.write(f"qsft: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
