"""Single runs and seeded parameter sweeps."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detect import DetectorConfig
from .errors import UsageError
from .oracle import SubprocessOracle, SyntheticSpec, TableOracle, synthesize
from .peeling import DecodeResult, decode
from .plans import SamplingPlan, canonical_regime, default_b, make_plan
from .spectral import nmse

log = logging.getLogger(__name__)

ROW_FIELDS = [
    "cell", "trial", "seed", "q", "n", "S", "b", "C", "regime", "p1", "t", "snr_db", "sigma2",
    "samples_raw", "samples_unique", "wall_time", "nmse", "converged", "success",
    "recovered", "iterations", "unresolved",
]
SUMMARY_FIELDS = [
    "cell", "q", "n", "S", "b", "C", "regime", "p1", "t", "snr_db", "sigma2", "trials",
    "mean_nmse", "median_nmse", "success_rate", "converged_rate", "mean_samples_raw",
    "mean_samples_unique", "mean_wall_time",
]


@dataclass
class ExperimentConfig:
    q: int = 4
    n: int = 8
    b: int | None = None
    C: int = 3
    regime: str = "noiseless"
    p1: int | None = None
    t: int | None = None
    gamma: float = 0.5
    snr_db: float | None = None
    sigma2: float | None = None
    sparsity: int = 10
    mode: str = "general"
    rho: float = 1.0
    kappa: int = 4
    rho_min: float = 1.0
    rho_max: float = 5.0
    eta: float = 1.0
    seed: int = 0
    oracle: str = "synthetic"
    cache: bool = True
    constellation: bool | None = None
    success_nmse: float = 0.1
    max_iterations: int | None = None

    def __post_init__(self):
        self.regime = canonical_regime(self.regime)
        if self.q < 2 or self.n < 1:
            raise UsageError("need q >= 2 and n >= 1")
        if self.b is not None and not 0 <= self.b <= self.n:
            raise UsageError(f"b must lie in [0, n], got {self.b}")
        if self.C < 1:
            raise UsageError("need at least one subsampling group")
        if self.sparsity < 0:
            raise UsageError("sparsity must be non-negative")
        if not 0 < self.gamma < 1:
            raise UsageError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.regime == "coded" and self.t is None:
            raise UsageError("the coded regime needs --t (degree bound)")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def resolved_b(self):
        if self.b is not None:
            return self.b
        return default_b(self.q, max(self.sparsity, 1), self.eta, self.n)

    @property
    def resolved_p1(self):
        if self.regime not in ("robust-nl", "robust-sl"):
            return None
        return self.p1 if self.p1 is not None else 2 * self.n


def build_plan(cfg: ExperimentConfig) -> SamplingPlan:
    return make_plan(cfg.q, cfg.n, cfg.resolved_b, cfg.C, cfg.regime,
                     p1=cfg.resolved_p1, t=cfg.t, seed=cfg.seed)


def build_oracle(cfg: ExperimentConfig):
    """Returns ``(oracle, truth_or_None, sigma2)`` for the configured binding."""
    kind, _, arg = cfg.oracle.partition(":")
    if kind == "synthetic":
        spec = SyntheticSpec(
            cfg.q, cfg.n, cfg.sparsity, mode=cfg.mode, rho=cfg.rho, kappa=cfg.kappa,
            rho_min=cfg.rho_min, rho_max=cfg.rho_max, sigma2=cfg.sigma2, snr_db=cfg.snr_db,
            max_degree=cfg.t if cfg.regime == "coded" else None, seed=cfg.seed, cache=cfg.cache,
        )
        truth, oracle = synthesize(spec)
        return oracle, truth, oracle.sigma2
    if kind == "table":
        if not arg or not os.path.isfile(arg):
            raise UsageError(f"oracle table {arg!r} does not exist")
        oracle = TableOracle(arg, cfg.q, cfg.n)
    elif kind == "cmd":
        if not arg.strip():
            raise UsageError("cmd oracle needs a command template")
        oracle = SubprocessOracle(arg, cfg.q, cfg.n)
    else:
        raise UsageError(f"unknown oracle binding {cfg.oracle!r} (synthetic, table:PATH, cmd:TEMPLATE)")
    sigma2 = cfg.sigma2
    if sigma2 is None:
        if cfg.regime in ("robust-nl", "robust-sl"):
            raise UsageError("robust regimes need --sigma2 for external oracles")
        sigma2 = 0.0
    return oracle, None, sigma2


def detector_config(cfg: ExperimentConfig, plan: SamplingPlan, sigma2, truth) -> DetectorConfig:
    use_constellation = cfg.constellation
    if use_constellation is None:
        use_constellation = cfg.mode == "assumption2" and truth is not None
    det = DetectorConfig.for_plan(
        plan, sigma2, gamma=cfg.gamma,
        constellation=(cfg.rho, cfg.kappa) if use_constellation else None,
    )
    if truth is not None and len(truth) and sigma2 > 0 and plan.regime in ("robust-nl", "robust-sl"):
        det.check_gamma(plan.B / len(truth), truth.energy() / sigma2)
    return det


def run_transform(cfg: ExperimentConfig, plan: SamplingPlan | None = None):
    """One decode.  Returns ``(result, truth, report)``; ``report`` is a flat dict."""
    if plan is None:
        plan = build_plan(cfg)
    elif plan.q != cfg.q or plan.n != cfg.n:
        raise UsageError(f"plan is q={plan.q} n={plan.n}, config is q={cfg.q} n={cfg.n}")
    oracle, truth, sigma2 = build_oracle(cfg)
    det = detector_config(cfg, plan, sigma2, truth)
    start = time.perf_counter()
    result = decode(oracle, plan, det, max_iterations=cfg.max_iterations,
                    sparsity_hint=cfg.sparsity or None)
    wall = time.perf_counter() - start
    err = nmse(result.spectrum, truth) if truth is not None and len(truth) else None
    report = {
        "q": plan.q, "n": plan.n, "S": cfg.sparsity if truth is not None else None,
        "b": plan.b, "C": plan.C, "regime": plan.regime, "p1": plan.p1, "t": plan.t,
        "snr_db": cfg.snr_db, "sigma2": sigma2,
        "samples_raw": result.samples_raw, "samples_unique": result.samples_unique,
        "wall_time": wall, "nmse": err, "converged": result.converged,
        "success": None if err is None else bool(err < cfg.success_nmse),
        "recovered": len(result.spectrum), "iterations": result.iterations,
        "unresolved": result.unresolved, "bins": result.bins,
        "residual_energy": result.residual_energy,
        "heuristic": plan.regime == "coded",
    }
    return result, truth, report


def expand_cells(spec: dict) -> list:
    """Cells from a sweep spec: an explicit ``cells`` list and/or a cartesian ``grid`` over ``base``."""
    base = dict(spec.get("base", {}))
    cells = [dict(base, **c) for c in spec.get("cells", [])]
    grid = spec.get("grid", {})
    if grid:
        keys = sorted(grid)
        for combo in itertools.product(*(grid[k] for k in keys)):
            cells.append(dict(base, **dict(zip(keys, combo))))
    if not cells:
        cells.append(base)
    return cells


def cell_key(cell: dict) -> str:
    return json.dumps({k: cell[k] for k in sorted(cell) if k != "seed"}, sort_keys=True)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_trial(args):
    cell_id, trial, cell, seed = args
    cfg = ExperimentConfig.from_dict(dict(cell, seed=seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, _, report = run_transform(cfg)
    row = {"cell": cell_id, "trial": trial, "seed": seed}
    row.update({k: report.get(k) for k in ROW_FIELDS if k in report})
    return {k: _fmt(row.get(k)) for k in ROW_FIELDS}


def read_rows(path) -> list:
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_sweep(spec: dict, out, trials=1, seed_base=0, workers=1, summary=None) -> list:
    """Run every (cell, trial) not already present in ``out``; returns all rows.

    Trial i of a cell uses seed ``seed_base + i``.  Rows are appended to the
    CSV as they finish, so an interrupted sweep resumes where it stopped.
    """
    cells = expand_cells(spec)
    trials = int(spec.get("trials", trials))
    seed_base = int(spec.get("seed_base", seed_base))
    existing = read_rows(out)
    done = {(r["cell"], r["seed"]) for r in existing}
    keys = [cell_key(c) for c in cells]
    ids = {}
    for key in keys:
        ids.setdefault(key, len(ids))
    jobs = []
    for cell, key in zip(cells, keys):
        ExperimentConfig.from_dict(cell)
        for trial in range(trials):
            seed = seed_base + trial
            if (str(ids[key]), str(seed)) not in done:
                jobs.append((ids[key], trial, cell, seed))
    new_file = not existing
    with open(out, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        if new_file:
            writer.writeheader()
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_run_trial, jobs):
                    writer.writerow(row)
                    fh.flush()
        else:
            for job in jobs:
                writer.writerow(_run_trial(job))
                fh.flush()
    rows = read_rows(out)
    if summary:
        write_summary(rows, summary)
    return rows


def _num(v):
    return float(v) if v not in ("", None) else float("nan")


def summarize(rows) -> list:
    groups = {}
    for r in rows:
        groups.setdefault(r["cell"], []).append(r)
    out = []
    for cell in sorted(groups, key=int):
        rs = groups[cell]
        first = rs[0]
        errs = np.array([_num(r["nmse"]) for r in rs])
        succ = [r["success"] == "True" for r in rs if r["success"] != ""]
        out.append({
            "cell": cell,
            **{k: first[k] for k in ("q", "n", "S", "b", "C", "regime", "p1", "t", "snr_db", "sigma2")},
            "trials": len(rs),
            "mean_nmse": _fmt(float(np.nanmean(errs))) if np.any(~np.isnan(errs)) else "",
            "median_nmse": _fmt(float(np.nanmedian(errs))) if np.any(~np.isnan(errs)) else "",
            "success_rate": _fmt(float(np.mean(succ))) if succ else "",
            "converged_rate": _fmt(float(np.mean([r["converged"] == "True" for r in rs]))),
            "mean_samples_raw": _fmt(float(np.mean([_num(r["samples_raw"]) for r in rs]))),
            "mean_samples_unique": _fmt(float(np.mean([_num(r["samples_unique"]) for r in rs]))),
            "mean_wall_time": _fmt(float(np.mean([_num(r["wall_time"]) for r in rs]))),
        })
    return out


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for r in summarize(rows):
            writer.writerow(r)


def transition_snr(snrs, rates, level=0.5):
    """SNR where the success rate first reaches ``level`` (linear interpolation); inf if never."""
    snrs = np.asarray(snrs, dtype=float)
    rates = np.asarray(rates, dtype=float)
    order = np.argsort(snrs)
    snrs, rates = snrs[order], rates[order]
    for i, r in enumerate(rates):
        if r >= level:
            if i == 0:
                return float(snrs[0])
            s0, s1, r0 = snrs[i - 1], snrs[i], rates[i - 1]
            return float(s0 + (level - r0) * (s1 - s0) / (r - r0))
    return float("inf")


def result_to_report_json(report) -> str:
    return json.dumps(report, indent=1, sort_keys=True, default=str)


__all__ = [
    "ExperimentConfig", "build_plan", "build_oracle", "run_transform", "run_sweep",
    "summarize", "write_summary", "transition_snr", "expand_cells", "DecodeResult",
]
