"""Subsample, classify bins, then peel singletons until none are left."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .detect import BinKind, Detection, Detector, DetectorConfig
from .errors import QSFTError
from .plans import SamplingPlan
from .qary import format_digits, rank, roots_of_unity, unrank
from .spectral import SparseSpectrum, subsample_group, subsample_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeelEvent:
    iteration: int
    c: int
    j: int
    k: tuple
    value: complex

    def to_json(self, q, b) -> str:
        return json.dumps({
            "iteration": self.iteration,
            "c": self.c,
            "j": format_digits(unrank(self.j, q, b)) if b else "",
            "k": format_digits(self.k),
            "value": [self.value.real, self.value.imag],
        })


@dataclass
class DecoderState:
    plan: SamplingPlan
    detector: Detector
    U: list
    types: list
    estimate: dict = field(default_factory=dict)
    recovered: set = field(default_factory=set)
    iteration: int = 0
    events: list = field(default_factory=list)

    def classify(self, c, j):
        self.types[c][j] = self.detector.classify(c, j, self.U[c][j])
        return self.types[c][j]

    def singletons(self) -> list:
        """Current singleton bins with not-yet-recovered keys, in (c, j) order."""
        out = []
        for c, row in enumerate(self.types):
            for j, det in enumerate(row):
                if det.is_singleton and det.k not in self.recovered:
                    out.append((c, j, det.k, det.v))
        return out

    def counts(self) -> dict:
        tally = Counter(det.kind.value for row in self.types for det in row)
        return {kind.value: tally.get(kind.value, 0) for kind in BinKind}


@dataclass
class DecodeResult:
    spectrum: SparseSpectrum
    converged: bool
    iterations: int
    samples_raw: int
    samples_unique: int
    bins: dict
    unresolved: int
    residual_energy: float
    events: list

    def event_log(self, q, b) -> str:
        return "".join(ev.to_json(q, b) + "\n" for ev in self.events)


def subsample(oracle, plan: SamplingPlan) -> list:
    """Bin tables U_c of shape (B, P'_c) for every group."""
    if oracle.q != plan.q or oracle.n != plan.n:
        raise QSFTError(f"oracle is q={oracle.q} n={oracle.n}, plan is q={plan.q} n={plan.n}")
    check = getattr(oracle, "check_coverage", None)
    if check is not None:
        check(plan.all_query_points())
    tables = []
    for M, D in zip(plan.matrices, plan.offsets):
        pts = subsample_points(M, D, plan.q)
        values = oracle.query_batch(pts.reshape(-1, plan.n)).reshape(len(D), plan.B)
        tables.append(subsample_group(values, plan.q, plan.b))
    return tables


def initial_state(plan: SamplingPlan, cfg: DetectorConfig, tables) -> DecoderState:
    scale = max((float(np.max(np.abs(U))) for U in tables if U.size), default=0.0) or 1.0
    detector = Detector(plan, cfg, scale)
    state = DecoderState(plan, detector, [U.copy() for U in tables],
                         [[None] * plan.B for _ in range(plan.C)])
    for c in range(plan.C):
        for j in range(plan.B):
            state.classify(c, j)
    return state


def peel_one(state: DecoderState, k, v) -> list:
    """Record F[k] = v and subtract v omega^(D_c k) from bin M_c^T k of every group.

    Returns the touched (c, j) pairs after reclassifying them.
    """
    k = tuple(int(x) for x in k)
    if k in state.recovered:
        raise QSFTError(f"frequency {format_digits(k)} was already peeled")
    plan = state.plan
    q = plan.q
    omega = roots_of_unity(q)
    kv = np.asarray(k, dtype=np.int64)
    state.estimate[k] = complex(v)
    state.recovered.add(k)
    touched = []
    for c, (M, D) in enumerate(zip(plan.matrices, plan.offsets)):
        j = rank((kv @ M) % q, q) if plan.b else 0
        state.U[c][j] = state.U[c][j] - v * omega((D @ kv) % q)
        touched.append((c, j))
    for c, j in touched:
        state.classify(c, j)
    return touched


def decode(oracle, plan: SamplingPlan, cfg: DetectorConfig | None = None,
           max_iterations=None, sparsity_hint=None) -> DecodeResult:
    """Run the full subsample / detect / peel pipeline.

    Hitting ``max_iterations`` (default 4 * C * S, with S the sparsity hint or
    B) returns a partial estimate with ``converged=False``.
    """
    if cfg is None:
        cfg = DetectorConfig.for_plan(plan, getattr(oracle, "sigma2", 0.0))
    tables = subsample(oracle, plan)
    state = initial_state(plan, cfg, tables)
    if max_iterations is None:
        max_iterations = 4 * plan.C * (sparsity_hint or plan.B)
    converged = True
    pending = state.singletons()
    while pending:
        if state.iteration >= max_iterations:
            converged = False
            break
        state.iteration += 1
        before = len(state.recovered)
        for c, j, k, v in pending:
            if k in state.recovered:
                continue
            det = state.types[c][j]
            # an earlier peel this sweep may have changed this bin
            if not (det.is_singleton and det.k == k):
                continue
            state.events.append(PeelEvent(state.iteration, c, j, k, complex(v)))
            peel_one(state, k, det.v)
        if len(state.recovered) == before:
            break
        pending = state.singletons()
    counts = state.counts()
    residual = float(np.mean([np.sum(np.abs(U) ** 2) / max(U.shape[1], 1) for U in state.U]))
    log.debug("decode finished after %d iterations: %s", state.iteration, counts)
    return DecodeResult(
        spectrum=SparseSpectrum(plan.q, plan.n, state.estimate),
        converged=converged,
        iterations=state.iteration,
        samples_raw=oracle.raw_queries,
        samples_unique=oracle.unique_queries,
        bins=counts,
        unresolved=counts[BinKind.MULTI.value],
        residual_energy=residual,
        events=state.events,
    )
