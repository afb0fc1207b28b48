"""Bin classification: zero-ton, singleton (k, value) or multi-ton."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .coded import CodedOffsetPlan, syndrome_decode
from .errors import BudgetError, UsageError
from .plans import SamplingPlan, canonical_regime
from .qary import all_indices, arg_q, ranks, roots_of_unity, unrank

ENUM_BUDGET = 1 << 22


class BinKind(enum.Enum):
    ZERO = "zero-ton"
    SINGLETON = "singleton"
    MULTI = "multi-ton"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class Detection:
    kind: BinKind
    k: tuple | None = None
    v: complex | None = None

    @property
    def is_singleton(self):
        return self.kind is BinKind.SINGLETON


ZERO_TON = Detection(BinKind.ZERO)
MULTI_TON = Detection(BinKind.MULTI)


@dataclass
class DetectorConfig:
    """Thresholds for bin detection.

    ``nu2`` is the per-bin noise power sigma^2 / B.  ``constellation`` is an
    optional ``(rho, kappa)`` pair; when set, value estimates snap to the
    nearest point rho * exp(2j pi a / kappa).  ``zero_tol`` and ``ratio_tol``
    are the float round-off tolerances (relative to the signal scale) used by
    the exact regimes and as a floor under the noisy thresholds.
    """

    regime: str = "noiseless"
    gamma: float = 0.5
    nu2: float = 0.0
    constellation: tuple | None = None
    p1: int | None = None
    zero_tol: float = 1e-9
    ratio_tol: float = 1e-6
    enum_budget: int = ENUM_BUDGET

    def __post_init__(self):
        self.regime = canonical_regime(self.regime)
        if not 0 < self.gamma < 1:
            raise UsageError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.nu2 < 0:
            raise UsageError("nu2 must be non-negative")

    @classmethod
    def for_plan(cls, plan: SamplingPlan, sigma2=0.0, **kwargs):
        return cls(regime=plan.regime, nu2=sigma2 / plan.B, p1=plan.p1, **kwargs)

    def check_gamma(self, eta, snr):
        """Warn when gamma is outside the range where the verification bounds hold."""
        limit = eta * snr / 2
        if self.gamma >= limit:
            warnings.warn(f"gamma={self.gamma} is not below eta*SNR/2={limit:.3g}; "
                          "bin verification may be unreliable", stacklevel=2)
            return False
        return True


def snap_to_constellation(alpha, rho, kappa) -> complex:
    a = int(np.round(np.angle(alpha) * kappa / (2 * np.pi))) % kappa
    return complex(rho * np.exp(2j * np.pi * a / kappa))


def majority(votes, q) -> int:
    """Most frequent symbol; ties go to the smallest."""
    votes = np.asarray(votes, dtype=np.int64)
    if votes.size == 0:
        return 0
    return int(np.argmax(np.bincount(votes, minlength=q)))


def _hash_matches(k, M, j, q) -> bool:
    return M is None or j is None or tuple((np.asarray(k) @ M) % q) == tuple(j)


def _exact_phases(U, q, scale, zero_tol, ratio_tol):
    """Shared front end of the exact regimes: None for a zero-ton, MULTI_TON, or the arg_q ratios."""
    U = np.asarray(U, dtype=complex)
    if np.max(np.abs(U)) <= zero_tol * scale:
        return None
    if abs(U[0]) <= zero_tol * scale:
        return MULTI_TON
    ratios = U[1:] / U[0]
    if np.any(np.abs(np.abs(ratios) - 1) > ratio_tol):
        return MULTI_TON
    return arg_q(ratios, q) if len(ratios) else np.zeros(0, dtype=np.int64)


def detect_noiseless(U, q, M=None, j=None, scale=1.0, zero_tol=1e-9, ratio_tol=1e-6) -> Detection:
    """Exact detection with offsets [0; I_n]: k_p = arg_q(U_p / U_0), value U_0.

    Extra guard: a decoded k that does not hash to bin ``j`` under ``M`` is
    reported as a multi-ton.
    """
    phases = _exact_phases(U, q, scale, zero_tol, ratio_tol)
    if phases is None:
        return ZERO_TON
    if isinstance(phases, Detection):
        return phases
    k = tuple(int(x) for x in phases)
    if not _hash_matches(k, M, j, q):
        return MULTI_TON
    return Detection(BinKind.SINGLETON, k, complex(U[0]))


def detect_coded(U, coded: CodedOffsetPlan, M=None, j=None, scale=1.0,
                 zero_tol=1e-9, ratio_tol=1e-6) -> Detection:
    """Exact detection with offsets [0; H]: the phase ratios form the syndrome H k."""
    phases = _exact_phases(U, coded.q, scale, zero_tol, ratio_tol)
    if phases is None:
        return ZERO_TON
    if isinstance(phases, Detection):
        return phases
    k = syndrome_decode(coded, phases)
    if k is None or not _hash_matches(k, M, j, coded.q):
        return MULTI_TON
    return Detection(BinKind.SINGLETON, k, complex(U[0]))


def _threshold(cfg, scale):
    return (1 + cfg.gamma) * cfg.nu2 + (cfg.zero_tol * scale) ** 2


def _estimate_value(alpha, cfg):
    if cfg.constellation is None:
        return complex(alpha)
    rho, kappa = cfg.constellation
    return snap_to_constellation(alpha, rho, kappa)


def _verify(U, signature, v, k, cfg, scale) -> Detection:
    residual = np.sum(np.abs(U - v * signature) ** 2) / len(U)
    if residual <= _threshold(cfg, scale):
        return Detection(BinKind.SINGLETON, tuple(int(x) for x in k), v)
    return MULTI_TON


def mle_search(U, D, q, candidates):
    """Candidate maximising |s_k^H U| (equivalently minimising ||U - alpha(k) s_k||^2).

    Returns ``(k, s_k^H U)``.  Candidates must be sorted by rank so that
    score ties resolve to the lexicographically smallest k.
    """
    U = np.asarray(U, dtype=complex)
    D = np.asarray(D, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    omega = roots_of_unity(q)
    best_i, best_score, best_corr = -1, -1.0, 0j
    step = max(1, (1 << 20) // max(len(U), 1))
    for start in range(0, len(candidates), step):
        K = candidates[start:start + step]
        corr = omega(-(D @ K.T)).T @ U  # s_k^H U for every candidate
        score = np.abs(corr)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_i, best_score, best_corr = start + i, float(score[i]), complex(corr[i])
    return tuple(int(x) for x in candidates[best_i]), best_corr


def detect_robust_near_linear(U, D, q, candidates, cfg: DetectorConfig, scale=1.0) -> Detection:
    """Zero-ton test, exhaustive MLE over ``candidates`` (all k hashing to this bin), residual test."""
    U = np.asarray(U, dtype=complex)
    D = np.asarray(D, dtype=np.int64)
    P = len(U)
    if np.sum(np.abs(U) ** 2) / P <= _threshold(cfg, scale):
        return ZERO_TON
    if len(candidates) == 0:
        return MULTI_TON
    k, corr = mle_search(U, D, q, candidates)
    v = _estimate_value(corr / P, cfg)
    return _verify(U, roots_of_unity(q)(D @ np.asarray(k)), v, k, cfg, scale)


def vote_symbols(U, q, n) -> np.ndarray:
    """Per-symbol majority of arg_q(U_{p,r} / U_p) over blocks laid out as [U_p, U_{p,1}, ..., U_{p,n}].

    A block whose base (or modulated) observation is exactly zero abstains
    for that symbol; ties go to the smallest symbol.
    """
    U = np.asarray(U, dtype=complex).reshape(-1, n + 1)
    base, mod = U[:, 0], U[:, 1:]
    ok = (base[:, None] != 0) & (mod != 0)
    rows, cols = np.nonzero(ok)
    votes = arg_q(mod[rows, cols] / base[rows], q) if len(rows) else np.zeros(0, dtype=np.int64)
    tally = np.zeros((n, q), dtype=np.int64)
    np.add.at(tally, (cols, votes), 1)
    return np.argmax(tally, axis=1).astype(np.int64)


def detect_robust_sub_linear(U, D, q, n, cfg: DetectorConfig, M=None, j=None, scale=1.0) -> Detection:
    """Symbol-by-symbol majority vote over blocks [d_p, d_p + e_1, ..., d_p + e_n], then verification on the bases."""
    U = np.asarray(U, dtype=complex).reshape(-1, n + 1)
    D = np.asarray(D, dtype=np.int64).reshape(-1, n + 1, n)
    base = U[:, 0]
    Dbase = D[:, 0, :]
    P1 = len(base)
    if np.sum(np.abs(base) ** 2) / P1 <= _threshold(cfg, scale):
        return ZERO_TON
    k = vote_symbols(U, q, n)
    if not _hash_matches(k, M, j, q):
        return MULTI_TON
    signature = roots_of_unity(q)(Dbase @ k)
    alpha = np.vdot(signature, base) / P1
    v = _estimate_value(alpha, cfg)
    return _verify(base, signature, v, k, cfg, scale)


class Detector:
    """Per-plan dispatcher; caches the bin -> candidate tables the near-linear search needs."""

    def __init__(self, plan: SamplingPlan, cfg: DetectorConfig, scale=1.0):
        if canonical_regime(cfg.regime) != plan.regime:
            raise UsageError(f"detector regime {cfg.regime} does not match plan regime {plan.regime}")
        self.plan = plan
        self.cfg = cfg
        self.scale = scale
        self._buckets = {}

    def bin_digits(self, j_rank):
        return unrank(j_rank, self.plan.q, self.plan.b) if self.plan.b else ()

    def candidates(self, c, j_rank) -> np.ndarray:
        """All k with M_c^T k = j, in rank order."""
        plan = self.plan
        if c not in self._buckets:
            N = plan.q ** plan.n
            if N > self.cfg.enum_budget:
                raise BudgetError(f"near-linear search would enumerate {N} frequencies "
                                  f"(budget {self.cfg.enum_budget}); use the robust-sl regime")
            keys = all_indices(plan.q, plan.n)
            bins = ranks((keys @ plan.matrices[c]) % plan.q, plan.q) if plan.b else np.zeros(N, dtype=np.int64)
            order = np.argsort(bins, kind="stable")
            bounds = np.searchsorted(bins[order], np.arange(plan.B + 1))
            self._buckets[c] = (keys[order], bounds)
        keys, bounds = self._buckets[c]
        return keys[bounds[j_rank]:bounds[j_rank + 1]]

    def classify(self, c, j_rank, U) -> Detection:
        plan, cfg = self.plan, self.cfg
        M = plan.matrices[c]
        j = self.bin_digits(j_rank)
        if plan.regime == "noiseless":
            return detect_noiseless(U, plan.q, M, j, self.scale, cfg.zero_tol, cfg.ratio_tol)
        if plan.regime == "coded":
            return detect_coded(U, plan.coded, M, j, self.scale, cfg.zero_tol, cfg.ratio_tol)
        if plan.regime == "robust-nl":
            return detect_robust_near_linear(U, plan.offsets[c], plan.q, self.candidates(c, j_rank), cfg,
                                             self.scale)
        return detect_robust_sub_linear(U, plan.offsets[c], plan.q, plan.n, cfg, M, j, self.scale)
