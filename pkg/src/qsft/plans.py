"""Subsampling matrices and offset designs for each detection regime."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coded import CodedOffsetPlan, build_parity_check
from .errors import UsageError
from .qary import format_digits, parse_digits
from .spectral import subsample_points

REGIMES = ("noiseless", "robust-nl", "robust-sl", "coded")
_ALIASES = {
    "robust-near-linear": "robust-nl",
    "robust-sub-linear": "robust-sl",
}


def canonical_regime(regime) -> str:
    regime = _ALIASES.get(regime, regime)
    if regime not in REGIMES:
        raise UsageError(f"unknown regime {regime!r}; choose from {', '.join(REGIMES)}")
    return regime


def default_b(q, S, eta=1.0, n=None) -> int:
    """Smallest b with q**b >= eta * S (capped at n)."""
    b = max(1, math.ceil(math.log(max(eta * S, 1)) / math.log(q) - 1e-12))
    return b if n is None else min(b, n)


def make_subsampling_matrices(q, n, b, C, rng, random=False) -> list:
    """Identity blocks [0 | I_b | 0]^T when C*b <= n, else (or if ``random``) uniform random n x b matrices."""
    if b > n:
        raise UsageError(f"b={b} exceeds n={n}")
    if C < 1 or b < 0:
        raise UsageError("need C >= 1 and b >= 0")
    if C * b <= n and not random:
        mats = []
        for c in range(C):
            M = np.zeros((n, b), dtype=np.int64)
            M[c * b:(c + 1) * b, :] = np.eye(b, dtype=np.int64)
            mats.append(M)
        return mats
    return [rng.integers(0, q, size=(n, b)).astype(np.int64) for _ in range(C)]


def modulated_offsets(base, q) -> np.ndarray:
    """[d, d + e_1, ..., d + e_n] (mod q) for one base offset d."""
    base = np.asarray(base, dtype=np.int64)
    n = len(base)
    return np.vstack([base[None, :], (base[None, :] + np.eye(n, dtype=np.int64)) % q])


def make_offsets(regime, q, n, P, rng, coded: CodedOffsetPlan | None = None) -> np.ndarray:
    """Offset rows for one group.

    noiseless: zero row then I_n (P is ignored beyond the n identity rows);
    robust-nl: P uniform rows; robust-sl: P base rows, each followed by its n
    modulated copies; coded: zero row then the parity-check rows.
    """
    regime = canonical_regime(regime)
    if regime == "noiseless":
        return np.vstack([np.zeros((1, n), dtype=np.int64), np.eye(n, dtype=np.int64)])
    if regime == "coded":
        if coded is None:
            raise UsageError("coded regime needs a parity-check plan")
        return np.vstack([np.zeros((1, n), dtype=np.int64), coded.H.astype(np.int64)])
    if P is None or P < 1:
        raise UsageError(f"regime {regime} needs P >= 1 random offsets")
    base = rng.integers(0, q, size=(P, n)).astype(np.int64)
    if regime == "robust-nl":
        return base
    return np.vstack([modulated_offsets(d, q) for d in base])


@dataclass
class SamplingPlan:
    q: int
    n: int
    b: int
    regime: str
    matrices: list
    offsets: list
    p1: int | None = None
    t: int | None = None
    seed: int | None = None
    coded: CodedOffsetPlan | None = field(default=None, repr=False)

    @property
    def C(self):
        return len(self.matrices)

    @property
    def B(self):
        return self.q ** self.b

    def n_offsets(self, c) -> int:
        return len(self.offsets[c])

    def raw_query_count(self) -> int:
        return sum(len(D) for D in self.offsets) * self.B

    def query_points(self, c) -> np.ndarray:
        """Oracle inputs of group c, offset-major then l in rank order; shape (P' * B, n)."""
        return subsample_points(self.matrices[c], self.offsets[c], self.q).reshape(-1, self.n)

    def all_query_points(self) -> np.ndarray:
        return np.vstack([self.query_points(c) for c in range(self.C)])

    def to_dict(self) -> dict:
        d = {
            "q": self.q, "n": self.n, "b": self.b, "C": self.C, "regime": self.regime,
            "p1": self.p1, "t": self.t, "seed": self.seed,
            "groups": [
                {
                    # columns of M as digit strings
                    "M": [format_digits(col) for col in M.T],
                    "offsets": [format_digits(row) for row in D],
                }
                for M, D in zip(self.matrices, self.offsets)
            ],
        }
        if self.coded is not None:
            d["coded"] = {
                "modulus": list(self.coded.modulus),
                "c": self.coded.c,
                "H": [format_digits(row) for row in self.coded.H],
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        q, n, b = int(d["q"]), int(d["n"]), int(d["b"])
        regime = canonical_regime(d["regime"])
        matrices, offsets = [], []
        for g in d["groups"]:
            cols = [parse_digits(s, q) for s in g["M"]]
            M = np.array(cols, dtype=np.int64).T.reshape(n, b) if cols else np.zeros((n, 0), dtype=np.int64)
            matrices.append(M)
            offsets.append(np.array([parse_digits(s, q) for s in g["offsets"]], dtype=np.int64).reshape(-1, n))
        coded = None
        if regime == "coded":
            info = d.get("coded", {})
            coded = build_parity_check(q, n, int(d["t"]), modulus=info.get("modulus"))
            if "H" in info:
                H = np.array([parse_digits(s, q) for s in info["H"]], dtype=np.int64).reshape(-1, n)
                if not np.array_equal(H, coded.H):
                    raise UsageError("plan's parity-check matrix does not match its modulus")
        plan = cls(q, n, b, regime, matrices, offsets, d.get("p1"), d.get("t"), d.get("seed"), coded)
        plan.validate()
        return plan

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def validate(self):
        for M, D in zip(self.matrices, self.offsets):
            if M.shape != (self.n, self.b) or D.ndim != 2 or D.shape[1] != self.n:
                raise UsageError("plan matrices/offsets have inconsistent shapes")
            if M.size and (M.min() < 0 or M.max() >= self.q):
                raise UsageError("plan matrix entries outside Z_q")
            if D.size and (D.min() < 0 or D.max() >= self.q):
                raise UsageError("plan offsets outside Z_q")
            if self.regime == "robust-sl" and len(D) % (self.n + 1):
                raise UsageError("sub-linear offsets must come in blocks of n + 1")


def make_plan(q, n, b, C=3, regime="noiseless", p1=None, t=None, seed=0) -> SamplingPlan:
    """Build a complete, seed-deterministic plan for one regime."""
    regime = canonical_regime(regime)
    rng = np.random.default_rng(seed)
    # low-degree supports cluster on few digits, so identity blocks would pile
    # them into bin 0; the coded regime always hashes with random matrices
    matrices = make_subsampling_matrices(q, n, b, C, rng, random=regime == "coded")
    coded = None
    if regime == "coded":
        if t is None:
            raise UsageError("coded regime needs a degree bound t")
        coded = build_parity_check(q, n, t)
    if regime in ("robust-nl", "robust-sl") and p1 is None:
        raise UsageError(f"regime {regime} needs p1")
    offsets = [make_offsets(regime, q, n, p1, rng, coded) for _ in range(C)]
    return SamplingPlan(q, n, b, regime, matrices, offsets,
                        p1=p1 if regime in ("robust-nl", "robust-sl") else None,
                        t=t if regime == "coded" else None, seed=seed, coded=coded)
