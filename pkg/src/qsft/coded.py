"""Parity-check offsets for bounded-degree spectra.

For prime q and degree bound t we take the Reed-Solomon code of length q^c
(evaluation at every element of GF(q^c), c = ceil(log_q n)) and designed
distance 2t + 1.  Its parity check is the Vandermonde matrix with rows x^i,
i < 2t.  Restricting to the first n evaluation points shortens the code, and
expanding each GF(q^c) entry into its c coordinates over GF(q) gives the
parity check of the shortened subfield subcode: a 2tc x n matrix over Z_q
whose syndromes separate every vector of Hamming weight <= t.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConstructionError, UsageError

TABLE_BUDGET = 2_000_000


def is_prime(q) -> bool:
    if q < 2:
        return False
    return all(q % p for p in range(2, math.isqrt(q) + 1))


def extension_degree(q, n) -> int:
    """Smallest c >= 1 with q**c >= n."""
    c = 1
    while q ** c < n:
        c += 1
    return c


def _poly_mod(a, m, q):
    """Remainder of a by monic m over GF(q); coefficient lists, lowest degree first."""
    a = list(a)
    dm = len(m) - 1
    for i in range(len(a) - 1, dm - 1, -1):
        coef = a[i] % q
        if coef:
            for j in range(dm + 1):
                a[i - dm + j] = (a[i - dm + j] - coef * m[j]) % q
    return [x % q for x in a[:dm]] + [0] * max(0, dm - len(a))


def _monic_polys(q, degree):
    for low in itertools.product(range(q), repeat=degree):
        yield list(reversed(low)) + [1]


def find_irreducible(q, c) -> tuple:
    """First monic irreducible polynomial of degree c over GF(q), lowest coefficient first.

    Polynomials are scanned with the constant term varying slowest, so the
    result is the lexicographically smallest (high-to-low) candidate.
    """
    if c == 1:
        return (0, 1)
    for cand in _monic_polys(q, c):
        if cand[0] == 0:
            continue
        reducible = any(
            not any(_poly_mod(cand, d, q))
            for deg in range(1, c // 2 + 1)
            for d in _monic_polys(q, deg)
        )
        if not reducible:
            return tuple(cand)
    raise ConstructionError(f"no irreducible polynomial of degree {c} over GF({q})")


class ExtensionField:
    """GF(q^c) with elements encoded as integers sum_i a_i q^i (a_i = coefficient of x^i)."""

    def __init__(self, q, c, modulus=None):
        self.q = q
        self.c = c
        self.modulus = tuple(modulus) if modulus is not None else find_irreducible(q, c)
        if len(self.modulus) != c + 1 or self.modulus[-1] != 1:
            raise UsageError(f"modulus {self.modulus} is not monic of degree {c}")
        self.order = q ** c

    def coords(self, e) -> list:
        out = []
        for _ in range(self.c):
            e, r = divmod(e, self.q)
            out.append(r)
        return out

    def element(self, coords) -> int:
        return sum(int(a) * self.q ** i for i, a in enumerate(coords))

    def mul(self, x, y) -> int:
        a, b = self.coords(x), self.coords(y)
        prod = [0] * (2 * self.c - 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    prod[i + j] += ai * bj
        if self.c == 1:
            return prod[0] % self.q
        return self.element(_poly_mod(prod, self.modulus, self.q))

    def power(self, x, k) -> int:
        out = 1
        for _ in range(k):
            out = self.mul(out, x)
        return out


@dataclass
class CodedOffsetPlan:
    q: int
    n: int
    t: int
    c: int
    modulus: tuple
    H: np.ndarray
    table: dict = field(repr=False, default_factory=dict)

    @property
    def P(self):
        return self.H.shape[0]

    def syndrome(self, k) -> tuple:
        return tuple(int(s) for s in (self.H @ np.asarray(k, dtype=np.int64)) % self.q)


def parity_check_matrix(q, n, t, modulus=None):
    c = extension_degree(q, n)
    gf = ExtensionField(q, c, modulus)
    H = np.zeros((2 * t * c, n), dtype=np.int64)
    for col, point in enumerate(range(n)):
        value = 1
        for i in range(2 * t):
            H[i * c:(i + 1) * c, col] = gf.coords(value)
            value = gf.mul(value, point)
    return H, c, gf.modulus


def build_parity_check(q, n, t, modulus=None, budget=TABLE_BUDGET) -> CodedOffsetPlan:
    """Parity-check offsets correcting weight-<=t frequencies, plus an exhaustive syndrome table."""
    if not is_prime(q):
        raise UsageError(f"coded offsets need a prime alphabet, got q={q}")
    if n < 1 or t < 0:
        raise UsageError("need n >= 1 and t >= 0")
    t = min(t, n)
    H, c, modulus = parity_check_matrix(q, n, t, modulus)
    if 2 * t * c > n:
        warnings.warn(f"coded offsets use {2 * t * c} rows, more than identity offsets ({n})",
                      stacklevel=2)
    count = sum(math.comb(n, w) * (q - 1) ** w for w in range(t + 1))
    if count > budget:
        raise BudgetError(f"syndrome table would hold {count} entries (budget {budget})")
    plan = CodedOffsetPlan(q, n, t, c, tuple(modulus), H)
    for k in low_weight_vectors(q, n, t):
        s = plan.syndrome(k)
        if s in plan.table:
            raise ConstructionError(f"syndrome collision between {plan.table[s]} and {k}")
        plan.table[s] = k
    return plan


def low_weight_vectors(q, n, t):
    """Every vector of Z_q^n with Hamming weight <= t, by increasing weight."""
    yield (0,) * n
    for w in range(1, t + 1):
        for pos in itertools.combinations(range(n), w):
            for vals in itertools.product(range(1, q), repeat=w):
                k = [0] * n
                for p, v in zip(pos, vals):
                    k[p] = v
                yield tuple(k)


def syndrome_decode(plan: CodedOffsetPlan, s):
    """The unique weight-<=t vector with syndrome ``s``, or None."""
    s = tuple(int(x) % plan.q for x in s)
    if len(s) != plan.P:
        raise UsageError(f"syndrome has length {len(s)}, expected {plan.P}")
    return plan.table.get(s)
