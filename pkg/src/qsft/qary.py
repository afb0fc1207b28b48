"""Arithmetic over Z_q and Z_q^n.

Vectors over Z_q^n are plain integer sequences (tuples or numpy rows).  The
rank of a vector is its value as a base-q number with the first digit most
significant, which is the row-major (C-order) enumeration numpy uses for an
array of shape ``(q,) * n``.  The text form of a vector is its digit string in
the same order, e.g. ``"0211"`` for ``(0, 2, 1, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, UsageError

_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"


def _check_q(q):
    if int(q) != q or q < 2:
        raise UsageError(f"alphabet size q must be an integer >= 2, got {q!r}")


@dataclass(frozen=True)
class QIndex:
    """An element of Z_q^n."""

    digits: tuple
    q: int

    def __post_init__(self):
        _check_q(self.q)
        digits = tuple(int(d) for d in self.digits)
        if not digits:
            raise UsageError("a q-ary index needs at least one digit")
        for d in digits:
            if not 0 <= d < self.q:
                raise UsageError(f"digit {d} outside [0, {self.q})")
        object.__setattr__(self, "digits", digits)

    @property
    def n(self):
        return len(self.digits)

    def rank(self):
        return rank(self.digits, self.q)

    @classmethod
    def unrank(cls, r, q, n):
        return cls(unrank(r, q, n), q)

    @classmethod
    def parse(cls, text, q):
        return cls(parse_digits(text, q), q)

    def __str__(self):
        return format_digits(self.digits)

    def __iter__(self):
        return iter(self.digits)

    def __len__(self):
        return len(self.digits)

    def __getitem__(self, i):
        return self.digits[i]


class RootOfUnity:
    """Power table of omega = exp(2j*pi/q)."""

    def __init__(self, q):
        _check_q(q)
        self.q = q
        self.powers = np.exp(2j * np.pi * np.arange(q) / q)
        self.powers.setflags(write=False)

    def __call__(self, a):
        """omega ** a for integer (array) ``a``; exponents are reduced mod q."""
        return self.powers[np.mod(a, self.q)]

    def __repr__(self):
        return f"RootOfUnity(q={self.q})"


@lru_cache(maxsize=None)
def roots_of_unity(q) -> RootOfUnity:
    return RootOfUnity(q)


def rank(digits, q) -> int:
    r = 0
    for d in digits:
        d = int(d)
        if not 0 <= d < q:
            raise UsageError(f"digit {d} outside [0, {q})")
        r = r * q + d
    return r


def unrank(r, q, n) -> tuple:
    r = int(r)
    if not 0 <= r < q ** n:
        raise UsageError(f"rank {r} outside [0, {q}^{n})")
    out = [0] * n
    for i in range(n - 1, -1, -1):
        r, out[i] = divmod(r, q)
    return tuple(out)


def ranks(points, q):
    """Vectorised ``rank`` over the rows of an integer array.

    Returns int64 when q**n fits, otherwise an object array of Python ints.
    """
    points = np.asarray(points)
    n = points.shape[-1]
    if q ** n < 2 ** 62:
        weights = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
        return points.astype(np.int64) @ weights
    weights = np.array([q ** i for i in range(n - 1, -1, -1)], dtype=object)
    return points.astype(object) @ weights


def all_indices(q, n) -> np.ndarray:
    """Every element of Z_q^n as rows of a (q**n, n) array, in rank order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((q,) * n, dtype=np.int64)
    return grids.reshape(n, -1).T.copy()


def format_digits(digits) -> str:
    return "".join(_DIGITS[int(d)] for d in digits)


def parse_digits(text, q) -> tuple:
    _check_q(q)
    if q > len(_DIGITS):
        raise UsageError(f"digit strings support q <= {len(_DIGITS)}")
    try:
        digits = tuple(_DIGITS.index(ch) for ch in text.strip().lower())
    except ValueError:
        raise UsageError(f"invalid digit string {text!r}") from None
    if not digits or any(d >= q for d in digits):
        raise UsageError(f"digit string {text!r} is not over Z_{q}")
    return digits


def inner_product(x, y, q) -> int:
    """<x, y> mod q."""
    for v in (x, y):
        if isinstance(v, QIndex) and v.q != q:
            raise UsageError(f"alphabet mismatch: {v.q} vs {q}")
    x = tuple(x)
    y = tuple(y)
    if len(x) != len(y):
        raise UsageError(f"length mismatch: {len(x)} vs {len(y)}")
    return sum(int(a) * int(b) for a, b in zip(x, y)) % q


def mat_vec(M, x, q) -> tuple:
    """M @ x over Z_q for an (r, c) matrix and a length-c vector."""
    M = np.asarray(M, dtype=np.int64)
    x = np.asarray(tuple(x), dtype=np.int64)
    if M.ndim != 2 or M.shape[1] != x.shape[0]:
        raise UsageError(f"shape mismatch: matrix {M.shape} with vector of length {x.shape[0]}")
    return tuple(int(v) for v in (M @ x) % q)


def arg_q(z, q):
    """Quantise the phase of ``z`` to the nearest q-th root of unity exponent.

    Computes floor(q/(2 pi) * arg(z exp(j pi/q))) mod q, with arg in (-pi, pi].
    Accepts scalars or arrays; any exact zero raises ``DomainError``.
    """
    _check_q(q)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise DomainError("arg_q is undefined at z = 0")
    theta = np.angle(z * np.exp(1j * np.pi / q))
    out = np.mod(np.floor(q * theta / (2 * np.pi)).astype(np.int64), q)
    if out.ndim == 0:
        return int(out)
    return out
