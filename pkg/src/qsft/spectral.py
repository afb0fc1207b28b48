"""Dense reference transforms and the subsampled transform over Z_q^b."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError
from .qary import all_indices, format_digits, parse_digits, roots_of_unity

PRUNE_TOL = 1e-8


@dataclass(frozen=True)
class DenseSignal:
    """All q**n values of f, indexed by rank."""

    q: int
    n: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.q ** self.n,):
            raise UsageError(f"expected {self.q ** self.n} values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass
class SparseSpectrum:
    """A sparse map from frequency (digit tuple) to complex coefficient."""

    q: int
    n: int
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, v in self.entries.items():
            k = tuple(int(d) for d in k)
            if len(k) != self.n or any(not 0 <= d < self.q for d in k):
                raise UsageError(f"frequency {k} is not in Z_{self.q}^{self.n}")
            v = complex(v)
            if v != 0:
                clean[k] = v
        self.entries = clean

    def __len__(self):
        return len(self.entries)

    def __contains__(self, k):
        return tuple(k) in self.entries

    def __getitem__(self, k):
        return self.entries.get(tuple(k), 0j)

    def support(self):
        return set(self.entries)

    def keys_array(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.n), dtype=np.int64)
        return np.array(sorted(self.entries), dtype=np.int64)

    def values_array(self) -> np.ndarray:
        return np.array([self.entries[k] for k in sorted(self.entries)], dtype=complex)

    def energy(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.entries.values()))

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(format_spectrum(self))

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return parse_spectrum(fh.read())


def format_spectrum(F: SparseSpectrum) -> str:
    lines = [f"q={F.q} n={F.n}"]
    for k in sorted(F.entries):
        v = F.entries[k]
        lines.append(f"{format_digits(k)} {v.real:.17g} {v.imag:.17g}")
    return "\n".join(lines) + "\n"


def parse_header(line, source="<text>"):
    try:
        parts = dict(tok.split("=", 1) for tok in line.split())
        return int(parts["q"]), int(parts["n"])
    except (ValueError, KeyError):
        raise UsageError(f"{source}:1: expected header 'q=<q> n=<n>', got {line.strip()!r}") from None


def parse_spectrum(text, source="<text>") -> SparseSpectrum:
    lines = text.splitlines()
    if not lines:
        raise UsageError(f"{source}: empty spectrum file")
    q, n = parse_header(lines[0], source)
    entries = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            k = parse_digits(parts[0], q)
            v = complex(float(parts[1]), float(parts[2]))
        except (IndexError, ValueError) as exc:
            raise UsageError(f"{source}:{lineno}: malformed line {line!r}") from exc
        if len(k) != n:
            raise UsageError(f"{source}:{lineno}: index {parts[0]!r} has length {len(k)}, expected {n}")
        entries[k] = v
    return SparseSpectrum(q, n, entries)


def dense_forward(f: DenseSignal, prune=PRUNE_TOL) -> SparseSpectrum:
    """F[k] = 1/N sum_m f[m] omega^(-<m,k>), with near-zero entries dropped.

    Reference oracle only: uses a full N-point FFT.
    """
    q, n = f.q, f.n
    N = q ** n
    grid = f.values.reshape((q,) * n)
    F = np.fft.fftn(grid).ravel() / N
    peak = np.max(np.abs(F)) if F.size else 0.0
    keep = np.nonzero(np.abs(F) > prune * peak)[0] if peak > 0 else []
    keys = all_indices(q, n)
    return SparseSpectrum(q, n, {tuple(keys[i]): F[i] for i in keep})


TABLE_ENTRIES = 1 << 18


def _phase_tables(q, K):
    """Split the digits into blocks; per block, omega^<m_blk, k_blk> for every m_blk and k.

    Returns ``[(columns, weights, table)]`` where ``table`` has shape (q**w, S)
    and ``weights`` rank a block of digits into a table row.
    """
    S, n = K.shape
    width = 1
    while width < n and q ** (width + 1) * S <= TABLE_ENTRIES:
        width += 1
    omega = roots_of_unity(q)
    tables = []
    for start in range(0, n, width):
        cols = slice(start, min(start + width, n))
        w = cols.stop - cols.start
        sub = all_indices(q, w)
        weights = q ** np.arange(w - 1, -1, -1, dtype=np.int64)
        tables.append((cols, weights, omega((sub @ K[:, cols].T) % q)))
    return tables


def synthesis(F: SparseSpectrum, points) -> np.ndarray:
    """f[m] = sum_k F[k] omega^<m,k> at the given rows.

    The character omega^<m,k> factors over blocks of digits, so each query
    costs one table-row gather per block and an S-term dot product.
    """
    points = np.asarray(points, dtype=np.int64)
    out = np.zeros(len(points), dtype=complex)
    if not len(F) or not len(points):
        return out
    vals = F.values_array()
    tables = _phase_tables(F.q, F.keys_array())
    step = max(1, 2 ** 20 // len(vals))
    for start in range(0, len(points), step):
        chunk = points[start:start + step]
        acc = None
        for cols, weights, table in tables:
            part = table[chunk[:, cols] @ weights]
            if acc is None:
                acc = part
            else:
                acc *= part
        out[start:start + step] = acc @ vals
    return out


def dense_inverse(F: SparseSpectrum) -> DenseSignal:
    return DenseSignal(F.q, F.n, synthesis(F, all_indices(F.q, F.n)))


def qary_fft(x, q, axes=None):
    """Unnormalised forward DFT over Z_q along each of ``axes``.

    y[j] = sum_l x[l] omega^(-<j,l>), done as one radix-q pass per axis, so
    B = q^b points cost O(B b q).
    """
    x = np.asarray(x, dtype=complex)
    if axes is None:
        axes = range(x.ndim)
    W = roots_of_unity(q)(-np.outer(np.arange(q), np.arange(q)))
    for ax in axes:
        if x.shape[ax] != q:
            raise UsageError(f"axis {ax} has length {x.shape[ax]}, expected {q}")
        x = np.moveaxis(np.tensordot(W, x, axes=([1], [ax])), 0, ax)
    return x


def subsample_points(M, offsets, q) -> np.ndarray:
    """Query rows M l + d for every offset d (outer) and l in Z_q^b (inner, rank order).

    Returns shape (P, q**b, n).
    """
    M = np.asarray(M, dtype=np.int64)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
    n, b = M.shape
    if offsets.shape[1] != n:
        raise UsageError(f"offsets have length {offsets.shape[1]}, expected {n}")
    ell = all_indices(q, b)
    base = (ell @ M.T) % q
    return (base[None, :, :] + offsets[:, None, :]) % q


def subsample_group(values, q, b) -> np.ndarray:
    """Turn raw samples of shape (P, q**b) into the bin table U of shape (q**b, P).

    Row j of the result is the stacked observation vector U[j] across offsets.
    """
    values = np.asarray(values, dtype=complex)
    P = values.shape[0]
    B = q ** b
    grid = values.reshape((P,) + (q,) * b)
    U = qary_fft(grid, q, axes=range(1, b + 1)).reshape(P, B) / B
    return U.T.copy()


def subsample_transform(oracle, M, d) -> np.ndarray:
    """U[j] = 1/B sum_l f[M l + d] omega^(-<j,l>) for every j in Z_q^b (rank order)."""
    q = oracle.q
    M = np.asarray(M, dtype=np.int64)
    pts = subsample_points(M, [d], q)[0]
    values = oracle.query_batch(pts)
    return subsample_group(values[None, :], q, M.shape[1])[:, 0]


def aliasing_sum(F: SparseSpectrum, M, offsets) -> np.ndarray:
    """Direct evaluation of U[j] = sum_{k: M^T k = j} F[k] omega^<d,k>.

    Brute-force oracle for ``subsample_transform``; returns shape (q**b, P).
    """
    q = F.q
    M = np.asarray(M, dtype=np.int64)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
    b = M.shape[1]
    U = np.zeros((q ** b, len(offsets)), dtype=complex)
    omega = roots_of_unity(q)
    for k, v in F.entries.items():
        j = 0
        for digit in (np.asarray(k) @ M) % q:
            j = j * q + int(digit)
        U[j] += v * omega((offsets @ np.asarray(k)) % q)
    return U


def nmse(estimate: SparseSpectrum, truth: SparseSpectrum) -> float:
    """||F_hat - F||^2 / ||F||^2 over the union of supports."""
    denom = truth.energy()
    if denom == 0:
        raise DomainError("NMSE is undefined for an all-zero reference spectrum")
    keys = estimate.support() | truth.support()
    num = sum(abs(estimate[k] - truth[k]) ** 2 for k in keys)
    return float(num / denom)
