"""Function oracles and synthetic sparse signals."""
from __future__ import annotations

import math
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import OracleError, UsageError
from .qary import format_digits, ranks
from .spectral import SparseSpectrum, parse_digits, parse_header, synthesis

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> np.uint64(31))


def _keyed_normals(keys, seed):
    """Two independent N(0, 1) columns per row of ``keys``, a pure function of (row, seed)."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64)).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix(np.full(len(keys), np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
        for col in keys.T:
            h = _splitmix(h ^ col)
        a = _splitmix(h ^ np.uint64(1))
        b = _splitmix(h ^ np.uint64(2))
    # 53-bit uniforms in (0, 1]
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0 ** 53
    u2 = (b >> np.uint64(11)).astype(np.float64) / 2.0 ** 53
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)


def complex_noise(keys, sigma2, seed):
    """CN(0, sigma2) draws keyed on integer rows: real and imaginary parts each N(0, sigma2/2)."""
    x, y = _keyed_normals(keys, seed)
    return math.sqrt(sigma2 / 2.0) * (x + 1j * y)


def _select(keys, idx):
    if isinstance(keys, np.ndarray):
        return keys[idx]
    if np.asarray(idx).dtype == bool:
        idx = np.nonzero(idx)[0]
    return [keys[i] for i in idx]


class _KeyStore:
    """Values keyed on integer ranks (sorted arrays) or on bytes (a dict, for huge domains)."""

    def __init__(self):
        self._keys = np.zeros(0, dtype=np.int64)
        self._vals = np.zeros(0, dtype=complex)
        self._dict = {}

    def __len__(self):
        return len(self._keys) + len(self._dict)

    def lookup(self, keys):
        """(found mask, values) for distinct ``keys``."""
        if isinstance(keys, np.ndarray):
            if not len(self._keys):
                return np.zeros(len(keys), dtype=bool), np.zeros(len(keys), dtype=complex)
            pos = np.minimum(np.searchsorted(self._keys, keys), len(self._keys) - 1)
            found = self._keys[pos] == keys
            return found, np.where(found, self._vals[pos], 0j)
        got = [self._dict.get(k) for k in keys]
        found = np.array([v is not None for v in got], dtype=bool)
        return found, np.array([0j if v is None else v for v in got], dtype=complex)

    def add(self, keys, vals):
        """Insert distinct keys that are not yet present."""
        if isinstance(keys, np.ndarray):
            keys = np.concatenate([self._keys, keys])
            vals = np.concatenate([self._vals, np.asarray(vals, dtype=complex)])
            order = np.argsort(keys, kind="stable")
            self._keys, self._vals = keys[order], vals[order]
        else:
            self._dict.update(zip(keys, vals))


class FunctionOracle:
    """Query boundary around f: Z_q^n -> C.

    Subclasses implement ``_evaluate(points)`` for a batch of rows.  Noise,
    caching and sample accounting live here.  With caching on, every distinct
    index gets exactly one noise draw; with caching off each raw query draws
    fresh noise keyed on its serial number.
    """

    def __init__(self, q, n, sigma2=0.0, noise_seed=0, cache=True):
        if sigma2 < 0:
            raise UsageError("noise variance must be non-negative")
        self.q = q
        self.n = n
        self.sigma2 = float(sigma2)
        self.noise_seed = int(noise_seed)
        self.cache = cache
        self.raw_queries = 0
        self.unique_queries = 0
        self._seen = _KeyStore()
        self._values = _KeyStore()
        self._lock = threading.Lock()

    def _evaluate(self, points) -> np.ndarray:
        raise NotImplementedError

    def query(self, m) -> complex:
        return complex(self.query_batch(np.asarray([tuple(m)]))[0])

    def query_batch(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.int64))
        if points.shape[1] != self.n:
            raise UsageError(f"query rows have length {points.shape[1]}, expected {self.n}")
        if len(points) and (points.min() < 0 or points.max() >= self.q):
            raise UsageError(f"query digits outside [0, {self.q})")
        uniq, inverse, keys, noise_keys = self._dedupe(points)
        with self._lock:
            serial0 = self.raw_queries
            self.raw_queries += len(points)
            seen, _ = self._seen.lookup(keys)
            self._seen.add(_select(keys, ~seen), np.zeros(int((~seen).sum()), dtype=complex))
            self.unique_queries += int((~seen).sum())
            if self.cache:
                found, vals = self._values.lookup(keys)
            else:
                found, vals = np.zeros(len(uniq), dtype=bool), np.zeros(len(uniq), dtype=complex)
        missing = np.nonzero(~found)[0]
        if len(missing):
            fresh = np.asarray(self._evaluate(uniq[missing]), dtype=complex)
            if self.cache and self.sigma2 > 0:
                fresh = fresh + complex_noise(noise_keys[missing], self.sigma2, self.noise_seed)
            vals[missing] = fresh
            if self.cache:
                with self._lock:
                    # another thread may have filled some of these meanwhile
                    again, _ = self._values.lookup(_select(keys, missing))
                    keep = missing[~again]
                    self._values.add(_select(keys, keep), vals[keep])
        out = vals[inverse]
        if not self.cache and self.sigma2 > 0:
            serials = np.arange(serial0, serial0 + len(points), dtype=np.int64)[:, None]
            out = out + complex_noise(serials, self.sigma2, self.noise_seed)
        return out

    def _dedupe(self, points):
        """Distinct rows, the inverse map, hashable keys and integer noise keys (rank when it fits)."""
        if self.q ** self.n < 2 ** 62:
            r = ranks(points, self.q)
            uniq_r, first, inverse = np.unique(r, return_index=True, return_inverse=True)
            return points[first], inverse.reshape(-1), uniq_r, uniq_r[:, None]
        uniq, inverse = np.unique(points, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1), [row.tobytes() for row in uniq], uniq

    def reset_counters(self):
        self.raw_queries = 0
        self.unique_queries = 0
        self._seen = _KeyStore()


class SyntheticOracle(FunctionOracle):
    """Evaluates f[m] = sum_k F[k] omega^<m,k> lazily, one batch at a time."""

    def __init__(self, spectrum: SparseSpectrum, sigma2=0.0, noise_seed=0, cache=True):
        super().__init__(spectrum.q, spectrum.n, sigma2, noise_seed, cache)
        self.spectrum = spectrum

    def _evaluate(self, points):
        return synthesis(self.spectrum, points)


class TableOracle(FunctionOracle):
    """Pure lookup in a sample table file (header ``q=<q> n=<n>``, then ``<digits> <re> <im>``)."""

    def __init__(self, path, q=None, n=None):
        self.path = str(path)
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise OracleError(f"cannot read sample table {path}: {exc}") from exc
        lines = text.splitlines()
        if not lines or not lines[0].strip():
            file_q, file_n = q, n
            if q is None or n is None:
                raise UsageError(f"{path}: empty sample table")
        else:
            file_q, file_n = parse_header(lines[0], self.path)
        if (q is not None and q != file_q) or (n is not None and n != file_n):
            raise UsageError(f"{path}: table is q={file_q} n={file_n}, expected q={q} n={n}")
        super().__init__(file_q, file_n)
        self.table = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            try:
                k = parse_digits(parts[0], file_q)
                v = complex(float(parts[1]), float(parts[2]) if len(parts) > 2 else 0.0)
            except (IndexError, ValueError) as exc:
                raise UsageError(f"{path}:{lineno}: malformed line {line!r}") from exc
            if len(k) != file_n or len(parts) > 3:
                raise UsageError(f"{path}:{lineno}: malformed line {line!r}")
            self.table[np.asarray(k, dtype=np.int64).tobytes()] = v

    def check_coverage(self, points):
        """Raise before any decoding if some planned query is missing from the table."""
        points = np.unique(np.atleast_2d(np.asarray(points, dtype=np.int64)), axis=0)
        missing = [row for row in points if row.tobytes() not in self.table]
        if missing:
            raise OracleError(
                f"{self.path}: {len(missing)} planned queries missing from table, "
                f"first {format_digits(missing[0])}",
                index=format_digits(missing[0]),
            )

    def _evaluate(self, points):
        out = np.empty(len(points), dtype=complex)
        for i, row in enumerate(points):
            try:
                out[i] = self.table[row.tobytes()]
            except KeyError:
                raise OracleError(f"{self.path}: no sample for index {format_digits(row)}",
                                  index=format_digits(row)) from None
        return out


def write_table(path, q, n, points, values):
    with open(path, "w") as fh:
        fh.write(f"q={q} n={n}\n")
        for row, v in zip(np.atleast_2d(points), values):
            fh.write(f"{format_digits(row)} {v.real:.17g} {v.imag:.17g}\n")


class SubprocessOracle(FunctionOracle):
    """Runs an external evaluator: argv = template + digit strings, one ``<re> [<im>]`` line per input."""

    def __init__(self, template, q, n, batch_size=512, timeout=None):
        super().__init__(q, n)
        self.argv = shlex.split(template) if isinstance(template, str) else list(template)
        if not self.argv:
            raise UsageError("empty oracle command")
        self.batch_size = batch_size
        self.timeout = timeout
        self.calls = 0

    def _evaluate(self, points):
        out = np.empty(len(points), dtype=complex)
        for start in range(0, len(points), self.batch_size):
            chunk = points[start:start + self.batch_size]
            args = [format_digits(row) for row in chunk]
            out[start:start + len(chunk)] = self._run(args)
        return out

    def _run(self, args):
        self.calls += 1
        try:
            proc = subprocess.run(self.argv + args, capture_output=True, text=True,
                                  timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise OracleError(f"oracle command failed on {args[0]}: {exc}", index=args[0]) from exc
        if proc.returncode != 0:
            raise OracleError(
                f"oracle command exited with status {proc.returncode} on batch starting {args[0]}: "
                f"{proc.stderr.strip()[:200]}",
                index=args[0],
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(args):
            raise OracleError(f"oracle printed {len(lines)} values for {len(args)} inputs "
                              f"(batch starting {args[0]})", index=args[0])
        vals = []
        for arg, line in zip(args, lines):
            parts = line.split()
            try:
                if len(parts) == 1:
                    vals.append(complex(float(parts[0]), 0.0))
                elif len(parts) == 2:
                    vals.append(complex(float(parts[0]), float(parts[1])))
                else:
                    raise ValueError(line)
            except ValueError:
                raise OracleError(f"unparseable oracle output {line!r} for {arg}", index=arg) from None
        return vals


@dataclass
class SyntheticSpec:
    """Recipe for a random S-sparse spectrum and its noisy oracle.

    ``mode`` is ``"assumption2"`` (values on the constellation rho * phi**a,
    phi = exp(2j pi / kappa)) or ``"general"`` (magnitudes uniform on
    [rho_min, rho_max], phases uniform on [0, 2 pi)).  Give either ``sigma2``
    or ``snr_db``; SNR is S rho^2 / sigma2 in assumption2 mode and
    ||F||^2 / sigma2 otherwise.  ``max_degree`` restricts the support to
    vectors of Hamming weight at most that value.
    """

    q: int
    n: int
    S: int
    mode: str = "general"
    rho: float = 1.0
    kappa: int = 4
    rho_min: float = 1.0
    rho_max: float = 5.0
    sigma2: float | None = None
    snr_db: float | None = None
    max_degree: int | None = None
    seed: int = 0
    support_seed: int | None = None
    value_seed: int | None = None
    noise_seed: int | None = None
    cache: bool = True

    def seeds(self):
        spawned = np.random.SeedSequence(self.seed).spawn(3)
        defaults = [int(s.generate_state(1)[0]) for s in spawned]
        chosen = (self.support_seed, self.value_seed, self.noise_seed)
        return tuple(d if c is None else c for c, d in zip(chosen, defaults))


def _count_low_weight(q, n, t):
    return sum(math.comb(n, w) * (q - 1) ** w for w in range(t + 1))


def draw_support(q, n, S, rng, max_degree=None) -> np.ndarray:
    """S distinct frequencies, uniform over Z_q^n (or over vectors of weight <= max_degree)."""
    total = q ** n if max_degree is None else _count_low_weight(q, n, min(max_degree, n))
    if S > total:
        raise UsageError(f"sparsity {S} exceeds the {total} available frequencies")
    if S == 0:
        return np.zeros((0, n), dtype=np.int64)
    chosen = {}
    if max_degree is None:
        if total <= 4 * S or total < 2 ** 20:
            from .qary import unrank
            for r in rng.choice(total, size=S, replace=False):
                chosen[unrank(int(r), q, n)] = None
        else:
            while len(chosen) < S:
                row = tuple(int(d) for d in rng.integers(0, q, size=n))
                chosen.setdefault(row, None)
    else:
        t = min(max_degree, n)
        weights = np.array([math.comb(n, w) * (q - 1) ** w for w in range(t + 1)], dtype=float)
        weights /= weights.sum()
        while len(chosen) < S:
            w = int(rng.choice(t + 1, p=weights))
            row = np.zeros(n, dtype=np.int64)
            pos = rng.choice(n, size=w, replace=False)
            row[pos] = rng.integers(1, q, size=w)
            chosen.setdefault(tuple(int(d) for d in row), None)
    return np.array(list(chosen), dtype=np.int64)


def synthesize(spec: SyntheticSpec):
    """Draw a random sparse spectrum and wrap it in a noisy lazy oracle.

    Returns ``(truth, oracle)``.
    """
    support_seed, value_seed, noise_seed = spec.seeds()
    support = draw_support(spec.q, spec.n, spec.S, np.random.default_rng(support_seed), spec.max_degree)
    vrng = np.random.default_rng(value_seed)
    if spec.mode == "assumption2":
        if spec.kappa < 1 or spec.rho <= 0:
            raise UsageError("assumption2 mode needs kappa >= 1 and rho > 0")
        a = vrng.integers(0, spec.kappa, size=len(support))
        values = spec.rho * np.exp(2j * np.pi * a / spec.kappa)
    elif spec.mode == "general":
        if not 0 < spec.rho_min <= spec.rho_max:
            raise UsageError("general mode needs 0 < rho_min <= rho_max")
        mags = vrng.uniform(spec.rho_min, spec.rho_max, size=len(support))
        phases = vrng.uniform(0, 2 * np.pi, size=len(support))
        values = mags * np.exp(-1j * phases)
    else:
        raise UsageError(f"unknown synthesis mode {spec.mode!r}")
    truth = SparseSpectrum(spec.q, spec.n, {tuple(k): v for k, v in zip(support, values)})
    sigma2 = noise_variance(spec, truth)
    return truth, SyntheticOracle(truth, sigma2, noise_seed, spec.cache)


def noise_variance(spec: SyntheticSpec, truth: SparseSpectrum) -> float:
    if spec.sigma2 is not None and spec.snr_db is not None:
        raise UsageError("give either sigma2 or snr_db, not both")
    if spec.sigma2 is not None:
        return float(spec.sigma2)
    if spec.snr_db is None:
        return 0.0
    snr = 10 ** (spec.snr_db / 10)
    if spec.mode == "assumption2":
        return spec.S * spec.rho ** 2 / snr
    return truth.energy() / snr
