import sys
import textwrap
import tracemalloc
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from qsft.detect import DetectorConfig
from qsft.errors import OracleError, UsageError
from qsft.oracle import (SubprocessOracle, SyntheticOracle, SyntheticSpec, TableOracle, complex_noise,
                         synthesize, write_table)
from qsft.peeling import decode
from qsft.plans import make_plan
from qsft.qary import all_indices, roots_of_unity
from qsft.spectral import SparseSpectrum, synthesis


def test_single_coefficient_exact():
    F = SparseSpectrum(5, 3, {(1, 4, 2): 0.5 - 1j})
    orc = SyntheticOracle(F)
    for m in all_indices(5, 3)[::7]:
        expected = (0.5 - 1j) * roots_of_unity(5)(int(m @ np.array([1, 4, 2])))
        assert orc.query(m) == pytest.approx(expected, abs=1e-14)


def test_constellation_values():
    truth, _ = synthesize(SyntheticSpec(4, 6, 40, mode="assumption2", kappa=4, rho=1.0, seed=2))
    allowed = [1, 1j, -1, -1j]
    for v in truth.entries.values():
        assert min(abs(v - a) for a in allowed) < 1e-12
    assert len(truth) == 40


def test_general_magnitudes():
    truth, _ = synthesize(SyntheticSpec(3, 6, 50, rho_min=2.0, rho_max=3.0, seed=5))
    mags = np.abs(truth.values_array())
    assert mags.min() >= 2.0 and mags.max() <= 3.0


def test_sparsity_too_large():
    with pytest.raises(UsageError):
        synthesize(SyntheticSpec(2, 3, 9))
    with pytest.raises(UsageError):
        synthesize(SyntheticSpec(3, 4, 5, sigma2=1.0, snr_db=3.0))


def test_degree_bounded_support():
    truth, _ = synthesize(SyntheticSpec(3, 9, 12, max_degree=2, seed=1))
    assert all(np.count_nonzero(k) <= 2 for k in truth.support())


@pytest.mark.parametrize("mode", ["assumption2", "general"])
def test_empirical_snr(mode):
    q, n = 2, 8
    N = q ** n
    snr_db = 6.0
    ratios = []
    for seed in range(40):
        truth, orc = synthesize(SyntheticSpec(q, n, 6, mode=mode, snr_db=snr_db, seed=seed))
        pts = all_indices(q, n)
        clean = synthesis(truth, pts)
        noisy = orc.query_batch(pts)
        sigma2_hat = np.mean(np.abs(noisy - clean) ** 2)
        ratios.append(np.sum(np.abs(clean) ** 2) / (N * sigma2_hat))
    assert np.mean(ratios) == pytest.approx(10 ** (snr_db / 10), rel=0.1)


def test_noise_convention():
    z = complex_noise(np.arange(200_000)[:, None], 2.0, seed=1)
    assert np.var(z.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(z.imag) == pytest.approx(1.0, rel=0.02)
    assert abs(np.mean(z.real * z.imag)) < 0.02


def test_caching_on():
    truth, orc = synthesize(SyntheticSpec(3, 5, 4, sigma2=0.5, seed=3))
    m = (1, 2, 0, 0, 2)
    a = orc.query(m)
    b = orc.query(m)
    assert a == b
    assert orc.raw_queries == 2 and orc.unique_queries == 1
    # same noise seed, fresh oracle: same draw
    _, orc2 = synthesize(SyntheticSpec(3, 5, 4, sigma2=0.5, seed=3))
    assert orc2.query(m) == a


def test_caching_off():
    spec = SyntheticSpec(3, 5, 4, sigma2=0.5, seed=3, cache=False)
    _, orc = synthesize(spec)
    m = (1, 2, 0, 0, 2)
    a, b = orc.query(m), orc.query(m)
    assert a != b
    assert orc.unique_queries == 1 and orc.raw_queries == 2
    _, orc2 = synthesize(spec)
    assert (orc2.query(m), orc2.query(m)) == (a, b)


def test_order_independent_noise():
    pts = all_indices(3, 4)
    _, a = synthesize(SyntheticSpec(3, 4, 5, sigma2=1.0, seed=8))
    _, b = synthesize(SyntheticSpec(3, 4, 5, sigma2=1.0, seed=8))
    va = a.query_batch(pts)
    perm = np.random.default_rng(0).permutation(len(pts))
    vb = np.empty_like(va)
    vb[perm] = b.query_batch(pts[perm])
    np.testing.assert_array_equal(va, vb)


def test_concurrent_queries():
    pts = all_indices(3, 5)
    _, ref = synthesize(SyntheticSpec(3, 5, 6, sigma2=0.3, seed=2))
    expected = ref.query_batch(pts)
    _, orc = synthesize(SyntheticSpec(3, 5, 6, sigma2=0.3, seed=2))
    chunks = np.array_split(np.arange(len(pts)), 16)
    with ThreadPoolExecutor(8) as pool:
        parts = list(pool.map(lambda idx: orc.query_batch(pts[idx]), chunks + chunks))
    for idx, vals in zip(chunks + chunks, parts):
        np.testing.assert_array_equal(vals, expected[idx])
    assert orc.unique_queries == len(pts)
    assert orc.raw_queries == 2 * len(pts)


def test_sample_accounting():
    truth, orc = synthesize(SyntheticSpec(4, 6, 10, snr_db=10, seed=1))
    plan = make_plan(4, 6, 2, 3, "robust-sl", p1=4, seed=1)
    res = decode(orc, plan, DetectorConfig.for_plan(plan, orc.sigma2))
    assert res.samples_raw == sum(len(D) for D in plan.offsets) * plan.B
    assert res.samples_unique <= res.samples_raw
    assert res.samples_unique == len(np.unique(plan.all_query_points(), axis=0))


def test_lazy_memory():
    q, n = 4, 16  # q**n ~ 4.3e9: materialising f would need ~69 GB
    tracemalloc.start()
    try:
        truth, orc = synthesize(SyntheticSpec(q, n, 20, mode="assumption2", snr_db=10, seed=0))
        plan = make_plan(q, n, 3, 3, "robust-sl", p1=8, seed=0)
        decode(orc, plan, DetectorConfig.for_plan(plan, orc.sigma2), sparsity_hint=20)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert orc.unique_queries < 30_000
    assert peak < 64 * 2 ** 20


def test_query_validation():
    orc = SyntheticOracle(SparseSpectrum(3, 2, {}))
    with pytest.raises(UsageError):
        orc.query((0, 3))
    with pytest.raises(UsageError):
        orc.query((0, 1, 2))


# sample tables

def test_table_round_trip(tmp_path):
    spec = SyntheticSpec(4, 5, 8, mode="assumption2", snr_db=12, seed=6)
    truth, orc = synthesize(spec)
    pts = all_indices(4, 5)
    path = tmp_path / "f.tbl"
    write_table(path, 4, 5, pts, orc.query_batch(pts))  # noise realisation baked in
    plan = make_plan(4, 5, 2, 3, "robust-sl", p1=6, seed=6)
    cfg = DetectorConfig.for_plan(plan, orc.sigma2)
    _, fresh = synthesize(spec)
    a = decode(fresh, plan, cfg)
    b = decode(TableOracle(path), plan, cfg)
    assert a.spectrum.entries == b.spectrum.entries
    assert b.samples_raw == a.samples_raw and b.samples_unique == a.samples_unique


def test_empty_table_coverage(tmp_path):
    path = tmp_path / "empty.tbl"
    path.write_text("")
    orc = TableOracle(path, 3, 4)
    plan = make_plan(3, 4, 2, 2, "noiseless")
    with pytest.raises(OracleError):
        decode(orc, plan)
    assert orc.raw_queries == 0  # rejected before any query
    with pytest.raises(UsageError):
        TableOracle(path)


def test_table_header_mismatch(tmp_path):
    path = tmp_path / "f.tbl"
    write_table(path, 3, 2, all_indices(3, 2), np.ones(9, dtype=complex))
    with pytest.raises(UsageError):
        TableOracle(path, 3, 3)
    with pytest.raises(UsageError):
        TableOracle(path, 2, 2)


def test_table_malformed_line(tmp_path):
    path = tmp_path / "f.tbl"
    path.write_text("q=3 n=2\n00 1 0\n01 one 0\n")
    with pytest.raises(UsageError, match=":3:"):
        TableOracle(path)


def test_table_missing_index(tmp_path):
    path = tmp_path / "f.tbl"
    path.write_text("q=3 n=2\n00 1 0\n01 2 0\n")
    orc = TableOracle(path)
    assert orc.query((0, 1)) == 2
    with pytest.raises(OracleError, match="02") as info:
        orc.query((0, 2))
    assert info.value.index == "02"


def test_table_missing_file(tmp_path):
    with pytest.raises(OracleError):
        TableOracle(tmp_path / "nope.tbl")


# subprocess evaluators

EVALUATOR = textwrap.dedent("""
    import cmath, sys
    q = 3
    terms = {(1, 0, 2, 0): 1.5, (0, 2, 2, 1): -1j}
    for arg in sys.argv[1:]:
        m = [int(c) for c in arg]
        v = sum(c * cmath.exp(2j * cmath.pi * sum(a * b for a, b in zip(m, k)) / q) for k, c in terms.items())
        print(repr(v.real), repr(v.imag))
""")


def test_echo_zero_gives_empty_spectrum():
    # plain `echo 0` would echo the appended digit string back as an imaginary part
    orc = SubprocessOracle("sh -c 'echo 0' _", 2, 3, batch_size=1)
    res = decode(orc, make_plan(2, 3, 1, 2, "noiseless"))
    assert len(res.spectrum) == 0
    assert orc.calls == res.samples_unique


def test_batched_shell_evaluator():
    orc = SubprocessOracle("sh -c 'for a; do echo 0 0; done' _", 3, 4)
    plan = make_plan(3, 4, 2, 2, "noiseless")
    res = decode(orc, plan)
    assert len(res.spectrum) == 0
    assert orc.calls == plan.C  # one process per group batch


def test_scripted_evaluator_matches_synthetic(tmp_path):
    script = tmp_path / "f.py"
    script.write_text(EVALUATOR)
    orc = SubprocessOracle([sys.executable, str(script)], 3, 4, batch_size=50)
    plan = make_plan(3, 4, 2, 2, "noiseless")
    res = decode(orc, plan)
    truth = SparseSpectrum(3, 4, {(1, 0, 2, 0): 1.5, (0, 2, 2, 1): -1j})
    ref = decode(SyntheticOracle(truth), plan)
    assert res.spectrum.support() == truth.support() == ref.spectrum.support()
    for k in truth.support():
        assert abs(res.spectrum[k] - truth[k]) < 1e-9
    assert orc.unique_queries == res.samples_unique == ref.samples_unique


def test_killed_subprocess():
    orc = SubprocessOracle("sh -c 'kill -9 $$'", 3, 2)
    with pytest.raises(OracleError) as info:
        decode(orc, make_plan(3, 2, 1, 1, "noiseless"))
    assert info.value.index is not None


def test_nonzero_exit_and_bad_output():
    with pytest.raises(OracleError):
        SubprocessOracle("false", 2, 2).query((0, 1))
    with pytest.raises(OracleError, match="01"):
        SubprocessOracle("echo nan-ish", 2, 2).query((0, 1))
    with pytest.raises(OracleError):
        SubprocessOracle("echo 1 2 3", 2, 2).query((0, 1))
    with pytest.raises(OracleError):
        SubprocessOracle("/nonexistent/evaluator", 2, 2).query((0, 1))
