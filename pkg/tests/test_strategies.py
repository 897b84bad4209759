import numpy as np
import pytest

from localmodels import measpoly as mp
from localmodels import strategies as st


def rand_dirs(rng, m):
    v = rng.normal(size=(m, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.mark.parametrize("m,n", [(1, 2), (3, 8), (16, 65536)])
def test_enumerate_counts(m, n):
    ss = st.enumerate_all(m)
    assert ss.n == n
    assert len(np.unique(ss.outcomes, axis=0)) == n


def test_enumerate_guard():
    with pytest.raises(st.ResourceError):
        st.enumerate_all(st.MAX_FULL_M + 1)


def test_bitmask_roundtrip():
    ss = st.enumerate_all(5)
    assert ss.bitmasks() == list(range(32))
    assert np.array_equal(st.StrategySet.from_bitmasks(ss.bitmasks(), 5).outcomes, ss.outcomes)


@pytest.mark.parametrize("m,count", [(3, 8), (4, 14)])
def test_sign_compatible_generic_counts(m, count):
    rng = np.random.default_rng(m)
    d = rand_dirs(rng, m)
    ss = st.sign_compatible(mp.MeasurementSet(d))
    assert ss.n == count == m * (m - 1) + 2
    assert st.sampled_sign_patterns(d, 1_000_000, seed=1) == count
    assert st.check_witnesses(ss, d)


@pytest.mark.parametrize("ms", [mp.icosahedron(), mp.dual_polyhedron(mp.icosahedron()),
                                mp.dual_polyhedron(mp.dual_polyhedron(mp.icosahedron()))],
                         ids=["ico", "16", "46"])
def test_sign_compatible_symmetric_sets_match_sampling(ms):
    ss = st.sign_compatible(ms)
    assert st.check_witnesses(ss, ms.directions)
    found = st.sampled_sign_patterns(ms.directions, 1_000_000, seed=2)
    assert found <= ss.n <= ms.m * (ms.m - 1) + 2
    # every sampled cell is among the enumerated ones
    assert found == ss.n


def test_sign_compatible_flip_closed():
    ss = st.sign_compatible(mp.icosahedron())
    rows = {r.tobytes() for r in ss.outcomes}
    assert all((-r).tobytes() in rows for r in ss.outcomes)


def test_sign_compatible_large_bound():
    rng = np.random.default_rng(5)
    ss = st.sign_compatible(mp.MeasurementSet(rand_dirs(rng, 200)))
    assert ss.n <= 200 * 199 + 2


def test_offset_sign_patterns_match_sampling():
    rng = np.random.default_rng(6)
    d = rand_dirs(rng, 6)
    off = rng.uniform(-0.5, 0.5, 6)
    pats, wits = st.sign_patterns(d, off)
    n = rng.normal(size=(400000, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    sampled = np.unique(np.sign(off + n @ d.T).astype(int), axis=0)
    assert {tuple(r) for r in sampled} <= {tuple(r) for r in np.asarray(pats, int)}
    assert np.all(np.asarray(pats) * (off + wits @ d.T) > 0)


def test_prune_singleton_and_infinite_tolerance():
    ss = st.enumerate_all(3)
    w = np.zeros(8)
    w[5] = 1
    out = st.prune_by_weight(ss, w, 1.0, lambda s: 1.0 if 5 in s.bitmasks() and True else 0.0)
    assert out.n == 1 and out.bitmasks() == ss.subset([5], "x").bitmasks()
    out = st.prune_by_weight(ss, np.ones(8), 1.0, lambda s: 0.0, tol=np.inf)
    assert out.n == 1 and out.bitmasks() == [0]


def test_prune_inconsistent():
    with pytest.raises(st.InconsistencyError):
        st.prune_by_weight(st.enumerate_all(2), np.ones(4), 1.0, lambda s: 0.0)


def test_extend_counts_and_prefix():
    one = st.StrategySet(np.array([[1, -1]], np.int8))
    assert st.extend(one, 2, 4).n == 4
    ss = st.sign_compatible(mp.icosahedron()).subset(range(7), "kept")
    assert st.extend(ss, 6, 6) is ss
    big = st.extend(ss, 6, 16)
    assert big.n == 7 * 2**10
    assert np.array_equal(np.unique(big.outcomes[:, :6], axis=0), np.unique(ss.outcomes, axis=0))
    with pytest.raises(st.ResourceError):
        st.extend(ss, 6, 30, cap=1000)
