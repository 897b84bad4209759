"""End-to-end acceptance checks, one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL/SKIP line per criterion with the measured numbers.  The level-4
part of criterion 5 is two extended jobs (``--extended``).
"""

import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from localmodels import bounds, certify as cf, lhs, lhv, measpoly as mp
from localmodels.qforms import (
    HALF_IDENTITY, MAXIMALLY_MIXED, FamilyPoint, FamilyState, QubitOperator, TwoQubitOperator, werner,
)
import oracles

ICO_ETA = np.sqrt((5 + 2 * np.sqrt(5)) / 15)
GRID = np.linspace(0.0, 1.0, 11)


def werner_state():
    return FamilyState(werner(1.0), MAXIMALLY_MIXED, HALF_IDENTITY)


def test_criterion_1_icosahedron_shrinking_factor(detail):
    t = time.perf_counter()
    eta, _ = mp.shrinking_factor(mp.icosahedron())
    dt = time.perf_counter() - t
    detail(f"eta* = {eta:.12f}, |diff| = {abs(eta - ICO_ETA):.1e}, {dt * 1e3:.1f} ms")
    assert abs(eta - ICO_ETA) < 1e-9
    assert dt < 0.1


def test_criterion_2_quadratic_formula_vs_oracles(detail):
    rng = np.random.default_rng(2024)
    worst_iso = worst_bias = 0.0
    for _ in range(100):
        m = int(rng.integers(3, 21))  # 6 to 40 vertices
        d = rng.normal(size=(m, 3))
        ms = mp.MeasurementSet(d / np.linalg.norm(d, axis=1, keepdims=True))
        worst_iso = max(worst_iso, abs(mp.shrinking_factor(ms)[0] - oracles.inscribed_radius(ms.directions)))
        u = rng.normal(size=3)
        u *= 0.8 * rng.uniform() ** (1 / 3) / np.linalg.norm(u)
        eta = mp.shrinking_factor(ms, QubitOperator.density(u))[0]
        worst_bias = max(worst_bias, abs(eta - oracles.shrinking_by_sampling(ms.directions, u)))
    detail(f"u=0 max diff {worst_iso:.1e}; biased max diff {worst_bias:.1e}")
    assert worst_iso < 1e-9
    assert worst_bias < 1e-5


def test_criterion_3_dual_map_identity(detail):
    rng = np.random.default_rng(3)
    one = two = 0.0
    for _ in range(1000):
        chi = oracles.random_state(rng)
        xa, xb = oracles.random_qubit_state(rng), oracles.random_qubit_state(rng)
        nu, mu = rng.uniform(0, 1, 2)
        va, vb = rng.normal(size=3), rng.normal(size=3)
        A = oracles.bloch_op(0.5, va / np.linalg.norm(va) / 2)
        B = oracles.bloch_op(rng.uniform(0.2, 0.8), rng.normal(size=3) * 0.1)
        op = TwoQubitOperator.from_matrix(chi)
        ma = mp.NoiseMap(QubitOperator.from_matrix(xa), nu)
        mb = mp.NoiseMap(QubitOperator.from_matrix(xb), mu)
        lhs1 = np.trace(np.kron(oracles.noisy_element(A, xa, nu), B) @ chi)
        rhs1 = np.trace(np.kron(A, B) @ mp.dual_map_state(op, ma).matrix())
        rhs1m = np.trace(np.kron(A, B) @ TwoQubitOperator(
            (lhs_dual(ma) @ op.coeffs.ravel()).reshape(4, 4)).matrix())
        lhs2 = np.trace(np.kron(oracles.noisy_element(A, xa, nu), oracles.noisy_element(B, xb, mu)) @ chi)
        rhs2 = np.trace(np.kron(A, B) @ mp.dual_map_state(op, ma, mb).matrix())
        rhs2m = np.trace(np.kron(A, B) @ TwoQubitOperator(
            (lhs_dual(ma, mb) @ op.coeffs.ravel()).reshape(4, 4)).matrix())
        one = max(one, abs(lhs1 - rhs1), abs(lhs1 - rhs1m))
        two = max(two, abs(lhs2 - rhs2), abs(lhs2 - rhs2m))
    detail(f"one-sided {one:.1e}, two-sided {two:.1e}")
    assert one < 1e-10 and two < 1e-10


def lhs_dual(ma, mb=None):
    return lhs.dual_map_matrix(ma, mb)


def test_criterion_4_werner_level1_vs_redundant_oracle(detail):
    pytest.importorskip("cvxpy")
    t = time.perf_counter()
    cert = lhs.solve(lhs.LhsInstance.from_family(werner_state(), mp.icosahedron()), "final")
    dt = time.perf_counter() - t
    ref = oracles.redundant_lhs_werner(oracles.icosahedron_directions(), oracles.ICOSAHEDRON_ETA)
    detail(f"q* = {cert.q_solver:.10f}, oracle {ref:.10f}, diff {abs(cert.q_solver - ref):.1e}, {dt:.2f} s")
    assert cert.validation["passed"]
    assert abs(cert.q_solver - ref) < 1e-6
    assert dt < 30


def test_criterion_5_bell_diagonal_sandwich_level2(detail):
    ub_set = bounds.default_upper_bound_set()
    t = time.perf_counter()
    worst = np.inf
    rows = []
    for s in GRID:
        fp = FamilyPoint.bell_diagonal(s, -s, 1.0)
        certs = lhs.run_hierarchy(fp, lhs.schedule("isotropic-dual", 2), stop_when_certified=False)
        q2 = certs[-1].q_star
        ppt = bounds.ppt_threshold(fp)
        ub = bounds.steering_upper_bound(fp, ub_set)
        rows.append((s, ppt, q2, ub))
        assert all(c.validation["passed"] for c in certs)
        worst = min(worst, q2 - ppt, ub - q2)
    dt = time.perf_counter() - t
    detail(f"11 points, min margin {worst:.2e}, {dt:.0f} s; s=1: ppt {rows[-1][1]:.4f} <= "
           f"q2 {rows[-1][2]:.4f} <= ub13 {rows[-1][3]:.4f}")
    assert worst >= -1e-6
    assert dt < 3600


@pytest.fixture(scope="module")
def level4_run():
    fp = FamilyPoint.bell_diagonal(0.5, -0.5, 1.0)
    t = time.perf_counter()
    certs = lhs.run_hierarchy(fp, lhs.schedule("isotropic-dual", 4), stop_when_certified=False)
    return fp, certs, time.perf_counter() - t


@pytest.mark.extended
def test_criterion_5_level4_within_one_percent_of_exact_limit(detail, level4_run):
    fp, certs, dt = level4_run
    exact = oracles.t_state_steering_limit([0.5, 0.5, 1.0])
    q4 = certs[-1].q_star
    gap = (exact - q4) / exact
    detail(f"m = {certs[-1].level['m']}, q4 = {q4:.6f}, exact limit {exact:.6f}, gap {100 * gap:.2f}%, "
           f"{dt:.0f} s")
    assert certs[-1].level["m"] == 136
    assert all(c.validation["passed"] for c in certs)
    assert q4 <= exact + 1e-6
    assert gap < 0.01


@pytest.mark.extended
def test_criterion_5_level4_within_one_percent_of_dense_bound(detail, level4_run):
    fp, certs, _ = level4_run
    dense = mp.dual_polyhedron(mp.dual_polyhedron(mp.dual_polyhedron(mp.icosahedron())))
    t = time.perf_counter()
    ub = bounds.steering_upper_bound(fp, dense)
    exact = oracles.t_state_steering_limit([0.5, 0.5, 1.0])
    q4 = certs[-1].q_star
    gap = (ub - q4) / ub
    detail(f"q4 = {q4:.6f}, dense ub ({dense.m} dirs) {ub:.6f}, gap {100 * gap:.2f}%, "
           f"{time.perf_counter() - t:.0f} s")
    assert ub >= exact - 1e-6
    assert gap < 0.01


def test_criterion_6_colored_noise_beats_condj(detail):
    th = np.pi / 8
    fp = FamilyPoint.colored_noise(1.0, th)
    certs = lhs.run_hierarchy(fp, lhs.schedule("oriented-augment", 2))
    q2 = certs[-1].q_star
    cj = bounds.condj_threshold(th)
    detail(f"level-2 q* = {q2:.6f} (m {certs[-1].level['m']}) vs condj {cj:.6f}")
    assert certs[-1].validation["passed"]
    assert q2 > cj


def test_criterion_7_rank3_non_psd_chi(detail):
    fp = FamilyPoint.rank3(0.3, 0.7)
    certs = lhs.run_hierarchy(fp, lhs.schedule("isotropic-dual", 1))
    c = certs[-1]
    lam = c.validation["chi_min_eigenvalue"]
    detail(f"q* = {c.q_star:.6f}, chi min eigenvalue {lam:.4f}, validation passed={c.validation['passed']}")
    assert lam < -1e-6
    assert c.validation["passed"]


def test_criterion_8_exactification_and_facet_diagnostic(detail):
    inst = lhv.LhvInstance.symmetric(werner(1.0), mp.icosahedron())
    cert = lhv.solve(inst, "basic")
    cert2, inst2 = cf.tighten(cert, inst, cf.default_eps(cert))
    r = np.random.default_rng(8).choice([-1e-6, 1e-6], size=len(cert2.weights))
    perturbed = replace(cert2, weights=cert2.weights + r)
    model = cf.exactify(perturbed, inst2, eps=inst2.eps)
    ok, rep = cf.verify_rational(model)
    zero = all(v == 0 for v in model.replay_residual().ravel())
    diag = {n: cf.facet_diagnostic(n) for n in (2, 3)}
    # brute force: each positivity inequality is a facet and equals 1/4 at the uniform point
    for n in (2, 3):
        D = oracles.deterministic_boxes(n, n)
        full = np.linalg.matrix_rank(np.vstack([D, np.ones(D.shape[1])]))
        for row in range(D.shape[0]):
            tight = D[:, D[row] == 0]
            assert np.linalg.matrix_rank(np.vstack([tight, np.ones(tight.shape[1])])) == full - 1
        assert np.allclose(D.mean(axis=1), 0.25)
    detail(f"q = {model.meta['q']}, residual l1 before patch {model.meta['residual_l1']:.1e}, "
           f"replay zero={zero}; facets {diag[2]['n_facets']}/{diag[3]['n_facets']}, "
           f"positivity value {diag[2]['positivity_value_at_uniform']}")
    assert ok and zero
    for n in (2, 3):
        assert diag[n]["positivity_value_at_uniform"] == Fraction(1, 4)
        assert diag[n]["nearest_is_positivity_probability"]
        assert diag[n]["nearest_is_positivity_correlator"]


def test_criterion_9_hierarchy_monotone_all_presets(detail):
    targets = {"werner": werner_state(), "colored": FamilyPoint.colored_noise(1.0, np.pi / 8)}
    worst = np.inf
    t = time.perf_counter()
    for tname, target in targets.items():
        for preset in sorted(lhs.SCHEDULES):
            certs = lhs.run_hierarchy(target, lhs.schedule(preset, 3), stop_when_certified=False)
            raw = [c.level["q_level"] for c in certs]
            assert len(raw) == 3
            steps = np.diff(raw)
            worst = min(worst, steps.min())
            assert np.all(steps >= -1e-8), (tname, preset, raw)
    detail(f"{len(targets) * len(lhs.SCHEDULES)} runs x 3 levels, smallest step {worst:.2e}, "
           f"{time.perf_counter() - t:.0f} s")
