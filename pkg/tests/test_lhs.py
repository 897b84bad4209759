import numpy as np
import pytest
from dataclasses import replace
from scipy.spatial.transform import Rotation

from localmodels import lhs, measpoly as mp, strategies as st
from localmodels.qforms import (
    HALF_IDENTITY, MAXIMALLY_MIXED, FamilyPoint, FamilyState, QubitOperator, build_family, werner,
)

# redundant cvxpy formulation (tests/oracles.py), CVXOPT and SCS agree to 2e-10
WERNER_ICO_ORACLE = 0.42859264852550083


def werner_state():
    return FamilyState(werner(1.0), MAXIMALLY_MIXED, HALF_IDENTITY)


@pytest.fixture(scope="module")
def werner_level1():
    inst = lhs.LhsInstance.from_family(werner_state(), mp.icosahedron())
    return inst, lhs.solve(inst)


def test_separable_target_is_certified():
    fs = FamilyState(MAXIMALLY_MIXED, MAXIMALLY_MIXED, HALF_IDENTITY)
    cert = lhs.solve(lhs.LhsInstance.from_family(fs, mp.icosahedron()))
    assert cert.q_solver == pytest.approx(1, abs=1e-7)
    assert cert.certified


def test_werner_matches_frozen_oracle(werner_level1):
    _, cert = werner_level1
    assert abs(cert.q_solver - WERNER_ICO_ORACLE) < 1e-6
    assert cert.validation["passed"]
    assert cert.q_star <= cert.q_solver


def test_all_vs_sign_strategies(werner_level1):
    inst, cert = werner_level1
    sign = lhs.solve(replace(inst, strategies=st.sign_compatible(inst.measurements)))
    assert abs(sign.q_solver - cert.q_solver) < 1e-6


def test_final_dominates_basic_on_grid():
    for s in np.linspace(0.1, 1, 4):
        fs = build_family(FamilyPoint.bell_diagonal(s, -s, 1.0))
        inst = lhs.LhsInstance.from_family(fs, mp.icosahedron())
        assert lhs.solve(inst, "final").q_solver >= lhs.solve(inst, "basic").q_solver - 1e-7


def test_aux_library_never_hurts(werner_level1):
    inst, cert = werner_level1
    q0 = cert.q_star
    fs = werner_state()
    aux = [lhs.AuxState(fs.rho * q0 + fs.rho_sep * (1 - q0))]
    d1 = mp.dual_polyhedron(mp.icosahedron())
    base = lhs.LhsInstance.from_family(fs, d1, st.sign_compatible(d1))
    plain = lhs.solve(base).q_solver
    with_aux = lhs.solve(replace(base, aux_library=tuple(aux))).q_solver
    assert with_aux >= plain - 1e-8
    assert with_aux >= q0 - 1e-8


def test_product_target_stops_at_level_one():
    a = QubitOperator.density([0, 0, 0.6])
    b = QubitOperator.density([0.3, 0, 0])
    target = FamilyState(a.tensor(b), MAXIMALLY_MIXED, HALF_IDENTITY)
    certs = lhs.run_hierarchy(target, lhs.schedule("isotropic-dual", 3))
    assert len(certs) == 1
    assert certs[0].q_star >= 1 - 1e-6


def test_validate_product_model_exact():
    a = QubitOperator.density([0.2, -0.1, 0.4])
    b = QubitOperator.density([0, 0.5, 0.1])
    ms = mp.icosahedron()
    ss = st.enumerate_all(6)
    eta = mp.shrinking_factor(ms)[0]
    inst = lhs.LhsInstance(a.tensor(b), MAXIMALLY_MIXED, mp.NoiseMap(HALF_IDENTITY, eta), ms, ss)
    # Alice's side: deterministic mixture reproducing p(+|x) = (1 + v_x.a)/2 for the noisy chi
    chi_coeffs = lhs.dual_map_matrix(inst.noise)
    chi = np.linalg.solve(chi_coeffs, a.tensor(b).coeffs.ravel()).reshape(4, 4)
    from localmodels.qforms import TwoQubitOperator, partial_trace
    chi_op = TwoQubitOperator(chi)
    alice = partial_trace(chi_op, "B")
    p_plus = 0.5 * (1 + ms.directions @ alice.bloch)
    # product of independent per-x responses
    D = ss.plus_indicator()
    w = np.prod(np.where(D > 0, p_plus, 1 - p_plus), axis=1)
    sigma = np.outer(w, b.coeffs) * 2 * alice.c0
    cert = lhs.LhsCertificate(1.0, 1.0, chi_op, sigma, np.zeros(0),
                              TwoQubitOperator(np.zeros((4, 4))), "basic", {})
    rep = lhs.validate(cert, inst)
    assert rep["passed"]
    assert rep["assemblage_residual"] < 1e-12 and rep["state_residual"] < 1e-12


def test_validate_flags_corruption(werner_level1):
    inst, cert = werner_level1
    sig = cert.sigma.copy()
    k = int(np.argmax(sig[:, 0]))
    sig[k, 1:] = 0
    sig[k, 3] = sig[k, 0] + 1e-3
    bad = replace(cert, sigma=sig)
    rep = lhs.validate(bad, inst)
    assert not rep["passed"]
    assert "sigma eigenvalue" in rep["failed"]


def test_rotation_invariance():
    fs = build_family(FamilyPoint.bell_diagonal(0.6, -0.6, 1.0))
    ico = mp.icosahedron()
    rot = Rotation.random(random_state=3).as_matrix()
    q1 = lhs.solve(lhs.LhsInstance.from_family(fs, ico)).q_solver
    # rotating the measurements is the same as rotating Alice's frame of the target
    from localmodels.qforms import TwoQubitOperator
    R = np.eye(4)
    R[1:, 1:] = rot
    rho_rot = TwoQubitOperator(R @ fs.rho.coeffs)
    fs_rot = FamilyState(rho_rot, fs.rho_sep, fs.xi)
    q2 = lhs.solve(lhs.LhsInstance.from_family(fs_rot, ico.rotated(rot))).q_solver
    assert abs(q1 - q2) < 1e-6


def test_unit_visibility_certificate_explains_all_measurements():
    fs = build_family(FamilyPoint.bell_diagonal(0.3, -0.3, 0.5))
    inst = lhs.LhsInstance.from_family(fs, mp.icosahedron())
    cert = lhs.solve(inst)
    assert cert.certified
    # with aux weight / remainder zero the model reproduces Phi_*(chi) exactly
    rng = np.random.default_rng(4)
    worst = 0.0
    for v in rng.normal(size=(2000, 3)):
        model, quantum = lhs.lhs_response(cert, inst, v / np.linalg.norm(v))
        worst = max(worst, np.max(np.abs(model - quantum)))
    assert worst < 1e-6


def test_prune_reproduces_value(werner_level1):
    inst, cert = werner_level1
    kept = lhs._prune(inst, cert, "final", 1e-8)
    assert kept.n < inst.strategies.n
    assert abs(lhs.solve(replace(inst, strategies=kept)).q_solver - cert.q_solver) < 1e-6


def test_certificate_json_roundtrip(werner_level1):
    import json
    inst, cert = werner_level1
    c2, i2 = lhs.certificate_from_json(json.loads(json.dumps(cert.to_json(inst))))
    assert lhs.validate(c2, i2)["passed"]
    assert c2.q_star == cert.q_star


def test_werner_hierarchy_two_levels_non_decreasing():
    certs = lhs.run_hierarchy(werner_state(), lhs.schedule("isotropic-dual", 2))
    qs = [c.q_star for c in certs]
    assert qs[1] >= qs[0] - 1e-8
    assert certs[1].level["m"] == 16


def test_unknown_schedule():
    with pytest.raises(KeyError):
        lhs.schedule("nope")


def test_invalid_instances():
    ms = mp.icosahedron()
    with pytest.raises(ValueError):
        lhs.LhsInstance(werner(1.0), werner(1.0), mp.NoiseMap(HALF_IDENTITY, 0.5), ms, st.enumerate_all(6))
    with pytest.raises(ValueError):
        lhs.LhsInstance(werner(1.0), MAXIMALLY_MIXED, mp.NoiseMap(HALF_IDENTITY, 0.5), ms, st.enumerate_all(5))


@pytest.mark.extended
def test_werner_four_levels_non_decreasing():
    certs = lhs.run_hierarchy(werner_state(), lhs.schedule("isotropic-dual", 4))
    qs = [c.q_star for c in certs]
    assert all(b >= a - 1e-8 for a, b in zip(qs, qs[1:]))
