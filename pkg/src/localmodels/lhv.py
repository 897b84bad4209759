"""Local hidden-variable models with finite measurement polytopes on both sides.

Joint deterministic strategies are pairs ``(alpha, beta)`` drawn from one
strategy set per party.  Constraints are imposed on the full correlator table
``(1, v_x)^T C (1, w_y)`` which is equivalent to matching every ``p(ab|xy)``.
When the product of the two sets is large the program is solved by column
generation with exact pricing over the whole product.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import measpoly as mp
from . import sdpcore as sc
from . import strategies as st
from .lhs import (
    CERTIFIED_TOL,
    PT_B,
    SAFETY_FACTOR,
    TWO_QUBIT_TO_HERM,
    AuxState,
    HierarchyError,
    LevelConfig,
    SolverError,
    dual_map_matrix,
    _next_measurements,
)
from .qforms import (
    MAXIMALLY_MIXED,
    PSD_TOL,
    FamilyPoint,
    FamilyState,
    QubitOperator,
    TwoQubitOperator,
    build_family,
    partial_transpose_B,
)

log = logging.getLogger(__name__)

PRODUCT_CAP = 1_000_000
DIRECT_LIMIT = 30000


def response_table(ss: st.StrategySet) -> np.ndarray:
    """``(m + 1, n)``: row 0 is all ones, row ``x + 1`` holds the outcomes for ``x``."""
    return np.vstack([np.ones(ss.n), ss.outcomes.T.astype(float)])


def correlator_map(ms_a: mp.MeasurementSet, ms_b: mp.MeasurementSet) -> np.ndarray:
    """``((mA+1)(mB+1), 16)``: chi coefficients -> correlator table entries.

    Row ``(x, y)`` is ``Tr(a_x (x) b_y chi)`` with ``a_0 = I`` and ``a_x = v_x . sigma``.
    """
    def rows(ms):
        r = np.zeros((ms.m + 1, 4))
        r[0, 0] = 1.0
        r[1:, 1:] = ms.directions
        return r

    return np.kron(rows(ms_a), rows(ms_b))


@dataclass(frozen=True)
class LhvInstance:
    rho: TwoQubitOperator
    rho_sep: TwoQubitOperator
    map_a: mp.NoiseMap
    map_b: mp.NoiseMap
    ms_a: mp.MeasurementSet
    ms_b: mp.MeasurementSet
    strat_a: st.StrategySet
    strat_b: st.StrategySet
    aux_library: tuple = ()
    eps: float = 0.0

    def __post_init__(self):
        if self.strat_a.m != self.ms_a.m or self.strat_b.m != self.ms_b.m:
            raise ValueError("strategy lengths do not match measurement counts")
        if self.strat_a.n * self.strat_b.n > PRODUCT_CAP:
            raise st.ResourceError(
                f"{self.strat_a.n} x {self.strat_b.n} joint strategies exceed the cap {PRODUCT_CAP}")
        if self.map_a.eta <= 0 or self.map_b.eta <= 0:
            raise ValueError("eta = 0 on one side: the measurement polytope is useless")
        lib = tuple(a if isinstance(a, AuxState) else AuxState(a) for a in self.aux_library)
        object.__setattr__(self, "aux_library", lib)

    @classmethod
    def symmetric(cls, rho, ms, strategies=None, rho_sep=MAXIMALLY_MIXED,
                  xi: QubitOperator | None = None, aux=(), eps=0.0):
        xi = QubitOperator(0.5, np.zeros(3)) if xi is None else xi
        eta, _ = mp.shrinking_factor(ms, xi)
        m = mp.NoiseMap(xi, eta)
        s = st.enumerate_all(ms.m) if strategies is None else strategies
        return cls(rho, rho_sep, m, m, ms, ms, s, s, tuple(aux), eps)

    @property
    def n_joint(self) -> int:
        return self.strat_a.n * self.strat_b.n

    def rho_q(self, q):
        return self.rho * q + self.rho_sep * (1 - q)


@dataclass
class LhvCertificate:
    q_star: float
    q_solver: float
    chi: TwoQubitOperator
    pairs: np.ndarray  # (k, 2) indices into (strat_a, strat_b)
    weights: np.ndarray  # (k,)
    aux_weights: np.ndarray
    remainder: TwoQubitOperator
    protocol: str
    level: dict
    validation: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.q_solver >= 1 - CERTIFIED_TOL and self.validation.get("passed", False)

    def to_json(self, inst: LhvInstance) -> dict:
        return {
            "kind": "lhv",
            "protocol": self.protocol,
            "q_star": self.q_star,
            "q_solver": self.q_solver,
            "eps": inst.eps,
            "map_a": inst.map_a.to_json(),
            "map_b": inst.map_b.to_json(),
            "rho": inst.rho.to_json(),
            "rho_sep": inst.rho_sep.to_json(),
            "measurements_a": inst.ms_a.to_json(),
            "measurements_b": inst.ms_b.to_json(),
            "strategies_a": inst.strat_a.to_json(),
            "strategies_b": inst.strat_b.to_json(),
            "pairs": self.pairs.tolist(),
            "weights": self.weights.tolist(),
            "chi": self.chi.to_json(),
            "aux": [{"state": a.state.to_json(), "provenance": a.provenance} for a in inst.aux_library],
            "aux_weights": self.aux_weights.tolist(),
            "remainder": self.remainder.to_json(),
            "level": self.level,
            "validation": self.validation,
            "solver": self.solver,
        }


def certificate_from_json(data: dict) -> tuple[LhvCertificate, LhvInstance]:
    inst = LhvInstance(
        TwoQubitOperator.from_json(data["rho"]),
        TwoQubitOperator.from_json(data["rho_sep"]),
        mp.NoiseMap.from_json(data["map_a"]),
        mp.NoiseMap.from_json(data["map_b"]),
        mp.MeasurementSet.from_json(data["measurements_a"]),
        mp.MeasurementSet.from_json(data["measurements_b"]),
        st.StrategySet.from_json(data["strategies_a"]),
        st.StrategySet.from_json(data["strategies_b"]),
        tuple(AuxState(TwoQubitOperator.from_json(a["state"]), a["provenance"]) for a in data["aux"]),
        data.get("eps", 0.0),
    )
    cert = LhvCertificate(
        data["q_star"], data["q_solver"], TwoQubitOperator.from_json(data["chi"]),
        np.array(data["pairs"], dtype=int).reshape(-1, 2), np.array(data["weights"], dtype=float),
        np.array(data["aux_weights"], dtype=float), TwoQubitOperator.from_json(data["remainder"]),
        data["protocol"], data["level"], data.get("validation", {}), data.get("solver", {}),
    )
    return cert, inst


# ---------------------------------------------------------------------------
# programs

def _all_pairs(inst: LhvInstance) -> np.ndarray:
    a, b = np.meshgrid(np.arange(inst.strat_a.n), np.arange(inst.strat_b.n), indexing="ij")
    return np.c_[a.ravel(), b.ravel()]


def _joint_columns(inst: LhvInstance, pairs: np.ndarray) -> np.ndarray:
    ra, rb = response_table(inst.strat_a), response_table(inst.strat_b)
    # column (alpha, beta) holds ra[:, alpha] (x) rb[:, beta]
    return np.einsum("xk,yk->xyk", ra[:, pairs[:, 0]], rb[:, pairs[:, 1]]).reshape(-1, len(pairs))


def _build(inst: LhvInstance, protocol: str, pairs: np.ndarray, extra_columns=None):
    p = sc.SdpProblem(f"lhv-{protocol}")
    q = p.variable("q")
    chi = p.variable("chi", 16)
    K = _joint_columns(inst, pairs)
    if extra_columns is not None:
        K = np.hstack([K, extra_columns])
    w = p.variable("p", K.shape[1], nonneg=True)
    if inst.eps > 0:
        p.add_nonneg(w[: len(pairs)] - inst.eps, "p>=eps")
    p.add_eq(correlator_map(inst.ms_a, inst.ms_b) @ chi - sc.apply(sp.csr_matrix(K), w), "behavior")
    p.add_nonneg(1 - q, "q<=1")
    target = sc.apply((inst.rho.coeffs.ravel() - inst.rho_sep.coeffs.ravel())[:, None], q) \
        + inst.rho_sep.coeffs.ravel()
    dual = dual_map_matrix(inst.map_a, inst.map_b)
    if protocol == "basic":
        p.add_eq(dual @ chi - target, "state")
    else:
        rem = target - dual @ chi
        k = len(inst.aux_library)
        tr = np.r_[1.0, np.zeros(15)][None, :] @ chi
        if k:
            beta = p.variable("aux", k, nonneg=True)
            lib = np.array([a.state.coeffs.ravel() for a in inst.aux_library]).T
            rem = rem - lib @ beta
        p.add_psd(TWO_QUBIT_TO_HERM @ rem, "remainder>=0")
        p.add_psd(TWO_QUBIT_TO_HERM @ (PT_B @ rem), "remainder^TB>=0")
        p.add_nonneg(tr, "trace")
    p.maximize(q)
    return p


def build_lhv_basic(inst: LhvInstance, pairs=None) -> sc.SdpProblem:
    return _build(inst, "basic", _all_pairs(inst) if pairs is None else pairs)


def build_lhv_final(inst: LhvInstance, pairs=None) -> sc.SdpProblem:
    return _build(inst, "final", _all_pairs(inst) if pairs is None else pairs)


def _product_marginal_columns(inst: LhvInstance) -> np.ndarray:
    """Stochastic product responses reproducing the ``rho_sep`` marginals; keep q = 0 feasible."""
    ca = inst.rho_sep.coeffs
    ra = np.r_[1.0, inst.ms_a.directions @ ca[1:, 0]]
    rb = np.r_[1.0, inst.ms_b.directions @ ca[0, 1:]]
    return np.kron(ra, rb)[:, None]


def _price(inst: LhvInstance, z_behavior: np.ndarray, k_best: int, chunk: int = 2048):
    """Most violated joint strategies: largest ``ra^T Z rb`` over the full product."""
    Z = z_behavior.reshape(inst.ms_a.m + 1, inst.ms_b.m + 1)
    ra, rb = response_table(inst.strat_a), response_table(inst.strat_b)
    left = ra.T @ Z  # (nA, mB+1)
    best_val, best_idx = [], []
    for lo in range(0, inst.strat_a.n, chunk):
        s = left[lo:lo + chunk] @ rb  # (chunk, nB)
        flat = s.ravel()
        k = min(k_best, flat.size)
        idx = np.argpartition(-flat, k - 1)[:k]
        best_val.append(flat[idx])
        a, b = np.divmod(idx, rb.shape[1])
        best_idx.append(np.c_[a + lo, b])
    vals, idx = np.concatenate(best_val), np.vstack(best_idx)
    order = np.argsort(-vals)[:k_best]
    return vals[order], idx[order]


def solve(inst: LhvInstance, protocol: str = "final", tol: float = sc.DEFAULT_TOL,
          validate_tol: float = 1e-6, level: dict | None = None, method: str = "auto",
          max_rounds: int = 200, columns_per_round: int = 64) -> LhvCertificate:
    """Maximize the visibility; ``method`` is ``direct``, ``colgen`` or ``auto``."""
    t0 = time.perf_counter()
    if method == "auto":
        method = "direct" if inst.n_joint <= DIRECT_LIMIT or inst.eps > 0 else "colgen"
    if method == "direct":
        pairs = _all_pairs(inst)
        sol = sc.solve(_build(inst, protocol, pairs), tol=tol)
        rounds = 0
    else:
        if inst.eps > 0:
            raise ValueError("eps-tightened solves need the full strategy product")
        pairs = _seed_pairs(inst)
        extra = _product_marginal_columns(inst)
        for rounds in range(1, max_rounds + 1):
            sol = sc.solve(_build(inst, protocol, pairs, extra), tol=tol)
            if sol.status not in ("optimal", "inaccurate"):
                break
            # dual feasibility of a new column K_j requires  K_j . z <= 0
            vals, cand = _price(inst, sol.duals["behavior"], columns_per_round)
            scale = max(1.0, float(np.max(np.abs(sol.duals["behavior"]))))
            new = cand[vals > 10 * tol * scale]
            have = {tuple(r) for r in pairs.tolist()}
            new = np.array([r for r in new.tolist() if tuple(r) not in have], dtype=int).reshape(-1, 2)
            log.debug("colgen round %d: q=%.10f, %d columns, max reduced %.3e",
                      rounds, sol.value, len(pairs), vals[0] if len(vals) else 0)
            if len(new) == 0:
                break
            pairs = np.vstack([pairs, new])
        sol, pairs = _drop_stochastic(inst, protocol, pairs, tol, sol)
    if sol.status not in ("optimal", "inaccurate"):
        raise SolverError(f"LHV program returned status {sol.status}", {"status": sol.status, **sol.info})
    q = float(sol["q"][0])
    chi = TwoQubitOperator(sol["chi"].reshape(4, 4))
    weights = sol["p"][: len(pairs)]
    aux_w = sol["aux"] if "aux" in sol.variables else np.zeros(0)
    rem = TwoQubitOperator(np.zeros((4, 4)))
    if protocol == "final":
        rem = _remainder(inst, q, chi, aux_w)
    meta = {"m_a": inst.ms_a.m, "m_b": inst.ms_b.m, "nu": inst.map_a.eta, "mu": inst.map_b.eta,
            "n_joint": inst.n_joint, "n_columns": len(pairs), "method": method}
    meta.update(level or {})
    cert = LhvCertificate(q, q, chi, pairs, weights, np.asarray(aux_w), rem, protocol, meta,
                          solver={"status": sol.status, "rounds": rounds, "residuals": sol.residuals,
                                  "seconds": time.perf_counter() - t0})
    cert.validation = validate(cert, inst, validate_tol)
    margin = SAFETY_FACTOR * cert.validation["max_residual"]
    cert.q_star = q - margin if q >= 1 - CERTIFIED_TOL else min(1.0, q - margin)
    return cert


def _seed_pairs(inst: LhvInstance) -> np.ndarray:
    """Flip-symmetric diagonal-ish seed: each A strategy paired with a few B strategies."""
    na, nb = inst.strat_a.n, inst.strat_b.n
    k = max(na, nb)
    return np.unique(np.c_[np.arange(k) % na, np.arange(k) % nb], axis=0)


def _drop_stochastic(inst, protocol, pairs, tol, sol):
    """Replace the stochastic helper column by deterministic pairs supporting it, then re-solve."""
    from scipy.optimize import linprog

    col = _product_marginal_columns(inst)[:, 0].reshape(inst.ms_a.m + 1, inst.ms_b.m + 1)
    supports = []
    for R, r in ((response_table(inst.strat_a), col[:, 0]), (response_table(inst.strat_b), col[0, :])):
        res = linprog(np.zeros(R.shape[1]), A_eq=R, b_eq=r, bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverError("rho_sep marginals are not reproducible by the kept strategies")
        supports.append(np.flatnonzero(res.x > 1e-12))
    extra = np.array([(a, b) for a in supports[0] for b in supports[1]], dtype=int)
    pairs = np.unique(np.vstack([pairs, extra]), axis=0)
    final = sc.solve(_build(inst, protocol, pairs), tol=tol)
    return final, pairs


def _remainder(inst, q, chi, aux_w):
    phi = TwoQubitOperator((dual_map_matrix(inst.map_a, inst.map_b) @ chi.coeffs.ravel()).reshape(4, 4))
    rem = inst.rho_q(q) - phi
    for w, a in zip(aux_w, inst.aux_library):
        rem = rem - a.state * float(w)
    return rem


def behavior_from_chi(chi: TwoQubitOperator, ms_a, ms_b) -> np.ndarray:
    """``p[a, b, x, y]`` with index 0 for outcome ``+``; computed from dense matrices."""
    rho = chi.matrix()
    from .qforms import SIGMA

    def proj(v, s):
        return (np.eye(2) + s * np.einsum("i,iab->ab", v, SIGMA[1:])) / 2

    out = np.zeros((2, 2, ms_a.m, ms_b.m))
    for x, v in enumerate(ms_a.directions):
        for y, w in enumerate(ms_b.directions):
            for ai, a in enumerate((1, -1)):
                for bi, b in enumerate((1, -1)):
                    out[ai, bi, x, y] = np.real(np.trace(np.kron(proj(v, a), proj(w, b)) @ rho))
    return out


def behavior_from_model(inst: LhvInstance, pairs, weights) -> np.ndarray:
    A = inst.strat_a.outcomes[pairs[:, 0]].astype(float)  # (k, mA)
    B = inst.strat_b.outcomes[pairs[:, 1]].astype(float)
    out = np.zeros((2, 2, inst.ms_a.m, inst.ms_b.m))
    for ai, a in enumerate((1, -1)):
        for bi, b in enumerate((1, -1)):
            da = (A == a).astype(float)
            db = (B == b).astype(float)
            out[ai, bi] = np.einsum("k,kx,ky->xy", weights, da, db)
    return out


def validate(cert: LhvCertificate, inst: LhvInstance, tol: float = 1e-6) -> dict:
    beh_q = behavior_from_chi(cert.chi, inst.ms_a, inst.ms_b)
    beh_m = behavior_from_model(inst, cert.pairs, cert.weights)
    aux_w = np.asarray(cert.aux_weights, dtype=float)
    dual = dual_map_matrix(inst.map_a, inst.map_b)
    phi = TwoQubitOperator((dual @ cert.chi.coeffs.ravel()).reshape(4, 4))
    recon = phi + cert.remainder
    for w, a in zip(aux_w, inst.aux_library):
        recon = recon + a.state * float(w)
    rep = {
        "behavior_residual": float(np.max(np.abs(beh_q - beh_m))),
        "normalization_residual": float(abs(cert.weights.sum() - cert.chi.trace())),
        "min_weight": float(np.min(cert.weights, initial=0.0)),
        "aux_min_weight": float(np.min(aux_w, initial=0.0)),
        "chi_min_eigenvalue": cert.chi.min_eigenvalue(),
        "chi_non_psd": cert.chi.min_eigenvalue() < -PSD_TOL,
        "state_residual": float(np.max(np.abs((recon - inst.rho_q(cert.q_solver)).coeffs))),
        "remainder_min_eigenvalue": cert.remainder.min_eigenvalue() if cert.protocol == "final" else 0.0,
        "remainder_pt_min_eigenvalue":
            partial_transpose_B(cert.remainder).min_eigenvalue() if cert.protocol == "final" else 0.0,
        "trace_condition": float(cert.chi.trace()),
    }
    viol = {
        "behavior residual": rep["behavior_residual"],
        "normalization": rep["normalization_residual"],
        "weight sign": max(0.0, inst.eps - rep["min_weight"]) if inst.eps > 0 else max(0.0, -rep["min_weight"]),
        "aux weight": max(0.0, -rep["aux_min_weight"]),
        "state reconstruction": rep["state_residual"],
        "remainder eigenvalue": max(0.0, -rep["remainder_min_eigenvalue"]),
        "remainder partial transpose": max(0.0, -rep["remainder_pt_min_eigenvalue"]),
        "trace condition": max(0.0, -rep["trace_condition"]),
    }
    rep["max_residual"] = float(max(viol.values()))
    rep["failed"] = [k for k, v in viol.items() if v > tol]
    rep["passed"] = not rep["failed"]
    return rep


# ---------------------------------------------------------------------------
# hierarchy

LHV_SCHEDULES = {
    "isotropic-dual": (
        LevelConfig("icosahedron", "all"),
        LevelConfig("dual", "sign"),
        LevelConfig("dual", "sign"),
    ),
}


def run_lhv_hierarchy(target, levels, rho_sep=None, xi_a=None, xi_b=None,
                      tol: float = sc.DEFAULT_TOL, validate_tol: float = 1e-6,
                      stop_when_certified: bool = True, on_level=None) -> list[LhvCertificate]:
    """Same level rules on both sides; the joint set is the product of the per-party sets."""
    fs = build_family(target) if isinstance(target, FamilyPoint) else target
    if isinstance(fs, TwoQubitOperator):
        fs = FamilyState(fs, MAXIMALLY_MIXED, QubitOperator(0.5, np.zeros(3)))
    rho_sep = MAXIMALLY_MIXED if rho_sep is None else rho_sep
    half = QubitOperator(0.5, np.zeros(3))
    xi_a = half if xi_a is None else xi_a
    xi_b = half if xi_b is None else xi_b
    certs, aux = [], []
    prev_a = prev_b = None
    best = -np.inf
    for j, cfg in enumerate(levels, start=1):
        try:
            ms_a = _next_measurements(cfg, prev_a, xi_a)
            ms_b = _next_measurements(cfg, prev_b, xi_b)
            rule = {"all": lambda ms: st.enumerate_all(ms.m), "sign": st.sign_compatible}
            if cfg.strategies not in rule:
                raise ValueError(f"strategy rule {cfg.strategies!r} is not available for LHV levels")
            sa, sb = rule[cfg.strategies](ms_a), rule[cfg.strategies](ms_b)
            inst = LhvInstance(
                fs.rho, rho_sep,
                mp.NoiseMap(xi_a, mp.shrinking_factor(ms_a, xi_a)[0]),
                mp.NoiseMap(xi_b, mp.shrinking_factor(ms_b, xi_b)[0]),
                ms_a, ms_b, sa, sb, tuple(aux) if cfg.use_aux else (),
            )
            cert = solve(inst, cfg.protocol, tol, validate_tol, level={"level": j, "config": cfg.to_json()})
            cert.level["q_level"] = cert.q_star
            if cert.validation["passed"]:
                best = max(best, cert.q_star)
                qa = min(1.0, max(0.0, best))
                aux = [AuxState(fs.rho * qa + rho_sep * (1 - qa), f"certified LHV level {j}")]
            if np.isfinite(best):
                cert.q_star = max(cert.q_star, best)
            certs.append(cert)
            if on_level:
                on_level(cert, inst)
            prev_a, prev_b = ms_a, ms_b
            if stop_when_certified and cert.certified:
                break
        except (st.ResourceError, SolverError) as exc:
            raise HierarchyError(f"level {j}: {exc}", certs) from exc
    return certs
