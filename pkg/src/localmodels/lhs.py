"""Local hidden-state models for two-qubit states under all projective measurements.

Alice's side is the steering side.  For a finite measurement set with
shrinking factor ``eta`` under the noise map built on ``xi``, a Hermitian
``chi`` whose assemblage on the finite set decomposes as
``sum_lambda D_lambda(a|x) sigma_lambda`` makes ``Phi^eta_*(chi)`` unsteerable
for every projective measurement.  The programs below maximize the visibility
``q`` at which ``q rho + (1 - q) rho_sep`` is reached that way, optionally up
to a PPT remainder and a mixture of states already known to be unsteerable.

All variables live in Pauli coordinates: ``chi`` as its 16 coefficients
``c_ij`` and each ``sigma_lambda`` as ``(c0, c1, c2, c3)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import measpoly as mp
from . import sdpcore as sc
from . import strategies as st
from .qforms import (
    PSD_TOL,
    QubitOperator,
    TwoQubitOperator,
    build_family,
    FamilyPoint,
    FamilyState,
    compose,
    partial_trace,
    partial_transpose_B,
)

log = logging.getLogger(__name__)

CERTIFIED_TOL = 1e-7
SAFETY_FACTOR = 10.0


class SolverError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class HierarchyError(RuntimeError):
    """Raised mid-hierarchy; ``partial`` holds the certificates completed so far."""

    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


# ---------------------------------------------------------------------------
# Pauli-coordinate linear maps

# qubit coefficients (c0, c) -> real Hermitian coordinates (a, d, Re z, Im z)
QUBIT_TO_HERM = np.array([[1, 0, 0, 1], [1, 0, 0, -1], [0, 1, 0, 0], [0, 0, -1, 0]], float)


def _two_qubit_to_herm() -> np.ndarray:
    out = np.zeros((16, 16))
    for k in range(16):
        e = np.zeros(16)
        e[k] = 1
        out[:, k] = sc.herm_coords(compose(e.reshape(4, 4)).matrix())
    return out


TWO_QUBIT_TO_HERM = _two_qubit_to_herm()
PT_B = np.diag(np.where(np.arange(16) % 4 == 2, -1.0, 1.0))


def dual_map_matrix(map_a: mp.NoiseMap, map_b: mp.NoiseMap | None = None) -> np.ndarray:
    """16 x 16 matrix of the dual noise map acting on flattened Pauli coefficients."""
    out = np.zeros((16, 16))
    for k in range(16):
        e = np.zeros(16)
        e[k] = 1
        out[:, k] = mp.dual_map_state(TwoQubitOperator(e.reshape(4, 4)), map_a, map_b).coeffs.ravel()
    return out


def conditional_state_map(direction) -> np.ndarray:
    """``4 x 16`` map: chi -> coefficients of ``Tr_A[((I + v.sigma)/2 (x) I) chi]``."""
    w = np.r_[1.0, np.asarray(direction, dtype=float)]
    g = np.zeros((4, 16))
    for i in range(4):
        for l in range(4):
            g[l, 4 * i + l] = w[i] / 4
    return g


REDUCED_B = np.zeros((4, 16))
REDUCED_B[np.arange(4), np.arange(4)] = 0.5


def assemblage_maps(ms: mp.MeasurementSet) -> np.ndarray:
    """Stacked ``(4m) x 16`` conditional-state maps for the ``+`` outcomes."""
    return np.vstack([conditional_state_map(v) for v in ms.directions])


# ---------------------------------------------------------------------------
# instances and certificates

@dataclass(frozen=True)
class AuxState:
    state: TwoQubitOperator
    provenance: str = "separable"


@dataclass(frozen=True)
class LhsInstance:
    rho: TwoQubitOperator
    rho_sep: TwoQubitOperator
    noise: mp.NoiseMap
    measurements: mp.MeasurementSet
    strategies: st.StrategySet
    aux_library: tuple = ()

    def __post_init__(self):
        for name, s in (("rho", self.rho), ("rho_sep", self.rho_sep)):
            if not s.is_state(1e-9):
                raise ValueError(f"{name} is not a valid state")
        if partial_transpose_B(self.rho_sep).min_eigenvalue() < -1e-9:
            raise ValueError("rho_sep must be PPT (separable)")
        if self.strategies.m != self.measurements.m:
            raise ValueError("strategy length does not match the measurement count")
        if self.noise.eta <= 0:
            raise ValueError("eta = 0: the measurement polytope is useless")
        lib = tuple(a if isinstance(a, AuxState) else AuxState(a) for a in self.aux_library)
        object.__setattr__(self, "aux_library", lib)

    @classmethod
    def from_family(cls, fs: FamilyState, ms: mp.MeasurementSet, strategies=None, aux=(),
                    xi: QubitOperator | None = None):
        xi = fs.xi if xi is None else xi
        eta, _ = mp.shrinking_factor(ms, xi)
        strat = st.enumerate_all(ms.m) if strategies is None else strategies
        return cls(fs.rho, fs.rho_sep, mp.NoiseMap(xi, eta), ms, strat, tuple(aux))

    def rho_q(self, q: float) -> TwoQubitOperator:
        return self.rho * q + self.rho_sep * (1 - q)


@dataclass
class LhsCertificate:
    q_star: float
    q_solver: float
    chi: TwoQubitOperator
    sigma: np.ndarray  # (n, 4) qubit coefficients
    aux_weights: np.ndarray
    remainder: TwoQubitOperator
    protocol: str
    level: dict
    validation: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.q_solver >= 1 - CERTIFIED_TOL and self.validation.get("passed", False)

    @property
    def weights(self) -> np.ndarray:
        return 2 * self.sigma[:, 0]

    def to_json(self, inst: LhsInstance) -> dict:
        return {
            "kind": "lhs",
            "protocol": self.protocol,
            "q_star": self.q_star,
            "q_solver": self.q_solver,
            "eta": inst.noise.eta,
            "xi": inst.noise.xi.to_json(),
            "rho": inst.rho.to_json(),
            "rho_sep": inst.rho_sep.to_json(),
            "measurements": inst.measurements.to_json(),
            "strategies": inst.strategies.to_json(),
            "sigma": self.sigma.tolist(),
            "chi": self.chi.to_json(),
            "aux": [{"state": a.state.to_json(), "provenance": a.provenance} for a in inst.aux_library],
            "aux_weights": self.aux_weights.tolist(),
            "remainder": self.remainder.to_json(),
            "level": self.level,
            "validation": self.validation,
            "solver": self.solver,
        }


def certificate_from_json(data: dict) -> tuple[LhsCertificate, LhsInstance]:
    ms = mp.MeasurementSet.from_json(data["measurements"])
    inst = LhsInstance(
        TwoQubitOperator.from_json(data["rho"]),
        TwoQubitOperator.from_json(data["rho_sep"]),
        mp.NoiseMap(QubitOperator.from_json(data["xi"]), data["eta"]),
        ms,
        st.StrategySet.from_json(data["strategies"]),
        tuple(AuxState(TwoQubitOperator.from_json(a["state"]), a["provenance"]) for a in data["aux"]),
    )
    cert = LhsCertificate(
        data["q_star"], data["q_solver"], TwoQubitOperator.from_json(data["chi"]),
        np.array(data["sigma"], dtype=float).reshape(-1, 4), np.array(data["aux_weights"], dtype=float),
        TwoQubitOperator.from_json(data["remainder"]), data["protocol"], data["level"],
        data.get("validation", {}), data.get("solver", {}),
    )
    return cert, inst


# ---------------------------------------------------------------------------
# programs

def _common(inst: LhsInstance, name: str):
    p = sc.SdpProblem(name)
    q = p.variable("q")
    chi = p.variable("chi", 16)
    n = inst.strategies.n
    sigma = p.variable("sigma", 4 * n)
    p.add_psd(sc.apply(sp.kron(sp.eye(n), QUBIT_TO_HERM, format="csr"), sigma), "sigma>=0", d=2)
    D = inst.strategies.plus_indicator()  # (n, m)
    G = assemblage_maps(inst.measurements)
    mixed = sc.apply(sp.kron(sp.csr_matrix(D.T), sp.eye(4), format="csr"), sigma)
    p.add_eq(G @ chi - mixed, "assemblage")
    total = sc.apply(sp.kron(sp.csr_matrix(np.ones((1, n))), sp.eye(4), format="csr"), sigma)
    p.add_eq(REDUCED_B @ chi - total, "marginal")
    p.add_nonneg(1 - q, "q<=1")
    rho = inst.rho.coeffs.ravel()
    sep = inst.rho_sep.coeffs.ravel()
    target = sc.apply((rho - sep)[:, None], q) + sep
    return p, q, chi, target


def build_basic(inst: LhsInstance) -> sc.SdpProblem:
    """Exact state matching ``Phi_*(chi) = rho_q``."""
    p, q, chi, target = _common(inst, "lhs-basic")
    p.add_eq(dual_map_matrix(inst.noise) @ chi - target, "state")
    p.maximize(q)
    return p


def build_final(inst: LhsInstance) -> sc.SdpProblem:
    """State matching up to a PPT remainder and a mixture of known unsteerable states."""
    p, q, chi, target = _common(inst, "lhs-final")
    k = len(inst.aux_library)
    rem = target - dual_map_matrix(inst.noise) @ chi
    if k:
        pk = p.variable("aux", k, nonneg=True)
        lib = np.array([a.state.coeffs.ravel() for a in inst.aux_library]).T
        rem = rem - lib @ pk
        trace_term = (np.r_[1.0, np.zeros(15)][None, :] @ chi) + (lib[0][None, :] @ pk)
    else:
        trace_term = np.r_[1.0, np.zeros(15)][None, :] @ chi
    p.add_psd(TWO_QUBIT_TO_HERM @ rem, "remainder>=0")
    p.add_psd(TWO_QUBIT_TO_HERM @ (PT_B @ rem), "remainder^TB>=0")
    p.add_nonneg(trace_term, "trace")
    p.maximize(q)
    return p


def solve(inst: LhsInstance, protocol: str = "final", tol: float = sc.DEFAULT_TOL,
          validate_tol: float = 1e-6, level: dict | None = None) -> LhsCertificate:
    builder = {"final": build_final, "basic": build_basic}[protocol]
    t0 = time.perf_counter()
    prob = builder(inst)
    sol = sc.solve(prob, tol=tol)
    if sol.status not in ("optimal", "inaccurate"):
        raise SolverError(f"LHS program returned status {sol.status}",
                          {"status": sol.status, **sol.info})
    chi = TwoQubitOperator(sol["chi"].reshape(4, 4))
    sigma = sol["sigma"].reshape(-1, 4)
    aux_w = sol["aux"] if "aux" in sol.variables else np.zeros(0)
    q = float(sol["q"][0])
    rem = _remainder(inst, q, chi, aux_w) if protocol == "final" else TwoQubitOperator(np.zeros((4, 4)))
    meta = {"m": inst.measurements.m, "eta": inst.noise.eta, "n_strategies": inst.strategies.n,
            "strategy_provenance": inst.strategies.provenance,
            "measurement_provenance": inst.measurements.provenance}
    meta.update(level or {})
    cert = LhsCertificate(q, q, chi, sigma, np.asarray(aux_w), rem, protocol, meta,
                          solver={"status": sol.status, "iterations": sol.info.get("iterations"),
                                  "residuals": sol.residuals,
                                  "seconds": time.perf_counter() - t0})
    cert.validation = validate(cert, inst, validate_tol)
    margin = SAFETY_FACTOR * cert.validation["max_residual"]
    cert.q_star = min(1.0, q - margin) if q < 1 - CERTIFIED_TOL else q - margin
    return cert


def _remainder(inst, q, chi, aux_w) -> TwoQubitOperator:
    phi = TwoQubitOperator((dual_map_matrix(inst.noise) @ chi.coeffs.ravel()).reshape(4, 4))
    rem = inst.rho_q(q) - phi
    for w, a in zip(aux_w, inst.aux_library):
        rem = rem - a.state * float(w)
    return rem


def validate(cert: LhsCertificate, inst: LhsInstance, tol: float = 1e-6) -> dict:
    """Recompute every certificate condition from the stored numbers."""
    chi_c = cert.chi.coeffs.ravel()
    D = inst.strategies.plus_indicator()
    sig = cert.sigma
    cond = assemblage_maps(inst.measurements) @ chi_c
    mixed = (D.T @ sig).ravel()
    marginal = REDUCED_B @ chi_c - sig.sum(axis=0)
    minus = (np.tile(REDUCED_B @ chi_c, inst.measurements.m) - cond) - ((1 - D).T @ sig).ravel()
    assemblage = float(max(np.max(np.abs(cond - mixed)), np.max(np.abs(minus)), np.max(np.abs(marginal))))
    sig_min = float(np.min(sig[:, 0] - np.linalg.norm(sig[:, 1:], axis=1)))
    aux_w = np.asarray(cert.aux_weights, dtype=float)
    rep = {
        "assemblage_residual": assemblage,
        "sigma_min_eigenvalue": sig_min,
        "chi_min_eigenvalue": cert.chi.min_eigenvalue(),
        "chi_non_psd": cert.chi.min_eigenvalue() < -PSD_TOL,
        "aux_min_weight": float(np.min(aux_w, initial=0.0)),
        "q_range": bool(-tol <= cert.q_solver <= 1 + tol),
    }
    phi = TwoQubitOperator((dual_map_matrix(inst.noise) @ chi_c).reshape(4, 4))
    recon = phi + cert.remainder
    for w, a in zip(aux_w, inst.aux_library):
        recon = recon + a.state * float(w)
    rep["state_residual"] = float(np.max(np.abs((recon - inst.rho_q(cert.q_solver)).coeffs)))
    if cert.protocol == "final":
        rep["remainder_min_eigenvalue"] = cert.remainder.min_eigenvalue()
        rep["remainder_pt_min_eigenvalue"] = partial_transpose_B(cert.remainder).min_eigenvalue()
        rep["trace_condition"] = float(cert.chi.trace() + aux_w.sum())
    else:
        rep["remainder_min_eigenvalue"] = rep["remainder_pt_min_eigenvalue"] = 0.0
        rep["trace_condition"] = float(cert.chi.trace())
    violations = {
        "assemblage residual": assemblage,
        "sigma eigenvalue": max(0.0, -sig_min),
        "aux weight": max(0.0, -rep["aux_min_weight"]),
        "state reconstruction": rep["state_residual"],
        "remainder eigenvalue": max(0.0, -rep["remainder_min_eigenvalue"]),
        "remainder partial transpose": max(0.0, -rep["remainder_pt_min_eigenvalue"]),
        "trace condition": max(0.0, -rep["trace_condition"]),
    }
    rep["max_residual"] = float(max(violations.values()))
    failed = [k for k, v in violations.items() if v > tol]
    if not rep["q_range"]:
        failed.append("visibility range")
    rep["failed"] = failed
    rep["passed"] = not failed
    return rep


def lhs_response(cert: LhsCertificate, inst: LhsInstance, direction) -> tuple[np.ndarray, np.ndarray]:
    """Conditional state for outcome ``+`` of an arbitrary projective measurement.

    Returns ``(model, quantum)``: the hidden-state mixture obtained by writing
    the noisy POVM element over the finite polytope vertices, and the exact
    conditional state of ``Phi_*(chi)``.  They agree when the certificate holds.
    """
    w = mp.decompose_noisy_povm(inst.measurements, direction, inst.noise)
    m = inst.measurements.m
    D = inst.strategies.plus_indicator()
    sig = cert.sigma
    plus_states = D.T @ sig
    minus_states = (1 - D).T @ sig
    model = w[:m] @ plus_states + w[m:2 * m] @ minus_states + w[2 * m] * sig.sum(axis=0)
    phi = dual_map_matrix(inst.noise) @ cert.chi.coeffs.ravel()
    quantum = conditional_state_map(direction) @ phi
    return model, quantum


# ---------------------------------------------------------------------------
# hierarchy

@dataclass(frozen=True)
class LevelConfig:
    """One rung of the hierarchy.

    ``measurements``: ``icosahedron`` | ``dual`` | ``augment`` | ``augment_to`` |
    ``custom``; ``strategies``: ``all`` | ``sign`` | ``extend_prune``.
    """

    measurements: str = "icosahedron"
    strategies: str = "all"
    eta_target: float | None = None
    directions: tuple | None = None
    orient: bool = False
    protocol: str = "final"
    use_aux: bool = True
    prune: bool = False

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


SCHEDULES = {
    # 6, 16, 46, 136 measurements: icosahedron followed by repeated geometric duals
    "isotropic-dual": (
        LevelConfig("icosahedron", "all"),
        LevelConfig("dual", "sign"),
        LevelConfig("dual", "sign"),
        LevelConfig("dual", "sign"),
    ),
    # worst-facet augmentation until eta reaches 0.92, 0.97, 0.99
    "facet-augment": (
        LevelConfig("icosahedron", "all"),
        LevelConfig("augment_to", "sign", eta_target=0.92),
        LevelConfig("augment_to", "sign", eta_target=0.97),
        LevelConfig("augment_to", "sign", eta_target=0.99),
    ),
    # anisotropic noise map: oriented icosahedron, then the same eta targets
    "oriented-augment": (
        LevelConfig("icosahedron", "all", orient=True),
        LevelConfig("augment_to", "sign", eta_target=0.92),
        LevelConfig("augment_to", "sign", eta_target=0.97),
        LevelConfig("augment_to", "sign", eta_target=0.99),
    ),
    # one worst-facet direction per level, strategies grown by extension and pruning
    "oriented-extend": (
        LevelConfig("icosahedron", "all", orient=True),
        LevelConfig("augment", "extend_prune"),
        LevelConfig("augment", "extend_prune"),
        LevelConfig("augment", "extend_prune"),
    ),
}


def schedule(name: str, levels: int | None = None) -> tuple:
    if name not in SCHEDULES:
        raise KeyError(f"unknown schedule {name!r}; available: {sorted(SCHEDULES)}")
    s = SCHEDULES[name]
    return s if levels is None else s[:levels]


def _next_measurements(cfg: LevelConfig, prev: mp.MeasurementSet | None, xi) -> mp.MeasurementSet:
    kind = cfg.measurements
    if kind == "icosahedron":
        ms = mp.icosahedron()
    elif kind == "custom":
        ms = mp.MeasurementSet(np.array(cfg.directions, dtype=float), "custom")
    elif prev is None:
        raise ValueError(f"level kind {kind!r} needs a previous level")
    elif kind == "dual":
        ms = mp.dual_polyhedron(prev)
    elif kind == "augment":
        ms = mp.augment(prev, xi)
    elif kind == "augment_to":
        ms = mp.augment_to(prev, xi, cfg.eta_target)
    else:
        raise ValueError(f"unknown measurement rule {kind!r}")
    if cfg.orient:
        ms, _ = mp.optimize_orientation(ms, xi)
    return ms


def run_hierarchy(target, levels, xi: QubitOperator | None = None, rho_sep=None,
                  tol: float = sc.DEFAULT_TOL, validate_tol: float = 1e-6,
                  extension_cap: int = 4096, stop_when_certified: bool = True,
                  on_level=None) -> list[LhsCertificate]:
    """Run successive levels, each seeded by the previous one.

    The previous level's certified ``rho_{q*}`` joins the auxiliary library,
    so visibilities never decrease along the schedule (up to solver noise,
    which the reported value absorbs by taking the running maximum).
    """
    fs = build_family(target) if isinstance(target, FamilyPoint) else target
    if rho_sep is not None:
        fs = FamilyState(fs.rho, rho_sep, fs.xi)
    xi = fs.xi if xi is None else xi
    certs: list[LhsCertificate] = []
    prev_ms, kept = None, None
    aux: list[AuxState] = []
    best = -np.inf
    for j, cfg in enumerate(levels, start=1):
        try:
            ms = _next_measurements(cfg, prev_ms, xi)
            eta, _ = mp.shrinking_factor(ms, xi)
            noise = mp.NoiseMap(xi, eta)
            lib = tuple(aux) if cfg.use_aux else ()

            def make(strat, ms=ms, noise=noise, lib=lib):
                return LhsInstance(fs.rho, fs.rho_sep, noise, ms, strat, lib)

            if cfg.strategies == "all":
                strat = st.enumerate_all(ms.m)
            elif cfg.strategies == "sign":
                strat = st.sign_compatible(ms)
            elif cfg.strategies == "extend_prune":
                strat = _extend_prune(kept, prev_ms, ms, fs, xi, lib, tol, extension_cap)
            else:
                raise ValueError(f"unknown strategy rule {cfg.strategies!r}")
            inst = make(strat)
            cert = solve(inst, cfg.protocol, tol, validate_tol,
                         level={"level": j, "config": cfg.to_json()})
            if cfg.prune or j < len(levels) and levels[j].strategies == "extend_prune":
                kept = _prune(inst, cert, cfg.protocol, tol)
            else:
                kept = strat
            cert.level["q_level"] = cert.q_star
            if cert.validation["passed"]:
                best = max(best, cert.q_star)
            cert.q_star = max(cert.q_star, best) if np.isfinite(best) else cert.q_star
            certs.append(cert)
            if on_level:
                on_level(cert, inst)
            log.info("level %d: m=%d eta=%.6f n=%d q*=%.8f", j, ms.m, eta, strat.n, cert.q_star)
            if cert.validation["passed"]:
                q_aux = min(1.0, max(0.0, best))
                aux = [AuxState(fs.rho * q_aux + fs.rho_sep * (1 - q_aux), f"certified level {j}")]
            prev_ms = ms
            if stop_when_certified and cert.certified:
                break
        except (st.ResourceError, SolverError) as exc:
            raise HierarchyError(f"level {j}: {exc}", certs) from exc
    return certs


def _prune(inst, cert, protocol, tol):
    if inst.aux_library:
        inst = replace(inst, aux_library=())
        cert = solve(inst, protocol, tol)
    w = cert.weights

    def revalidate(subset):
        return solve(replace(inst, strategies=subset), protocol, tol).q_solver

    return st.prune_by_weight(inst.strategies, w, cert.q_solver, revalidate, tol=1e-6)


def _extend_prune(kept, prev_ms, ms, fs, xi, lib, tol, cap):
    """Grow the kept strategy set one new measurement at a time, pruning after each.

    ``ms`` must extend ``prev_ms`` (same leading directions).  Intermediate
    sub-sets use their own shrinking factors.
    """
    if kept is None or prev_ms is None:
        raise ValueError("extend_prune needs strategies from a previous level")
    if not np.allclose(ms.directions[:prev_ms.m], prev_ms.directions):
        raise ValueError("new measurement set does not extend the previous one")
    cur = kept
    for k in range(prev_ms.m + 1, ms.m + 1):
        cur = st.extend(cur, cur.m, k, cap=cap)
        if k == ms.m:
            break
        sub = mp.MeasurementSet(ms.directions[:k], "facet-augmented", ms.orientation)
        eta, _ = mp.shrinking_factor(sub, xi)
        # without the auxiliary state, which alone would reach the old value
        inst = LhsInstance(fs.rho, fs.rho_sep, mp.NoiseMap(xi, eta), sub, cur, ())
        cert = solve(inst, "final", tol)
        cur = _prune(inst, cert, "final", tol)
    return cur
