"""Exact rational certificates for binary-outcome LHV models.

A behavior ``p(ab|xy)`` with outcomes ``+1/-1`` is described equivalently by
its correlator table ``C[i, j]``: ``C[0, 0]`` is the normalization,
``C[x, 0]`` and ``C[0, y]`` the marginal expectations and ``C[x, y]`` the
joint ones (inputs counted from 1).  A joint deterministic strategy
``(alpha, beta)`` has table ``(1, alpha) (1, beta)^T``; these tables are
orthogonal, which makes the residual patch below a short formula.

Indices follow the rest of the package: ``p[a, b, x, y]`` with 0 meaning
``+``, and strategy bitmasks with bit ``x`` set iff the outcome is ``+``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import lhv
from . import measpoly as mp
from . import strategies as st
from .qforms import TwoQubitOperator

log = logging.getLogger(__name__)

NS_TOL = 1e-9
MAX_DENOMINATOR = 10**6
DIRECTION_DENOMINATOR = 10**4
ETA_MARGIN = 1e-9
MAX_JOINT_INPUTS = 20


class ExactificationError(RuntimeError):
    def __init__(self, msg, magnitude=None):
        super().__init__(msg)
        self.magnitude = magnitude


class SignalingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# behaviors and correlators

@dataclass(frozen=True)
class Behavior:
    """``p[a, b, x, y]``; float or ``Fraction`` entries."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p)
        if p.ndim != 4 or p.shape[:2] != (2, 2):
            raise ValueError("behavior must have shape (2, 2, n_a, n_b)")
        object.__setattr__(self, "p", p)

    @property
    def n_inputs(self):
        return self.p.shape[2], self.p.shape[3]

    @property
    def exact(self) -> bool:
        return self.p.dtype == object

    def check(self, tol: float = NS_TOL) -> dict:
        p = self.p
        tol = 0 if self.exact else tol
        neg = min(p.ravel())
        norm = p.sum(axis=(0, 1))
        ma = p.sum(axis=1)  # (a, x, y)
        mb = p.sum(axis=0)  # (b, x, y)
        sig_a = max(abs(v) for v in (ma - ma[:, :, :1]).ravel())
        sig_b = max(abs(v) for v in (mb - mb[:, :1, :]).ravel())
        return {"min_entry": neg, "normalization": max(abs(v - 1) for v in norm.ravel()),
                "signaling": max(sig_a, sig_b), "valid": neg >= -tol and sig_a <= tol and sig_b <= tol
                and max(abs(v - 1) for v in norm.ravel()) <= tol}


@dataclass(frozen=True)
class CorrelatorTable:
    C: np.ndarray  # (n_a + 1, n_b + 1)

    def __post_init__(self):
        object.__setattr__(self, "C", np.asarray(self.C))

    @property
    def n_inputs(self):
        return self.C.shape[0] - 1, self.C.shape[1] - 1

    def l1_off_origin(self):
        """``sum |C_ij|`` over all entries except the normalization."""
        a = np.abs(self.C)
        return a.sum() - a[0, 0]

    def to_behavior(self) -> Behavior:
        C = self.C
        na, nb = self.n_inputs
        quarter = Fraction(1, 4) if C.dtype == object else 0.25
        p = np.empty((2, 2, na, nb), dtype=C.dtype)
        for ai, a in enumerate((1, -1)):
            for bi, b in enumerate((1, -1)):
                p[ai, bi] = (C[0, 0] + a * C[1:, :1] + b * C[:1, 1:] + a * b * C[1:, 1:]) * quarter
        return Behavior(p)


def correlators(b: Behavior, tol: float = NS_TOL) -> CorrelatorTable:
    """Inverse of ``CorrelatorTable.to_behavior``; rejects signaling input."""
    rep = b.check(tol)
    if rep["signaling"] > (0 if b.exact else tol):
        raise SignalingError(f"behavior signals by {float(rep['signaling']):.3e}")
    p = b.p
    na, nb = b.n_inputs
    C = np.empty((na + 1, nb + 1), dtype=p.dtype)
    C[1:, 1:] = p[0, 0] - p[0, 1] - p[1, 0] + p[1, 1]
    C[0, 0] = p[:, :, 0, 0].sum()
    C[1:, 0] = (p[0, :, :, 0].sum(axis=0) - p[1, :, :, 0].sum(axis=0))
    C[0, 1:] = (p[:, 0, 0, :].sum(axis=0) - p[:, 1, 0, :].sum(axis=0))
    return CorrelatorTable(C)


def strategy_tables(m: int) -> np.ndarray:
    """``(2^m, m + 1)`` integer rows ``(1, alpha)`` indexed by bitmask."""
    k = np.arange(2**m)[:, None]
    out = np.where((k >> np.arange(m)) & 1, 1, -1)
    return np.hstack([np.ones((2**m, 1), dtype=int), out])


# ---------------------------------------------------------------------------
# residual patch

@dataclass(frozen=True)
class LocalMixture:
    """``sum_k coef_k T_k + rest * uniform`` in terms of the standard local boxes.

    ``T_ij`` (i, j > 0) is uniform over joint strategies with ``alpha_i beta_j = s``;
    ``T_i0`` fixes ``alpha_i = s`` with everything else uniform, ``T_0j`` likewise.
    """

    components: tuple  # (coef, i, j, sign)
    rest: object
    n_inputs: tuple

    def joint_weights(self) -> np.ndarray:
        """Weights over all joint strategies, ``[alpha_mask, beta_mask]``; exact if input is."""
        na, nb = self.n_inputs
        C = np.zeros((na + 1, nb + 1), dtype=object)
        C[0, 0] = sum((c for c, *_ in self.components), Fraction(0)) + self.rest
        for c, i, j, s in self.components:
            C[i, j] += s * c
        return fourier_weights(C)


def fourier_weights(C) -> np.ndarray:
    """Unique weights over all joint strategies whose correlator table is ``C``.

    ``w[alpha, beta] = (1, alpha)^T C (1, beta) / 2^(n_a + n_b)``.
    Integer-denominator arithmetic keeps this exact for ``Fraction`` tables.
    """
    C = np.asarray(C)
    na, nb = C.shape[0] - 1, C.shape[1] - 1
    ra, rb = strategy_tables(na), strategy_tables(nb)
    N = 2 ** (na + nb)
    if C.dtype != object:
        return ra @ C @ rb.T / N
    fr = [Fraction(v) for v in C.ravel()]
    L = math.lcm(*(f.denominator for f in fr))
    K = np.array([f.numerator * (L // f.denominator) for f in fr], dtype=object).reshape(C.shape)
    num = ra.astype(object) @ K @ rb.T.astype(object)
    return np.vectorize(lambda v: Fraction(v, N * L), otypes=[object])(num)


def replay(weights: np.ndarray) -> np.ndarray:
    """Correlator table of a weight array over all joint strategies (exact for ``Fraction``)."""
    W = np.asarray(weights)
    na, nb = int(math.log2(W.shape[0])), int(math.log2(W.shape[1]))
    ra, rb = strategy_tables(na), strategy_tables(nb)
    if W.dtype != object:
        return ra.T @ W @ rb
    fr = [Fraction(v) for v in W.ravel()]
    L = math.lcm(*(f.denominator for f in fr))
    K = np.array([f.numerator * (L // f.denominator) for f in fr], dtype=object).reshape(W.shape)
    num = ra.T.astype(object) @ K @ rb.astype(object)
    return np.vectorize(lambda v: Fraction(v, L), otypes=[object])(num)


def residual_local_decomposition(r: CorrelatorTable, mass=1) -> LocalMixture | None:
    """Explicit local mixture for a table with ``sum |C_ij| <= 1`` off the origin.

    ``mass`` is the total weight to distribute (1 for a behavior).  Returns
    ``None`` when the sufficient condition fails.
    """
    C = r.C
    s = r.l1_off_origin()
    if s > 1:
        return None
    comps = []
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            if (i, j) != (0, 0) and C[i, j] != 0:
                comps.append((abs(C[i, j]), i, j, 1 if C[i, j] > 0 else -1))
    return LocalMixture(tuple(comps), mass - s, r.n_inputs)


# ---------------------------------------------------------------------------
# exact instance data

def rational_direction(v, max_denominator: int = DIRECTION_DENOMINATOR) -> tuple:
    """Exactly unit rational vector near ``v`` via stereographic rounding."""
    x, y, z = (float(c) for c in np.asarray(v, dtype=float) / np.linalg.norm(v))
    flip = z < 0
    d = (1 + z) if flip else (1 - z)
    s = Fraction(x / d).limit_denominator(max_denominator)
    t = Fraction(y / d).limit_denominator(max_denominator)
    n = 1 + s * s + t * t
    w = 1 - s * s - t * t
    zz = w / n if flip else -w / n
    return (2 * s / n, 2 * t / n, zz)


def rational_directions(ms: mp.MeasurementSet, max_denominator: int = DIRECTION_DENOMINATOR):
    return [rational_direction(v, max_denominator) for v in ms.directions]


def _to_fraction(x, max_denominator=10**12):
    f = Fraction(float(x))
    return f if f.denominator <= max_denominator else f.limit_denominator(max_denominator)


def exact_operator(op: TwoQubitOperator) -> np.ndarray:
    return np.vectorize(_to_fraction, otypes=[object])(op.coeffs)


def exact_dual_inverse(eta: Fraction, xi) -> np.ndarray:
    """Inverse of one party's dual noise map on Pauli rows: ``(I - (1 - eta) 2 xi e0^T) / eta``."""
    M = np.array([[Fraction(int(i == k)) for k in range(4)] for i in range(4)], dtype=object)
    for i in range(4):
        M[i, 0] -= (1 - eta) * 2 * xi[i]
    return M / eta


def exact_target(rho, rho_sep, q, eta_a, eta_b, xi_a, xi_b, dirs_a, dirs_b) -> np.ndarray:
    """Correlator table of ``chi = Phi^{-1}(q rho + (1 - q) rho_sep)`` on the given directions."""
    rho_q = rho * q + rho_sep * (1 - q)
    chi = exact_dual_inverse(eta_a, xi_a) @ rho_q @ exact_dual_inverse(eta_b, xi_b).T

    def rows(dirs):
        r = np.zeros((len(dirs) + 1, 4), dtype=object)
        r[:] = Fraction(0)
        r[0, 0] = Fraction(1)
        for k, v in enumerate(dirs):
            r[k + 1, 1:] = v
        return r

    return rows(dirs_a) @ chi @ rows(dirs_b).T


def _exact_xi(xi) -> np.ndarray:
    c = [Fraction(1, 2)] + [_to_fraction(v) for v in xi.c]
    return np.array(c, dtype=object)


# ---------------------------------------------------------------------------
# rational model

def _fs(x) -> str:
    return str(Fraction(x))


def _ff(s) -> Fraction:
    return Fraction(s)


@dataclass(frozen=True)
class RationalModel:
    m_a: int
    m_b: int
    weights: dict  # (alpha_mask, beta_mask) -> Fraction, nonzero only
    target: np.ndarray  # exact correlator table
    meta: dict = field(default_factory=dict)

    def dense_weights(self) -> np.ndarray:
        W = np.full((2**self.m_a, 2**self.m_b), Fraction(0), dtype=object)
        for (a, b), w in self.weights.items():
            W[a, b] = w
        return W

    def behavior(self) -> Behavior:
        return CorrelatorTable(self.target).to_behavior()

    def replay_residual(self) -> np.ndarray:
        """Exact entrywise difference between replayed and target tables."""
        return replay(self.dense_weights()) - self.target

    def to_json(self) -> dict:
        meta = dict(self.meta)
        return {
            "kind": "lhv-rational",
            "m_a": self.m_a, "m_b": self.m_b,
            "weights": [[a, b, _fs(w)] for (a, b), w in sorted(self.weights.items())],
            "target": [[_fs(v) for v in row] for row in self.target],
            "meta": meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RationalModel":
        w = {(int(a), int(b)): _ff(s) for a, b, s in data["weights"]}
        T = np.array([[_ff(v) for v in row] for row in data["target"]], dtype=object)
        return cls(int(data["m_a"]), int(data["m_b"]), w, T, data.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _meta_target(meta) -> np.ndarray:
    def mat(rows):
        return np.array([[_ff(v) for v in r] for r in rows], dtype=object)

    dirs_a = [tuple(_ff(c) for c in v) for v in meta["directions_a"]]
    dirs_b = [tuple(_ff(c) for c in v) for v in meta["directions_b"]]
    return exact_target(mat(meta["rho"]), mat(meta["rho_sep"]), _ff(meta["q"]),
                        _ff(meta["eta_a"]), _ff(meta["eta_b"]),
                        np.array([_ff(v) for v in meta["xi_a"]], dtype=object),
                        np.array([_ff(v) for v in meta["xi_b"]], dtype=object), dirs_a, dirs_b), \
        dirs_a, dirs_b


def verify_rational(model: RationalModel) -> tuple[bool, dict]:
    """Exact checks; the noise-map containment (``eta`` below the shrinking factor) is numeric."""
    report = {}
    ws = list(model.weights.values())
    report["weights_nonnegative"] = all(w >= 0 for w in ws)
    report["weights_sum_to_one"] = sum(ws, Fraction(0)) == 1
    res = model.replay_residual()
    report["replay_exact"] = all(v == 0 for v in res.ravel())
    report["max_replay_residual"] = str(max((abs(v) for v in res.ravel()), default=Fraction(0)))
    if {"rho", "directions_a"} <= set(model.meta):
        T, dirs_a, dirs_b = _meta_target(model.meta)
        report["target_matches_instance"] = all(v == 0 for v in (T - model.target).ravel())
        report["directions_unit"] = all(sum(c * c for c in v) == 1 for v in dirs_a + dirs_b)
        for side, dirs in (("a", dirs_a), ("b", dirs_b)):
            xi = [float(_ff(v)) for v in model.meta[f"xi_{side}"]]
            eta_star, _ = mp.shrinking_factor(
                mp.MeasurementSet(np.array(dirs, dtype=float)), _qubit(xi))
            report[f"eta_{side}_inside"] = float(_ff(model.meta[f"eta_{side}"])) <= eta_star + 1e-12
    checks = [k for k, v in report.items() if isinstance(v, bool)]
    report["failed"] = [k for k in checks if not report[k]]
    return not report["failed"], report


def _qubit(c):
    from .qforms import QubitOperator

    return QubitOperator(c[0], np.array(c[1:]))


# ---------------------------------------------------------------------------
# pipeline

def tighten(cert, inst: lhv.LhvInstance, eps: float,
            direction_denominator: int = DIRECTION_DENOMINATOR, tol: float = 1e-9):
    """Re-solve the basic program on the rationalized instance with ``p >= eps``.

    Directions are replaced by nearby exactly-unit rationals and each ``eta`` is
    rounded down below the shrinking factor of the rounded set.
    """
    def rounded(ms, noise):
        dirs = np.array(rational_directions(ms, direction_denominator), dtype=float)
        ms_r = mp.MeasurementSet(dirs, ms.provenance)
        eta_star, _ = mp.shrinking_factor(ms_r, noise.xi)
        eta = math.floor((eta_star - ETA_MARGIN) * 10**9) / 10**9
        return ms_r, mp.NoiseMap(noise.xi, eta)

    ms_a, map_a = rounded(inst.ms_a, inst.map_a)
    ms_b, map_b = rounded(inst.ms_b, inst.map_b)
    inst2 = lhv.LhvInstance(inst.rho, inst.rho_sep, map_a, map_b, ms_a, ms_b,
                            inst.strat_a, inst.strat_b, (), eps)
    cert2 = lhv.solve(inst2, "basic", tol=tol, method="direct", level=dict(cert.level, eps=eps))
    return cert2, inst2


def default_eps(cert, max_denominator: int = MAX_DENOMINATOR) -> float:
    """``10 x`` the validation residual, floored so weight rounding cannot cross zero."""
    return max(10 * cert.validation.get("max_residual", 0.0), 4 / max_denominator)


def exactify(cert, inst: lhv.LhvInstance, eps: float | None = None, q=None,
             max_denominator: int = MAX_DENOMINATOR,
             direction_denominator: int = DIRECTION_DENOMINATOR) -> RationalModel:
    """Turn a basic-protocol LHV certificate into an exactly verified rational model.

    ``q`` (optional, at most the certified value) fixes the exact visibility;
    a smaller one is reached by mixing with the uniform model, which requires
    ``rho_sep = I/4`` and unbiased noise maps.
    """
    if cert.protocol != "basic":
        raise ValueError("only basic-protocol LHV certificates can be exactified")
    if inst.ms_a.m + inst.ms_b.m > MAX_JOINT_INPUTS:
        raise st.ResourceError(f"patching needs all 2^{inst.ms_a.m + inst.ms_b.m} joint strategies")
    eps = default_eps(cert, max_denominator) if eps is None else eps
    if inst.eps < eps * (1 - 1e-12):
        cert, inst = tighten(cert, inst, eps, direction_denominator)

    dirs_a = rational_directions(inst.ms_a, direction_denominator)
    dirs_b = rational_directions(inst.ms_b, direction_denominator)
    eta_a, eta_b = Fraction(inst.map_a.eta), Fraction(inst.map_b.eta)
    xi_a, xi_b = _exact_xi(inst.map_a.xi), _exact_xi(inst.map_b.xi)
    rho, rho_sep = exact_operator(inst.rho), exact_operator(inst.rho_sep)

    weights = np.asarray(cert.weights, dtype=float)
    q_solver = Fraction(math.floor(cert.q_solver * 10**9), 10**9)
    q_solver = min(q_solver, Fraction(1))
    scale = 1.0
    if q is not None:
        q = Fraction(q)
        if q > q_solver:
            raise ExactificationError(f"q = {q} exceeds the certified {float(q_solver):.9f}")
        uniform_ok = (np.allclose(inst.rho_sep.coeffs, np.diag([1.0, 0, 0, 0]))
                      and not np.any(inst.map_a.u) and not np.any(inst.map_b.u))
        if q < q_solver and not uniform_ok:
            raise ValueError("lowering q needs rho_sep = I/4 and unbiased noise maps")
        scale = float(q / q_solver) if q_solver else 0.0
    else:
        q = q_solver

    ma, mb = inst.ms_a.m, inst.ms_b.m
    amask = np.array(inst.strat_a.bitmasks())[cert.pairs[:, 0]]
    bmask = np.array(inst.strat_b.bitmasks())[cert.pairs[:, 1]]
    W = np.full((2**ma, 2**mb), Fraction(0), dtype=object)
    for a, b, w in zip(amask, bmask, weights * scale):
        W[a, b] += Fraction(max(float(w), 0.0)).limit_denominator(max_denominator)
    if scale < 1:
        u = Fraction(1 - scale).limit_denominator(max_denominator) / (2 ** (ma + mb))
        W = W + u

    target = exact_target(rho, rho_sep, q, eta_a, eta_b, xi_a, xi_b, dirs_a, dirs_b)
    resid = CorrelatorTable(target - replay(W))
    s = resid.l1_off_origin()
    log.info("exactify: residual l1 %.3e, mass defect %.3e", float(s), float(resid.C[0, 0]))
    if residual_local_decomposition(resid, mass=resid.C[0, 0]) is None:
        raise ExactificationError(f"residual sum |C| = {float(s):.3e} exceeds 1", float(s))
    merged = W + fourier_weights(resid.C)
    low = min(merged.ravel())
    if low < 0:
        raise ExactificationError(
            f"patched weight {float(low):.3e} is negative; re-solve with a larger eps", float(s))
    wd = {(a, b): merged[a, b] for a in range(2**ma) for b in range(2**mb) if merged[a, b] != 0}

    def fm(M):
        return [[_fs(v) for v in row] for row in M]

    meta = {
        "q": _fs(q), "eta_a": _fs(eta_a), "eta_b": _fs(eta_b),
        "xi_a": [_fs(v) for v in xi_a], "xi_b": [_fs(v) for v in xi_b],
        "directions_a": [[_fs(c) for c in v] for v in dirs_a],
        "directions_b": [[_fs(c) for c in v] for v in dirs_b],
        "rho": fm(rho), "rho_sep": fm(rho_sep), "eps": float(inst.eps),
        "residual_l1": float(s), "q_solver": cert.q_solver,
    }
    model = RationalModel(ma, mb, wd, target, meta)
    ok, rep = verify_rational(model)
    if not ok:
        raise ExactificationError(f"exact verification failed: {rep['failed']}")
    return model


# ---------------------------------------------------------------------------
# facet diagnostic for the local polytope around the uniform point

def local_polytope_vertices(n_inputs: int) -> np.ndarray:
    """Correlator coordinates (origin excluded) of all joint deterministic strategies."""
    ra = strategy_tables(n_inputs)
    pts = []
    for a in ra:
        for b in ra:
            pts.append(np.outer(a, b).ravel()[1:])
    return np.array(pts, dtype=float)


def local_polytope_facets(n_inputs: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact H-representation ``normals . C <= offsets`` by double description."""
    import cdd

    V = local_polytope_vertices(n_inputs).astype(int)
    M = cdd.Matrix(np.c_[np.ones(len(V), dtype=int), V].tolist(), number_type="fraction")
    M.rep_type = cdd.RepType.GENERATOR
    H = cdd.Polyhedron(M).get_inequalities()
    if H.lin_set:
        raise RuntimeError("local polytope is not full-dimensional")
    # cdd rows read  b + a . x >= 0
    rows = np.array([[Fraction(v) for v in H[i]] for i in range(H.row_size)], dtype=object)
    return -rows[:, 1:], rows[:, 0]


def facet_diagnostic(n_inputs: int) -> dict:
    """Brute-force facets of the local polytope and their distances from the uniform point.

    Distances are Euclidean in correlator coordinates and in the probability
    coordinates ``p(ab|xy)``.  For a positivity facet the slack at the uniform
    point equals a multiple of ``p(ab|xy)``; that value is reported exactly.
    """
    normals, offsets = local_polytope_facets(n_inputs)
    k = n_inputs + 1
    # probability-space metric: marginals weigh n/4, joint correlators 1/4
    wt = np.full((k, k), 0.25)
    wt[0, 1:] = wt[1:, 0] = n_inputs / 4
    wt = wt.ravel()[1:]
    positivity, dist_c, dist_p, raw = [], [], [], []
    for normal, b in zip(normals, offsets):
        grid = np.r_[Fraction(0), normal].reshape(k, k)
        nz = [(i, j) for i in range(k) for j in range(k) if grid[i, j] != 0]
        mags = {abs(grid[i, j]) for i, j in nz}
        xs = {i for i, j in nz if i > 0}
        ys = {j for i, j in nz if j > 0}
        is_pos = len(nz) == 3 and len(xs) == 1 and len(ys) == 1 and len(mags) == 1
        positivity.append(is_pos)
        nf = np.array(normal, dtype=float)
        dist_c.append(float(b) / np.linalg.norm(nf))
        dist_p.append(float(b) / np.sqrt(np.sum(nf**2 / wt)))
        if is_pos:
            # b - n.C = (b / |n_i|) (1 + (a, b, ab).C) = (4 b / |n_i|) p(ab|xy)
            raw.append(b / (4 * mags.pop()))
    positivity = np.array(positivity)
    dist_c, dist_p = np.array(dist_c), np.array(dist_p)
    other = ~positivity
    return {
        "n_inputs": n_inputs,
        "n_facets": len(offsets),
        "n_positivity": int(positivity.sum()),
        "nearest_is_positivity_correlator": bool(dist_c[positivity].min() <= dist_c.min() + 1e-12),
        "nearest_is_positivity_probability": bool(dist_p[positivity].min() <= dist_p.min() + 1e-12),
        "min_distance_correlator": float(dist_c.min()),
        "min_distance_probability": float(dist_p.min()),
        "min_other_distance_correlator": float(dist_c[other].min()) if other.any() else None,
        "min_other_distance_probability": float(dist_p[other].min()) if other.any() else None,
        "positivity_value_at_uniform": min(raw) if raw else None,
        "positivity_values_equal": len(set(raw)) == 1,
    }
