"""Reference curves bracketing the protocol output.

``steering_upper_bound`` solves the standard finite-measurement steering
program: with the measurements fixed and no noise map, any visibility above
its value is certified steerable.  ``ppt_threshold`` is the exact two-qubit
separability boundary and ``condj_threshold`` evaluates a known closed-form
sufficient condition for the colored-noise family.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from . import measpoly as mp
from . import sdpcore as sc
from . import strategies as st
from .lhs import QUBIT_TO_HERM, REDUCED_B, SolverError, assemblage_maps
from .qforms import HALF_IDENTITY, MAXIMALLY_MIXED, FamilyPoint, FamilyState, TwoQubitOperator, build_family, partial_transpose_B

log = logging.getLogger(__name__)

FULL_ENUMERATION_MAX_M = 13


def _as_state(target, rho_sep=None) -> FamilyState:
    if isinstance(target, FamilyPoint):
        fs = build_family(target)
    elif isinstance(target, TwoQubitOperator):
        fs = FamilyState(target, MAXIMALLY_MIXED, HALF_IDENTITY)
    else:
        fs = target
    if rho_sep is not None:
        fs = FamilyState(fs.rho, rho_sep, fs.xi)
    return fs


# ---------------------------------------------------------------------------
# steering upper bound

def _steering_program(fs: FamilyState, ms, D: np.ndarray):
    """``D``: (n, m) response probabilities for outcome ``+`` (0/1 or stochastic)."""
    p = sc.SdpProblem("steering")
    q = p.variable("q")
    n = D.shape[0]
    sigma = p.variable("sigma", 4 * n)
    p.add_psd(sc.apply(sp.kron(sp.eye(n), QUBIT_TO_HERM, format="csr"), sigma), "sigma>=0", d=2)
    rho_q = sc.apply((fs.rho.coeffs.ravel() - fs.rho_sep.coeffs.ravel())[:, None], q) \
        + fs.rho_sep.coeffs.ravel()
    G = assemblage_maps(ms)
    mixed = sc.apply(sp.kron(sp.csr_matrix(D.T), sp.eye(4), format="csr"), sigma)
    p.add_eq(sc.apply(G, rho_q) - mixed, "assemblage")
    total = sc.apply(sp.kron(sp.csr_matrix(np.ones((1, n))), sp.eye(4), format="csr"), sigma)
    p.add_eq(sc.apply(REDUCED_B, rho_q) - total, "marginal")
    p.add_nonneg(1 - q, "q<=1")
    p.maximize(q)
    return p


def _reduced_costs(z_x: np.ndarray, z_m: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``y0 - |y|`` for ``y = -(z_m + sum_x S[k, x] z_x)``; negative means the column helps."""
    y = -(z_m[None, :] + S @ z_x)
    return y[:, 0] - np.linalg.norm(y[:, 1:], axis=1)


def _price(sol, m: int, tol: float):
    za = sol.duals["assemblage"].reshape(m, 4)
    zm = sol.duals["marginal"]
    # s_x = 1 exactly where  -z_x0 + n . z_xvec < 0
    pats, _ = st.sign_patterns(za[:, 1:], -za[:, 0])
    S = (pats < 0).astype(float)
    S = np.unique(np.vstack([S, 1 - S]), axis=0)
    rc = _reduced_costs(za, zm, S)
    return S, rc


def _product_seed_columns(fs: FamilyState, ms) -> np.ndarray:
    """Stochastic response of a product ``rho_sep`` (keeps q = 0 feasible)."""
    c = fs.rho_sep.coeffs
    prod = np.outer(c[:, 0], c[0, :]) / c[0, 0]
    if np.max(np.abs(prod - c)) > 1e-12:
        raise ValueError(
            "column generation needs a product rho_sep; use at most "
            f"{FULL_ENUMERATION_MAX_M} measurements for this target")
    return (0.5 * (1 + ms.directions @ c[1:, 0]))[None, :]


def steering_upper_bound(target, ms: mp.MeasurementSet, rho_sep=None, method: str = "auto",
                         tol: float = sc.DEFAULT_TOL, max_rounds: int = 500,
                         return_details: bool = False):
    """Largest ``q`` whose assemblage on ``ms`` admits a hidden-state model.

    Full strategy enumeration for ``m <= 13``; otherwise column generation over
    deterministic strategies with exact pricing by enumerating the cells of
    the arrangement of circles that separate the best responses.
    """
    fs = _as_state(target, rho_sep)
    if method == "auto":
        method = "full" if ms.m <= FULL_ENUMERATION_MAX_M else "colgen"
    if method == "full":
        D = st.enumerate_all(ms.m).plus_indicator()
        sol = sc.solve(_steering_program(fs, ms, D), tol=tol)
        rounds = 0
    else:
        seed = _product_seed_columns(fs, ms)
        D = np.vstack([seed, st.sign_compatible(ms).plus_indicator()])
        for rounds in range(1, max_rounds + 1):
            sol = sc.solve(_steering_program(fs, ms, D), tol=tol)
            if sol.status not in ("optimal", "inaccurate"):
                break
            S, rc = _price(sol, ms.m, tol)
            scale = max(1.0, float(np.max(np.abs(sol.duals["assemblage"]))))
            bad = rc < -10 * tol * scale
            have = {r.tobytes() for r in D.astype(np.int8)}
            new = [r for r in S[bad][np.argsort(rc[bad])] if r.astype(np.int8).tobytes() not in have]
            log.debug("steering colgen round %d: q=%.10f cols=%d min rc=%.3e",
                      rounds, sol.value, len(D), rc.min())
            if not new:
                break
            D = np.vstack([D, np.array(new[:256])])
    if sol.status not in ("optimal", "inaccurate"):
        raise SolverError(f"steering program returned {sol.status}", sol.info)
    val = float(sol["q"][0])
    if return_details:
        return val, {"method": method, "rounds": rounds, "columns": len(D), "status": sol.status,
                     "residual": sol.max_residual}
    return val


def default_upper_bound_set() -> mp.MeasurementSet:
    """13 directions: the icosahedron plus 7 of its 10 dual directions, added greedily."""
    ico = mp.icosahedron()
    cand = mp.measurement_hull(ico).normals
    cand = cand[[i for i in range(len(cand)) if all(
        abs(abs(cand[i] @ cand[j]) - 1) > 1e-9 for j in range(i))]]
    cur = ico
    used = []
    while cur.m < 13:
        best, best_eta = None, -1.0
        for i in range(len(cand)):
            if i in used:
                continue
            eta = mp.shrinking_factor(cur.union(cand[i], "custom"))[0]
            if eta > best_eta + 1e-12:
                best, best_eta = i, eta
        used.append(best)
        cur = cur.union(cand[best], "custom")
    return mp.MeasurementSet(cur.directions, "custom")


# ---------------------------------------------------------------------------
# closed-form and separability thresholds

def condj_lhs(alpha: float, theta: float) -> bool:
    """Sufficient unsteerability condition for the colored-noise family."""
    return np.cos(2 * theta) ** 2 >= (2 * alpha - 1) / ((2 - alpha) * alpha**3)


def condj_threshold(theta: float, xtol: float = 1e-12) -> float:
    """Largest ``alpha`` in [1/2, 1] satisfying the condition (bisection on the closed form)."""
    if not 0 < theta <= np.pi / 4 + 1e-15:
        raise ValueError("theta must lie in (0, pi/4]")
    c2 = np.cos(2 * theta) ** 2
    g = lambda a: c2 - (2 * a - 1) / ((2 - a) * a**3)  # noqa: E731
    if g(1.0) >= 0:
        return 1.0
    if g(0.5) < 0:
        return 0.5
    lo, hi = 0.5, 1.0
    while hi - lo > xtol:
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if g(mid) >= 0 else (lo, mid)
    return lo


def ppt_threshold(target, rho_sep=None, xtol: float = 1e-12) -> float:
    """Largest ``q`` with ``(q rho + (1 - q) rho_sep)^{T_B} >= 0``.

    The minimum eigenvalue is concave in ``q`` and non-negative at ``q = 0``,
    so the PPT set is an interval starting at 0.
    """
    fs = _as_state(target, rho_sep)

    def lam(q):
        return partial_transpose_B(fs.rho * q + fs.rho_sep * (1 - q)).min_eigenvalue()

    if lam(1.0) >= 0:
        return 1.0
    if lam(0.0) < -1e-12:
        raise ValueError("rho_sep is not PPT")
    return float(brentq(lam, 0.0, 1.0, xtol=xtol)) if lam(0.0) > 0 else 0.0


# ---------------------------------------------------------------------------
# curves

CSV_COLUMNS = ("param1", "param2", "method", "level", "q_star", "eta", "m", "residual", "seconds")


@dataclass
class ScanCurve:
    method: str
    grid: list
    values: list
    level: int | None = None
    meta: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")
        order = sorted(range(len(self.grid)), key=lambda i: tuple(self.grid[i]))
        self.grid = [tuple(self.grid[i]) for i in order]
        self.values = [self.values[i] for i in order]
        if self.meta:
            self.meta = [self.meta[i] for i in order]

    def rows(self):
        for i, (g, v) in enumerate(zip(self.grid, self.values)):
            meta = self.meta[i] if self.meta else {}
            yield {
                "param1": g[0], "param2": g[1] if len(g) > 1 else "",
                "method": self.method, "level": "" if self.level is None else self.level,
                "q_star": v, "eta": meta.get("eta", ""), "m": meta.get("m", ""),
                "residual": meta.get("residual", ""), "seconds": meta.get("seconds", ""),
            }

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()
