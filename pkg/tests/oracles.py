"""Independent reference computations used to freeze derived test values.

Nothing here imports the package's solver layer, hull code or Pauli
bookkeeping: states are dense matrices, programs are written in cvxpy and
polytopes come straight from a 4D qhull.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull

I2 = np.eye(2)
PAULI = [np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]),
         np.array([[1, 0], [0, -1]], complex)]


def bloch_op(c0, v):
    return c0 * I2 + sum(vi * s for vi, s in zip(v, PAULI))


def icosahedron_directions() -> np.ndarray:
    g = (1 + 5**0.5) / 2
    d = np.array([[0, 1, g], [0, 1, -g], [1, g, 0], [1, -g, 0], [g, 0, 1], [-g, 0, 1]], float)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


ICOSAHEDRON_ETA = np.sqrt((5 + 2 * np.sqrt(5)) / 15)


def werner_dense(q):
    phi = np.zeros(4)
    phi[0] = phi[3] = 2**-0.5
    return q * np.outer(phi, phi) + (1 - q) * np.eye(4) / 4


def ptrace_a(m):
    return np.einsum("ijik->jk", m.reshape(2, 2, 2, 2))


def ptrace_b(m):
    return np.einsum("ijkj->ik", m.reshape(2, 2, 2, 2))


def ptranspose_b(m):
    return m.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


# ---------------------------------------------------------------------------
# fully redundant LHS program (final protocol, no marginal elimination)

def redundant_lhs_werner(directions, eta, solver=None) -> float:
    """All 2^m strategies, both outcomes constrained, dense complex variables."""
    import cvxpy as cp

    m = len(directions)
    strategies = list(itertools.product([1, -1], repeat=m))
    chi = cp.Variable((4, 4), hermitian=True)
    sig = [cp.Variable((2, 2), hermitian=True) for _ in strategies]
    q = cp.Variable()
    cons = [s >> 0 for s in sig]
    xi = I2 / 2
    for x, v in enumerate(directions):
        for a in (1, -1):
            proj = (I2 + a * sum(vi * s for vi, s in zip(v, PAULI))) / 2
            lhs = cp.partial_trace(cp.kron(proj, I2) @ chi, [2, 2], axis=0)
            rhs = sum(s for lam, s in zip(strategies, sig) if lam[x] == a)
            cons.append(lhs == rhs)
    chi_b = cp.partial_trace(chi, [2, 2], axis=0)
    rho = werner_dense(1.0)
    sep = np.eye(4) / 4
    rem = q * rho + (1 - q) * sep - (eta * chi + (1 - eta) * cp.kron(xi, chi_b))
    cons += [rem >> 0, cp.partial_transpose(rem, [2, 2], axis=1) >> 0, cp.real(cp.trace(chi)) >= 0,
             q <= 1]
    prob = cp.Problem(cp.Maximize(q), cons)
    solvers = [solver] if solver else ["CVXOPT", "SCS"]
    for s in solvers:
        if s in cp.installed_solvers():
            kw = {"eps": 1e-10, "max_iters": 200000} if s == "SCS" else \
                {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9, "kktsolver": "robust"}
            prob.solve(solver=s, **kw)
            return float(q.value)
    raise RuntimeError("no independent SDP solver available")


# ---------------------------------------------------------------------------
# shrinking factor by sampling and bisection over a direct 4D hull

def four_d_points(directions):
    d = np.asarray(directions, float)
    pts = [np.r_[0.5, s * v / 2] for v in d for s in (1, -1)]
    pts += [np.r_[1.0, 0, 0, 0], np.zeros(4)]
    return np.array(pts)


def _noisy(v, u, eta):
    return np.r_[0.5 + (1 - eta) * (u @ v) / 2, eta * v / 2]


def shrinking_by_sampling(directions, u, n_samples=20000, seed=0, refine=8, tol=1e-12) -> float:
    """``min_v max{eta : Phi^eta(A_v) in P}`` over sampled and locally refined ``v``.

    Each facet of the direct 4D hull bounds ``eta`` linearly along the noise
    path, so the per-direction maximum is a minimum of ratios.  The worst
    samples are refined with Nelder-Mead and the final value is confirmed by
    bisection on membership.
    """
    hull = ConvexHull(four_d_points(directions))
    E = hull.equations  # n.x + c <= 0
    rng = np.random.default_rng(seed)
    u = np.asarray(u, float)

    def eta_lin(V):
        V = np.atleast_2d(V)
        V = V / np.linalg.norm(V, axis=1, keepdims=True)
        w1 = np.c_[0.5 * np.ones(len(V)), V / 2]
        w0 = np.c_[0.5 + (V @ u) / 2, np.zeros((len(V), 3))]
        a = w0 @ E[:, :4].T + E[:, 4]
        slope = (w1 - w0) @ E[:, :4].T
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = np.where(slope > 1e-15, -a / slope, np.inf)
        return np.clip(bound.min(axis=1), 0, 1)

    def eta_bisect(v):
        v = v / np.linalg.norm(v)
        inside = lambda eta: np.all(E[:, :4] @ _noisy(v, u, eta) + E[:, 4] <= 1e-13)  # noqa: E731
        if inside(1.0):
            return 1.0
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if inside(mid) else (lo, mid)
        return lo

    V = rng.normal(size=(n_samples, 3))
    coarse = eta_lin(V)
    best_v, best = V[np.argmin(coarse)], coarse.min()
    for k in np.argsort(coarse)[:refine]:
        res = minimize(lambda x: float(eta_lin(x)[0]), V[k], method="Nelder-Mead",
                       options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best:
            best, best_v = res.fun, res.x
    return float(min(best, eta_bisect(best_v)))


def inscribed_radius(directions) -> float:
    pts = np.vstack([directions, -np.asarray(directions)])
    h = ConvexHull(pts)
    return float(np.min(-h.equations[:, -1]))


# ---------------------------------------------------------------------------
# noise maps on dense matrices

def noisy_element(A, xi, eta):
    return eta * A + (1 - eta) * np.trace(xi @ A) * I2


def dense_dual(chi, xi_a, nu, xi_b=None, mu=None):
    """``Phi*`` on Alice, and on Bob if ``xi_b`` is given, from the definition
    Tr(Phi(A) rho) = Tr(A Phi*(rho)), i.e. Phi*(rho) = eta rho + (1 - eta) Tr(rho) xi."""
    ca = nu * chi + (1 - nu) * np.kron(xi_a, ptrace_a(chi))
    if xi_b is None:
        return ca
    return mu * ca + (1 - mu) * np.kron(ptrace_b(ca), xi_b)


def random_state(rng, rank=None):
    k = rank or rng.integers(1, 5)
    g = rng.normal(size=(4, k)) + 1j * rng.normal(size=(4, k))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_qubit_state(rng):
    v = rng.normal(size=3)
    v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
    return bloch_op(0.5, v / 2)


# ---------------------------------------------------------------------------
# LHV: dense behaviors, membership LP and a redundant two-sided program

def projector(v, a):
    return (I2 + a * sum(vi * s for vi, s in zip(v, PAULI))) / 2


def dense_behavior(chi, dirs_a, dirs_b):
    """``p[a, b, x, y] = Tr(P_a|x (x) P_b|y chi)`` with outcome index 0 for +."""
    out = np.zeros((2, 2, len(dirs_a), len(dirs_b)))
    for x, va in enumerate(dirs_a):
        for y, vb in enumerate(dirs_b):
            for i, a in enumerate((1, -1)):
                for j, b in enumerate((1, -1)):
                    out[i, j, x, y] = np.real(np.trace(np.kron(projector(va, a), projector(vb, b)) @ chi))
    return out


def deterministic_boxes(ma, mb):
    rows = []
    for la in itertools.product([0, 1], repeat=ma):
        for lb in itertools.product([0, 1], repeat=mb):
            d = np.zeros((2, 2, ma, mb))
            for x in range(ma):
                for y in range(mb):
                    d[la[x], lb[y], x, y] = 1
            rows.append(d.ravel())
    return np.array(rows).T


def is_local(p, tol=1e-9) -> bool:
    from scipy.optimize import linprog

    ma, mb = p.shape[2], p.shape[3]
    D = deterministic_boxes(ma, mb)
    res = linprog(np.zeros(D.shape[1]), A_eq=np.vstack([D, np.ones(D.shape[1])]),
                  b_eq=np.r_[p.ravel(), 1], bounds=(0, None), method="highs")
    return res.status == 0


def redundant_lhv_werner(directions, eta, protocol="final", solver=None) -> float:
    """All joint strategies, all four outcomes per setting pair, dense chi."""
    import cvxpy as cp

    m = len(directions)
    strat = list(itertools.product([0, 1], repeat=m))
    n = len(strat)
    P = cp.Variable(n * n, nonneg=True)
    chi = cp.Variable((4, 4), hermitian=True)
    q = cp.Variable()
    cons = []
    for x, va in enumerate(directions):
        for y, vb in enumerate(directions):
            for i, a in enumerate((1, -1)):
                for j, b in enumerate((1, -1)):
                    ind = np.array([[sa[x] == i and sb[y] == j for sb in strat] for sa in strat], float).ravel()
                    op = np.kron(projector(va, a), projector(vb, b))
                    cons.append(cp.real(cp.trace(op @ chi)) == ind @ P)
    half = np.eye(2) / 2
    chi_a = cp.partial_trace(chi, [2, 2], axis=1)
    chi_b = cp.partial_trace(chi, [2, 2], axis=0)
    phi = (eta**2 * chi + eta * (1 - eta) * (cp.kron(chi_a, half) + cp.kron(half, chi_b))
           + (1 - eta) ** 2 * cp.real(cp.trace(chi)) * np.eye(4) / 4)
    rho_q = q * werner_dense(1.0) + (1 - q) * np.eye(4) / 4
    if protocol == "basic":
        cons.append(phi == rho_q)
    else:
        rem = rho_q - phi
        cons += [rem >> 0, cp.partial_transpose(rem, [2, 2], axis=1) >> 0]
    cons += [cp.sum(P) == cp.real(cp.trace(chi)), q <= 1]
    prob = cp.Problem(cp.Maximize(q), cons)
    for s in ([solver] if solver else ["CVXOPT", "SCS"]):
        if s in cp.installed_solvers():
            kw = {"eps": 1e-10, "max_iters": 200000} if s == "SCS" else \
                {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9, "kktsolver": "robust"}
            prob.solve(solver=s, **kw)
            return float(q.value)
    raise RuntimeError("no independent SDP solver available")


def steering_bound_werner(directions, solver="SCS") -> float:
    """Largest q with a hidden-state model for q phi+ + (1-q) I/4 on the given axes."""
    import cvxpy as cp

    m = len(directions)
    strat = list(itertools.product([1, -1], repeat=m))
    sig = [cp.Variable((2, 2), hermitian=True) for _ in strat]
    q = cp.Variable()
    rho = q * werner_dense(1.0) + (1 - q) * np.eye(4) / 4
    cons = [s >> 0 for s in sig]
    for x, v in enumerate(directions):
        for a in (1, -1):
            cond = ptrace_a(np.kron(projector(v, a), I2) @ werner_dense(1.0))
            cond_sep = ptrace_a(np.kron(projector(v, a), I2) @ (np.eye(4) / 4))
            cons.append(q * cond + (1 - q) * cond_sep == sum(s for lam, s in zip(strat, sig) if lam[x] == a))
    prob = cp.Problem(cp.Maximize(q), cons)
    kw = {"eps": 1e-10, "max_iters": 200000} if solver == "SCS" else {}
    prob.solve(solver=solver, **kw)
    return float(q.value)


# ---------------------------------------------------------------------------
# exact steering boundary for T-states (maximally mixed marginals)

def t_state_steering_limit(t):
    """Critical ``q`` for ``q T``: unsteerable iff (1/2pi) int sqrt(n^T T^2 n) dn <= 1."""
    from scipy.integrate import dblquad

    t = np.abs(np.asarray(t, float))

    def f(th, ph):
        n = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return np.sqrt(np.sum((t * n) ** 2)) * np.sin(th)

    val = dblquad(f, 0, 2 * np.pi, 0, np.pi, epsabs=1e-13)[0] / (2 * np.pi)
    return min(1.0, 1.0 / val)
