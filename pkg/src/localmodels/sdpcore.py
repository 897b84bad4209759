"""A small conic modelling layer: affine expressions, cones, and a Clarabel adapter.

Variables are real.  Hermitian matrix expressions are carried as their ``d^2``
real coordinates ``[Re M_kk | Re M_jk (j<k) | Im M_jk (j<k)]`` so every
constraint is real-linear, and an LMI compiles to a second-order cone for
``d = 2`` and to a real-embedded PSD cone otherwise.

Every solution carries residuals recomputed from the returned point rather
than the solver's own report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
STATUSES = ("optimal", "infeasible", "inaccurate", "solver_failure")


# ---------------------------------------------------------------------------
# expressions

def _pad(a: sp.csr_matrix, n: int) -> sp.csr_matrix:
    if a.shape[1] == n:
        return a
    return sp.csr_matrix((a.data, a.indices, a.indptr), shape=(a.shape[0], n))


class Affine:
    """Vector-valued affine expression ``A x + b`` over the problem variables."""

    __slots__ = ("A", "b")
    __array_ufunc__ = None  # let numpy defer to __rmatmul__ / __rmul__

    def __init__(self, A, b):
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != len(self.b):
            raise ValueError(f"row mismatch: {self.A.shape[0]} vs {len(self.b)}")

    @classmethod
    def constant(cls, b) -> "Affine":
        b = np.atleast_1d(np.asarray(b, dtype=float)).reshape(-1)
        return cls(sp.csr_matrix((len(b), 0)), b)

    @property
    def size(self) -> int:
        return len(self.b)

    def __len__(self):
        return self.size

    def _lift(self, other):
        if isinstance(other, Affine):
            return other
        b = np.broadcast_to(np.asarray(other, dtype=float), (self.size,))
        return Affine.constant(b)

    def __add__(self, other):
        o = self._lift(other)
        if o.size != self.size:
            raise ValueError(f"size mismatch: {self.size} vs {o.size}")
        n = max(self.A.shape[1], o.A.shape[1])
        return Affine(_pad(self.A, n) + _pad(o.A, n), self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.A, -self.b)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        s = float(s)
        return Affine(self.A * s, self.b * s)

    __rmul__ = __mul__

    def __rmatmul__(self, m):
        """Constant linear map applied on the left."""
        m = sp.csr_matrix(m) if sp.issparse(m) else np.atleast_2d(np.asarray(m, dtype=float))
        return Affine(sp.csr_matrix(m @ self.A), m @ self.b)

    def __getitem__(self, idx):
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine(self.A[rows], self.b[rows])

    def sum(self) -> "Affine":
        return np.ones((1, self.size)) @ self

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _pad(self.A, len(x)) @ x + self.b


def apply(m, expr: Affine) -> Affine:
    """``m @ expr`` for dense or sparse constant ``m`` (sparse matrices do not defer)."""
    return expr.__rmatmul__(m)


def vstack(exprs) -> Affine:
    exprs = list(exprs)
    n = max(e.A.shape[1] for e in exprs)
    return Affine(sp.vstack([_pad(e.A, n) for e in exprs], format="csr"),
                  np.concatenate([e.b for e in exprs]))


def herm_dim(n_coords: int) -> int:
    d = int(round(n_coords**0.5))
    if d * d != n_coords:
        raise ValueError(f"{n_coords} is not a square number of coordinates")
    return d


@lru_cache(maxsize=None)
def _herm_basis(d: int) -> np.ndarray:
    """``(d^2, d, d)`` complex matrices, one per real coordinate."""
    out = []
    for k in range(d):
        e = np.zeros((d, d), complex)
        e[k, k] = 1
        out.append(e)
    iu = list(zip(*np.triu_indices(d, 1)))
    for j, k in iu:
        e = np.zeros((d, d), complex)
        e[j, k] = e[k, j] = 1
        out.append(e)
    for j, k in iu:
        e = np.zeros((d, d), complex)
        e[j, k], e[k, j] = 1j, -1j
        out.append(e)
    return np.array(out)


def herm_matrix(coords) -> np.ndarray:
    """Dense Hermitian matrix from real coordinates (batched over leading axes)."""
    c = np.asarray(coords, dtype=float)
    return np.tensordot(c, _herm_basis(herm_dim(c.shape[-1])), axes=(-1, 0))


def herm_coords(mat) -> np.ndarray:
    """Inverse of ``herm_matrix``."""
    m = np.asarray(mat, dtype=complex)
    d = m.shape[-1]
    j, k = np.triu_indices(d, 1)
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    return np.concatenate([diag, np.real(m[..., j, k]), np.imag(m[..., j, k])], axis=-1)


@lru_cache(maxsize=None)
def _psd_compile(d: int) -> tuple[str, int, np.ndarray]:
    """(cone kind, cone dimension, linear map coordinates -> cone slack)."""
    if d == 1:
        return "nonneg", 1, np.eye(1)
    if d == 2:
        # coords (a, c, Re z, Im z): (a+c)/2 >= ||((a-c)/2, Re z, Im z)||
        L = np.array([[0.5, 0.5, 0, 0], [0.5, -0.5, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
        return "soc", 4, L
    n = 2 * d
    rows, cols = [], []
    for c in range(n):
        for r in range(c + 1):
            rows.append(r)
            cols.append(c)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2))
    basis = _herm_basis(d)
    L = np.zeros((len(rows), d * d))
    for k, e in enumerate(basis):
        s = np.block([[e.real, -e.imag], [e.imag, e.real]])
        L[:, k] = scale * s[rows, cols]
    return "psd", n, L


# ---------------------------------------------------------------------------
# problem

@dataclass
class Constraint:
    kind: str  # eq | nonneg | soc | psd
    expr: Affine
    name: str
    dim: int = 0  # matrix dimension for psd


@dataclass
class SdpProblem:
    """Declarative conic program; assembly order is the constraint order."""

    name: str = "sdp"
    n_vars: int = 0
    variables: dict = field(default_factory=dict)
    nonneg_vars: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: Affine | None = None
    sense: str = "max"

    def variable(self, name: str, size: int = 1, nonneg: bool = False) -> Affine:
        if name in self.variables:
            raise ValueError(f"duplicate variable name {name!r}")
        if size < 0:
            raise ValueError("variable size must be non-negative")
        start = self.n_vars
        self.variables[name] = (start, size)
        self.n_vars += size
        if nonneg:
            self.nonneg_vars.append(name)
        A = sp.csr_matrix(
            (np.ones(size), (np.arange(size), np.arange(start, start + size))),
            shape=(size, self.n_vars),
        )
        return Affine(A, np.zeros(size))

    def hermitian(self, name: str, d: int, psd: bool = False) -> Affine:
        """Real coordinates of a ``d x d`` Hermitian matrix variable."""
        v = self.variable(name, d * d)
        if psd:
            self.add_psd(v, f"{name}>=0")
        return v

    def var(self, name: str) -> Affine:
        start, size = self.variables[name]
        A = sp.csr_matrix(
            (np.ones(size), (np.arange(size), np.arange(start, start + size))),
            shape=(size, self.n_vars),
        )
        return Affine(A, np.zeros(size))

    def _name(self, name, kind):
        names = self.__dict__.setdefault("_names", set())
        name = name or f"{kind}{len(self.constraints)}"
        if name in names:
            raise ValueError(f"duplicate constraint name {name!r}")
        names.add(name)
        return name

    def add_eq(self, expr: Affine, name: str | None = None):
        self.constraints.append(Constraint("eq", expr, self._name(name, "eq")))

    def add_nonneg(self, expr: Affine, name: str | None = None):
        self.constraints.append(Constraint("nonneg", expr, self._name(name, "nonneg")))

    def add_soc(self, expr: Affine, name: str | None = None):
        if expr.size < 2:
            raise ValueError("second-order cone needs at least 2 rows")
        self.constraints.append(Constraint("soc", expr, self._name(name, "soc")))

    def add_psd(self, coords: Affine, name: str | None = None, d: int | None = None):
        """Require Hermitian matrices with real coordinates ``coords`` to be PSD.

        With ``d`` given, ``coords`` is split into consecutive ``d^2`` blocks,
        each its own cone.
        """
        d = herm_dim(coords.size) if d is None else d
        if coords.size % (d * d):
            raise ValueError("block size does not divide expression length")
        self.constraints.append(Constraint("psd", coords, self._name(name, "psd"), d))

    def maximize(self, expr: Affine):
        self.objective, self.sense = expr, "max"

    def minimize(self, expr: Affine):
        self.objective, self.sense = expr, "min"

    def dimensions(self) -> dict:
        rows = {k: 0 for k in ("eq", "nonneg", "soc", "psd")}
        for c in self.constraints:
            rows[c.kind] += c.expr.size
        return {"variables": self.n_vars, **rows}

    # ------------------------------------------------------------------ JSON
    def to_json(self) -> dict:
        def enc(e: Affine):
            a = _pad(e.A, self.n_vars).tocoo()
            order = np.lexsort((a.col, a.row))
            return {
                "rows": e.size,
                "i": a.row[order].tolist(),
                "j": a.col[order].tolist(),
                "v": a.data[order].tolist(),
                "b": e.b.tolist(),
            }

        return {
            "name": self.name,
            "n_vars": self.n_vars,
            "variables": [[k, s, n] for k, (s, n) in self.variables.items()],
            "nonneg_vars": list(self.nonneg_vars),
            "constraints": [
                {"kind": c.kind, "name": c.name, "dim": c.dim, "expr": enc(c.expr)}
                for c in self.constraints
            ],
            "objective": None if self.objective is None else enc(self.objective),
            "sense": self.sense,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, data: dict) -> "SdpProblem":
        n = data["n_vars"]

        def dec(e):
            A = sp.csr_matrix((e["v"], (e["i"], e["j"])), shape=(e["rows"], n))
            return Affine(A, e["b"])

        p = cls(name=data["name"], n_vars=n, sense=data["sense"])
        p.variables = {k: (s, sz) for k, s, sz in data["variables"]}
        p.nonneg_vars = list(data["nonneg_vars"])
        p.constraints = [Constraint(c["kind"], dec(c["expr"]), c["name"], c["dim"])
                         for c in data["constraints"]]
        p.objective = None if data["objective"] is None else dec(data["objective"])
        return p


# ---------------------------------------------------------------------------
# solutions

@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    value: float
    residuals: dict
    duals: dict
    variables: dict
    info: dict

    def __getitem__(self, name: str) -> np.ndarray:
        start, size = self.variables[name]
        return self.x[start:start + size]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "value": self.value,
            "residuals": self.residuals,
            "x": self.x.tolist(),
            "info": self.info,
        }


def constraint_violation(c: Constraint, x) -> float:
    """Non-negative violation of one constraint at ``x``, computed independently."""
    v = c.expr.value(x)
    if c.kind == "eq":
        return float(np.max(np.abs(v), initial=0.0))
    if c.kind == "nonneg":
        return float(max(0.0, -np.min(v, initial=0.0)))
    if c.kind == "soc":
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    mats = herm_matrix(v.reshape(-1, c.dim * c.dim))
    return float(max(0.0, -np.min(np.linalg.eigvalsh(mats), initial=0.0)))


def residuals(p: SdpProblem, x) -> dict:
    out = {"eq": 0.0, "nonneg": 0.0, "soc": 0.0, "psd": 0.0}
    for c in p.constraints:
        out[c.kind] = max(out[c.kind], constraint_violation(c, x))
    if p.nonneg_vars:
        idx = np.concatenate([np.arange(*_span(p.variables[k])) for k in p.nonneg_vars])
        out["nonneg"] = max(out["nonneg"], float(max(0.0, -np.min(x[idx], initial=0.0))))
    return out


def _span(sv):
    return sv[0], sv[0] + sv[1]


def independent_rows(A: sp.csr_matrix, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``A``.

    Pivoted QR of the row Gram matrix; dependent equality rows make interior
    point KKT systems singular.
    """
    import scipy.linalg as la

    if A.shape[0] == 0:
        return np.zeros(0, dtype=int)
    G = (A @ A.T).toarray()
    _, R, piv = la.qr(G, pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d[0], 1.0))) if len(d) else 0
    return np.sort(piv[:rank])


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "inaccurate",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
}


def solve(p: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = 500, verbose=False) -> SdpSolution:
    """Solve with Clarabel.  ``inaccurate`` is reported, never promoted to ``optimal``."""
    import clarabel

    n = p.n_vars
    sign = -1.0 if p.sense == "max" else 1.0
    obj = p.objective if p.objective is not None else Affine.constant([0.0])
    if obj.size != 1:
        raise ValueError("objective must be scalar")

    blocks_A, blocks_b, cones, slices = [], [], [], {}
    row = 0

    def push(kind, A, b, cone, name):
        nonlocal row
        blocks_A.append(A)
        blocks_b.append(b)
        cones.extend(cone if isinstance(cone, list) else [cone])
        slices[name] = (kind, row, row + A.shape[0])
        row += A.shape[0]

    eqs = [c for c in p.constraints if c.kind == "eq" and c.expr.size]
    others = [c for c in p.constraints if c.kind != "eq"]
    eq_keep = {}
    if eqs:
        A_eq = sp.vstack([_pad(c.expr.A, n) for c in eqs], format="csr")
        keep = independent_rows(A_eq)
        offsets = np.cumsum([0] + [c.expr.size for c in eqs])
        for k, c in enumerate(eqs):
            rows = keep[(keep >= offsets[k]) & (keep < offsets[k + 1])] - offsets[k]
            eq_keep[c.name] = (rows, c.expr.size)
            if len(rows):
                push("eq", _pad(c.expr.A, n)[rows], -c.expr.b[rows], clarabel.ZeroConeT(len(rows)), c.name)
    if p.nonneg_vars:
        idx = np.concatenate([np.arange(*_span(p.variables[k])) for k in p.nonneg_vars])
        A = sp.csr_matrix((-np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), n))
        if len(idx):
            push("nonneg", A, np.zeros(len(idx)), clarabel.NonnegativeConeT(len(idx)), "__nonneg_vars")
    for c in others:
        A, b = _pad(c.expr.A, n), c.expr.b
        if c.kind == "nonneg":
            if not c.expr.size:
                continue
            push("nonneg", -A, b, clarabel.NonnegativeConeT(c.expr.size), c.name)
        elif c.kind == "soc":
            push("soc", -A, b, clarabel.SecondOrderConeT(c.expr.size), c.name)
        else:
            kind, dim, L = _psd_compile(c.dim)
            nb = c.expr.size // (c.dim * c.dim)
            big = sp.kron(sp.eye(nb), sp.csr_matrix(L), format="csr")
            make = {"nonneg": clarabel.NonnegativeConeT, "soc": clarabel.SecondOrderConeT,
                    "psd": clarabel.PSDTriangleConeT}[kind]
            if kind == "nonneg":
                cone_list = [make(nb)]
            else:
                cone_list = [make(dim) for _ in range(nb)]
            push("psd", -(big @ A), big @ b, cone_list, c.name)

    info = {"dimensions": p.dimensions(), "solver": "clarabel"}
    if n == 0:
        infeasible = any(constraint_violation(c, np.zeros(0)) > tol for c in p.constraints)
        x = np.zeros(0)
        return SdpSolution("infeasible" if infeasible else "optimal", x, float(obj.b[0]),
                           residuals(p, x), {}, dict(p.variables), info)

    A = sp.vstack(blocks_A, format="csc") if blocks_A else sp.csc_matrix((0, n))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    q = sign * np.asarray(_pad(obj.A, n).todense()).reshape(-1)
    P = sp.csc_matrix((n, n))

    st = clarabel.DefaultSettings()
    st.verbose = verbose
    st.tol_gap_abs = st.tol_gap_rel = tol
    st.tol_feas = tol
    st.tol_infeas_abs = st.tol_infeas_rel = tol
    st.max_iter = max_iter
    st.max_threads = 1
    res = clarabel.DefaultSolver(P, q, A, b, cones, st).solve()

    raw = str(res.status).split(".")[-1]
    status = _STATUS_MAP.get(raw, "solver_failure")
    x = np.asarray(res.x, dtype=float)
    z = np.asarray(res.z, dtype=float)
    duals = {name: z[lo:hi].copy() for name, (_, lo, hi) in slices.items()}
    for name, (rows, size) in eq_keep.items():
        full = np.zeros(size)
        if len(rows):
            full[rows] = duals[name]
        duals[name] = full
    info.update(raw_status=raw, iterations=int(res.iterations),
                solve_time=float(res.solve_time), dual_objective=sign * float(res.obj_val_dual))
    value = float(obj.value(x)[0]) if status in ("optimal", "inaccurate") else float("nan")
    sol = SdpSolution(status, x, value, residuals(p, x), duals, dict(p.variables), info)
    if status == "optimal" and sol.max_residual > 100 * tol:
        log.warning("solver reported optimal but recomputed residual is %.2e", sol.max_residual)
        sol.status = "inaccurate"
    log.debug("%s: %s %s value=%.10g", p.name, raw, info["dimensions"], value)
    return sol
