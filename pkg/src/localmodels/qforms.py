"""Hermitian operators on one and two qubits in the Pauli basis.

The canonical representation of every operator is a real coefficient array:

* a single-qubit operator is ``O = c0 * I + c . sigma``;
* a two-qubit operator is ``O = 1/4 * sum_ij c_ij sigma_i (x) sigma_j``.

Dense complex matrices are derived views.  All protocol constraints are
linear in these coefficients, which keeps SDP assembly direct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

PSD_TOL = 1e-9
HERMITIAN_TOL = 1e-12

SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
# SIGMA2[i, j] = sigma_i (x) sigma_j
SIGMA2 = np.einsum("iab,jcd->ijacbd", SIGMA, SIGMA).reshape(4, 4, 4, 4)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_hermitian(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    asym = float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0
    scale = max(1.0, float(np.max(np.abs(mat))))
    if asym > tol * scale:
        raise ValueError(f"non-Hermitian input: max asymmetry {asym:.3e}")


@dataclass(frozen=True)
class QubitOperator:
    """Single-qubit Hermitian operator ``c0 * I + c . sigma``."""

    c0: float
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "c0", float(self.c0))
        c = _frozen(self.c)
        if c.shape != (3,):
            raise ValueError(f"Pauli vector must have shape (3,), got {c.shape}")
        object.__setattr__(self, "c", c)

    @classmethod
    def density(cls, bloch) -> "QubitOperator":
        """The state ``(I + u . sigma) / 2``."""
        u = np.asarray(bloch, dtype=float)
        if np.linalg.norm(u) > 1 + 1e-12:
            raise ValueError(f"Bloch vector norm {np.linalg.norm(u):.6f} exceeds 1")
        return cls(0.5, u / 2)

    @classmethod
    def identity(cls, scale: float = 1.0) -> "QubitOperator":
        return cls(scale, np.zeros(3))

    @classmethod
    def from_matrix(cls, mat) -> "QubitOperator":
        mat = np.asarray(mat, dtype=complex)
        _check_hermitian(mat)
        coeffs = np.real(np.einsum("iab,ba->i", SIGMA, mat)) / 2
        return cls(coeffs[0], coeffs[1:])

    @property
    def coeffs(self) -> np.ndarray:
        return np.r_[self.c0, self.c]

    @property
    def bloch(self) -> np.ndarray:
        """Bloch vector of the normalized operator (meaningful for states)."""
        return self.c / self.c0

    def matrix(self) -> np.ndarray:
        return np.einsum("i,iab->ab", self.coeffs, SIGMA)

    def trace(self) -> float:
        return 2 * self.c0

    def min_eigenvalue(self) -> float:
        return self.c0 - float(np.linalg.norm(self.c))

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return self.min_eigenvalue() >= -tol

    def __add__(self, other: "QubitOperator") -> "QubitOperator":
        return QubitOperator(self.c0 + other.c0, self.c + other.c)

    def __sub__(self, other: "QubitOperator") -> "QubitOperator":
        return QubitOperator(self.c0 - other.c0, self.c - other.c)

    def __mul__(self, s: float) -> "QubitOperator":
        return QubitOperator(self.c0 * s, self.c * s)

    __rmul__ = __mul__

    def tensor(self, other: "QubitOperator") -> "TwoQubitOperator":
        """``self (x) other`` as a two-qubit operator."""
        return TwoQubitOperator(4 * np.outer(self.coeffs, other.coeffs))

    def to_json(self) -> dict:
        return {"pauli": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "QubitOperator":
        p = data["pauli"]
        return cls(p[0], p[1:])


@dataclass(frozen=True)
class TwoQubitOperator:
    """Two-qubit Hermitian operator ``1/4 sum_ij c_ij sigma_i (x) sigma_j``.

    ``coeffs[i, 0]`` (i >= 1) is Alice's local vector, ``coeffs[0, j]`` Bob's,
    and ``coeffs[1:, 1:]`` the correlation matrix.  The trace equals
    ``coeffs[0, 0]``.  Nothing here requires positivity: the locality programs
    routinely produce non-PSD operators.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coeffs)
        if c.shape != (4, 4):
            raise ValueError(f"coefficient array must be 4x4, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_matrix(cls, mat) -> "TwoQubitOperator":
        return compose(decompose(mat))

    @classmethod
    def identity(cls) -> "TwoQubitOperator":
        c = np.zeros((4, 4))
        c[0, 0] = 4.0
        return cls(c)

    @property
    def correlations(self) -> np.ndarray:
        return self.coeffs[1:, 1:]

    @property
    def local_a(self) -> np.ndarray:
        return self.coeffs[1:, 0]

    @property
    def local_b(self) -> np.ndarray:
        return self.coeffs[0, 1:]

    def matrix(self) -> np.ndarray:
        return np.einsum("ij,ijab->ab", self.coeffs, SIGMA2) / 4

    def trace(self) -> float:
        return float(self.coeffs[0, 0])

    def min_eigenvalue(self) -> float:
        return min_eigenvalue(self)

    def is_state(self, tol: float = PSD_TOL) -> bool:
        return abs(self.trace() - 1) <= tol and self.min_eigenvalue() >= -tol

    def expectation(self, op: np.ndarray) -> float:
        """``Tr(op @ self)`` for a dense Hermitian 4x4 ``op``."""
        return float(np.real(np.trace(np.asarray(op) @ self.matrix())))

    def __add__(self, other: "TwoQubitOperator") -> "TwoQubitOperator":
        return TwoQubitOperator(self.coeffs + other.coeffs)

    def __sub__(self, other: "TwoQubitOperator") -> "TwoQubitOperator":
        return TwoQubitOperator(self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "TwoQubitOperator":
        return TwoQubitOperator(self.coeffs * s)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {"pauli": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "TwoQubitOperator":
        return cls(np.array(data["pauli"], dtype=float))


def compose(coeffs) -> TwoQubitOperator:
    return TwoQubitOperator(np.asarray(coeffs, dtype=float))


def decompose(mat) -> np.ndarray:
    """Pauli coefficients ``c_ij = Tr(sigma_i (x) sigma_j  M)`` of a dense Hermitian matrix."""
    mat = np.asarray(mat, dtype=complex)
    if mat.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {mat.shape}")
    _check_hermitian(mat)
    return np.real(np.einsum("ijab,ba->ij", SIGMA2, mat))


def partial_trace(op: TwoQubitOperator, party: str) -> QubitOperator:
    """Trace out ``party`` ("A" or "B"), returning the other marginal."""
    if party == "A":
        v = op.coeffs[0, :]
    elif party == "B":
        v = op.coeffs[:, 0]
    else:
        raise ValueError(f"party must be 'A' or 'B', got {party!r}")
    # Tr_A(sigma_i (x) sigma_j) = 2 delta_i0 sigma_j, and O carries a 1/4
    return QubitOperator(v[0] / 2, v[1:] / 2)


def partial_transpose_B(op: TwoQubitOperator) -> TwoQubitOperator:
    # sigma_y^T = -sigma_y, all other Paulis are symmetric
    c = op.coeffs.copy()
    c[:, 2] *= -1
    return TwoQubitOperator(c)


def min_eigenvalue(op: TwoQubitOperator) -> float:
    return float(np.linalg.eigvalsh(op.matrix())[0])


def is_ppt(op: TwoQubitOperator, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(partial_transpose_B(op)) >= -tol


# ---------------------------------------------------------------------------
# dense helpers shared by the SDP builders

def dense_ptrace_A(mat: np.ndarray) -> np.ndarray:
    """Partial trace over the first qubit of a (..., 4, 4) array."""
    m = np.asarray(mat).reshape(mat.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...abad->...bd", m)


def dense_ptrace_B(mat: np.ndarray) -> np.ndarray:
    m = np.asarray(mat).reshape(mat.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...abcb->...ac", m)


def dense_ptranspose_B(mat: np.ndarray) -> np.ndarray:
    m = np.asarray(mat).reshape(mat.shape[:-2] + (2, 2, 2, 2))
    return np.swapaxes(m, -3, -1).reshape(mat.shape)


# ---------------------------------------------------------------------------
# state families

BELL = {
    "phi+": compose(np.diag([1.0, 1.0, -1.0, 1.0])),
    "phi-": compose(np.diag([1.0, -1.0, 1.0, 1.0])),
    "psi+": compose(np.diag([1.0, 1.0, 1.0, -1.0])),
    "psi-": compose(np.diag([1.0, -1.0, -1.0, -1.0])),
}

FAMILIES = ("bell_diagonal", "rank3", "white_noise", "colored_noise", "custom")


@dataclass(frozen=True)
class FamilyPoint:
    """A tagged point of one of the state families.

    ``params`` holds ``(t1, t2, t3)`` for ``bell_diagonal``, ``(p1, p2)`` for
    ``rank3``, ``(alpha, theta)`` for ``white_noise`` / ``colored_noise``; a
    ``custom`` point carries its dense density matrix in ``matrix``.
    """

    family: str
    params: tuple = ()
    matrix: Any = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def bell_diagonal(cls, t1, t2, t3):
        return cls("bell_diagonal", (t1, t2, t3))

    @classmethod
    def rank3(cls, p1, p2):
        return cls("rank3", (p1, p2))

    @classmethod
    def white_noise(cls, alpha, theta):
        return cls("white_noise", (alpha, theta))

    @classmethod
    def colored_noise(cls, alpha, theta):
        return cls("colored_noise", (alpha, theta))

    @classmethod
    def custom(cls, matrix):
        return cls("custom", (), np.asarray(matrix, dtype=complex))

    def to_json(self) -> dict:
        if self.family == "custom":
            return {"family": "custom", "pauli": decompose(self.matrix).tolist()}
        key = {"bell_diagonal": "t", "rank3": "p"}.get(self.family, "alpha_theta")
        return {"family": self.family, key: list(self.params)}

    @classmethod
    def from_json(cls, data: dict) -> "FamilyPoint":
        fam = data["family"]
        if fam == "custom":
            return cls.custom(compose(data["pauli"]).matrix())
        key = {"bell_diagonal": "t", "rank3": "p"}.get(fam, "alpha_theta")
        return cls(fam, tuple(data[key]))


@dataclass(frozen=True)
class FamilyState:
    """A constructed target together with its mixing state and noise-map state."""

    rho: TwoQubitOperator
    rho_sep: TwoQubitOperator
    xi: QubitOperator


def psi_theta(theta: float) -> TwoQubitOperator:
    """``|psi_theta> = cos(theta)|00> + sin(theta)|11>`` as a density operator."""
    v = np.zeros(4)
    v[0], v[3] = np.cos(theta), np.sin(theta)
    return TwoQubitOperator.from_matrix(np.outer(v, v))


def _check_theta(theta):
    if not 0 < theta <= np.pi / 4 + 1e-15:
        raise ValueError(f"theta must lie in (0, pi/4], got {theta}")


def _check_unit(name, x):
    if not -1e-15 <= x <= 1 + 1e-15:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


MAXIMALLY_MIXED = TwoQubitOperator(np.diag([1.0, 0, 0, 0]))
HALF_IDENTITY = QubitOperator(0.5, np.zeros(3))


def build_family(point: FamilyPoint, tol: float = PSD_TOL) -> FamilyState:
    """Construct the target state, its default separable mixing state and default xi.

    Defaults: ``rho_sep = I/4`` for Bell-diagonal and white-noise points,
    ``rho_A (x) I/2`` for colored noise, and the centroid of the rank-3 face
    ``(psi- + psi+ + phi+)/3`` for rank-3 points (keeps ``rho_q`` rank
    deficient).  ``xi = Tr_B(rho_sep)`` throughout.
    """
    fam, p = point.family, point.params
    rho_sep = MAXIMALLY_MIXED
    if fam == "bell_diagonal":
        t = np.array(p)
        if t.shape != (3,) or np.any(np.abs(t) > 1 + 1e-15):
            raise ValueError(f"Bell-diagonal correlations must lie in [-1, 1]^3, got {p}")
        rho = compose(np.diag(np.r_[1.0, t]))
    elif fam == "rank3":
        p1, p2 = p
        if p1 < -1e-15 or p2 < -1e-15 or p1 + p2 > 1 + 1e-15:
            raise ValueError(f"rank-3 weights need p1, p2 >= 0 and p1 + p2 <= 1, got {p}")
        rho = BELL["psi-"] * p1 + BELL["psi+"] * p2 + BELL["phi+"] * (1 - p1 - p2)
        rho_sep = (BELL["psi-"] + BELL["psi+"] + BELL["phi+"]) * (1 / 3)
    elif fam in ("white_noise", "colored_noise"):
        alpha, theta = p
        _check_unit("alpha", alpha)
        _check_theta(theta)
        pure = psi_theta(theta)
        if fam == "white_noise":
            rho = pure * alpha + MAXIMALLY_MIXED * (1 - alpha)
        else:
            rho_sep = partial_trace(pure, "B").tensor(HALF_IDENTITY)
            rho = pure * alpha + rho_sep * (1 - alpha)
    else:
        rho = TwoQubitOperator.from_matrix(point.matrix)
    if not rho.is_state(tol):
        raise ValueError(
            f"{fam} point {p} is not a valid state "
            f"(trace {rho.trace():.6f}, min eigenvalue {rho.min_eigenvalue():.3e})"
        )
    return FamilyState(rho, rho_sep, partial_trace(rho_sep, "B"))


def werner(q: float) -> TwoQubitOperator:
    """``q |phi+><phi+| + (1 - q) I/4``."""
    return BELL["phi+"] * q + MAXIMALLY_MIXED * (1 - q)
