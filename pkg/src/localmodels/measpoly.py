"""Finite sets of qubit projective measurements as polytopes.

A binary projective measurement with Bloch direction ``v`` has POVM elements
``(I +- v.sigma)/2``.  Its ``+`` element is the point ``(1/2, v/2)`` of the
four-dimensional space spanned by ``{I, sigma}``.  The measurement polytope of
a finite set is the hull of these points for ``+-v`` together with the two
trivial POVM elements ``I`` and ``0``; the noisy set ``Phi^eta(projectives)``
must fit inside it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.transform import Rotation

from .qforms import QubitOperator, TwoQubitOperator, partial_trace

COPLANAR_TOL = 1e-10
TIE_TOL = 1e-9
DUPLICATE_TOL = 1e-9


class DegenerateGeometryError(ValueError):
    """The point set does not span a full-dimensional polytope around the origin."""


# ---------------------------------------------------------------------------
# noise maps

@dataclass(frozen=True)
class NoiseMap:
    """``Phi^eta(A) = eta A + (1 - eta) Tr(xi A) I`` for a qubit state ``xi``."""

    xi: QubitOperator
    eta: float

    def __post_init__(self):
        if abs(self.xi.trace() - 1) > 1e-9 or not self.xi.is_psd():
            raise ValueError("xi must be a qubit density matrix")
        if not -1e-12 <= self.eta <= 1 + 1e-12:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    @classmethod
    def isotropic(cls, eta: float) -> "NoiseMap":
        return cls(QubitOperator.density(np.zeros(3)), eta)

    @property
    def u(self) -> np.ndarray:
        return self.xi.bloch

    def to_json(self) -> dict:
        return {"xi": self.xi.to_json(), "eta": self.eta}

    @classmethod
    def from_json(cls, data: dict) -> "NoiseMap":
        return cls(QubitOperator.from_json(data["xi"]), data["eta"])


def apply_noise_map(direction, noise: NoiseMap) -> tuple[QubitOperator, QubitOperator]:
    """Noisy POVM elements ``Phi^eta(A_+), Phi^eta(A_-)`` for Bloch direction ``direction``."""
    v = np.asarray(direction, dtype=float)
    eta, uv = noise.eta, float(noise.u @ v)
    plus = QubitOperator(0.5 + (1 - eta) * uv / 2, eta * v / 2)
    minus = QubitOperator(0.5 - (1 - eta) * uv / 2, -eta * v / 2)
    return plus, minus


def dual_map_state(chi: TwoQubitOperator, map_a: NoiseMap, map_b: NoiseMap | None = None):
    """Apply the dual noise map on Alice's side, and on Bob's too if ``map_b`` is given."""
    nu, xi_a = map_a.eta, map_a.xi
    chi_a, chi_b = partial_trace(chi, "B"), partial_trace(chi, "A")
    if map_b is None:
        return chi * nu + xi_a.tensor(chi_b) * (1 - nu)
    mu, xi_b = map_b.eta, map_b.xi
    return (
        chi * (nu * mu)
        + chi_a.tensor(xi_b) * (nu * (1 - mu))
        + xi_a.tensor(chi_b) * (mu * (1 - nu))
        + xi_a.tensor(xi_b) * ((1 - nu) * (1 - mu) * chi.trace())
    )


# ---------------------------------------------------------------------------
# measurement sets

@dataclass(frozen=True)
class MeasurementSet:
    """Bloch directions of binary projective measurements (antipodes implicit)."""

    directions: np.ndarray
    provenance: str = "custom"
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if d.ndim != 2 or d.shape[1] != 3 or len(d) == 0:
            raise ValueError("directions must be a non-empty (m, 3) array")
        norms = np.linalg.norm(d, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero-length measurement direction")
        d = d / norms[:, None]
        g = np.abs(d @ d.T) - np.eye(len(d))
        if np.any(g > 1 - DUPLICATE_TOL):
            i, j = np.argwhere(g > 1 - DUPLICATE_TOL)[0]
            raise ValueError(f"directions {i} and {j} coincide up to sign")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)
        rot = np.array(self.orientation, dtype=float)
        rot.setflags(write=False)
        object.__setattr__(self, "orientation", rot)

    @property
    def m(self) -> int:
        return len(self.directions)

    def __len__(self) -> int:
        return self.m

    def vertices(self) -> np.ndarray:
        """The ``2m`` Bloch vectors ``+-v``."""
        return np.vstack([self.directions, -self.directions])

    def union(self, extra, provenance: str) -> "MeasurementSet":
        """Append new directions (duplicates up to sign are dropped), keeping order."""
        dirs = list(self.directions)
        for v in np.atleast_2d(np.asarray(extra, dtype=float)):
            v = v / np.linalg.norm(v)
            if all(abs(abs(v @ w) - 1) > DUPLICATE_TOL for w in dirs):
                dirs.append(v)
        return MeasurementSet(np.array(dirs), provenance, self.orientation)

    def rotated(self, rot) -> "MeasurementSet":
        rot = np.asarray(rot, dtype=float)
        return MeasurementSet(self.directions @ rot.T, self.provenance, rot @ self.orientation)

    def to_json(self) -> dict:
        return {
            "directions": self.directions.tolist(),
            "provenance": self.provenance,
            "orientation": self.orientation.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "MeasurementSet":
        return cls(
            np.array(data["directions"], dtype=float),
            data.get("provenance", "custom"),
            np.array(data.get("orientation", np.eye(3)), dtype=float),
        )


def icosahedron() -> MeasurementSet:
    """Six measurements along the axes of a regular icosahedron."""
    phi = (1 + 5**0.5) / 2
    v = np.array(
        [[0, 1, phi], [0, -1, phi], [1, phi, 0], [-1, phi, 0], [phi, 0, 1], [phi, 0, -1]],
        dtype=float,
    )
    return MeasurementSet(v, "icosahedron")


def octahedron() -> MeasurementSet:
    return MeasurementSet(np.eye(3), "octahedron")


# ---------------------------------------------------------------------------
# facets

@dataclass(frozen=True)
class FacetSystem:
    """Facets ``(normals[j], p) <= offsets[j]`` of a polytope with the given vertices."""

    dimension: int
    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    facet_vertices: tuple = ()

    @property
    def n_facets(self) -> int:
        return len(self.offsets)

    def contains(self, points, tol: float = 1e-10) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all(p @ self.normals.T <= self.offsets + tol, axis=1)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "normals": self.normals.tolist(),
            "offsets": self.offsets.tolist(),
            "vertices": self.vertices.tolist(),
        }


def convex_hull_3d(points) -> FacetSystem:
    """Facets of the hull of 3D points containing the origin strictly inside.

    Qhull returns triangles; triangles sharing a supporting plane (within
    ``COPLANAR_TOL``) are merged into one facet.  Normals are unit length.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateGeometryError("need at least 4 points in R^3")
    if np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9) < 3:
        raise DegenerateGeometryError("points are coplanar: hull is not full-dimensional")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateGeometryError(str(exc)) from exc
    normals, offsets = _merge_planes(hull.equations[:, :3], -hull.equations[:, 3])
    if np.any(offsets <= COPLANAR_TOL):
        raise DegenerateGeometryError("origin is not strictly inside the hull")
    offsets = np.max(pts @ normals.T, axis=0)
    incid = tuple(np.flatnonzero(np.abs(pts @ n - b) < 1e-9) for n, b in zip(normals, offsets))
    return FacetSystem(3, normals, offsets, pts, incid)


def _merge_planes(normals, offsets, tol: float = COPLANAR_TOL):
    n = normals / np.linalg.norm(normals, axis=1)[:, None]
    b = offsets / np.linalg.norm(normals, axis=1)
    keys = np.c_[n, b]
    pairs = cKDTree(keys).query_pairs(max(tol, 1e-8) * 10, output_type="ndarray")
    n_groups, labels = connected_components(
        _pair_graph(pairs, len(keys)), directed=False
    )
    out_n = np.zeros((n_groups, 3))
    out_b = np.zeros(n_groups)
    first = np.full(n_groups, -1)
    for i, g in enumerate(labels):
        out_n[g] += n[i]
        out_b[g] += b[i]
        if first[g] < 0:
            first[g] = i
    counts = np.bincount(labels, minlength=n_groups)
    out_n /= np.linalg.norm(out_n, axis=1)[:, None]
    out_b /= counts
    order = np.argsort(first)
    return out_n[order], out_b[order]


def _pair_graph(pairs, n):
    from scipy.sparse import coo_matrix

    if len(pairs) == 0:
        return coo_matrix((n, n))
    data = np.ones(len(pairs))
    return coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))


def measurement_hull(ms: MeasurementSet) -> FacetSystem:
    return convex_hull_3d(ms.vertices())


def inscribed_radius(fs: FacetSystem) -> float:
    """Radius of the largest origin-centred ball inside a 3D polytope."""
    if fs.dimension != 3:
        raise ValueError("inscribed_radius expects a 3D facet system")
    if np.any(fs.offsets <= 0):
        raise DegenerateGeometryError("origin is not strictly interior")
    return float(np.min(fs.offsets / np.linalg.norm(fs.normals, axis=1)))


def lift_to_4d(ms: MeasurementSet, hull3: FacetSystem | None = None) -> FacetSystem:
    """4D measurement polytope as a bipyramid over the 3D hull.

    The projective points ``(1/2, +-v/2)`` lie in the hyperplane ``w0 = 1/2``
    with the apexes ``(1, 0)`` and ``(0, 0)`` on either side, so each 3D facet
    ``n.v <= b`` produces the two cone facets ``(b, n).p <= b`` and
    ``(-b, n).p <= 0``.
    """
    h = measurement_hull(ms) if hull3 is None else hull3
    n, b = h.normals, h.offsets
    normals = np.vstack([np.c_[b, n], np.c_[-b, n]])
    offsets = np.r_[b, np.zeros_like(b)]
    verts = np.vstack([
        np.c_[np.full(2 * ms.m, 0.5), ms.vertices() / 2],
        [[1.0, 0, 0, 0], [0.0, 0, 0, 0]],
    ])
    nv = 2 * ms.m
    incid = tuple(np.r_[f, nv] for f in h.facet_vertices) + tuple(
        np.r_[f, nv + 1] for f in h.facet_vertices
    )
    return FacetSystem(4, normals, offsets, verts, incid)


def facet_shrinking_factors(fs4: FacetSystem, u) -> np.ndarray:
    """Largest ``eta`` keeping every noisy POVM element inside each 4D facet.

    With ``F = (F0, Fh)`` the facet condition over all unit ``v`` reads
    ``|| eta Fh + (1 - eta) F0 u || <= 2 b - F0``.  Squaring gives
    ``A eta^2 + B eta + C = 0`` with ``A = |Fh - F0 u|^2``,
    ``B = 2 F0 u.(Fh - F0 u)`` and ``C = F0^2 |u|^2 - (2b - F0)^2``; the
    largest root, clamped to [0, 1], is the facet's shrinking factor.
    """
    u = np.asarray(u, dtype=float)
    f0, fh, b = fs4.normals[:, 0], fs4.normals[:, 1:], fs4.offsets
    rhs = 2 * b - f0
    if np.any(rhs <= 0):
        raise DegenerateGeometryError("polytope does not contain the fully noisy point (1/2, 0)")
    a_vec = fh - f0[:, None] * u
    A = np.einsum("ij,ij->i", a_vec, a_vec)
    B = 2 * f0 * (a_vec @ u)
    C = f0**2 * (u @ u) - rhs**2
    if np.any(C > 1e-12 * np.maximum(1, rhs**2)):
        raise DegenerateGeometryError("polytope does not contain the fully noisy POVMs")
    C = np.minimum(C, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        root = (-B + np.sqrt(B * B - 4 * A * C)) / (2 * A)
        lin = np.where(B > 0, -C / B, np.inf)
    eta = np.where(A > 1e-300, root, lin)
    return np.clip(np.nan_to_num(eta, nan=1.0, posinf=1.0), 0.0, 1.0)


def shrinking_factor(ms: MeasurementSet, xi: QubitOperator | None = None, fs4=None):
    """``(eta_star, worst_facet)`` for the noise map defined by ``xi`` (default ``I/2``)."""
    u = np.zeros(3) if xi is None else xi.bloch
    fs4 = lift_to_4d(ms) if fs4 is None else fs4
    etas = facet_shrinking_factors(fs4, u)
    j = int(np.argmin(etas))
    return float(etas[j]), j


def worst_facet_direction(fs4: FacetSystem, xi: QubitOperator | None, eta_star: float, facet: int):
    """Measurement direction saturating ``facet`` at ``eta_star``."""
    u = np.zeros(3) if xi is None else xi.bloch
    f0, fh = fs4.normals[facet, 0], fs4.normals[facet, 1:]
    n = eta_star * fh + (1 - eta_star) * u * f0
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise DegenerateGeometryError(f"facet {facet} has a vanishing saturation direction")
    return n / norm


def augment(ms: MeasurementSet, xi: QubitOperator | None = None, max_additions: int = 10_000):
    """Add worst-facet directions one at a time until the shrinking factor strictly grows."""
    eta0, _ = shrinking_factor(ms, xi)
    cur = ms
    for _ in range(max_additions):
        fs4 = lift_to_4d(cur)
        etas = facet_shrinking_factors(fs4, np.zeros(3) if xi is None else xi.bloch)
        j = int(np.argmin(etas))
        v = worst_facet_direction(fs4, xi, float(etas[j]), j)
        nxt = cur.union(v, "facet-augmented")
        if nxt.m == cur.m:
            # direction already present: the facet cannot be lifted by this rule
            raise DegenerateGeometryError("worst-facet direction already in the set")
        cur = nxt
        if shrinking_factor(cur, xi)[0] >= eta0 + TIE_TOL:
            return cur
    raise RuntimeError("augmentation did not improve the shrinking factor")


def augment_to(ms: MeasurementSet, xi: QubitOperator | None, eta_target: float, max_rounds=1000):
    """Repeat ``augment`` until the shrinking factor reaches ``eta_target``."""
    cur = ms
    for _ in range(max_rounds):
        if shrinking_factor(cur, xi)[0] >= eta_target:
            return cur
        cur = augment(cur, xi)
    raise RuntimeError(f"eta target {eta_target} not reached after {max_rounds} rounds")


def dual_polyhedron(ms: MeasurementSet) -> MeasurementSet:
    """The set together with the vertex directions of its geometric (polar) dual."""
    h = measurement_hull(ms)
    return ms.union(h.normals, "dual-augmented")


def optimize_orientation(ms: MeasurementSet, xi: QubitOperator | None, restarts: int = 20, seed=0):
    """Best global rotation of ``ms`` for the map defined by ``xi``.

    Multi-start Nelder-Mead over rotation vectors.  Rotating the set by ``R``
    is equivalent to rotating the map's Bloch vector by ``R^T``, so the facets
    are computed once.
    """
    u = np.zeros(3) if xi is None else xi.bloch
    fs4 = lift_to_4d(ms)
    base = float(facet_shrinking_factors(fs4, u).min())
    if np.linalg.norm(u) < 1e-12:
        return ms, base

    def neg_eta(rv):
        rot = Rotation.from_rotvec(rv).as_matrix()
        return -float(facet_shrinking_factors(fs4, rot.T @ u).min())

    rng = np.random.default_rng(seed)
    best_rv, best = np.zeros(3), base
    starts = [np.zeros(3)] + [Rotation.random(random_state=rng).as_rotvec() for _ in range(restarts)]
    for x0 in starts:
        res = minimize(neg_eta, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if -res.fun > best:
            best, best_rv = -res.fun, res.x
    rot = Rotation.from_rotvec(best_rv).as_matrix()
    out = ms.rotated(rot)
    return out, shrinking_factor(out, xi)[0]


def noisy_povm_vector(direction, noise: NoiseMap) -> np.ndarray:
    """4D vector ``(Tr-part, Bloch-part)`` of the noisy ``+`` element."""
    plus, _ = apply_noise_map(direction, noise)
    return np.r_[plus.c0, plus.c]


def decompose_noisy_povm(ms: MeasurementSet, direction, noise: NoiseMap) -> np.ndarray:
    """Convex weights over the polytope vertices reproducing a noisy ``+`` element.

    Vertex order: ``+v_x`` (m), ``-v_x`` (m), then the trivial elements ``I`` and ``0``.
    """
    verts = np.vstack([
        np.c_[np.full(2 * ms.m, 0.5), ms.vertices() / 2],
        [[1.0, 0, 0, 0], [0.0, 0, 0, 0]],
    ])
    target = noisy_povm_vector(direction, noise)
    a_eq = np.vstack([verts.T, np.ones(len(verts))])
    b_eq = np.r_[target, 1.0]
    res = linprog(np.zeros(len(verts)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ValueError("noisy POVM lies outside the measurement polytope")
    return res.x
