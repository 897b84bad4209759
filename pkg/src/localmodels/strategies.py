"""Deterministic response strategies for binary measurements.

A strategy assigns an outcome ``+1`` or ``-1`` to each of ``m`` measurements;
a set of them is stored as an ``(n, m)`` int8 array.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

MAX_FULL_M = 24
DEFAULT_EXTENSION_CAP = 2_000_000
PRUNE_THRESHOLD = 1e-7


class ResourceError(RuntimeError):
    """A requested enumeration exceeds the configured size limits."""


class InconsistencyError(RuntimeError):
    """Revalidation on the full strategy set failed to reproduce the target value."""


@dataclass(frozen=True)
class StrategySet:
    outcomes: np.ndarray
    provenance: str = "full"
    witnesses: np.ndarray | None = None
    parent: "StrategySet | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        o = np.asarray(self.outcomes, dtype=np.int8)
        if o.ndim != 2 or len(o) == 0:
            raise ValueError("a strategy set needs a non-empty (n, m) outcome array")
        if not np.all(np.abs(o) == 1):
            raise ValueError("outcomes must be +1 or -1")
        o.setflags(write=False)
        object.__setattr__(self, "outcomes", o)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def m(self) -> int:
        return self.outcomes.shape[1]

    def __len__(self):
        return self.n

    def plus_indicator(self) -> np.ndarray:
        """``D(+|x)`` as an ``(n, m)`` 0/1 float array."""
        return (self.outcomes > 0).astype(float)

    def subset(self, idx, provenance: str) -> "StrategySet":
        idx = np.asarray(idx)
        w = None if self.witnesses is None else self.witnesses[idx]
        return StrategySet(self.outcomes[idx], provenance, w, self)

    def bitmasks(self) -> list[int]:
        """Bit ``x`` set iff the outcome of measurement ``x`` is ``+``."""
        weights = [1 << x for x in range(self.m)]
        return [sum(w for w, o in zip(weights, row) if o > 0) for row in self.outcomes.tolist()]

    @classmethod
    def from_bitmasks(cls, masks, m: int, provenance: str = "custom") -> "StrategySet":
        out = np.array([[1 if (int(k) >> x) & 1 else -1 for x in range(m)] for k in masks], np.int8)
        return cls(out, provenance)

    def to_json(self) -> dict:
        return {"m": self.m, "provenance": self.provenance, "bitmasks": self.bitmasks()}

    @classmethod
    def from_json(cls, data: dict) -> "StrategySet":
        return cls.from_bitmasks(data["bitmasks"], data["m"], data.get("provenance", "custom"))


def _unique_rows(a: np.ndarray) -> np.ndarray:
    _, idx = np.unique(a, axis=0, return_index=True)
    return np.sort(idx)


def enumerate_all(m: int) -> StrategySet:
    if m < 1:
        raise ValueError("need at least one measurement")
    if m > MAX_FULL_M:
        raise ResourceError(
            f"2^{m} strategies exceed the full-enumeration guard (m <= {MAX_FULL_M}); "
            "use sign_compatible or extend/prune selection instead"
        )
    k = np.arange(2**m, dtype=np.int64)[:, None]
    bits = (k >> np.arange(m)) & 1
    return StrategySet((2 * bits - 1).astype(np.int8), "full")


# ---------------------------------------------------------------------------
# arrangement cells

def _tangent_frame(p):
    a = np.eye(3)[np.argmin(np.abs(p))]
    e1 = np.cross(p, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(p, e1)


def _cells_at_vertex(p, grads, a_off, B, tol):
    """Sign patterns of the cells meeting at vertex ``p``.

    The zero sets are ``f_k(n) = a_off[k] + B[k] . n = 0`` restricted to the
    unit sphere.  Near a vertex the incident curves look like lines through
    ``p`` with normals ``grads``; the cells are the angular sectors between
    them, probed along each sector's bisector.
    """
    e1, e2 = _tangent_frame(p)
    vals = a_off + B @ p
    inc = np.flatnonzero(np.abs(vals) < tol)
    if len(inc) == 0:
        return [], []
    g = grads[inc] - np.outer(grads[inc] @ p, p)
    ang = np.arctan2(g @ e2, g @ e1) + np.pi / 2
    rays = np.sort(np.mod(np.r_[ang, ang + np.pi], 2 * np.pi))
    gaps = np.diff(np.r_[rays, rays[0] + 2 * np.pi])
    keep = gaps > 1e-12
    mids = (rays + gaps / 2)[keep]
    half = gaps[keep] / 2
    others = np.setdiff1d(np.arange(len(vals)), inc)
    slack = np.min(np.abs(vals[others]), initial=1.0)
    scale = np.max(np.linalg.norm(B, axis=1), initial=1.0)
    pats, wits = [], []
    for mid, h in zip(mids, half):
        w = np.cos(mid) * e1 + np.sin(mid) * e2
        delta = min(0.25 * slack / scale, 1e-3) * max(np.sin(h), 1e-6)
        for _ in range(8):
            n = p + delta * w
            n /= np.linalg.norm(n)
            f = a_off + B @ n
            if np.all(np.abs(f) > 0) and np.all(np.sign(f[others]) == np.sign(vals[others])):
                break
            delta /= 8
        pats.append(np.where(f > 0, 1, -1))
        wits.append(n)
    return pats, wits


def sign_patterns(directions, offsets=None, tol: float = 1e-12):
    """All sign vectors of ``offsets + directions . n`` over unit ``n``.

    Returns ``(patterns, witnesses)``.  With ``offsets`` omitted the curves are
    great circles and the result is closed under global flip.
    """
    B = np.atleast_2d(np.asarray(directions, dtype=float))
    m = len(B)
    a_off = np.zeros(m) if offsets is None else np.asarray(offsets, dtype=float)
    central = offsets is None
    seeds = [np.array([0.0, 0.0, 1.0]), np.array([0.3, -0.5, 0.81])]
    pats, wits = [], []

    def add(n):
        f = a_off + B @ n
        pats.append(np.where(f > 0, 1, -1))
        wits.append(n)

    for s in seeds:
        add(s / np.linalg.norm(s))

    norms = np.linalg.norm(B, axis=1)
    # step off every curve once: catches cells bounded by curves without vertices
    for k in range(m):
        bk = B[k] / norms[k]
        c = -a_off[k] / norms[k]
        if abs(c) >= 1:
            continue
        e1, _ = _tangent_frame(bk)
        on = c * bk + np.sqrt(1 - c * c) * e1
        for s in (1, -1):
            n = on + s * 1e-7 * bk
            add(n / np.linalg.norm(n))

    # vertices: pairwise intersections of the curves
    for i, j in itertools.combinations(range(m), 2):
        for p in _circle_intersections(B[i], a_off[i], B[j], a_off[j]):
            ps, ws = _cells_at_vertex(p, B, a_off, B, tol=1e-9)
            pats.extend(ps)
            wits.extend(ws)

    P = np.array(pats, dtype=np.int8)
    W = np.array(wits)
    if central:
        P, W = np.vstack([P, -P]), np.vstack([W, -W])
    idx = _unique_rows(P)
    return P[idx], W[idx]


def _circle_intersections(b1, a1, b2, a2):
    """Unit vectors ``n`` with ``a1 + b1.n = 0`` and ``a2 + b2.n = 0``."""
    c = np.cross(b1, b2)
    cc = c @ c
    if cc < 1e-24:
        return []
    # point on the intersection line of the two planes b.n = -a
    p0 = np.cross(-a1 * b2 + a2 * b1, c) / cc
    t2 = 1 - p0 @ p0
    if t2 < 0:
        return []
    t = np.sqrt(t2 / cc)
    return [p0 + t * c, p0 - t * c] if t > 0 else [p0]


def _fast_central_patterns(V):
    """Vectorized great-circle version of ``sign_patterns`` for larger ``m``."""
    m = len(V)
    i, j = np.triu_indices(m, 1)
    P = np.cross(V[i], V[j])
    P /= np.linalg.norm(P, axis=1)[:, None]
    # deduplicate vertices up to sign: each is processed once, flips added later
    flip = np.sign(P[np.arange(len(P)), np.argmax(np.abs(P), axis=1)])
    P = P * flip[:, None]
    key = np.round(P, 8)
    _, first = np.unique(key, axis=0, return_index=True)
    P = P[np.sort(first)]
    pats, wits = [], []
    zero = np.zeros(m)
    for p in P:
        ps, ws = _cells_at_vertex(p, V, zero, V, tol=1e-9)
        pats.extend(ps)
        wits.extend(ws)
    Pm, Wm = np.array(pats, np.int8), np.array(wits)
    Pm, Wm = np.vstack([Pm, -Pm]), np.vstack([Wm, -Wm])
    idx = _unique_rows(Pm)
    return Pm[idx], Wm[idx]


def sign_compatible(ms) -> StrategySet:
    """Strategies ``lambda_x = sign(v_x . n)`` for some unit ``n``, with witnesses."""
    V = ms.directions if hasattr(ms, "directions") else np.atleast_2d(ms)
    m = len(V)
    if m == 1:
        out = np.array([[1], [-1]], np.int8)
        return StrategySet(out, "sign-selected", np.array([V[0], -V[0]]))
    P, W = _fast_central_patterns(V)
    return StrategySet(P, "sign-selected", W)


def check_witnesses(ss: StrategySet, directions) -> bool:
    if ss.witnesses is None:
        return False
    s = ss.witnesses @ np.asarray(directions).T
    return bool(np.all(ss.outcomes * s > 0))


def sampled_sign_patterns(directions, n_samples: int = 1_000_000, seed: int = 0, chunk=100_000):
    """Monte Carlo cross-check: sign patterns hit by random unit vectors."""
    rng = np.random.default_rng(seed)
    V = np.asarray(directions)
    found = set()
    left = n_samples
    while left > 0:
        k = min(chunk, left)
        n = rng.normal(size=(k, 3))
        s = (n @ V.T > 0)
        packed = np.packbits(s, axis=1)
        found.update(map(bytes, packed))
        left -= k
    return len(found)


# ---------------------------------------------------------------------------
# pruning and extension

def prune_by_weight(
    ss: StrategySet,
    weights,
    target_value: float,
    revalidate,
    tol: float = 1e-6,
    threshold: float = PRUNE_THRESHOLD,
    start: int | None = None,
    resolution: int = 1,
) -> StrategySet:
    """Smallest weight-ordered prefix whose re-solve reproduces ``target_value``.

    ``revalidate(subset) -> value``.  Prefix sizes grow geometrically from
    ``start`` (default: the number of strategies above ``threshold * max``)
    until one succeeds, then bisection between the last failure and it down to
    ``resolution`` strategies.
    """
    w = np.asarray(weights, dtype=float)
    if len(w) != ss.n:
        raise ValueError("one weight per strategy required")
    order = np.argsort(-w, kind="stable")
    n_sig = int(np.sum(w >= threshold * max(w.max(), 0.0))) if w.max() > 0 else 1
    k = max(1, start if start is not None else n_sig)

    def ok(size):
        if not np.isfinite(tol):
            return True
        val = revalidate(ss.subset(np.sort(order[:size]), "weight-pruned"))
        return val >= target_value - tol

    lo = 0
    while not ok(k):
        if k >= ss.n:
            raise InconsistencyError("full strategy set fails revalidation")
        lo, k = k, min(ss.n, 2 * k)
    hi = k
    while hi - lo > max(1, resolution):
        mid = (lo + hi) // 2
        if mid > 0 and ok(mid):
            hi = mid
        else:
            lo = mid
    return ss.subset(np.sort(order[:hi]), "weight-pruned")


def extend(ss: StrategySet, old_m: int, new_m: int, cap: int = DEFAULT_EXTENSION_CAP) -> StrategySet:
    """All ways of appending outcomes for measurements ``old_m .. new_m-1``."""
    if ss.m != old_m:
        raise ValueError(f"strategies have length {ss.m}, expected {old_m}")
    if new_m < old_m:
        raise ValueError("new_m must not be smaller than old_m")
    extra = new_m - old_m
    if extra == 0:
        return ss
    count = ss.n * 2**extra
    if count > cap:
        raise ResourceError(f"extension would create {count} strategies (cap {cap})")
    tail = enumerate_all(extra).outcomes
    out = np.hstack([np.repeat(ss.outcomes, len(tail), axis=0), np.tile(tail, (ss.n, 1))])
    return StrategySet(out, ss.provenance, None, ss)
