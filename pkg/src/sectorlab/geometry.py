"""Regular planar curves: Hausdorff measure of ball intersections, dyadic cells,
regular mantles and collars.

Every set handled here is a finite union of straight segments in the plane.
Subsets of a reference curve are described by closed arclength intervals on
that curve (:class:`ArcSet`); this is what makes containment checks exact.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "PolylineSet",
    "ArcSet",
    "RegularityReport",
    "ChristTree",
    "ChristReport",
    "Mantle",
    "MantleReport",
    "Collar",
    "NotRegularError",
    "check_regularity",
    "christ_decompose",
    "verify_christ_properties",
    "regular_mantle",
    "check_mantle",
    "collar_extension",
    "distance_to_set",
    "DistanceField",
    "segment_distance",
    "load_polyline",
    "dump_polyline",
    "segment_set",
    "square_boundary",
    "circle",
    "koch_curve",
]


class NotRegularError(ValueError):
    """The set failed the lower Ahlfors-regularity estimate at some ``(x, r)``."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# polylines


@dataclass(frozen=True)
class PolylineSet:
    """Finite union of planar segments, stored as an ``(m, 2, 2)`` array.

    Segments are ordered; the arclength parametrisation runs through them in
    order.  ``closed`` records whether the last segment ends where the first
    begins.  Zero-length segments are allowed so that finite point sets can be
    represented (they carry no length).
    """

    segments: np.ndarray
    closed: bool = False

    def __post_init__(self):
        seg = np.asarray(self.segments, dtype=float).reshape(-1, 2, 2)
        seg.setflags(write=False)
        object.__setattr__(self, "segments", seg)
        lengths = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        lengths.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "arclength", cum)

    @classmethod
    def from_vertices(cls, vertices, closed: bool = False) -> "PolylineSet":
        v = np.asarray(vertices, dtype=float).reshape(-1, 2)
        if closed:
            if np.allclose(v[0], v[-1]):
                v = v[:-1]
            v = np.vstack([v, v[:1]])
        if len(v) == 1:
            v = np.vstack([v, v])
        return cls(np.stack([v[:-1], v[1:]], axis=1), closed)

    @classmethod
    def from_components(cls, components) -> "PolylineSet":
        segs = [PolylineSet.from_vertices(c).segments for c in components if len(c)]
        if not segs:
            return cls(np.zeros((0, 2, 2)))
        return cls(np.concatenate(segs))

    @classmethod
    def from_points(cls, points) -> "PolylineSet":
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(np.stack([p, p], axis=1))

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @property
    def is_empty(self) -> bool:
        return len(self.segments) == 0

    @property
    def vertices(self) -> np.ndarray:
        return np.vstack([self.segments[:, 0], self.segments[-1:, 1]])

    def point_at(self, s) -> np.ndarray:
        """Points at arclength ``s`` (vectorised)."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        idx = np.clip(np.searchsorted(self.arclength, s, side="right") - 1, 0, len(self.segments) - 1)
        seg = self.segments[idx]
        lens = self.lengths[idx]
        tau = np.where(lens > 0, (s - self.arclength[idx]) / np.where(lens > 0, lens, 1.0), 0.0)
        return seg[..., 0, :] + tau[..., None] * (seg[..., 1, :] - seg[..., 0, :])

    def sub_arc(self, s0: float, s1: float) -> np.ndarray:
        """Vertices of the piece between arclengths ``s0 <= s1``."""
        inner = self.arclength[(self.arclength > s0) & (self.arclength < s1)]
        pts = np.concatenate([[s0], inner, [s1]])
        return self.point_at(pts)

    def sub_polyline(self, arcs) -> "PolylineSet":
        """Realise arclength intervals as a polyline, dropping degenerate pieces."""
        pieces = [self.sub_arc(a, b) for a, b in np.asarray(arcs).reshape(-1, 2) if b > a]
        return PolylineSet.from_components(pieces)

    def clipped_length(self, center, radius: float) -> float:
        """``H_1(E intersect B(center, radius))`` computed exactly segment by segment."""
        lo, hi = _disc_parameters(self.segments, np.asarray(center, dtype=float), radius)
        return float(np.sum(np.maximum(hi - lo, 0.0) * self.lengths))

    def disc_arcs(self, center, radius: float) -> np.ndarray:
        """Arclength intervals of the part of the curve inside the open disc."""
        lo, hi = _disc_parameters(self.segments, np.asarray(center, dtype=float), radius)
        keep = hi > lo
        base = self.arclength[:-1][keep]
        lens = self.lengths[keep]
        return np.stack([base + lo[keep] * lens, base + hi[keep] * lens], axis=1)

    def locate(self, points, tol: float = 1e-9) -> np.ndarray:
        """Arclength of points lying on the curve (first hit along the order)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points))
        for k, x in enumerate(points):
            d, tau = _point_segment(x, self.segments)
            i = int(np.argmax(d <= tol + d.min()))
            if d[i] > tol:
                raise ValueError(f"point {tuple(x)} is not on the curve (distance {d[i]:.3e})")
            out[k] = self.arclength[i] + tau[i] * self.lengths[i]
        return out

    def distance(self, points) -> np.ndarray:
        return distance_to_set(points, self)

    def is_simple(self, tol: float = 1e-12) -> bool:
        """No two non-adjacent segments meet."""
        m = len(self.segments)
        for i in range(m):
            for j in range(i + 1, m):
                adjacent = j == i + 1 or (self.closed and i == 0 and j == m - 1)
                if adjacent:
                    continue
                if segment_distance(self.segments[i], self.segments[j]) <= tol:
                    return False
        return True


def _disc_parameters(segments, center, radius):
    """Parameter interval [lo, hi] of each segment inside the disc (empty when hi <= lo)."""
    p0 = segments[:, 0]
    d = segments[:, 1] - p0
    f = p0 - center
    a = np.einsum("ij,ij->i", d, d)
    b = 2 * np.einsum("ij,ij->i", f, d)
    c = np.einsum("ij,ij->i", f, f) - radius * radius
    disc = b * b - 4 * a * c
    ok = (a > 0) & (disc > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(a > 0, a, 1.0)
    t1 = (-b - sq) / (2 * safe_a)
    t2 = (-b + sq) / (2 * safe_a)
    lo = np.where(ok, np.clip(t1, 0, 1), 0.0)
    hi = np.where(ok, np.clip(t2, 0, 1), 0.0)
    return lo, hi


def _point_segment(x, segments):
    p0 = segments[:, 0]
    d = segments[:, 1] - p0
    dd = np.einsum("ij,ij->i", d, d)
    tau = np.where(dd > 0, np.einsum("ij,ij->i", x - p0, d) / np.where(dd > 0, dd, 1.0), 0.0)
    tau = np.clip(tau, 0.0, 1.0)
    proj = p0 + tau[:, None] * d
    return np.linalg.norm(x - proj, axis=1), tau


def distance_to_set(points, D: PolylineSet) -> np.ndarray:
    """Exact Euclidean distance from each point to the union of segments of ``D``."""
    if D.is_empty:
        raise ValueError("distance to an empty set is undefined")
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    p0 = D.segments[:, 0]
    d = D.segments[:, 1] - p0
    dd = np.einsum("ij,ij->i", d, d)
    out = np.empty(len(pts))
    chunk = max(1, 2_000_000 // max(len(p0), 1))
    for start in range(0, len(pts), chunk):
        x = pts[start : start + chunk, None, :]
        rel = x - p0[None]
        tau = np.einsum("nij,ij->ni", rel, d) / np.where(dd > 0, dd, 1.0)
        tau = np.where(dd > 0, np.clip(tau, 0.0, 1.0), 0.0)
        diff = rel - tau[..., None] * d[None]
        out[start : start + chunk] = np.sqrt(np.min(np.einsum("nij,nij->ni", diff, diff), axis=1))
    return out.reshape(shape)


class DistanceField:
    """Callable ``x -> dist(x, D)`` for a fixed nonempty polyline set ``D``."""

    def __init__(self, D: PolylineSet):
        if D.is_empty:
            raise ValueError("distance to an empty set is undefined")
        self.D = D

    def __call__(self, points) -> np.ndarray:
        return distance_to_set(points, self.D)


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segment_distance(s, t) -> float:
    """Distance between two closed segments (0 when they intersect)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    o1, o2 = _orient(s[0], s[1], t[0]), _orient(s[0], s[1], t[1])
    o3, o4 = _orient(t[0], t[1], s[0]), _orient(t[0], t[1], s[1])
    if o1 * o2 < 0 and o3 * o4 < 0:
        return 0.0
    cands = [
        _point_segment(s[0], t[None])[0][0],
        _point_segment(s[1], t[None])[0][0],
        _point_segment(t[0], s[None])[0][0],
        _point_segment(t[1], s[None])[0][0],
    ]
    return float(min(cands))


def set_distance(A: PolylineSet, B: PolylineSet) -> float:
    """``dist(A, B)`` as the minimum over segment pairs."""
    if A.is_empty or B.is_empty:
        return math.inf
    best = math.inf
    for s in A.segments:
        for t in B.segments:
            best = min(best, segment_distance(s, t))
    return best


# ---------------------------------------------------------------------------
# arclength subsets


class ArcSet:
    """Finite union of closed arclength intervals on a reference curve.

    Points are degenerate intervals ``[s, s]``.  Intervals are kept merged and
    sorted.
    """

    def __init__(self, intervals=()):
        arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
        if np.any(arr[:, 1] < arr[:, 0]):
            raise ValueError("interval with end before start")
        self.intervals = _merge(arr)

    def __repr__(self):
        return f"ArcSet({self.intervals.tolist()})"

    def __eq__(self, other):
        return isinstance(other, ArcSet) and np.array_equal(self.intervals, other.intervals)

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    @property
    def measure(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def union(self, other: "ArcSet") -> "ArcSet":
        return ArcSet(np.vstack([self.intervals, other.intervals]))

    def contains_set(self, other: "ArcSet") -> bool:
        """Exact inclusion ``other <= self``."""
        for a, b in other.intervals:
            k = np.searchsorted(self.intervals[:, 0], a, side="right") - 1
            if k < 0 or self.intervals[k, 1] < b:
                return False
        return True

    def meets_closed(self, a: float, b: float) -> bool:
        """Whether the closed interval ``[a, b]`` intersects the set."""
        if self.is_empty:
            return False
        return bool(np.any((self.intervals[:, 0] <= b) & (self.intervals[:, 1] >= a)))

    def subtract_open(self, holes) -> "ArcSet":
        """Remove open intervals; the result stays closed."""
        out = [tuple(iv) for iv in self.intervals]
        for ha, hb in np.asarray(holes, dtype=float).reshape(-1, 2):
            nxt = []
            for a, b in out:
                if hb <= a or ha >= b:
                    nxt.append((a, b))
                    continue
                if a <= ha:
                    nxt.append((a, ha))
                if hb <= b:
                    nxt.append((hb, b))
            out = nxt
        return ArcSet(out)

    def complement(self, total: float) -> "ArcSet":
        """Closure of ``[0, total]`` minus the set (it has no isolated points)."""
        rest = ArcSet([[0.0, total]]).subtract_open(self.intervals).intervals
        return ArcSet(rest[rest[:, 1] > rest[:, 0]])


def _merge(arr):
    if len(arr) == 0:
        return np.zeros((0, 2))
    arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
    merged = [list(arr[0])]
    for a, b in arr[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return np.array(merged, dtype=float)


# ---------------------------------------------------------------------------
# regularity


@dataclass
class RegularityReport:
    N: int
    c_lower: float
    c_upper: float
    radii: list
    samples: list
    witness_lower: tuple
    witness_upper: tuple

    @property
    def passes(self) -> bool:
        return self.c_lower > 0 and self.c_lower <= self.c_upper

    def to_json(self) -> str:
        return json.dumps(
            {
                "N": self.N,
                "c_lower": self.c_lower,
                "c_upper": self.c_upper,
                "n_radii": len(self.radii),
                "n_samples": len(self.samples),
                "witness_lower": list(self.witness_lower),
                "witness_upper": list(self.witness_upper),
            },
            indent=2,
            sort_keys=True,
        )


def check_regularity(E: PolylineSet, N: int, radii, samples) -> RegularityReport:
    """Extreme ratios ``H_N(E intersect B_r(x)) / r^N`` over the given ``(x, r)`` grid.

    ``H_1`` is the exact clipped polyline length.  Radii must satisfy ``r <= 1``.
    """
    radii = [float(r) for r in np.atleast_1d(radii)]
    samples = np.atleast_2d(np.asarray(samples, dtype=float)) if len(samples) else np.zeros((0, 2))
    if not radii or len(samples) == 0:
        raise ValueError("need at least one radius and one sample point")
    if max(radii) > 1.0 or min(radii) <= 0:
        raise ValueError("radii must lie in (0, 1]")
    ratios = np.empty((len(samples), len(radii)))
    for i, x in enumerate(samples):
        for j, r in enumerate(radii):
            ratios[i, j] = E.clipped_length(x, r) / r**N
    lo = np.unravel_index(np.argmin(ratios), ratios.shape)
    hi = np.unravel_index(np.argmax(ratios), ratios.shape)
    return RegularityReport(
        N,
        float(ratios[lo]),
        float(ratios[hi]),
        radii,
        samples.tolist(),
        (tuple(samples[lo[0]]), radii[lo[1]]),
        (tuple(samples[hi[0]]), radii[hi[1]]),
    )


def sample_on(E: PolylineSet, n: int, rng=None) -> np.ndarray:
    """Points on ``E``: all vertices plus ``n`` uniform arclength samples."""
    rng = np.random.default_rng(0) if rng is None else rng
    s = rng.uniform(0, E.length, size=n)
    return np.vstack([E.vertices, E.point_at(s)])


# ---------------------------------------------------------------------------
# dyadic cells


@dataclass
class Generation:
    """Cells of one generation; cell ``j`` is the image of ``[j*size, (j+1)*size)``."""

    k: int
    size: float
    starts: np.ndarray
    ends: np.ndarray
    centers: np.ndarray
    parents: np.ndarray
    diameters: np.ndarray
    inner_radii: np.ndarray

    def __len__(self):
        return len(self.starts)


@dataclass
class ChristTree:
    curve: PolylineSet
    delta: float
    branching: int
    a0: float
    c1: float
    generations: list

    @property
    def max_generation(self) -> int:
        return len(self.generations) - 1

    def cell_arcs(self, k: int, j) -> np.ndarray:
        g = self.generations[k]
        j = np.atleast_1d(j)
        return np.stack([g.starts[j], g.ends[j]], axis=1)


def _branching(delta: float) -> int:
    m = round(1.0 / delta)
    if not 0 < delta < 1 or abs(m * delta - 1.0) > 1e-12 or m < 2:
        raise ValueError(f"delta must be 1/m for an integer m >= 2, got {delta!r}")
    return m


def _inner_radius(curve: PolylineSet, z, s0, s1) -> float:
    """``dist(z, curve minus [s0, s1))``; infinite when the complement is empty."""
    L = curve.length
    pieces = []
    if curve.closed:
        if s0 <= 0 and s1 >= L:
            return math.inf
        pieces.append(curve.sub_arc(s1, L))
        pieces.append(curve.sub_arc(0.0, s0))
    else:
        if s0 > 0:
            pieces.append(curve.sub_arc(0.0, s0))
        pieces.append(curve.sub_arc(s1, L))
    comp = PolylineSet.from_components(pieces)
    return float(distance_to_set(z[None], comp)[0])


def christ_decompose(Lam: PolylineSet, delta: float, max_generation: int, check: bool = True) -> ChristTree:
    """Dyadic arclength cells on a rectifiable curve.

    Generation ``k`` consists of the images of ``[j L delta^k, (j+1) L delta^k)``
    with ``L`` the total length, so ``1/delta`` must be an integer for the
    generations to nest.  ``c1 = L`` because a chord never exceeds its arc;
    ``a0`` is the largest value for which the inner-ball property holds on all
    stored generations.
    """
    m = _branching(delta)
    L = Lam.length
    if L <= 0:
        raise ValueError("curve has zero length")
    if check:
        radii = np.geomspace(min(1.0, L) * 1e-3, min(1.0, L), 7)
        rep = check_regularity(Lam, 1, radii, sample_on(Lam, 64))
        if rep.c_lower <= 1e-12:
            raise NotRegularError(
                f"curve fails the lower regularity estimate at x={rep.witness_lower[0]}, "
                f"r={rep.witness_lower[1]}",
                rep.witness_lower,
            )
    gens = []
    # endpoints come from one integer grid so shared parent/child endpoints are identical floats
    finest = m**max_generation
    for k in range(max_generation + 1):
        count = m**k
        size = L / count
        j = np.arange(count)
        marks = L * (np.arange(count + 1) * (finest // count)) / finest
        starts, ends = marks[:-1], marks[1:]
        centers = Lam.point_at(0.5 * (starts + ends))
        diam = np.empty(count)
        inner = np.empty(count)
        for i in range(count):
            verts = Lam.sub_arc(starts[i], ends[i])
            diam[i] = float(np.max(pdist(verts))) if len(verts) > 1 else 0.0
            inner[i] = _inner_radius(Lam, centers[i], starts[i], ends[i])
        parents = j // m if k else np.full(count, -1)
        gens.append(Generation(k, size, starts, ends, centers, parents, diam, inner))
    ratios = [g.inner_radii / delta**g.k for g in gens]
    finite = np.concatenate([r[np.isfinite(r)] for r in ratios])
    a0 = float(np.min(finite)) if len(finite) else 0.5 * L
    return ChristTree(Lam, float(delta), m, a0, L, gens)


@dataclass
class ChristReport:
    coverage: bool
    nesting: bool
    disjoint: bool
    diameter: bool
    inner_ball: bool
    measure_bound: bool
    c1: float
    c1_measured: float
    a0: float
    c_lambda: float
    c_admissible: float
    uncovered_measure: float
    cells_checked: int
    failures: list = field(default_factory=list)

    @property
    def passes(self) -> bool:
        return all(
            [self.coverage, self.nesting, self.disjoint, self.diameter, self.inner_ball, self.measure_bound]
        )

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passes"] = self.passes
        return d


def verify_christ_properties(tree: ChristTree, c_lambda: float | None = None) -> ChristReport:
    """Exhaustive check of the five cell properties and the cell-measure lower bound.

    Nesting, disjointness and coverage are checked on integer cell indices;
    diameters and inner balls geometrically.  ``c_lambda`` is the lower
    regularity constant of the curve (sampled when not given).
    """
    Lam = tree.curve
    m = tree.branching
    L = Lam.length
    failures = []
    coverage = nesting = disjoint = diameter = inner_ball = measure = True
    c1_meas = 0.0
    if c_lambda is None:
        radii = np.geomspace(min(1.0, L) * 1e-3, min(1.0, L), 9)
        c_lambda = check_regularity(Lam, 1, radii, sample_on(Lam, 128)).c_lower
    cells = 0
    for g in tree.generations:
        count = m**g.k
        cells += len(g)
        idx = np.arange(len(g))
        # (i), (iii): the integer intervals [j, j+1) tile [0, m^k)
        if len(g) != count or g.ends[-1] != L or g.starts[0] != 0.0:
            coverage = False
            failures.append(("coverage", g.k))
        if np.any(g.starts[1:] != g.ends[:-1]) or np.any(g.ends <= g.starts):
            disjoint = False
            failures.append(("disjoint", g.k))
        # (ii): child j sits inside parent j // m
        if g.k > 0:
            if np.any(g.parents != idx // m):
                nesting = False
                failures.append(("nesting", g.k))
            parent = tree.generations[g.k - 1]
            p = g.parents
            if np.any(g.starts < parent.starts[p]) or np.any(g.ends > parent.ends[p]):
                nesting = False
                failures.append(("nesting-geometry", g.k))
        # (iv)
        scale = tree.delta**g.k
        c1_meas = max(c1_meas, float(np.max(g.diameters)) / scale)
        bad = np.flatnonzero(g.diameters > tree.c1 * scale * (1 + 1e-12))
        if len(bad):
            diameter = False
            failures.append(("diameter", g.k, bad[:5].tolist()))
        # (v): the curve inside the open inner ball is an arc of the cell
        rad = tree.a0 * scale
        for j in idx:
            for a, b in Lam.disc_arcs(g.centers[j], rad):
                if b - a <= 1e-15 * L:
                    continue
                if a < g.starts[j] - 1e-12 * L or b > g.ends[j] + 1e-12 * L:
                    if not (Lam.closed and g.k == 0):
                        inner_ball = False
                        failures.append(("inner_ball", g.k, int(j)))
                        break
        # measure lower bound for a0 delta^k <= 1
        if rad <= 1.0:
            cell_measure = g.ends - g.starts
            if np.any(cell_measure < c_lambda * rad * (1 - 1e-12)):
                measure = False
                failures.append(("measure", g.k))
    admissible = min(
        float(np.min((g.ends - g.starts) / (tree.a0 * tree.delta**g.k))) for g in tree.generations
    )
    return ChristReport(
        coverage,
        nesting,
        disjoint,
        diameter,
        inner_ball,
        measure,
        tree.c1,
        c1_meas,
        tree.a0,
        float(c_lambda),
        admissible,
        0.0,
        cells,
        failures,
    )


# ---------------------------------------------------------------------------
# mantle and collar


@dataclass
class Mantle:
    """Enlargement of ``xi`` by every generation-``generation`` cell whose closure meets it."""

    xi: ArcSet
    arcs: ArcSet
    generation: int
    cells: np.ndarray
    polyline: PolylineSet


def mantle_generation(tree: ChristTree, rho: float) -> int:
    target = min(rho, 1.0)
    k = 0
    while tree.c1 * tree.delta**k > target:
        k += 1
    return k


def regular_mantle(xi: ArcSet, rho: float, tree: ChristTree) -> Mantle:
    """Add to ``xi`` the cells of generation ``M`` meeting it, ``M`` minimal with ``c1 delta^M <= min(rho, 1)``.

    Cells are tested in their closed form so that points of ``xi`` on a cell
    boundary (including the far endpoint of an open curve) are absorbed.
    """
    if not isinstance(xi, ArcSet):
        xi = ArcSet(xi)
    if xi.is_empty:
        raise ValueError("cannot build a mantle of the empty set")
    if rho <= 0:
        raise ValueError("rho must be positive")
    L = tree.curve.length
    if xi.intervals[0, 0] < 0 or xi.intervals[-1, 1] > L:
        raise ValueError("xi is not contained in the curve")
    M = mantle_generation(tree, rho)
    if M > tree.max_generation:
        raise ValueError(f"tree too shallow: generation {M} required, {tree.max_generation} stored")
    g = tree.generations[M]
    hit = np.array([xi.meets_closed(a, b) for a, b in zip(g.starts, g.ends)], dtype=bool)
    cells = np.flatnonzero(hit)
    arcs = xi.union(ArcSet(np.stack([g.starts[cells], g.ends[cells]], axis=1)))
    return Mantle(xi, arcs, M, cells, tree.curve.sub_polyline(arcs.intervals))


@dataclass
class MantleReport:
    contains_xi: bool
    inside_lambda: bool
    rho_bound: bool
    sampled_excess: float
    c_lower_small: float
    c_lower_all: float
    bound_small: float
    bound_all: float

    @property
    def regular(self) -> bool:
        return self.c_lower_small >= 0.9 * self.bound_small and self.c_lower_all >= 0.9 * self.bound_all

    @property
    def passes(self) -> bool:
        return self.contains_xi and self.inside_lambda and self.rho_bound and self.regular


def check_mantle(mantle: Mantle, rho: float, tree: ChristTree, c_lambda: float, rng=None, n_samples: int = 60) -> MantleReport:
    """Postconditions of :func:`regular_mantle`.

    Containment and the ``rho`` bound are exact: every added cell meets ``xi``
    and has diameter at most ``c1 delta^M <= rho``.  The sampled distance
    excess is reported as a cross-check.  Lower regularity is sampled
    separately below the cell scale ``c1 delta^M``, where the constant
    ``c (a0 delta / c1)`` applies, and over all ``r <= 1``, where the weaker
    ``c min((a0 delta^M), (a0 delta / c1))`` applies.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    curve = tree.curve
    L = curve.length
    contains = mantle.arcs.contains_set(mantle.xi)
    inside = mantle.arcs.intervals[0, 0] >= 0 and mantle.arcs.intervals[-1, 1] <= L
    g = tree.generations[mantle.generation]
    diam_ok = bool(np.all(g.diameters[mantle.cells] <= rho * (1 + 1e-12)))
    meets = all(mantle.xi.meets_closed(g.starts[j], g.ends[j]) for j in mantle.cells)
    rho_bound = diam_ok and meets

    xi_set = _arcs_as_points_and_curves(curve, mantle.xi)
    extra = ArcSet(mantle.arcs.intervals).subtract_open(mantle.xi.intervals)
    excess = 0.0
    if not extra.is_empty and extra.measure > 0:
        s = np.concatenate([np.linspace(a, b, 33) for a, b in extra.intervals])
        excess = float(np.max(distance_to_set(curve.point_at(s), xi_set)) - rho)

    E = mantle.polyline
    scale = tree.c1 * tree.delta**mantle.generation
    if E.is_empty:
        return MantleReport(contains, inside, rho_bound, excess, 0.0, 0.0, 0.0, 0.0)
    s_samples = np.concatenate(
        [
            rng.uniform(a, b, size=max(2, n_samples // len(mantle.arcs.intervals)))
            for a, b in mantle.arcs.intervals
        ]
        + [mantle.arcs.intervals.ravel()]
    )
    pts = curve.point_at(s_samples)
    small = np.geomspace(scale * 1e-3, min(scale, 1.0), 6)
    wide = np.geomspace(scale * 1e-3, 1.0, 10)
    c_small = check_regularity(E, 1, small, pts).c_lower
    c_all = check_regularity(E, 1, wide, pts).c_lower
    b_small = c_lambda * tree.a0 * tree.delta / tree.c1
    b_all = c_lambda * min(tree.a0 * tree.delta**mantle.generation, tree.a0 * tree.delta / tree.c1)
    return MantleReport(contains, inside, rho_bound, excess, c_small, c_all, b_small, b_all)


def _arcs_as_points_and_curves(curve: PolylineSet, arcs: ArcSet) -> PolylineSet:
    comps = []
    for a, b in arcs.intervals:
        comps.append(curve.sub_arc(a, b) if b > a else curve.point_at(np.array([a, a])))
    return PolylineSet.from_components(comps)


@dataclass
class Collar:
    C: ArcSet
    upsilon: ArcSet
    polyline: PolylineSet
    D: ArcSet
    epsilon: float
    dist_to_D: float


def _as_arcs(boundary: PolylineSet, D) -> ArcSet:
    if isinstance(D, ArcSet):
        return D
    if isinstance(D, PolylineSet):
        if D.is_empty:
            return ArcSet()
        arcs = []
        for seg in D.segments:
            a, b = boundary.locate(seg)
            if boundary.closed and abs(b - a) > 0.5 * boundary.length and min(a, b) == 0.0:
                a, b = (max(a, b), boundary.length)
            arcs.append(sorted((a, b)))
        return ArcSet(arcs)
    return ArcSet(D)


def collar_extension(boundary: PolylineSet, D, epsilon: float, delta: float = 0.5) -> Collar:
    """Regular set on ``boundary`` staying away from ``D``.

    ``C`` is the part of ``boundary minus D`` at distance at least
    ``2 epsilon`` from the relative boundary of ``D``; the result is the closed
    regular mantle of ``C`` at scale ``epsilon``.
    """
    L = boundary.length
    Darcs = _as_arcs(boundary, D)
    if Darcs.is_empty:
        full = ArcSet([[0.0, L]])
        return Collar(full, full, boundary, Darcs, epsilon, math.inf)
    if Darcs.intervals[0, 0] <= 0 and Darcs.intervals[-1, 1] >= L and len(Darcs.intervals) == 1:
        empty = ArcSet()
        return Collar(empty, empty, PolylineSet(np.zeros((0, 2, 2))), Darcs, epsilon, math.inf)
    ends = []
    for a, b in Darcs.intervals:
        for s in (a, b):
            if boundary.closed and s in (0.0, L):
                other = L if s == 0.0 else 0.0
                if any(x <= other <= y for x, y in Darcs.intervals):
                    continue
            elif not boundary.closed and s in (0.0, L):
                continue
            ends.append(s)
    C = Darcs.complement(L)
    for e in boundary.point_at(np.array(ends)):
        C = C.subtract_open(boundary.disc_arcs(e, 2 * epsilon))
    C = ArcSet([iv for iv in C.intervals if iv[1] > iv[0]])
    if C.is_empty:
        warnings.warn(f"epsilon={epsilon} leaves no boundary at distance 2*epsilon from the edge of D")
        empty = ArcSet()
        return Collar(C, empty, PolylineSet(np.zeros((0, 2, 2))), Darcs, epsilon, math.inf)
    depth = 0
    while L * delta**depth > min(epsilon, 1.0):
        depth += 1
    tree = christ_decompose(boundary, delta, depth, check=False)
    mantle = regular_mantle(C, epsilon, tree)
    D_poly = boundary.sub_polyline(Darcs.intervals)
    return Collar(C, mantle.arcs, mantle.polyline, Darcs, epsilon, set_distance(mantle.polyline, D_poly))


# ---------------------------------------------------------------------------
# presets and text format


def segment_set(a=(0.0, 0.0), b=(1.0, 0.0)) -> PolylineSet:
    return PolylineSet.from_vertices([a, b])


def square_boundary(side: float = 1.0) -> PolylineSet:
    return PolylineSet.from_vertices([(0, 0), (side, 0), (side, side), (0, side)], closed=True)


def circle(radius: float = 1.0, n: int = 1024, center=(0.0, 0.0)) -> PolylineSet:
    ang = 2 * np.pi * np.arange(n) / n
    v = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    return PolylineSet.from_vertices(v, closed=True)


def koch_curve(level: int, closed: bool = False) -> PolylineSet:
    """Koch prefractal on ``[0, 1]`` (or the snowflake when ``closed``)."""
    rot = np.array([[0.5, -math.sqrt(3) / 2], [math.sqrt(3) / 2, 0.5]])

    def refine(pts):
        out = [pts[0]]
        for p, q in zip(pts[:-1], pts[1:]):
            d = (q - p) / 3
            a, b = p + d, p + 2 * d
            out.extend([a, a + rot @ d, b, q])
        return np.array(out)

    if closed:
        h = math.sqrt(3) / 2
        pts = np.array([(0.0, 0.0), (0.5, h), (1.0, 0.0), (0.0, 0.0)])
    else:
        pts = np.array([(0.0, 0.0), (1.0, 0.0)])
    for _ in range(level):
        pts = refine(pts)
    return PolylineSet.from_vertices(pts, closed=closed)


def _read_source(source) -> str:
    """Accept a path or the text itself."""
    if isinstance(source, Path):
        return source.read_text()
    source = str(source)
    if "\n" not in source and Path(source).is_file():
        return Path(source).read_text()
    return source


def load_polyline(source) -> PolylineSet:
    """Read the vertex-list format.

    One ``x y`` pair per line, ``#`` starts a comment, a blank line separates
    components and a line ``closed`` closes the current component.
    """
    text = _read_source(source)
    comps, cur, closed_flags, closed = [], [], [], False
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if cur:
                comps.append(cur)
                closed_flags.append(closed)
                cur, closed = [], False
            continue
        if line.lower() == "closed":
            closed = True
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed vertex line: {raw!r}")
        cur.append((float(parts[0]), float(parts[1])))
    if cur:
        comps.append(cur)
        closed_flags.append(closed)
    if not comps:
        raise ValueError("no vertices")
    if len(comps) == 1:
        return PolylineSet.from_vertices(comps[0], closed=closed_flags[0])
    return PolylineSet(
        np.concatenate([PolylineSet.from_vertices(c, closed=f).segments for c, f in zip(comps, closed_flags)])
    )


def dump_polyline(E: PolylineSet) -> str:
    """Inverse of :func:`load_polyline`; components are split where segments do not chain."""
    lines = []
    seg = E.segments
    start = 0
    for i in range(1, len(seg) + 1):
        if i == len(seg) or not np.array_equal(seg[i, 0], seg[i - 1, 1]):
            comp = seg[start:i]
            verts = np.vstack([comp[:, 0], comp[-1:, 1]])
            is_closed = len(comp) > 2 and np.array_equal(verts[0], verts[-1])
            if is_closed:
                verts = verts[:-1]
            if lines:
                lines.append("")
            lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in verts)
            if is_closed:
                lines.append("closed")
            start = i
    return "\n".join(lines) + "\n"
