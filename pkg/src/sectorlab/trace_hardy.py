"""Hardy quotients, averaged boundary limits and vanishing-trace diagnostics.

Functions are P1 nodal vectors on a :class:`~sectorlab.mesh.Mesh2D`.  The
membership experiment compares three discrete proxies for "u vanishes on D"
across a mesh family: a bounded Hardy quotient, vanishing ball averages at
points of D, and approximability by functions cut off near D.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla
import shapely
from shapely.geometry import Point, Polygon

from .fem import assemble, coefficient_preset
from .geometry import PolylineSet, distance_to_set
from .mesh import Mesh2D

__all__ = [
    "HardyRecord",
    "AveragedLimitRecord",
    "MembershipVerdict",
    "hardy_quotient",
    "averaged_boundary_limit",
    "cutoff_infimum",
    "membership_experiment",
    "FUNCTION_CATALOG",
    "load_corpus",
    "RATIO_THRESHOLD",
]

# barycentric weights of the degree-2 interior rule; every point is strictly inside its triangle
_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])

# geometric mean of 1 (bounded) and sqrt(2) (h^{-1/2} growth)
RATIO_THRESHOLD = 2**0.25


def _quadrature(mesh: Mesh2D, u):
    """Points, weights and P1 values of ``u`` for the interior rule."""
    tri = mesh.triangles
    pts = np.einsum("qk,tkd->tqd", _BARY, mesh.nodes[tri]).reshape(-1, 2)
    vals = np.einsum("qk,tk->tq", _BARY, np.asarray(u)[tri]).reshape(-1)
    wts = np.repeat(mesh.areas / 3, 3)
    return pts, wts, vals


@dataclass
class HardyRecord:
    h: float
    p: float
    quotient: float
    growth_ratio: float | None = None


def hardy_quotient(u, D: PolylineSet, p: float, mesh: Mesh2D) -> HardyRecord:
    """``||u / dist_D||_p`` by the 3-point interior rule."""
    if D.is_empty:
        raise ValueError("D must be nonempty")
    pts, wts, vals = _quadrature(mesh, u)
    dist = distance_to_set(pts, D)
    if np.any(dist <= 0):
        raise ValueError("a quadrature point lies on D")
    q = float(np.sum(wts * np.abs(vals / dist) ** p) ** (1 / p))
    return HardyRecord(mesh.h, float(p), q)


def _lp_norm(u, p: float, mesh: Mesh2D) -> float:
    _, wts, vals = _quadrature(mesh, u)
    return float(np.sum(wts * np.abs(vals) ** p) ** (1 / p))


# ---------------------------------------------------------------------------
# averaged boundary limits


@dataclass
class AveragedLimitRecord:
    point: tuple
    radii: np.ndarray
    averages: np.ndarray
    limit: float
    resolved: bool


def _integrate_abs_on(poly, mesh: Mesh2D, tri_index: int, u) -> float:
    """``int |u|`` over a convex piece of one triangle (fan + interior rule)."""
    if poly.is_empty or poly.area == 0:
        return 0.0
    a, b, c = mesh.nodes[mesh.triangles[tri_index]]
    T = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    ua, ub, uc = np.asarray(u)[mesh.triangles[tri_index]]
    total = 0.0
    for piece in getattr(poly, "geoms", [poly]):
        if piece.geom_type != "Polygon" or piece.area == 0:
            continue
        ring = np.asarray(piece.exterior.coords)[:-1]
        for i in range(1, len(ring) - 1):
            sub = ring[[0, i, i + 1]]
            e1, e2 = sub[1] - sub[0], sub[2] - sub[0]
            area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
            q = _BARY @ sub
            lam = np.linalg.solve(T, (q - a).T).T
            vals = ua + lam[:, 0] * (ub - ua) + lam[:, 1] * (uc - ua)
            total += area * np.mean(np.abs(vals))
    return total


def averaged_boundary_limit(u, x, radii, mesh: Mesh2D, disc_vertices: int = 512) -> AveragedLimitRecord:
    """``A_r = |B_r|^{-1} int_{B_r cap Omega} |u|`` and its order-1 extrapolation to ``r = 0``.

    The disc is a regular ``disc_vertices``-gon and ``|B_r|`` is its area, so a
    half-disc of a constant gives exactly half.  Radii below ``2h`` are kept
    but flag the record as unresolved.
    """
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if len(radii) < 2 or np.any(radii <= 0) or np.any(np.diff(radii) == 0):
        raise ValueError("need at least two distinct positive radii")
    x = np.asarray(x, dtype=float)
    tris = [Polygon(mesh.nodes[t]) for t in mesh.triangles]
    tree = shapely.STRtree(tris)
    averages = []
    for r in radii:
        disc = Point(x).buffer(r, quad_segs=disc_vertices // 4)
        total = 0.0
        for i in tree.query(disc):
            total += _integrate_abs_on(tris[i].intersection(disc), mesh, int(i), u)
        averages.append(total / disc.area)
    averages = np.array(averages)
    r1, r2 = radii[-1], radii[-2]
    a1, a2 = averages[-1], averages[-2]
    limit = float((r2 * a1 - r1 * a2) / (r2 - r1))
    return AveragedLimitRecord(tuple(float(c) for c in x), radii, averages, limit, bool(radii[-1] >= 2 * mesh.h))


# ---------------------------------------------------------------------------
# cut-off approximation


def cutoff_infimum(u, D: PolylineSet, mesh: Mesh2D, epsilons, p: float = 2.0) -> np.ndarray:
    """Distance from ``u`` to nodal functions vanishing where ``dist_D < eps``.

    The candidate is the ``H^1``-orthogonal projection onto the constrained
    space (exact infimum at ``p = 2``); for other ``p`` its ``W^{1,p}`` error
    is an upper bound for the infimum.
    """
    u = np.asarray(u, dtype=float)
    sys = assemble(mesh, coefficient_preset("identity"))
    G = (sys.K + sys.M).tocsr()
    d_nodes = distance_to_set(mesh.nodes, D)
    out = []
    for eps in epsilons:
        keep = np.flatnonzero(d_nodes >= eps)
        v = np.zeros_like(u)
        if len(keep):
            Gff = G[keep][:, keep].tocsc()
            v[keep] = spla.spsolve(Gff, (G @ u)[keep])
        out.append(_w1p_norm(u - v, p, mesh, sys))
    return np.array(out)


def _w1p_norm(e, p: float, mesh: Mesh2D, sys=None) -> float:
    if p == 2:
        sys = sys or assemble(mesh, coefficient_preset("identity"))
        return float(math.sqrt(max(e @ ((sys.K + sys.M) @ e), 0.0)))
    grads = sys.grads if sys is not None else assemble(mesh, coefficient_preset("identity")).grads
    g = np.einsum("tkd,tk->td", grads, e[mesh.triangles])
    grad_part = np.sum(mesh.areas * np.linalg.norm(g, axis=1) ** p)
    return float((grad_part + _lp_norm(e, p, mesh) ** p) ** (1 / p))


# ---------------------------------------------------------------------------
# membership experiment


@dataclass
class MembershipVerdict:
    name: str
    hardy: list
    limits: list
    cutoff: list
    hardy_bounded: bool
    limits_vanish: bool
    approximable: bool
    expected: bool | None = None
    notes: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return self.hardy_bounded == self.limits_vanish == self.approximable

    @property
    def matches_expected(self) -> bool | None:
        if self.expected is None:
            return None
        return self.consistent and self.hardy_bounded == self.expected

    def row(self) -> dict:
        return {
            "function": self.name,
            "hardy_ratio": self.hardy[-1].growth_ratio,
            "hardy_quotient": self.hardy[-1].quotient,
            "max_abs_limit": max(abs(r.limit) for r in self.limits),
            "cutoff_infimum": self.cutoff[-1],
            "hardy_bounded": self.hardy_bounded,
            "limits_vanish": self.limits_vanish,
            "approximable": self.approximable,
            "consistent": self.consistent,
            "expected": self.expected,
        }


def _nodal(u, mesh):
    return np.asarray(u(mesh.nodes[:, 0], mesh.nodes[:, 1]) if callable(u) else u, dtype=float)


def membership_experiment(
    u: Callable,
    D: PolylineSet,
    meshes,
    p: float = 2.0,
    sample_points=None,
    name: str = "u",
    expected: bool | None = None,
    limit_tol: float = 0.05,
) -> MembershipVerdict:
    """Three verdicts on whether ``u`` has vanishing trace on ``D``.

    ``u`` is a callable ``(x, y) -> values`` interpolated on each mesh of the
    family (coarse to fine, at least three).

    * Hardy-bounded: the last refinement ratio of the quotient is below
      :data:`RATIO_THRESHOLD`.
    * Limits vanish: on the finest mesh, every sampled point of ``D`` has an
      extrapolated average within ``limit_tol * max|u|`` of zero.
    * Approximable: the cut-off distance on the finest mesh is below 5% of
      ``||u||_{1,p}``, or it shrinks under refinement at least by the factor
      ``1 / RATIO_THRESHOLD``.  A function with nonzero trace keeps a
      distance that converges to a positive constant.
    """
    meshes = list(meshes)
    if len(meshes) < 3:
        raise ValueError("membership needs at least three meshes")
    hardy = []
    cutoff = []
    for mesh in meshes:
        uh = _nodal(u, mesh)
        rec = hardy_quotient(uh, D, p, mesh)
        if hardy:
            prev = hardy[-1].quotient
            rec.growth_ratio = rec.quotient / prev if prev > 0 else (1.0 if rec.quotient == 0 else math.inf)
        hardy.append(rec)
        eps = np.geomspace(4 * mesh.h, mesh.h / 8, 6)
        cutoff.append(float(np.min(cutoff_infimum(uh, D, mesh, eps, p))))
    fine = meshes[-1]
    uh = _nodal(u, fine)
    scale = float(np.max(np.abs(uh)))
    if sample_points is None:
        sample_points = D.point_at(np.linspace(0.2, 0.8, 5) * D.length) if D.length > 0 else D.vertices
    radii = 2 * fine.h * np.array([4.0, 2.0, 1.0])
    limits = [averaged_boundary_limit(uh, x, radii, fine) for x in np.atleast_2d(sample_points)]
    notes = []
    if D.length == 0:
        notes.append("D has zero length: outside the regularity hypothesis, verdicts are not predicted")
    norm_u = _w1p_norm(uh, p, fine)
    ratio = cutoff[-1] / cutoff[-2] if cutoff[-2] > 0 else 0.0
    return MembershipVerdict(
        name=name,
        hardy=hardy,
        limits=limits,
        cutoff=cutoff,
        hardy_bounded=bool(hardy[-1].growth_ratio < RATIO_THRESHOLD),
        limits_vanish=bool(all(abs(r.limit) <= limit_tol * scale for r in limits)),
        approximable=bool(cutoff[-1] <= 0.05 * norm_u or ratio <= 1 / RATIO_THRESHOLD),
        expected=expected,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# function catalog and corpus


def _smoothstep(x):
    return 3 * x**2 - 2 * x**3


FUNCTION_CATALOG: dict[str, Callable] = {
    "one": lambda x, y: np.ones_like(x),
    "x": lambda x, y: x,
    "x_times_1_minus_y": lambda x, y: x * (1 - y),
    "smoothstep_x": lambda x, y: _smoothstep(x),
    "sin_pi_x": lambda x, y: np.sin(np.pi * x),
    "strip_quarter": lambda x, y: np.maximum(x - 0.25, 0.0) ** 2,
    "one_plus_y": lambda x, y: 1 + y,
    "cos_pi_x": lambda x, y: np.cos(np.pi * x),
    "y": lambda x, y: y,
}


def load_corpus(text: str | None = None) -> list:
    """Parse ``name expected`` lines (``positive``/``negative``, ``#`` comments).

    Without ``text`` the corpus shipped with the package is read.
    """
    if text is None:
        text = resources.files("sectorlab").joinpath("data/hardy_corpus.txt").read_text()
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("positive", "negative"):
            raise ValueError(f"line {lineno}: expected '<name> positive|negative'")
        if parts[0] not in FUNCTION_CATALOG:
            raise ValueError(f"line {lineno}: unknown function {parts[0]!r}")
        entries.append((parts[0], parts[1] == "positive"))
    return entries
