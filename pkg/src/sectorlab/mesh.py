"""Triangulated planar domains with labelled boundary edges.

Built-in presets: unit square, L-shape, slit disc and the cubic cusp
``{0 < y < 1, |x| <= y^3}``.  Meshes round-trip through a small text format
(see :func:`dump_mesh`).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh2D",
    "MeshError",
    "PRESETS",
    "generate_mesh",
    "unit_square",
    "l_shape",
    "slit_disc",
    "cusp",
    "load_mesh",
    "dump_mesh",
]


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh2D:
    """Conforming triangulation.

    ``edges``/``labels`` list every boundary edge exactly once.  ``edge_values``
    carries an optional per-edge Robin coefficient (``nan`` when unset).
    ``slit`` lists node pairs ``(kept, duplicate)`` that sit at the same point
    on either side of a slit.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    labels: tuple
    edge_values: np.ndarray | None = None
    slit: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    name: str = "mesh"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        slit = np.asarray(self.slit, dtype=np.int64).reshape(-1, 2)
        vals = (
            np.full(len(edges), np.nan)
            if self.edge_values is None
            else np.asarray(self.edge_values, dtype=float).reshape(-1)
        )
        for arr in (nodes, tris, edges, slit, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "slit", slit)
        object.__setattr__(self, "edge_values", vals)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        self.validate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def h(self) -> float:
        """Longest triangle edge."""
        p = self.nodes[self.triangles]
        return float(np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)))

    @property
    def label_set(self) -> tuple:
        return tuple(sorted(set(self.labels)))

    def edges_with(self, labels) -> np.ndarray:
        labels = {labels} if isinstance(labels, str) else set(labels)
        return np.array([lab in labels for lab in self.labels], dtype=bool)

    def nodes_on(self, labels) -> np.ndarray:
        """Nodes incident to edges with the given labels (endpoints included)."""
        return np.unique(self.edges[self.edges_with(labels)])

    def validate(self) -> None:
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes:
            raise MeshError("triangle refers to a missing node")
        if np.any(self.areas <= 0):
            raise MeshError(f"{int(np.sum(self.areas <= 0))} triangle(s) not counter-clockwise with positive area")
        if len(self.labels) != len(self.edges) or len(self.edge_values) != len(self.edges):
            raise MeshError("edge label/value count does not match edge count")
        count = Counter()
        for t in self.triangles:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                count[(min(a, b), max(a, b))] += 1
        if any(c > 2 for c in count.values()):
            raise MeshError("edge shared by more than two triangles")
        boundary = {e for e, c in count.items() if c == 1}
        labelled = [(min(a, b), max(a, b)) for a, b in self.edges]
        if len(set(labelled)) != len(labelled):
            raise MeshError("boundary edge carries more than one label")
        missing = boundary - set(labelled)
        if missing:
            raise MeshError(f"unlabelled boundary edge(s), e.g. {sorted(missing)[0]}")
        extra = set(labelled) - boundary
        if extra:
            raise MeshError(f"labelled edge {sorted(extra)[0]} is not a boundary edge")
        if len(self.slit):
            if not np.allclose(self.nodes[self.slit[:, 0]], self.nodes[self.slit[:, 1]]):
                raise MeshError("slit pair nodes do not coincide")


def _triangles_ccw(nodes, tris):
    p = nodes[tris]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tris = tris.copy()
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _grid(n_x, n_y, x0=0.0, y0=0.0, hx=1.0, hy=1.0, keep=None):
    """Structured grid split along the (i,j)-(i+1,j+1) diagonal.

    ``keep(i, j)`` selects cells; unused nodes are dropped.  Returns nodes,
    triangles and the boundary edges with outward-normal labels.
    """
    idx = -np.ones((n_x + 1, n_y + 1), dtype=np.int64)
    cells = [(i, j) for i in range(n_x) for j in range(n_y) if keep is None or keep(i, j)]
    used = set()
    for i, j in cells:
        used.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})
    nodes = []
    for j in range(n_y + 1):
        for i in range(n_x + 1):
            if (i, j) in used:
                idx[i, j] = len(nodes)
                nodes.append((x0 + i * hx, y0 + j * hy))
    tris = []
    for i, j in cells:
        a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
        tris.append((a, b, c))
        tris.append((a, c, d))
    cellset = set(cells)
    edges, labels = [], []
    for i, j in cells:
        if (i, j - 1) not in cellset:
            edges.append((idx[i, j], idx[i + 1, j]))
            labels.append("bottom")
        if (i + 1, j) not in cellset:
            edges.append((idx[i + 1, j], idx[i + 1, j + 1]))
            labels.append("right")
        if (i, j + 1) not in cellset:
            edges.append((idx[i + 1, j + 1], idx[i, j + 1]))
            labels.append("top")
        if (i - 1, j) not in cellset:
            edges.append((idx[i, j + 1], idx[i, j]))
            labels.append("left")
    return np.array(nodes), np.array(tris), np.array(edges), labels


def unit_square(n: int) -> Mesh2D:
    """``n x n`` cells, each cut into two right isosceles triangles (non-obtuse)."""
    nodes, tris, edges, labels = _grid(n, n, hx=1.0 / n, hy=1.0 / n)
    return Mesh2D(nodes, tris, edges, labels, name="square")


def l_shape(n: int) -> Mesh2D:
    """``[0,1]^2`` minus ``(1/2,1] x (1/2,1]`` on a grid of ``2n x 2n`` cells.

    Edges are labelled by outward normal (``bottom``, ``right``, ``top``, ``left``).
    """
    m = 2 * n
    nodes, tris, edges, labels = _grid(m, m, hx=1.0 / m, hy=1.0 / m, keep=lambda i, j: i < n or j < n)
    return Mesh2D(nodes, tris, edges, labels, name="lshape")


def _stitch(inner, outer, inner_ang, outer_ang):
    """Triangulate the strip between two open angular node chains."""
    tris = []
    i = j = 0
    while i < len(inner) - 1 or j < len(outer) - 1:
        advance_outer = i == len(inner) - 1 or (
            j < len(outer) - 1 and outer_ang[j + 1] <= inner_ang[i + 1]
        )
        if advance_outer:
            tris.append((inner[i], outer[j], outer[j + 1]))
            j += 1
        else:
            tris.append((inner[i], outer[j], inner[i + 1]))
            i += 1
    return tris


def slit_disc(n: int) -> Mesh2D:
    """Unit disc cut along ``[0, 1) x {0}``.

    ``n`` rings; ring ``k`` carries ``4k`` angular intervals.  Nodes on the slit
    exist twice (angle 0 and angle 2 pi) except the centre and ``(1, 0)``.
    Boundary labels: ``outer``, ``slit_upper`` and ``slit_lower``.
    """
    if n < 1:
        raise MeshError("resolution must be >= 1")
    nodes = [(0.0, 0.0)]
    rings, angles = [[0]], [np.array([0.0])]
    for k in range(1, n + 1):
        r = k / n
        m = 4 * k
        ang = 2 * np.pi * np.arange(m + 1) / m
        ids = list(range(len(nodes), len(nodes) + m + 1))
        nodes.extend((r * np.cos(a), r * np.sin(a)) for a in ang)
        rings.append(ids)
        angles.append(ang)
    nodes = np.array(nodes)
    nodes[[ring[-1] for ring in rings[1:]], 1] = 0.0
    tris = []
    first = rings[1]
    tris.extend((0, first[j], first[j + 1]) for j in range(len(first) - 1))
    for k in range(2, n + 1):
        tris.extend(_stitch(rings[k - 1], rings[k], angles[k - 1], angles[k]))
    tris = np.array(tris)
    # (1, 0) is a single node: the outer copy at angle 2 pi is merged into the one at angle 0
    outer = rings[n]
    tris[tris == outer[-1]] = outer[0]
    keep = np.ones(len(nodes), dtype=bool)
    keep[outer[-1]] = False
    remap = np.cumsum(keep) - 1
    nodes = nodes[keep]
    tris = remap[tris]
    edges, labels = [], []
    ring_ids = [remap[np.array(r)] for r in rings]
    ring_ids[n][-1] = ring_ids[n][0]
    for j in range(len(ring_ids[n]) - 1):
        edges.append((ring_ids[n][j], ring_ids[n][j + 1]))
        labels.append("outer")
    for k in range(1, n + 1):
        edges.append((ring_ids[k - 1][0], ring_ids[k][0]))
        labels.append("slit_upper")
        edges.append((ring_ids[k][-1], ring_ids[k - 1][-1]))
        labels.append("slit_lower")
    slit = [(ring_ids[k][0], ring_ids[k][-1]) for k in range(1, n)]
    tris = _triangles_ccw(nodes, tris)
    return Mesh2D(nodes, tris, edges, labels, slit=np.array(slit, dtype=np.int64), name="slit_disc")


def cusp(n: int, columns: int = 1, grading: float = 1.0) -> Mesh2D:
    """The cubic cusp ``{0 < y < 1, |x| <= y^3}``.

    ``n`` rows at heights ``(k/n)^grading``, each with ``2*columns + 1`` nodes
    spread across ``[-y^3, y^3]``; the tip is a single node.  Labels: ``left``,
    ``right`` (the two cubic arcs) and ``top``.
    """
    if n < 1 or columns < 1:
        raise MeshError("resolution must be >= 1")
    ys = (np.arange(n + 1) / n) ** grading
    w = 2 * columns
    nodes = [(0.0, 0.0)]
    rows = [[0] * (w + 1)]
    for y in ys[1:]:
        xs = np.linspace(-(y**3), y**3, w + 1)
        rows.append(list(range(len(nodes), len(nodes) + w + 1)))
        nodes.extend((x, y) for x in xs)
    tris = []
    for k in range(1, n + 1):
        lo, hi = rows[k - 1], rows[k]
        for c in range(w):
            if k == 1:
                tris.append((0, hi[c], hi[c + 1]))
            else:
                tris.append((lo[c], lo[c + 1], hi[c + 1]))
                tris.append((lo[c], hi[c + 1], hi[c]))
    edges, labels = [], []
    for k in range(1, n + 1):
        edges.append((rows[k][0], rows[k - 1][0]))
        labels.append("left")
        edges.append((rows[k - 1][-1], rows[k][-1]))
        labels.append("right")
    top = rows[n]
    for c in range(w):
        edges.append((top[c + 1], top[c]))
        labels.append("top")
    nodes = np.array(nodes)
    tris = _triangles_ccw(nodes, np.array(tris))
    return Mesh2D(nodes, tris, edges, labels, name="cusp")


PRESETS = {
    "square": unit_square,
    "lshape": l_shape,
    "slit_disc": slit_disc,
    "cusp": cusp,
}


def generate_mesh(name: str, resolution: int, **options) -> Mesh2D:
    """Build a preset mesh by name."""
    if resolution < 1:
        raise MeshError("resolution must be >= 1")
    try:
        build = PRESETS[name]
    except KeyError:
        raise MeshError(f"unknown domain {name!r}; choose from {sorted(PRESETS)}") from None
    return build(int(resolution), **options)


def dump_mesh(mesh: Mesh2D) -> str:
    """Text form: ``nodes N`` / ``triangles M`` / ``edges K`` / optional ``slit P`` sections."""
    out = [f"# {mesh.name}", f"nodes {mesh.n_nodes}"]
    out += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.nodes]
    out.append(f"triangles {len(mesh.triangles)}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"edges {len(mesh.edges)}")
    for (a, b), lab, val in zip(mesh.edges, mesh.labels, mesh.edge_values):
        out.append(f"{a} {b} {lab}" + ("" if np.isnan(val) else f" {float(val)!r}"))
    if len(mesh.slit):
        out.append(f"slit {len(mesh.slit)}")
        out += [f"{a} {b}" for a, b in mesh.slit]
    return "\n".join(out) + "\n"


def load_mesh(source) -> Mesh2D:
    if isinstance(source, Path) or ("\n" not in str(source) and Path(str(source)).is_file()):
        text = Path(source).read_text()
    else:
        text = str(source)
    name = "mesh"
    lines = []
    for raw in text.splitlines():
        if raw.startswith("#") and not lines:
            name = raw[1:].strip() or name
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    sections = {}
    pos = 0
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 2 or head[0] not in {"nodes", "triangles", "edges", "slit"}:
            raise MeshError(f"expected a section header, got {lines[pos]!r}")
        count = int(head[1])
        body = lines[pos + 1 : pos + 1 + count]
        if len(body) != count:
            raise MeshError(f"section {head[0]} declares {count} lines, found {len(body)}")
        sections[head[0]] = [b.split() for b in body]
        pos += 1 + count
    for req in ("nodes", "triangles", "edges"):
        if req not in sections:
            raise MeshError(f"missing section {req!r}")
    try:
        nodes = np.array([[float(v) for v in row] for row in sections["nodes"]])
        tris = np.array([[int(v) for v in row] for row in sections["triangles"]])
        edges = np.array([[int(row[0]), int(row[1])] for row in sections["edges"]])
        labels = [row[2] for row in sections["edges"]]
        values = np.array([float(row[3]) if len(row) > 3 else np.nan for row in sections["edges"]])
        slit = np.array([[int(v) for v in row] for row in sections.get("slit", [])], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh text: {exc}") from None
    return Mesh2D(nodes, tris, edges, labels, values, slit.reshape(-1, 2), name=name)
