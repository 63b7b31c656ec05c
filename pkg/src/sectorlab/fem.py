"""P1 finite-element assembly of the divergence-form operator with mixed,
Robin and dynamic boundary terms."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh2D
from .sector_math import CoefficientField, SectorAngle, rotation, split

__all__ = [
    "FormDomainFlavor",
    "BoundaryPartition",
    "AssembledSystem",
    "PartitionError",
    "assemble",
    "dynamic_block",
    "local_stiffness",
    "stiffness_matrix",
    "edge_mass",
    "coefficient_preset",
    "COEFFICIENT_PRESETS",
]


class PartitionError(ValueError):
    pass


class FormDomainFlavor(enum.Enum):
    """Which form domain a slit mesh models.

    ``SUPPORT_AWAY`` keeps the two sides of a slit independent;
    ``SMOOTH_CLOSURE`` glues them, so discrete functions are continuous
    across the slit.  Meshes without a slit give the same system either way.
    """

    SUPPORT_AWAY = "support_away"
    SMOOTH_CLOSURE = "smooth_closure"


@dataclass(frozen=True)
class BoundaryPartition:
    """Dirichlet labels, Robin coefficients per label and dynamic labels.

    Labels absent from ``robin`` get ``b = 0`` unless the mesh edge carries
    its own value.
    """

    dirichlet: frozenset = frozenset()
    robin: Mapping[str, float] = field(default_factory=dict)
    dynamic: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", frozenset(self.dirichlet))
        object.__setattr__(self, "dynamic", frozenset(self.dynamic))
        object.__setattr__(self, "robin", dict(self.robin))
        if any(b < 0 or not math.isfinite(b) for b in self.robin.values()):
            raise PartitionError("Robin coefficient must be finite and nonnegative")
        if self.dirichlet & self.dynamic:
            raise PartitionError(f"dynamic labels overlap Dirichlet: {sorted(self.dirichlet & self.dynamic)}")
        if self.dirichlet & set(self.robin):
            raise PartitionError("Robin coefficient given on a Dirichlet label")

    @classmethod
    def uniform_robin(cls, mesh: Mesh2D, b: float, dirichlet=(), dynamic=()) -> "BoundaryPartition":
        rest = [lab for lab in mesh.label_set if lab not in set(dirichlet)]
        return cls(frozenset(dirichlet), {lab: b for lab in rest}, frozenset(dynamic))

    def check_against(self, mesh: Mesh2D) -> None:
        known = set(mesh.label_set)
        for group in (self.dirichlet, self.dynamic, set(self.robin)):
            unknown = set(group) - known
            if unknown:
                raise PartitionError(f"unknown boundary label(s) {sorted(unknown)}; mesh has {sorted(known)}")

    def edge_b(self, mesh: Mesh2D) -> np.ndarray:
        b = np.array([self.robin.get(lab, np.nan) for lab in mesh.labels], dtype=float)
        b = np.where(np.isnan(b), mesh.edge_values, b)
        b = np.where(np.isnan(b), 0.0, b)
        b[mesh.edges_with(self.dirichlet)] = 0.0
        if np.any(b < 0):
            raise PartitionError("negative Robin coefficient on a mesh edge")
        return b


def local_stiffness(vertices, a) -> np.ndarray:
    """``|T| grad(phi_i)^T a grad(phi_j)`` for one triangle."""
    grads, area = _gradients(np.asarray(vertices, dtype=float)[None])
    a = np.asarray(a, dtype=float)
    return area[0] * grads[0] @ a @ grads[0].T


def edge_mass(length: float, b: float = 1.0) -> np.ndarray:
    """Exact P1 mass of a boundary edge weighted by a constant ``b``."""
    return b * length / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _gradients(p):
    """Barycentric gradients ``(m, 3, 2)`` and areas of triangles ``p`` (m, 3, 2)."""
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    g = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / (2 * area)
        g[:, i, 1] = (x[:, k] - x[:, j]) / (2 * area)
    return g, area


@dataclass
class AssembledSystem:
    """Global matrices over DOFs plus their restrictions to free DOFs.

    ``K`` is the stiffness of ``a``; ``M_robin`` the ``b``-weighted boundary
    mass, so the form matrix is ``K + M_robin``.  ``dof_of_node`` maps mesh
    nodes to DOFs (identity except for glued slit nodes).
    """

    mesh: Mesh2D
    flavor: FormDomainFlavor
    partition: BoundaryPartition
    field_name: str
    dof_of_node: np.ndarray
    K: sp.csr_matrix
    M: sp.csr_matrix
    M_robin: sp.csr_matrix
    M_S: sp.csr_matrix
    free: np.ndarray
    areas: np.ndarray
    grads: np.ndarray
    coefficients: np.ndarray
    theta2: SectorAngle
    eta: float

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def form(self) -> sp.csr_matrix:
        return (self.K + self.M_robin).tocsr()

    @property
    def lumped(self) -> np.ndarray:
        return np.asarray(self.M.sum(axis=1)).ravel()

    def restrict(self, A) -> sp.csr_matrix:
        return A.tocsr()[self.free][:, self.free]

    @property
    def K_free(self) -> sp.csr_matrix:
        return self.restrict(self.form)

    @property
    def M_free(self) -> sp.csr_matrix:
        return self.restrict(self.M)

    @property
    def W_free(self) -> np.ndarray:
        return self.lumped[self.free]

    @property
    def has_dirichlet(self) -> bool:
        return self.n_free < self.n_dofs

    def node_values(self, u_free) -> np.ndarray:
        """Extend a free-DOF vector by zero and read it back at mesh nodes."""
        u_free = np.asarray(u_free)
        full = np.zeros(self.n_dofs, dtype=u_free.dtype)
        full[self.free] = u_free
        return full[self.dof_of_node]

    def element_values(self, u_free):
        """Nodal values per triangle ``(m, 3)`` and element gradients ``(m, 2)``."""
        u = self.node_values(u_free)[self.mesh.triangles]
        return u, np.einsum("mi,mik->mk", u, self.grads)


def _scatter(rows, cols, vals, n):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def _boundary_mass(mesh: Mesh2D, dof, weights, n) -> sp.csr_matrix:
    e = dof[mesh.edges]
    local = (weights * mesh.edge_lengths / 6.0)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])
    rows = np.repeat(e[:, :, None], 2, axis=2)
    cols = np.repeat(e[:, None, :], 2, axis=1)
    return _scatter(rows, cols, local, n)


def stiffness_matrix(mesh: Mesh2D, coefficients, dof=None) -> sp.csr_matrix:
    """Stiffness for element-wise coefficients ``(m, 2, 2)`` (no ellipticity check).

    Symmetric and antisymmetric parts are assembled apart, so the result is
    exactly additive under ``a = s + t``, exactly symmetric for symmetric
    ``a`` and exactly antisymmetric for antisymmetric ``a``.
    """
    dof = np.arange(mesh.n_nodes) if dof is None else dof
    n = int(dof.max()) + 1
    a = np.broadcast_to(np.asarray(coefficients, dtype=float), (len(mesh.triangles), 2, 2))
    grads, areas = _gradients(mesh.nodes[mesh.triangles])
    t = dof[mesh.triangles]
    rows = np.repeat(t[:, :, None], 3, axis=2)
    cols = np.repeat(t[:, None, :], 3, axis=1)
    sym, skew = split(a)
    ys = areas[:, None, None] * np.einsum("mik,mkl,mjl->mij", grads, sym, grads)
    yt = areas[:, None, None] * np.einsum("mik,mkl,mjl->mij", grads, skew, grads)
    K_sym = _scatter(rows, cols, 0.5 * (ys + np.swapaxes(ys, 1, 2)), n)
    K_skew = _scatter(rows, cols, 0.5 * (yt - np.swapaxes(yt, 1, 2)), n)
    return (K_sym + K_skew).tocsr()


def assemble(
    mesh: Mesh2D,
    field: CoefficientField,
    partition: BoundaryPartition | None = None,
    flavor: FormDomainFlavor = FormDomainFlavor.SUPPORT_AWAY,
) -> AssembledSystem:
    """Stiffness, mass, Robin and dynamic boundary masses.

    Coefficients are sampled at centroids, which with P1 gradients makes the
    one-point stiffness exact for element-constant ``a``.  Dirichlet DOFs are
    all nodes touching a Dirichlet edge, endpoints included.
    """
    partition = partition or BoundaryPartition()
    partition.check_against(mesh)
    if len(mesh.slit) and flavor is FormDomainFlavor.SMOOTH_CLOSURE:
        node_to_node = np.arange(mesh.n_nodes)
        node_to_node[mesh.slit[:, 1]] = mesh.slit[:, 0]
        keep = np.ones(mesh.n_nodes, dtype=bool)
        keep[mesh.slit[:, 1]] = False
        compact = np.cumsum(keep) - 1
        dof = compact[node_to_node]
    else:
        dof = np.arange(mesh.n_nodes)
    n = int(dof.max()) + 1

    sample = field.sample(mesh.centroids)
    a = sample.values
    grads, areas = _gradients(mesh.nodes[mesh.triangles])
    t = dof[mesh.triangles]
    rows = np.repeat(t[:, :, None], 3, axis=2)
    cols = np.repeat(t[:, None, :], 3, axis=1)
    K = stiffness_matrix(mesh, a, dof)
    m_loc = areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    M = _scatter(rows, cols, m_loc, n)

    b = partition.edge_b(mesh)
    M_robin = _boundary_mass(mesh, dof, b, n)
    s_mask = mesh.edges_with(partition.dynamic).astype(float)
    M_S = _boundary_mass(mesh, dof, s_mask, n)

    dirichlet_nodes = mesh.nodes_on(partition.dirichlet)
    blocked = np.zeros(n, dtype=bool)
    blocked[dof[dirichlet_nodes]] = True
    free = np.flatnonzero(~blocked)
    return AssembledSystem(
        mesh,
        flavor,
        partition,
        field.name,
        dof,
        K,
        M,
        M_robin,
        M_S,
        free,
        areas,
        grads,
        a,
        sample.theta2,
        sample.eta,
    )


def dynamic_block(system: AssembledSystem):
    """Free-DOF form matrix and the enlarged mass ``M + M_S``."""
    M_total = system.restrict(system.M + system.M_S)
    return system.K_free, M_total


# ---------------------------------------------------------------------------
# coefficient presets


def _varying(points):
    x, y = points[..., 0], points[..., 1]
    out = np.empty(points.shape[:-1] + (2, 2))
    kappa = 1.0 + 0.5 * np.sin(np.pi * (x + y))
    out[..., 0, 0] = 1.5 + 0.5 * np.sin(2 * np.pi * x)
    out[..., 1, 1] = 1.2 + 0.4 * np.cos(2 * np.pi * y)
    off = 0.15 * np.cos(np.pi * y)
    out[..., 0, 1] = off + kappa
    out[..., 1, 0] = off - kappa
    return out


COEFFICIENT_PRESETS = ("identity", "rot0.5", "rot1", "rot2", "varying")


def coefficient_preset(name: str) -> CoefficientField:
    """``identity``, ``rot<kappa>`` (identity plus kappa times the rotation generator) or ``varying``."""
    if name == "identity":
        return CoefficientField.constant_field(np.eye(2), "identity")
    if name.startswith("rot"):
        try:
            kappa = float(name[3:])
        except ValueError:
            raise ValueError(f"bad rotation preset {name!r}") from None
        return CoefficientField.constant_field(rotation(kappa), name)
    if name == "varying":
        return CoefficientField(_varying, "varying")
    raise ValueError(f"unknown coefficient preset {name!r}; choose from {COEFFICIENT_PRESETS}")
