"""Propagators ``exp(-z A_h)``: contraction, positivity and ultracontractivity."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .operators import DENSE_LIMIT, DiscreteOperator

__all__ = [
    "SemigroupSnapshot",
    "UltraReport",
    "ContractionRow",
    "PositivityRow",
    "snapshot",
    "evolve",
    "contraction_scan",
    "positivity_check",
    "lumped_propagator",
    "kernel_sup",
    "ultracontractivity_fit",
    "default_t_grid",
    "local_h",
    "sub_markov_structure",
    "SUP_NORM_CONVENTION",
]

SUP_NORM_CONVENTION = (
    "||T(t)||_{1->inf} = max_ij |P_ij| / w_j with P = exp(-t W^{-1} K) and W the lumped mass, "
    "so that P_ij / w_j approximates the heat kernel k_t(x_i, x_j)"
)


def _check_time(z: complex):
    if complex(z).real < 0:
        raise ValueError(f"Re z must be >= 0, got {z}")


def _dense_propagator(op: DiscreteOperator, z: complex) -> np.ndarray:
    """``exp(-z B)`` in M-orthonormal coordinates."""
    if z == 0:
        return np.eye(op.n)
    return sla.expm(-complex(z) * op.B) if complex(z).imag else sla.expm(-float(complex(z).real) * op.B)


@dataclass
class SemigroupSnapshot:
    z: complex
    propagator: np.ndarray
    norms: dict = field(default_factory=dict)


def snapshot(op: DiscreteOperator, z: complex, ps=(2.0,)) -> SemigroupSnapshot:
    """Dense ``exp(-z A_h)`` (in nodal coordinates) with its M-weighted 2-norm.

    For ``p`` other than 2 the norms of the lumped propagator are recorded.
    """
    _check_time(z)
    E = _dense_propagator(op, z)
    if z == 0:
        return SemigroupSnapshot(0j, E, {float(p): 1.0 for p in ps})
    L = op.cholesky
    P = sla.solve_triangular(L.T, E @ L.T, lower=False)
    norms = {}
    for p in ps:
        if p == 2:
            norms[2.0] = float(np.linalg.norm(E, 2))
        else:
            Q = lumped_propagator(op, z)
            norms[float(p)] = _lumped_norm(Q, op.weights, p)
    return SemigroupSnapshot(complex(z), P, norms)


def evolve(op: DiscreteOperator, z: complex, u0, tol: float = 1e-10) -> np.ndarray:
    """``exp(-z A_h) u0``.

    Dense scaling-and-squaring up to :data:`DENSE_LIMIT` DOFs; above that
    Crank-Nicolson with the number of steps doubled until two successive
    results agree to ``tol`` (relative).
    """
    _check_time(z)
    u0 = np.asarray(u0)
    if z == 0:
        return u0.copy()
    if op.n <= DENSE_LIMIT:
        L = op.cholesky
        E = _dense_propagator(op, z)
        return sla.solve_triangular(L.T, E @ (L.T @ u0), lower=False)
    return _crank_nicolson(op, complex(z), u0, tol)


def _crank_nicolson(op, z, u0, tol, start_steps=32, max_steps=1 << 14):
    # Two implicit Euler half-steps damp the stiff modes CN leaves undamped;
    # Richardson on successive halvings lifts the order so tol is reachable.
    K = op.K_sparse.tocsc()
    M = op.M_sparse.tocsc()
    u_start = np.asarray(u0).astype(complex)

    def run(steps):
        tau = z / steps
        half = spla.splu((M + 0.5 * tau * K).astype(complex).tocsc())
        u = u_start
        for _ in range(2):
            u = half.solve(M @ u)
        rhs = (M - 0.5 * tau * K).astype(complex)
        for _ in range(steps - 1):
            u = half.solve(rhs @ u)
        return u

    steps = start_steps
    prev = run(steps)
    prev_extrap = None
    while steps < max_steps:
        steps *= 2
        cur = run(steps)
        extrap = (4 * cur - prev) / 3
        if prev_extrap is not None:
            if np.linalg.norm(extrap - prev_extrap) <= tol * max(np.linalg.norm(extrap), 1e-300):
                return extrap if np.iscomplexobj(u0) or z.imag else extrap.real
        prev, prev_extrap = cur, extrap
    raise RuntimeError("Crank-Nicolson step halving did not converge")


# ---------------------------------------------------------------------------
# lumped propagators and sub-Markov structure


def lumped_propagator(op: DiscreteOperator, z: complex) -> np.ndarray:
    """``exp(-z W^{-1} K)`` with the lumped mass ``W``."""
    _check_time(z)
    K = op.K
    G = K / op.weights[:, None]
    if z == 0:
        return np.eye(op.n)
    if complex(z).imag == 0:
        return sla.expm(-float(complex(z).real) * G)
    return sla.expm(-complex(z) * G)


def _lumped_norm(P, w, p) -> float:
    """Weighted ``l^1`` or ``l^inf`` operator norm of ``P``."""
    A = np.abs(P)
    if p == math.inf:
        return float(np.max(A.sum(axis=1)))
    if p == 1:
        return float(np.max((w @ A) / w))
    raise ValueError("lumped norms are computed for p in {1, inf} only")


def sub_markov_structure(op: DiscreteOperator, tol: float = 1e-12) -> bool:
    """Off-diagonal ``K <= 0`` with nonnegative row and column sums.

    Under this sign pattern the lumped propagator is positive and contracts in
    both weighted ``l^1`` and ``l^inf``.
    """
    K = op.K
    scale = float(np.max(np.abs(np.diag(K))))
    off = K - np.diag(np.diag(K))
    return bool(
        np.all(off <= tol * scale)
        and np.all(K.sum(axis=1) >= -tol * scale)
        and np.all(K.sum(axis=0) >= -tol * scale)
    )


# ---------------------------------------------------------------------------
# contraction and positivity


@dataclass
class ContractionRow:
    t: float
    arg: float
    p: float
    norm: float
    bound: float
    asserted: bool

    @property
    def z(self) -> complex:
        return self.t * complex(math.cos(self.arg), math.sin(self.arg))

    @property
    def verdict(self) -> str:
        if not self.asserted:
            return "reported"
        return "pass" if self.norm <= self.bound + 1e-9 else "fail"

    def row(self) -> dict:
        return {"t": self.t, "arg": self.arg, "p": self.p, "norm": self.norm, "bound": self.bound, "verdict": self.verdict}


def contraction_scan(op: DiscreteOperator, p: float, t_grid, arg_grid, margin: float = 0.01) -> list:
    """Propagator norms over ``z = t e^{i arg}``.

    ``p = 2`` uses the M-weighted norm and is always asserted.  ``p`` in
    ``{1, inf}`` uses the lumped propagator and is asserted only when the
    stiffness has sub-Markov sign structure; only real ``z`` are admitted there.
    """
    if p == 2:
        limit = math.pi / 2 - op.theta2.theta - margin
    elif p in (1, math.inf):
        # theta_p tends to pi/2 at the endpoints, leaving only real times
        limit = 0.0
    else:
        raise ValueError("contraction_scan supports p in {1, 2, inf}")
    rows = []
    structured = sub_markov_structure(op) if p != 2 else True
    for arg in arg_grid:
        if abs(arg) > limit + 1e-15:
            raise ValueError(f"|arg z| = {abs(arg):.6g} exceeds the analytic sector limit {limit:.6g}")
        for t in t_grid:
            z = t * complex(math.cos(arg), math.sin(arg))
            if p == 2:
                norm = float(np.linalg.norm(_dense_propagator(op, z), 2))
                asserted = True
            else:
                norm = _lumped_norm(lumped_propagator(op, z), op.weights, p)
                asserted = structured
            rows.append(ContractionRow(float(t), float(arg), float(p), norm, 1.0, asserted))
    return rows


@dataclass
class PositivityRow:
    t: float
    min_entry: float
    max_row_sum: float
    tol: float

    @property
    def passes(self) -> bool:
        return self.min_entry >= -self.tol and self.max_row_sum <= 1 + self.tol


def positivity_check(op: DiscreteOperator, t_grid) -> list:
    """Minimum entry and maximum row sum of the lumped propagator per ``t``.

    Tolerance 1e-10 when the stiffness has sub-Markov sign structure (acute
    mesh, identity coefficient), 1e-6 otherwise.
    """
    tol = 1e-10 if sub_markov_structure(op) else 1e-6
    rows = []
    for t in t_grid:
        P = lumped_propagator(op, float(t))
        rows.append(PositivityRow(float(t), float(P.min()), float(P.sum(axis=1).max()), tol))
    return rows


# ---------------------------------------------------------------------------
# ultracontractivity


def kernel_sup(op: DiscreteOperator, t_grid, return_argmax: bool = False):
    """``max_ij |P_ij| / w_j`` for each ``t`` (see :data:`SUP_NORM_CONVENTION`).

    With ``return_argmax`` also the free-DOF row index where each maximum sits.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    K = op.K
    vals, where = [], []
    if np.array_equal(K, K.T):
        # k_t = V exp(-Lambda t) V^T with V W-orthonormal; the maximum sits on the diagonal
        lam, V = sla.eigh(K, np.diag(op.weights))
        lam = np.maximum(lam, 0.0)
        V2 = V**2
        for t in t_grid:
            diag = V2 @ np.exp(-lam * t)
            where.append(int(np.argmax(diag)))
            vals.append(float(diag[where[-1]]))
    else:
        for t in t_grid:
            k = np.abs(lumped_propagator(op, t)) / op.weights[None, :]
            i, _ = np.unravel_index(np.argmax(k), k.shape)
            where.append(int(i))
            vals.append(float(k.max()))
    vals = np.array(vals)
    return (vals, np.array(where)) if return_argmax else vals


def local_h(op: DiscreteOperator, free_index: int) -> float:
    """Longest edge among triangles touching the node(s) of one free DOF."""
    system = op.system
    nodes = np.flatnonzero(system.dof_of_node == system.free[free_index])
    tris = system.mesh.triangles[np.isin(system.mesh.triangles, nodes).any(axis=1)]
    p = system.mesh.nodes[tris]
    return float(np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)))


def default_t_grid(op: DiscreteOperator, n: int = 12) -> np.ndarray:
    """Log-spaced over ``[max(h_loc^2, 1e-4), 1e-1]`` with ``h_loc`` the mesh size where the kernel peaks."""
    _, where = kernel_sup(op, [1e-2], return_argmax=True)
    lo = max(local_h(op, int(where[0])) ** 2, 1e-4)
    return np.geomspace(lo, 1e-1, n)


@dataclass
class UltraReport:
    t: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float
    residual: float
    convention: str = SUP_NORM_CONVENTION

    @property
    def beta(self) -> float:
        """Embedding exponent implied by ``slope = -beta / (beta - 2)``."""
        gamma = -self.slope
        return math.inf if gamma <= 1 else 2 * gamma / (gamma - 1)

    @property
    def reliable(self) -> bool:
        return self.residual <= 0.2

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": [float(x) for x in self.t],
                "norm_1_to_inf": [float(x) for x in self.norms],
                "slope": self.slope,
                "beta": None if math.isinf(self.beta) else self.beta,
                "residual": self.residual,
                "reliable": self.reliable,
                "convention": self.convention,
            },
            indent=2,
            sort_keys=True,
        )


def ultracontractivity_fit(op: DiscreteOperator, t_grid=None, enforce_resolution: bool = True) -> UltraReport:
    """Least-squares slope of ``log ||T(t)||_{1->inf}`` against ``log t``.

    ``residual`` is the largest absolute deviation from the fitted line in
    natural-log units; above 0.2 the fit is flagged unreliable.  The smallest
    time must satisfy ``t >= h_loc^2`` with ``h_loc`` the mesh size around the
    node where the kernel peaks, since below that the discrete kernel
    saturates at ``1 / w_i``.
    """
    t = default_t_grid(op) if t_grid is None else np.asarray(t_grid, dtype=float)
    if len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be strictly increasing with at least two points")
    if t[0] <= 0 or t[-1] > 1:
        raise ValueError("t grid must lie in (0, 1]")
    norms, where = kernel_sup(op, t, return_argmax=True)
    # resolution is judged where the kernel peaks at the smallest time
    h2 = local_h(op, int(where[0])) ** 2
    if enforce_resolution and t[0] < h2 * (1 - 1e-12):
        raise ValueError(f"t = {t[0]:.3g} is below the local mesh resolution h^2 = {h2:.3g}")
    x, y = np.log(t), np.log(norms)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    return UltraReport(t, norms, float(slope), float(intercept), residual)
