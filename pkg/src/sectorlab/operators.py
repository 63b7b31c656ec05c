"""Discrete operators ``M^{-1} K``: pairings, numerical ranges, resolvents, spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .fem import AssembledSystem
from .sector_math import SectorAngle, arg_excess, pairing_integrand, theta_p

__all__ = [
    "DiscreteOperator",
    "NumericalRangeSample",
    "ResolventProbe",
    "SpectrumResult",
    "DENSE_LIMIT",
    "pairing",
    "random_vectors",
    "numerical_range_p2",
    "sector_distance",
    "resolvent_norm",
    "spectrum",
    "spectrum_within_range",
]

DENSE_LIMIT = 4000

# interior three-point rule (barycentric 2/3, 1/6, 1/6); exact for quadratics
_TRI_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_GAUSS2 = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])


class DiscreteOperator:
    """``A_h = M^{-1} K`` on the free DOFs of an assembled system.

    With ``dynamic=True`` the mass is ``M + M_S`` (the product-space inner
    product of the dynamic boundary problem).  ``K`` always includes the Robin
    boundary mass.  Dense copies are kept because every consumer here works
    below the dense budget.
    """

    def __init__(self, system: AssembledSystem, dynamic: bool = False):
        self.system = system
        self.dynamic = dynamic
        mass = system.M + system.M_S if dynamic else system.M
        self.K_sparse = system.K_free
        self.M_sparse = system.restrict(mass)
        self.weights = np.asarray(system.restrict(mass).sum(axis=1)).ravel()
        if np.any(self.weights <= 0):
            raise ValueError("lumped weights must be positive")
        self.theta2: SectorAngle = system.theta2
        self._dense = None

    @property
    def n(self) -> int:
        return self.K_sparse.shape[0]

    def _ensure_dense(self):
        if self._dense is None:
            if self.n > DENSE_LIMIT:
                raise MemoryError(f"{self.n} DOFs exceed the dense budget {DENSE_LIMIT}")
            K = self.K_sparse.toarray()
            M = self.M_sparse.toarray()
            L = sla.cholesky(M, lower=True)
            X = sla.solve_triangular(L, K, lower=True)
            B = sla.solve_triangular(L, X.T, lower=True).T
            self._dense = (K, M, L, B)
        return self._dense

    @property
    def K(self) -> np.ndarray:
        return self._ensure_dense()[0]

    @property
    def M(self) -> np.ndarray:
        return self._ensure_dense()[1]

    @property
    def cholesky(self) -> np.ndarray:
        return self._ensure_dense()[2]

    @property
    def B(self) -> np.ndarray:
        """``L^{-1} K L^{-T}``: the operator in M-orthonormal coordinates."""
        return self._ensure_dense()[3]

    def theta(self, p: float) -> SectorAngle:
        return theta_p(self.theta2, p)

    def apply(self, u) -> np.ndarray:
        return sla.cho_solve((self.cholesky, True), self.K @ u)

    def weighted_norm(self, u, p: float) -> np.ndarray:
        """``(sum_i w_i |u_i|^p)^{1/p}`` with lumped weights, along the last axis."""
        return np.sum(self.weights * np.abs(u) ** p, axis=-1) ** (1.0 / p)


# ---------------------------------------------------------------------------
# pairings


def pairing(u, p: float, op: DiscreteOperator):
    """Discrete ``a[u, |u|^{p-2} u]`` including the Robin term ``int b |u|^p``.

    ``u`` holds free-DOF values, shape ``(n,)`` or a batch ``(S, n)``.  The
    domain integral uses a three-point interior rule per triangle, the
    boundary integral two-point Gauss per edge; both have positive weights,
    so the result stays in the sector of the pointwise integrand.  At
    ``p = 2`` the result is ``u^H (K + M_robin) u``.
    """
    if p < 2:
        raise ValueError("pairing needs p >= 2")
    system = op.system
    u = np.asarray(u, dtype=complex)
    single = u.ndim == 1
    U = np.atleast_2d(u)
    full = np.zeros((U.shape[0], system.n_dofs), dtype=complex)
    full[:, system.free] = U
    nodal = full[:, system.dof_of_node]
    tri = nodal[:, system.mesh.triangles]
    grads = np.einsum("smi,mik->smk", tri, system.grads)
    a = system.coefficients
    if p == 2:
        dens = pairing_integrand(None, grads, a, 2.0)
        interior = dens @ system.areas
    else:
        qp = tri @ _TRI_BARY.T
        dens = pairing_integrand(qp, grads[:, :, None, :], a[:, None], p)
        interior = dens.sum(axis=2) @ (system.areas / 3.0)
    b = system.partition.edge_b(system.mesh)
    robin = np.zeros(U.shape[0])
    active = b > 0
    if np.any(active):
        e = system.mesh.edges[active]
        ends = nodal[:, e]
        vals = ends[..., 0, None] * (1 - _GAUSS2) + ends[..., 1, None] * _GAUSS2
        w = 0.5 * b[active] * system.mesh.edge_lengths[active]
        robin = np.sum(np.abs(vals) ** p, axis=2) @ w
    out = interior + robin
    return out[0] if single else out


def random_vectors(n: int, count: int, rng: np.random.Generator, real_fraction: float = 0.1):
    """Test vectors mixing white noise, smooth phase patterns, real and sparse vectors."""
    out = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    k = np.arange(n)
    kinds = rng.integers(0, 4, size=count)
    for i in np.flatnonzero(kinds == 1):
        freq = rng.uniform(0, 20)
        out[i] = rng.lognormal(size=n) * np.exp(1j * (freq * k / max(n, 1) * 2 * np.pi + rng.uniform(0, 6)))
    for i in np.flatnonzero(kinds == 2):
        out[i, rng.random(n) < 0.5] = 0.0
    n_real = int(real_fraction * count)
    out[:n_real] = out[:n_real].real
    return out


# ---------------------------------------------------------------------------
# sector geometry


def sector_distance(z, theta) -> np.ndarray:
    """Distance from ``z`` to the closed sector ``{|arg| <= theta}`` with apex 0."""
    th = theta.theta if isinstance(theta, SectorAngle) else float(theta)
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    phi = np.abs(np.angle(z))
    out = np.where(phi <= th, 0.0, np.where(phi >= th + np.pi / 2, r, r * np.sin(phi - th)))
    out = np.where(r == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# numerical range


@dataclass
class NumericalRangeSample:
    """Sampled values of the M-weighted numerical range plus support data.

    ``directions``/``support`` record ``h(phi) = max Re(e^{-i phi} w)`` over the
    exact range for each probed direction, from the extreme eigenvalue of the
    Hermitian part of ``e^{-i phi} B``.
    """

    values: np.ndarray
    theta: SectorAngle
    zero_tol: float
    directions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    support: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_abs_arg(self) -> float:
        v = self.values[np.abs(self.values) > self.zero_tol]
        return float(np.max(np.abs(np.angle(v)))) if len(v) else 0.0

    @property
    def margin(self) -> float:
        return self.theta.theta - self.max_abs_arg

    @property
    def min_real(self) -> float:
        return float(np.min(self.values.real))

    def contained(self, tol: float = 1e-10) -> bool:
        return bool(np.all(arg_excess(self.values, self.theta.theta, zero_tol=self.zero_tol) <= tol))


def numerical_range_p2(op: DiscreteOperator, n_samples: int, rng=None, n_directions: int = 64) -> NumericalRangeSample:
    """Rayleigh quotients ``u^H K u / u^H M u`` at random ``u`` plus boundary points.

    Boundary points come from the top eigenvectors of the Hermitian part of
    ``e^{-i phi} B`` for equally spaced ``phi``; these are exact support points
    of the range in each direction.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    K, M, _, B = op._ensure_dense()
    U = random_vectors(op.n, n_samples, rng)
    num = np.einsum("si,ij,sj->s", U.conj(), K, U)
    den = np.einsum("si,ij,sj->s", U.conj(), M, U).real
    values = [num / den]
    phis = 2 * np.pi * np.arange(n_directions) / n_directions
    support = np.empty(n_directions)
    for j, ph in enumerate(phis):
        R = np.exp(-1j * ph) * B
        H = 0.5 * (R + R.conj().T)
        w, v = sla.eigh(H, subset_by_index=[op.n - 1, op.n - 1])
        x = v[:, 0]
        support[j] = w[0]
        values.append(np.array([np.vdot(x, B @ x) / np.vdot(x, x)]))
    values = np.concatenate(values)
    scale = max(float(np.max(np.abs(values))), 1.0)
    return NumericalRangeSample(values, op.theta2, 1e-12 * scale, phis, support)


# ---------------------------------------------------------------------------
# resolvent


@dataclass
class ResolventProbe:
    z: complex
    p: float
    norm: float
    bound: float
    exact: bool
    status: str = "ok"
    iterations: int = 0

    @property
    def margin(self) -> float:
        return self.bound - self.norm

    def row(self) -> dict:
        return {
            "z_re": self.z.real,
            "z_im": self.z.imag,
            "p": self.p,
            "norm": self.norm,
            "bound": self.bound,
            "margin": self.margin,
            "exact": int(self.exact),
            "status": self.status,
        }


def _dual(y, p):
    """``|y|^{p-1} sgn(y) / ||y||_p^{p-1}``: the unit dual-norm functional norming ``y``."""
    ay = np.abs(y)
    norm = np.linalg.norm(y, ord=p)
    if norm == 0:
        return np.zeros_like(y)
    phase = np.where(ay > 0, y / np.where(ay > 0, ay, 1.0), 0.0)
    return ay ** (p - 1) * phase / norm ** (p - 1)


def _p_norm_estimate(apply, apply_h, n, p, rng, starts=4, max_iter=100):
    """Lower bound for the induced ``l^p`` norm by dual power iteration.

    ``apply(x) = Y x`` and ``apply_h(y) = Y^H y``.  Each start stops once the
    dual step no longer increases the estimate.
    """
    q = p / (p - 1)
    best, iters = 0.0, 0
    for s in range(starts):
        x = np.ones(n, dtype=complex) if s == 0 else rng.normal(size=n) + 1j * rng.normal(size=n)
        x /= np.linalg.norm(x, ord=p)
        for _ in range(max_iter):
            iters += 1
            y = apply(x)
            best = max(best, float(np.linalg.norm(y, ord=p)))
            zvec = apply_h(_dual(y, p))
            zn = float(np.linalg.norm(zvec, ord=q))
            if zn == 0 or zn <= np.real(np.vdot(zvec, x)) * (1 + 1e-12):
                break
            x = _dual(zvec, q)
    return best, iters


def resolvent_norm(op: DiscreteOperator, z: complex, p: float = 2.0, rng=None) -> ResolventProbe:
    """``||(z - A_h)^{-1}||`` against the bound ``1 / dist(z, sector(theta_p))``.

    At ``p = 2`` the M-weighted norm is exact: ``1 / sigma_min(z I - B)``.  For
    other ``p`` the lumped-weight ``l^p`` norm is bounded from below by dual
    power iteration and flagged as an estimate.
    """
    z = complex(z)
    th = op.theta(p)
    dist = float(sector_distance(z, th))
    if dist <= 0:
        raise ValueError(f"z = {z} lies in the closed sector of angle {th.theta:.6g}; the bound is undefined")
    bound = 1.0 / dist
    K, M, _, B = op._ensure_dense()
    if p == 2:
        sig = sla.svdvals(z * np.eye(op.n) - B)
        smin = float(sig[-1])
        if smin <= np.finfo(float).eps * float(sig[0]):
            return ResolventProbe(z, p, math.inf, bound, True, "singular")
        return ResolventProbe(z, p, 1.0 / smin, bound, True)
    rng = np.random.default_rng(0) if rng is None else rng
    lu = sla.lu_factor(z * M - K)
    if np.min(np.abs(np.diag(lu[0]))) == 0:
        return ResolventProbe(z, p, math.inf, bound, False, "singular")

    # weighted l^p norm of R equals the plain l^p norm of D R D^{-1}, D = diag(w^{1/p})
    d = op.weights ** (1.0 / p)

    def apply(x):
        return d * sla.lu_solve(lu, M @ (x / d))

    def apply_h(y):
        return (M @ sla.lu_solve(lu, d * y, trans=2)) / d

    est, iters = _p_norm_estimate(apply, apply_h, op.n, p, rng)
    return ResolventProbe(z, p, est, bound, False, "estimate", iters)


# ---------------------------------------------------------------------------
# spectrum


@dataclass
class SpectrumResult:
    values: np.ndarray
    theta: SectorAngle
    partial: bool
    zero_tol: float

    @property
    def max_abs_arg(self) -> float:
        v = self.values[np.abs(self.values) > self.zero_tol]
        return float(np.max(np.abs(np.angle(v)))) if len(v) else 0.0

    def contained(self, tol: float = 1e-8) -> bool:
        return bool(np.all(arg_excess(self.values, self.theta.theta, zero_tol=self.zero_tol) <= tol))


def spectrum(op: DiscreteOperator, n_partial: int = 50) -> SpectrumResult:
    """Eigenvalues of the pencil ``(K, M)``.

    Dense below :data:`DENSE_LIMIT` free DOFs; above it the ``n_partial``
    eigenvalues of smallest magnitude by shift-invert Arnoldi, flagged partial.
    The same pencil serves every ``p``.
    """
    if op.n <= DENSE_LIMIT:
        K, M, _, _ = op._ensure_dense()
        vals = sla.eigvals(K, M)
        partial = False
    else:
        k = min(n_partial, op.n - 2)
        vals = spla.eigs(op.K_sparse.tocsc(), k=k, M=op.M_sparse.tocsc(), sigma=0, which="LM", return_eigenvectors=False)
        partial = True
    vals = np.sort_complex(vals)
    scale = max(float(np.max(np.abs(vals))), 1.0)
    return SpectrumResult(vals, op.theta2, partial, 1e-10 * scale)


def spectrum_within_range(eig: SpectrumResult, nr: NumericalRangeSample, slack: float = 1e-6) -> bool:
    """Every eigenvalue obeys each support half-plane of the numerical range."""
    if len(nr.directions) == 0:
        raise ValueError("numerical range sample carries no support data")
    proj = np.real(np.exp(-1j * nr.directions)[:, None] * eig.values[None, :])
    scale = max(1.0, float(np.max(np.abs(nr.support))))
    return bool(np.all(proj <= nr.support[:, None] + slack * scale))
