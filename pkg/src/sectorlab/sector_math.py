"""Pointwise algebra of real sectorial coefficient matrices.

A real matrix ``a`` with positive definite symmetric part ``s`` satisfies
``|Im <a xi, xi>| <= tan(theta) Re <a xi, xi>`` for all complex ``xi``, with
the optimal ``tan(theta)`` equal to the spectral norm of
``s^{-1/2} t s^{-1/2}`` where ``t`` is the antisymmetric part.  Testing the
form against ``|u|^{p-2} u`` widens the sector to the angle returned by
:func:`theta_p`.

Inner products are Hermitian and linear in the first slot:
``<x, y> = sum_k x_k conj(y_k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SectorAngle",
    "CoefficientMatrix",
    "CoefficientField",
    "GradientSplit",
    "NotEllipticError",
    "split",
    "sector_angle",
    "sector_tangents",
    "theta_p",
    "gradient_split",
    "pairing_integrand",
    "direct_pairing_integrand",
    "verify_chain_rule",
    "ChainRuleReport",
    "rotation",
    "arg_excess",
]

ZERO_THRESHOLD = 1e-300


class NotEllipticError(ValueError):
    """Raised when the symmetric part of a coefficient is not positive definite."""


@dataclass(frozen=True)
class SectorAngle:
    """Half-angle of a closed sector about the positive real axis."""

    theta: float
    tan_theta: float

    def __post_init__(self):
        if not (0.0 <= self.theta < math.pi / 2):
            raise ValueError(f"sector angle must lie in [0, pi/2), got {self.theta!r}")

    @classmethod
    def from_tan(cls, tan_theta: float) -> "SectorAngle":
        tan_theta = float(tan_theta)
        if tan_theta < 0 or not math.isfinite(tan_theta):
            raise ValueError(f"tangent must be finite and nonnegative, got {tan_theta!r}")
        return cls(math.atan(tan_theta), tan_theta)

    @classmethod
    def from_angle(cls, theta: float) -> "SectorAngle":
        return cls(float(theta), math.tan(theta))

    def contains(self, z, tol: float = 1e-9, zero_tol: float = 0.0) -> np.ndarray:
        """Elementwise test ``|arg z| <= theta + tol`` (values with ``|z| <= zero_tol`` pass)."""
        return arg_excess(z, self.theta, zero_tol) <= tol


def arg_excess(z, theta: float, zero_tol: float = 0.0) -> np.ndarray:
    """Amount by which ``|arg z|`` exceeds ``theta``; zero inside the sector.

    Points with ``|z| <= zero_tol`` sit at the apex and count as inside.
    """
    z = np.asarray(z, dtype=complex)
    excess = np.maximum(np.abs(np.angle(z)) - theta, 0.0)
    return np.where(np.abs(z) <= zero_tol, 0.0, excess)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Real ``d x d`` coefficient value with its ellipticity constant."""

    entries: np.ndarray
    eta: float

    @classmethod
    def from_array(cls, a) -> "CoefficientMatrix":
        a = np.array(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"coefficient must be square, got shape {a.shape}")
        if not 1 <= a.shape[0] <= 3:
            raise ValueError("only dimensions 1 to 3 are supported")
        s, _ = split(a)
        eta = float(np.linalg.eigvalsh(s)[0])
        if eta <= 0:
            raise NotEllipticError(
                f"symmetric part not positive definite (smallest eigenvalue {eta:.3e})"
            )
        a.setflags(write=False)
        return cls(a, eta)

    @property
    def d(self) -> int:
        return self.entries.shape[0]


def rotation(kappa: float) -> np.ndarray:
    """The 2x2 coefficient ``[[1, kappa], [-kappa, 1]]`` with ``tan(theta_2) = |kappa|``."""
    return np.array([[1.0, kappa], [-kappa, 1.0]])


def split(a) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric and antisymmetric parts ``(s, t)`` with ``s + t = a``.

    Works on single matrices and on stacks ``(..., d, d)``.
    """
    if isinstance(a, CoefficientMatrix):
        a = a.entries
    a = np.asarray(a, dtype=float)
    at = np.swapaxes(a, -1, -2)
    s = 0.5 * (a + at)
    t = 0.5 * (a - at)
    return s, t


def sector_tangents(a) -> np.ndarray:
    """``tan(theta_2)`` for each matrix of a stack ``(..., d, d)``."""
    s, t = split(a)
    w, v = np.linalg.eigh(s)
    if np.any(w[..., 0] <= 0):
        bad = float(np.min(w[..., 0]))
        raise NotEllipticError(
            f"symmetric part not positive definite (smallest eigenvalue {bad:.3e})"
        )
    s_isqrt = (v / np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)
    k = s_isqrt @ t @ s_isqrt
    return np.linalg.norm(k, ord=2, axis=(-2, -1))


def sector_angle(a) -> SectorAngle:
    """Optimal sector half-angle of ``<a xi, xi>`` over complex ``xi``.

    ``a`` may be a single matrix, a :class:`CoefficientMatrix`, or a stack of
    matrices, in which case the supremum over the stack is returned.
    """
    if isinstance(a, CoefficientMatrix):
        a = a.entries
    tans = np.atleast_1d(sector_tangents(np.asarray(a, dtype=float)))
    return SectorAngle.from_tan(float(np.max(tans)))


def theta_p(theta2: SectorAngle, p: float) -> SectorAngle:
    """Sector angle for the pairing against ``|u|^{p-2} u``.

    ``tan(theta_p) = sqrt((p-2)^2 + p^2 tan^2(theta_2)) / (2 sqrt(p-1))``;
    for ``1 < p < 2`` the conjugate exponent is used.
    """
    p = float(p)
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p!r}")
    if p == 2.0:
        return theta2
    if p < 2:
        p = p / (p - 1)
    tan = math.sqrt((p - 2) ** 2 + p * p * theta2.tan_theta**2) / (2 * math.sqrt(p - 1))
    return SectorAngle.from_tan(tan)


@dataclass
class CoefficientField:
    """Spatially varying coefficient sampled on a declared point set.

    ``theta2`` and ``eta`` are the extreme values over the samples; they are
    only as good as the sample set (the assembly samples at element centroids).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "field"
    constant: np.ndarray | None = None

    @classmethod
    def constant_field(cls, a, name: str | None = None) -> "CoefficientField":
        mat = CoefficientMatrix.from_array(a)
        entries = mat.entries

        def evaluate(points):
            points = np.asarray(points, dtype=float)
            return np.broadcast_to(entries, points.shape[:-1] + entries.shape).copy()

        return cls(evaluate, name or "constant", constant=entries)

    def __call__(self, points) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(points, dtype=float)), dtype=float)

    def sample(self, points) -> "FieldSample":
        values = self(points)
        s, _ = split(values)
        etas = np.linalg.eigvalsh(s)[..., 0]
        if np.any(etas <= 0):
            raise NotEllipticError(
                f"coefficient field {self.name!r} not elliptic at "
                f"{int(np.sum(etas <= 0))} sample point(s)"
            )
        return FieldSample(values, float(np.min(etas)), sector_angle(values))


@dataclass(frozen=True)
class FieldSample:
    values: np.ndarray
    eta: float
    theta2: SectorAngle


@dataclass(frozen=True)
class GradientSplit:
    """Real and imaginary parts of ``(conj(v)/|v|) grad v`` for ``v = |u|^{(p-2)/2} u``."""

    phi: np.ndarray
    psi: np.ndarray


def gradient_split(u, grad_u, p: float) -> GradientSplit:
    """Vectorised ``(phi, psi)``; both vanish where ``|u|`` is below the zero threshold."""
    u = np.asarray(u, dtype=complex)
    grad_u = np.asarray(grad_u, dtype=complex)
    mod = np.abs(u)
    nonzero = mod > ZERO_THRESHOLD
    safe = np.where(nonzero, mod, 1.0)
    phase = np.where(nonzero, np.conj(u) / safe, 0.0)
    rotated = phase[..., None] * grad_u
    # grad v = |u|^{p/2-1} e (p/2 Re(e* grad u) + i Im(e* grad u)), e = u/|u|
    scale = np.where(nonzero, safe ** (0.5 * p - 1.0), 0.0)[..., None]
    phi = scale * (0.5 * p) * rotated.real
    psi = scale * rotated.imag
    return GradientSplit(phi, psi)


def _bilinear(x, m, y):
    # x^T m y over trailing dims, real arrays
    return np.einsum("...i,...ij,...j->...", x, m, y)


def pairing_integrand(u, grad_u, a, p: float):
    """Pointwise value of ``<a grad u, grad(|u|^{p-2} u)>``.

    Evaluated through the split ``phi + i psi`` so that the result is
    manifestly in the sector ``theta_p``::

        Re = 4/(p p') <s phi, phi> + <s psi, psi>
        Im = 2 [(1 - 2/p) <s psi, phi> + <t psi, phi>]

    At ``p = 2`` this is the quadratic form ``<a grad u, grad u>`` and no
    division by ``|u|`` occurs.  For ``p > 2`` the integrand is 0 where
    ``u = 0``.  Inputs broadcast: ``u`` has shape ``(...)``, ``grad_u``
    ``(..., d)`` and ``a`` ``(..., d, d)``.
    """
    p = float(p)
    if p < 2:
        raise ValueError(f"pairing_integrand needs p >= 2, got {p!r}")
    if isinstance(a, CoefficientMatrix):
        a = a.entries
    a = np.asarray(a, dtype=float)
    grad_u = np.asarray(grad_u, dtype=complex)
    if p == 2.0:
        out = np.einsum("...i,...i->...", np.einsum("...ij,...j->...i", a, grad_u), np.conj(grad_u))
        return out[()] if np.ndim(out) == 0 else out
    s, t = split(a)
    g = gradient_split(u, grad_u, p)
    pconj = p / (p - 1.0)
    re = 4.0 / (p * pconj) * _bilinear(g.phi, s, g.phi) + _bilinear(g.psi, s, g.psi)
    im = 2.0 * ((1.0 - 2.0 / p) * _bilinear(g.phi, s, g.psi) + _bilinear(g.phi, t, g.psi))
    out = re + 1j * im
    return out[()] if np.ndim(out) == 0 else out


def direct_pairing_integrand(u, grad_u, a, p: float):
    """``<a grad u, grad w>`` with ``grad w`` from the chain rule for ``w = |u|^{p-2} u``.

    Independent of the split used in :func:`pairing_integrand`; it serves as the
    oracle for that function.
    """
    if isinstance(a, CoefficientMatrix):
        a = a.entries
    u = np.asarray(u, dtype=complex)
    grad_u = np.asarray(grad_u, dtype=complex)
    mod = np.abs(u)
    nonzero = mod > ZERO_THRESHOLD
    safe = np.where(nonzero, mod, 1.0)
    grad_mod = np.where(nonzero, 1.0, 0.0)[..., None] * np.real(
        (np.conj(u) / safe)[..., None] * grad_u
    )
    alpha = p - 1.0
    # grad(|u|^{alpha-1} u) = (alpha-1)|u|^{alpha-2} u grad|u| + |u|^{alpha-1} grad u
    c1 = np.where(nonzero, (alpha - 1.0) * safe ** (alpha - 2.0) * u, 0.0)
    c2 = np.where(nonzero, safe ** (alpha - 1.0), 1.0 if p == 2 else 0.0)
    grad_w = c1[..., None] * grad_mod + c2[..., None] * grad_u
    a_grad = np.einsum("...ij,...j->...i", np.asarray(a, dtype=float), grad_u)
    out = np.einsum("...i,...i->...", a_grad, np.conj(grad_w))
    return out[()] if np.ndim(out) == 0 else out


@dataclass
class ChainRuleReport:
    """Maximum discrepancy of each chain-rule identity against central differences."""

    alpha: float
    step: float
    grad_abs: float
    grad_power: float
    grad_signed_power: float
    excluded: list = field(default_factory=list)

    @property
    def max_discrepancy(self) -> float:
        return max(self.grad_abs, self.grad_power, self.grad_signed_power)


def _central_gradient(f, x, h):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    grads = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        grads.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(grads, axis=-1)


def verify_chain_rule(u_field, alpha: float, grid, step: float = 1e-6, grad_field=None) -> ChainRuleReport:
    """Compare the chain-rule identities for ``|u|`` and its powers with finite differences.

    The identities checked at every grid point are::

        grad|u|            = Re(conj(u)/|u| grad u)
        grad|u|^alpha      = alpha |u|^{alpha-1} grad|u|
        grad(|u|^{alpha-1} u) = (alpha-1)|u|^{alpha-2} u grad|u| + |u|^{alpha-1} grad u

    ``grad u`` comes from ``grad_field`` when given, otherwise from central
    differences of ``u_field``.  Points where ``u`` vanishes are excluded and
    listed in the report.
    """
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    values = np.asarray(u_field(grid), dtype=complex)
    zero = np.abs(values) <= 1e3 * step
    excluded = [tuple(pt) for pt in grid[zero]]
    pts = grid[~zero]
    if len(pts) == 0:
        return ChainRuleReport(alpha, step, 0.0, 0.0, 0.0, excluded)
    u = np.asarray(u_field(pts), dtype=complex)
    mod = np.abs(u)
    if grad_field is not None:
        grad_u = np.asarray(grad_field(pts), dtype=complex)
    else:
        grad_u = _central_gradient(lambda x: np.asarray(u_field(x), dtype=complex), pts, step)
    grad_mod = np.real((np.conj(u) / mod)[:, None] * grad_u)

    fd_mod = _central_gradient(lambda x: np.abs(u_field(x)), pts, step)
    fd_pow = _central_gradient(lambda x: np.abs(u_field(x)) ** alpha, pts, step)
    fd_signed = _central_gradient(
        lambda x: np.abs(u_field(x)) ** (alpha - 1) * np.asarray(u_field(x), dtype=complex), pts, step
    )
    an_pow = (alpha * mod ** (alpha - 1))[:, None] * grad_mod
    an_signed = ((alpha - 1) * mod ** (alpha - 2) * u)[:, None] * grad_mod + (mod ** (alpha - 1))[
        :, None
    ] * grad_u
    return ChainRuleReport(
        alpha,
        step,
        float(np.max(np.abs(fd_mod - grad_mod))),
        float(np.max(np.abs(fd_pow - an_pow))),
        float(np.max(np.abs(fd_signed - an_signed))),
        excluded,
    )
