import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from sectorlab.fem import BoundaryPartition, FormDomainFlavor, assemble, coefficient_preset
from sectorlab.mesh import generate_mesh
from sectorlab.operators import (
    DiscreteOperator,
    _p_norm_estimate,
    numerical_range_p2,
    pairing,
    random_vectors,
    resolvent_norm,
    sector_distance,
    spectrum,
    spectrum_within_range,
)
from sectorlab.sector_math import CoefficientField, SectorAngle, arg_excess


def make_op(name="square", n=8, coeff="identity", dynamic=False, **part):
    m = generate_mesh(name, n)
    return DiscreteOperator(assemble(m, coefficient_preset(coeff), BoundaryPartition(**part)), dynamic=dynamic)


def ray_distance(z, theta, n=200_001):
    """Dense sampling of both boundary rays of the sector (independent of the closed form)."""
    r = np.linspace(0, 2 * abs(z), n)
    pts = np.concatenate([r * np.exp(1j * theta), r * np.exp(-1j * theta)])
    return np.min(np.abs(pts - z))


@pytest.mark.parametrize("theta", [0.0, 0.3, 1.2])
def test_sector_distance_examples(theta):
    assert sector_distance(-1.0, theta) == pytest.approx(1.0)
    assert sector_distance(2.5j, theta) == pytest.approx(2.5 * math.cos(theta))
    assert sector_distance(0.5 * np.exp(1j * theta / 2), theta) == 0.0
    assert sector_distance(0.0, theta) == 0.0


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.01, 100), phi=st.floats(-math.pi, math.pi), theta=st.floats(0, 1.5))
def test_sector_distance_matches_ray_sampling(r, phi, theta):
    z = r * complex(math.cos(phi), math.sin(phi))
    inside = abs(phi) <= theta
    exact = sector_distance(z, SectorAngle.from_angle(theta))
    if inside:
        assert exact <= 1e-15 * r
    else:
        # the sampled grid overshoots by at most (spacing/2)^2 / (2 dist)
        assert exact == pytest.approx(ray_distance(z, theta), rel=1e-6, abs=1e-9 * r)


def test_pairing_p2_is_quadratic_form_with_robin():
    m = generate_mesh("lshape", 4)
    op = DiscreteOperator(assemble(m, coefficient_preset("varying"), BoundaryPartition.uniform_robin(m, 1.0)))
    U = random_vectors(op.n, 20, np.random.default_rng(0))
    direct = np.einsum("si,ij,sj->s", U.conj(), op.K, U)
    np.testing.assert_allclose(pairing(U, 2.0, op), direct, rtol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 8.0])
def test_pairing_real_vectors_are_real_nonnegative(p):
    op = make_op(coeff="rot2")
    U = np.random.default_rng(1).normal(size=(10, op.n))
    v = pairing(U, p, op)
    assert np.all(v.imag == 0)
    assert np.all(v.real >= 0)


def test_pairing_rotation_p4_bound():
    op = make_op(coeff="rot1")
    bound = math.atan(math.sqrt(5 / 3))
    assert op.theta(4).theta == pytest.approx(bound, abs=1e-15)
    U = random_vectors(op.n, 500, np.random.default_rng(2))
    v = pairing(U, 4.0, op)
    assert np.max(np.abs(np.angle(v))) <= bound + 1e-9


def test_pairing_robin_monotone_in_b():
    m = generate_mesh("square", 6)
    f = coefficient_preset("rot0.5")
    U = random_vectors(m.n_nodes, 50, np.random.default_rng(3))
    prev = None
    for b in (0.0, 0.5, 1.0, 2.0, 4.0):
        op = DiscreteOperator(assemble(m, f, BoundaryPartition.uniform_robin(m, b)))
        v = pairing(U, 3.0, op)
        assert np.all(arg_excess(v, op.theta(3).theta) <= 1e-9)
        if prev is not None:
            assert np.all(v.real >= prev.real)
            np.testing.assert_allclose(v.imag, prev.imag, rtol=1e-12, atol=1e-12)
        prev = v


def test_pairing_dynamic_and_slit_flavors():
    m = generate_mesh("slit_disc", 4)
    for flavor in FormDomainFlavor:
        sys = assemble(m, coefficient_preset("rot2"), BoundaryPartition(dirichlet={"outer"}, dynamic={"slit_upper"}), flavor)
        op = DiscreteOperator(sys, dynamic=True)
        v = pairing(random_vectors(op.n, 200, np.random.default_rng(4)), 8.0, op)
        assert np.all(arg_excess(v, op.theta(8).theta) <= 1e-9)


def test_numerical_range_identity_neumann():
    op = make_op()
    ones = np.ones(op.n)
    assert abs(pairing(ones, 2.0, op)) < 1e-12
    nr = numerical_range_p2(op, 100)
    assert np.max(np.abs(nr.values.imag)) < 1e-10
    assert nr.min_real >= -1e-12
    assert nr.contained()


def test_numerical_range_dirichlet_above_first_eigenvalue():
    op = make_op(n=16, dirichlet={"bottom", "right", "top", "left"})
    lam = sla.eigh(op.K, op.M, eigvals_only=True)
    nr = numerical_range_p2(op, 200)
    assert nr.min_real >= lam[0] * (1 - 1e-10)
    assert lam[0] == pytest.approx(2 * math.pi**2, rel=0.05)
    assert lam[0] > 2 * math.pi**2


def test_numerical_range_rotation_quarter_pi():
    op = make_op(coeff="rot1")
    nr = numerical_range_p2(op, 300)
    assert nr.max_abs_arg <= math.pi / 4 + 1e-10
    # the support directions find points close to the sector edge
    assert nr.max_abs_arg > 0.5


def test_spectrum_neumann_square():
    op = make_op(n=16)
    s = spectrum(op)
    vals = np.sort(s.values.real)
    assert abs(vals[0]) < 1e-10
    assert vals[1] == pytest.approx(math.pi**2, rel=0.02)
    assert s.contained() and not s.partial


@pytest.mark.parametrize("kappa", ["rot0.5", "rot2"])
def test_spectrum_in_sector_and_in_range(kappa):
    op = make_op(coeff=kappa, dirichlet={"left"})
    s = spectrum(op)
    assert s.contained()
    assert s.max_abs_arg <= op.theta2.theta + 1e-8
    assert np.all(s.values.real > 0)
    nr = numerical_range_p2(op, 50)
    assert spectrum_within_range(s, nr)


def test_resolvent_symmetric_at_minus_one():
    m = generate_mesh("square", 6)
    f = CoefficientField.constant_field([[2.0, 0.5], [0.5, 1.0]])
    op = DiscreteOperator(assemble(m, f, BoundaryPartition(dirichlet={"left"})))
    lam = sla.eigh(op.K, op.M, eigvals_only=True)
    probe = resolvent_norm(op, -1.0)
    assert probe.norm == pytest.approx(1 / (1 + lam[0]), rel=1e-10)
    assert probe.margin >= 0


@pytest.mark.parametrize("s", [0.01, 1.0, 100.0])
def test_resolvent_negative_axis(s):
    op = make_op(coeff="rot1")
    assert resolvent_norm(op, -s).norm <= 1 / s * (1 + 1e-9)


@pytest.mark.parametrize("y", [0.1, 1.0, 30.0])
def test_resolvent_imaginary_axis_rotation(y):
    op = make_op(coeff="rot0.5")
    probe = resolvent_norm(op, 1j * y)
    assert probe.bound == pytest.approx(1 / (y * math.cos(math.atan(0.5))))
    assert probe.norm <= probe.bound + 1e-9


def test_resolvent_rejects_points_in_sector():
    op = make_op(coeff="rot1")
    with pytest.raises(ValueError):
        resolvent_norm(op, 1.0 + 0.5j)


def test_resolvent_p_not_two_is_flagged_estimate():
    op = make_op(coeff="rot1")
    probe = resolvent_norm(op, -1.0, p=4.0)
    assert not probe.exact and probe.status == "estimate"
    assert probe.norm > 0
    assert set(probe.row()) == {"z_re", "z_im", "p", "norm", "bound", "margin", "exact", "status"}


def test_p_norm_estimate_exact_at_two():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    est, _ = _p_norm_estimate(lambda x: A @ x, lambda y: A.conj().T @ y, 6, 2.0, rng, starts=6, max_iter=500)
    assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_p_norm_estimate_between_sampling_and_riesz_thorin():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    p = 3.0
    est, _ = _p_norm_estimate(lambda x: A @ x, lambda y: A.conj().T @ y, 5, p, rng, starts=8)
    X = rng.normal(size=(100_000, 5)) + 1j * rng.normal(size=(100_000, 5))
    sampled = np.max(np.linalg.norm(X @ A.T, ord=p, axis=1) / np.linalg.norm(X, ord=p, axis=1))
    upper = np.linalg.norm(A, 1) ** (1 / p) * np.linalg.norm(A, np.inf) ** (1 - 1 / p)
    assert sampled * (1 - 1e-3) <= est <= upper * (1 + 1e-12)
