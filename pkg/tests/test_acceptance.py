"""Exit criteria of the verification lab, each at its stated tolerance."""
import itertools
import math

import numpy as np
import pytest

from sectorlab.cli import main
from sectorlab.fem import COEFFICIENT_PRESETS, BoundaryPartition, FormDomainFlavor, assemble, coefficient_preset
from sectorlab.geometry import (
    ArcSet,
    PolylineSet,
    check_mantle,
    christ_decompose,
    collar_extension,
    koch_curve,
    regular_mantle,
    segment_set,
    square_boundary,
    verify_christ_properties,
)
from sectorlab.mesh import generate_mesh
from sectorlab.operators import DiscreteOperator, pairing, random_vectors, resolvent_norm
from sectorlab.sector_math import SectorAngle, arg_excess, theta_p
from sectorlab.semigroup import contraction_scan, positivity_check, sub_markov_structure, ultracontractivity_fit
from sectorlab.trace_hardy import FUNCTION_CATALOG, hardy_quotient, load_corpus, membership_experiment

pytestmark = pytest.mark.acceptance
ARG_TOL = 1e-9
PS = (2.0, 3.0, 4.0, 8.0)


@pytest.mark.acceptance(1, "theta_p table and theta_2 fixed point")
def test_c01_theta_p_table(detail):
    zero = SectorAngle.from_angle(0.0)
    table = {2: 0.0, 3: 1 / (2 * math.sqrt(2)), 4: 1 / math.sqrt(3), 10: 4 / 3}
    for p, tan in table.items():
        assert abs(theta_p(zero, p).tan_theta - tan) <= 1e-12
    rng = np.random.default_rng(1)
    for th in rng.uniform(0, math.pi / 2, 100):
        a = SectorAngle.from_angle(th)
        assert theta_p(a, 2).theta == a.theta
    detail("4 table values, 100 fixed points")


# -- criterion 2 / 10: sector containment of pairings ------------------------

DOMAINS = {
    "square": ("square", 6, "left", FormDomainFlavor.SUPPORT_AWAY),
    "lshape": ("lshape", 3, "left", FormDomainFlavor.SUPPORT_AWAY),
    "slit_away": ("slit_disc", 4, "outer", FormDomainFlavor.SUPPORT_AWAY),
    "slit_closure": ("slit_disc", 4, "outer", FormDomainFlavor.SMOOTH_CLOSURE),
    "cusp": ("cusp", 12, "top", FormDomainFlavor.SUPPORT_AWAY),
}
VARIANTS = ("robin0", "robin1", "dynamic")
SAMPLES = 350


def _variant_operator(key, coeff, variant):
    name, n, dirichlet, flavor = DOMAINS[key]
    m = generate_mesh(name, n)
    rest = set(m.label_set) - {dirichlet}
    if variant == "dynamic":
        part = BoundaryPartition(dirichlet={dirichlet}, dynamic=rest)
    else:
        b = 1.0 if variant == "robin1" else 0.0
        part = BoundaryPartition(dirichlet={dirichlet}, robin={lab: b for lab in rest})
    return DiscreteOperator(assemble(m, coefficient_preset(coeff), part, flavor), dynamic=variant == "dynamic")


def _max_excess(op, rng, samples):
    worst, count = 0.0, 0
    for p in PS:
        vals = pairing(random_vectors(op.n, samples, rng), p, op)
        worst = max(worst, float(np.max(arg_excess(vals, op.theta(p).theta))))
        count += len(vals)
    return worst, count


@pytest.mark.acceptance(2, "sector containment of pairings")
def test_c02_sector_containment(detail):
    rng = np.random.default_rng(2)
    total, worst = 0, 0.0
    for key, coeff, variant in itertools.product(DOMAINS, COEFFICIENT_PRESETS, VARIANTS):
        w, c = _max_excess(_variant_operator(key, coeff, variant), rng, SAMPLES)
        total += c
        worst = max(worst, w)
        assert w <= ARG_TOL, (key, coeff, variant, w)
    assert total >= 100_000
    detail(f"{total} pairings, max arg excess {worst:.1e}")


@pytest.mark.acceptance(3, "resolvent bound at p = 2")
def test_c03_resolvent_bound(detail):
    m = generate_mesh("square", 8)
    probes, worst = 0, -math.inf
    for coeff in ("rot1", "varying"):
        op = DiscreteOperator(assemble(m, coefficient_preset(coeff), BoundaryPartition(dirichlet={"left"})))
        th = op.theta2.theta
        for ang in (math.pi, th + 0.1, -(th + 0.1), math.pi / 2 + 0.2, -(math.pi / 2 + 0.2)):
            for r in np.geomspace(1e-2, 1e2, 40):
                probe = resolvent_norm(op, r * complex(math.cos(ang), math.sin(ang)))
                assert probe.norm <= probe.bound + 1e-9, (coeff, ang, r)
                worst = max(worst, probe.norm - probe.bound)
                probes += 1
    assert probes >= 200
    detail(f"{probes} probes, max(norm - bound) {worst:.2e}")


@pytest.mark.acceptance(4, "analytic contraction in the M-weighted 2-norm")
def test_c04_analytic_contraction(detail):
    m = generate_mesh("square", 8)
    rng = np.random.default_rng(4)
    worst = 0.0
    for coeff in COEFFICIENT_PRESETS:
        op = DiscreteOperator(assemble(m, coefficient_preset(coeff), BoundaryPartition(dirichlet={"left"})))
        lim = math.pi / 2 - op.theta2.theta - 0.01
        for t, a in zip(10 ** rng.uniform(-3, 1, 50), rng.uniform(-lim, lim, 50)):
            (row,) = contraction_scan(op, 2.0, [t], [a])
            worst = max(worst, row.norm)
            assert row.norm <= 1 + 1e-9, (coeff, t, a)
    detail(f"{50 * len(COEFFICIENT_PRESETS)} samples, max norm {worst:.12f}")


@pytest.mark.acceptance(5, "positivity and l^inf contraction of the lumped propagator")
def test_c05_positivity(detail):
    t = np.logspace(-3, 0, 10)
    worst_min, worst_sum = math.inf, 0.0
    for name, n, dirichlet in (("square", 12, set()), ("square", 12, {"left"}), ("lshape", 5, {"bottom"})):
        m = generate_mesh(name, n)
        op = DiscreteOperator(assemble(m, coefficient_preset("identity"), BoundaryPartition(dirichlet=dirichlet)))
        assert sub_markov_structure(op)
        for row in positivity_check(op, t):
            assert row.min_entry >= -1e-10 and row.max_row_sum <= 1 + 1e-10
            worst_min = min(worst_min, row.min_entry)
            worst_sum = max(worst_sum, row.max_row_sum)
    detail(f"min entry {worst_min:.1e}, max row sum {worst_sum:.12f}")


@pytest.mark.acceptance(6, "ultracontractivity exponents (square, cusp)")
def test_c06_ultracontractivity(detail):
    sq = DiscreteOperator(assemble(generate_mesh("square", 24), coefficient_preset("identity")))
    rep = ultracontractivity_fit(sq)
    assert abs(rep.slope + 1) <= 0.15
    cusp = DiscreteOperator(assemble(generate_mesh("cusp", 120, columns=1), coefficient_preset("identity")))
    rc = ultracontractivity_fit(cusp, np.geomspace(1e-3, 3e-2, 12))
    assert -2.3 <= rc.slope <= -1.0
    assert rc.slope - 0.3 <= -2 <= rc.slope + 0.3
    detail(f"square slope {rep.slope:.3f}, cusp slope {rc.slope:.3f} (beta {rc.beta:.2f}, residual {rc.residual:.2f})")


@pytest.mark.acceptance(7, "Hardy / averaged-limit / cut-off verdict agreement")
def test_c07_hardy(detail):
    D = PolylineSet.from_vertices([(0, 0), (0, 1)])
    family = [generate_mesh("square", n) for n in (8, 16, 32)]
    corpus = load_corpus()
    assert len(corpus) >= 6
    for name, expected in corpus:
        v = membership_experiment(FUNCTION_CATALOG[name], D, family, name=name, expected=expected)
        assert v.matches_expected, v.row()
    q = [hardy_quotient(np.ones(m.n_nodes), D, 2.0, m).quotient for m in family[1:]]
    ratio = q[1] / q[0]
    assert abs(ratio / math.sqrt(2) - 1) <= 0.1
    fine = generate_mesh("square", 96)
    assert fine.h <= 1 / 64
    qx = hardy_quotient(fine.nodes[:, 0], D, 2.0, fine).quotient
    assert abs(qx - 1) <= 0.02
    detail(f"{len(corpus)} functions agree, constant ratio {ratio:.4f}, u=x quotient {qx:.6f}")


@pytest.mark.acceptance(8, "Christ decomposition to generation 12")
@pytest.mark.parametrize("name", ["segment", "square", "koch"])
def test_c08_christ(name, detail):
    curve = {"segment": segment_set(), "square": square_boundary(), "koch": koch_curve(4)}[name]
    tree = christ_decompose(curve, 0.5, 12)
    rep = verify_christ_properties(tree)
    assert rep.passes, rep.failures
    assert rep.cells_checked == sum(2**k for k in range(13))
    detail(f"{name}: {rep.cells_checked} cells")


@pytest.mark.acceptance(9, "regular mantles and collar distance")
def test_c09_mantle(detail):
    rng = np.random.default_rng(9)
    trees = [christ_decompose(c, 0.5, 10) for c in (koch_curve(3), square_boundary())]
    c_lams = [verify_christ_properties(t).c_lambda for t in trees]
    worst = math.inf
    for i in range(20):
        tree, c_lam = trees[i % 2], c_lams[i % 2]
        L = tree.curve.length
        ends = np.sort(rng.uniform(0, L, 2 * rng.integers(1, 4)))
        pieces = ends.reshape(-1, 2)
        if i % 3 == 0:
            pieces[0, 1] = pieces[0, 0]  # a single point
        rho = float(tree.c1 * 0.5 ** rng.uniform(0.5, 9.5))
        mantle = regular_mantle(ArcSet(pieces), rho, tree)
        rep = check_mantle(mantle, rho, tree, c_lam, rng=rng)
        assert rep.contains_xi and rep.inside_lambda and rep.rho_bound
        assert rep.c_lower_small >= 0.9 * rep.bound_small
        assert rep.c_lower_all >= 0.9 * rep.bound_all
        worst = min(worst, rep.c_lower_small / rep.bound_small)
    D = PolylineSet.from_vertices([(0, 1), (0, 0)])
    for eps in (0.05, 0.1, 0.2):
        col = collar_extension(square_boundary(), D, eps)
        assert col.dist_to_D >= eps / 2
    detail(f"20 mantles, min sampled/required constant {worst:.2f}")


@pytest.mark.acceptance(10, "dynamic boundary conditions on the square")
def test_c10_dynamic(detail):
    m = generate_mesh("square", 6)
    rng = np.random.default_rng(10)
    worst_norm, worst_arg, total = 0.0, 0.0, 0
    for coeff in COEFFICIENT_PRESETS:
        system = assemble(m, coefficient_preset(coeff), BoundaryPartition(dynamic=set(m.label_set)))
        op = DiscreteOperator(system, dynamic=True)
        rows = contraction_scan(op, 2.0, np.geomspace(1e-3, 10, 12), [0.0])
        worst_norm = max(worst_norm, max(r.norm for r in rows))
        w, c = _max_excess(op, rng, 2000)
        worst_arg, total = max(worst_arg, w), total + c
    assert worst_norm <= 1 + 1e-9
    assert worst_arg <= ARG_TOL
    detail(f"max norm {worst_norm:.12f}, {total} pairings, max arg excess {worst_arg:.1e}")


@pytest.mark.acceptance(11, "determinism of the reference scenario")
def test_c11_determinism(tmp_path, detail):
    outs = [tmp_path / "first", tmp_path / "second"]
    for out in outs:
        assert main(["run", "--config", "configs/reference.cfg", "--out", str(out), "--no-plots"]) == 0
    files = sorted(p.name for p in outs[0].iterdir() if p.suffix in (".csv", ".json") and p.name != "timing.json")
    assert files and "report.json" in files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    detail(f"{len(files)} files byte-identical")
