import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starcrit.elliptic_solver import (
    Nonlinearity,
    assemble,
    check_nonlinearity,
    continuation_in_eta,
    convergence_study,
    count_solution_critical_points,
    discretize,
    linear_operator,
    newton_solve,
    normalize_nonlinearity,
)
from starcrit.errors import (
    DomainError,
    HypothesisError,
    NonConvergenceError,
    ResolutionError,
    StructuralError,
    ValidationError,
)
from starcrit.manifold_charts import ChartedManifold, RescaledMetric
from starcrit.measure import sliced_measure
from starcrit.torsion_domain import StarDomain, TorsionField, find_critical_points

SPHERE = ChartedManifold.sphere(2, 1.0)


@pytest.fixture(scope="module")
def dom():
    return StarDomain(TorsionField.build(2, 2, 1e-3))


@pytest.fixture(scope="module")
def grid(dom):
    return discretize(dom, 0.02)


@pytest.fixture(scope="module")
def coarse(dom):
    return discretize(dom, 0.04)


@pytest.fixture(scope="module")
def sphere_solution(grid):
    return newton_solve(grid, SPHERE, Nonlinearity.quadratic(), 0.01)


def _interior_rows(gd):
    return np.all(gd.nbr >= 0, axis=(0, 1))


# ---------------------------------------------------------------- nonlinearity


def test_normalize_examples():
    y = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    v = np.linspace(-1, 1, 5)
    g = normalize_nonlinearity(Nonlinearity.affine(2.0), 2)
    assert np.allclose(g(y, v), 1 + v) and g.scale == 2.0
    one = Nonlinearity.constant(1.0)
    assert normalize_nonlinearity(one, 2) is one
    g3 = normalize_nonlinearity(Nonlinearity.constant(3.0), 2)
    assert np.allclose(g3(y, v), 1.0) and g3.scale == 3.0
    assert g3.base_value(2) == 1.0


def test_normalize_rejects_nonpositive_base():
    with pytest.raises(HypothesisError):
        normalize_nonlinearity(Nonlinearity.affine(-1.0), 2)
    with pytest.raises(HypothesisError):
        check_nonlinearity(Nonlinearity.constant(0.0), 2)


def test_derivative_sanity_check():
    assert check_nonlinearity(Nonlinearity.quadratic(), 3) <= 1e-4
    wrong = Nonlinearity(lambda y, u: 1 + u**2, lambda y, u: u, "wrong")
    with pytest.raises(HypothesisError):
        check_nonlinearity(wrong, 2)


def test_normalised_solution_maps_back(coarse):
    s3 = newton_solve(coarse, None, Nonlinearity.constant(3.0), 0.0)
    s1 = newton_solve(coarse, None, Nonlinearity.constant(1.0), 0.0)
    assert s3.scale == 3.0
    assert np.allclose(s3.values, 3 * s1.values, rtol=1e-10, atol=1e-14)


# ------------------------------------------------------------------ the grid


def test_node_count_matches_area(dom, grid):
    area = sliced_measure(dom).value
    assert grid.count == pytest.approx(area / grid.h**2, rel=0.02)


def test_grid_invariants(dom, grid):
    assert np.all(dom.contains(grid.nodes))
    b = grid.boundary_distances
    assert np.all(b > 0) and np.all(b <= grid.h)
    assert np.all(grid.arm[grid.nbr >= 0] == grid.h)


def test_refinement_quadruples_nodes(coarse, grid):
    assert grid.count / coarse.count == pytest.approx(4.0, rel=0.03)


def test_grid_preconditions(dom):
    with pytest.raises(ValidationError):
        discretize(dom, 0.2)
    with pytest.raises(ValidationError):
        discretize(StarDomain(TorsionField.build(2, 4, 1e-6)), 0.05)
    with pytest.raises(StructuralError):
        discretize(StarDomain(TorsionField.build(2, 2, 1e-2)), 0.05)


def test_resolution_error_for_thin_domain():
    # separation points far apart allow h = 1, which cannot resolve a unit-radius cylinder
    dm = StarDomain(TorsionField.build(a=[10.0, 20.0], d=2, eps=1e-9))
    with pytest.raises(ResolutionError):
        discretize(dm, 1.0)


# ------------------------------------------------------------------ assembly


def test_torsion_residual_orders(dom):
    # interior rows are second order, rows touching the boundary first order
    inner, edge = [], []
    for h in (0.04, 0.02):
        gd = discretize(dom, h)
        r, _ = assemble(gd, None, Nonlinearity.constant(), gd.sampled_field())
        full = _interior_rows(gd)
        inner.append(np.abs(r[full]).max())
        edge.append(np.abs(r[~full]).max())
    assert inner[0] / inner[1] == pytest.approx(4.0, rel=0.01)
    assert inner[0] <= 0.01 * 0.04**2
    assert 1.5 < edge[0] / edge[1] < 2.5


def test_jacobian_row_sums_and_symmetry(grid):
    _, J = assemble(grid, None, Nonlinearity.constant(), grid.sampled_field())
    full = _interior_rows(grid)
    assert np.allclose(np.asarray(J.sum(axis=1)).ravel()[full], 0.0, atol=1e-9)
    sub = J[full][:, full]
    assert abs(sub - sub.T).max() == 0


def test_flat_operator_ignores_eta_for_euclidean(grid):
    L0 = linear_operator(grid)
    L1 = linear_operator(grid, RescaledMetric(ChartedManifold.euclidean(2), 0.3))
    assert abs(L0 - L1).max() == 0


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0, 0.02, 0.5]))
def test_jacobian_matches_directional_differences(seed, eta):
    gd = discretize(StarDomain(TorsionField.build(2, 2, 1e-3)), 0.04)
    rm = None if eta == 0 else RescaledMetric(SPHERE, eta)
    nl = Nonlinearity.quadratic()
    rng = np.random.default_rng(seed)
    U = gd.sampled_field() * (1 + 0.1 * rng.standard_normal(gd.count))
    V = rng.standard_normal(gd.count)
    t = 1e-6
    r0, J = assemble(gd, rm, nl, U)
    r1, _ = assemble(gd, rm, nl, U + t * V)
    fd = (r1 - r0) / t
    JV = J @ V
    assert np.linalg.norm(fd - JV) <= 1e-5 * np.linalg.norm(JV)


def test_chart_violation(grid):
    with pytest.raises(DomainError):
        assemble(grid, RescaledMetric(SPHERE, 10.0), Nonlinearity.constant(), grid.sampled_field())
    with pytest.raises((DomainError, NonConvergenceError)):
        newton_solve(grid, SPHERE, Nonlinearity.constant(), 10.0)


# ------------------------------------------------------------------ solving


def test_flat_newton_is_second_order(dom):
    errs = []
    for h in (0.04, 0.02):
        s = newton_solve(discretize(dom, h), ChartedManifold.euclidean(2), Nonlinearity.constant(), 0.03)
        assert s.iterations <= 2
        errs.append(s.distance_to_torsion()[0])
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_sphere_fixture(grid, sphere_solution):
    s = sphere_solution
    assert s.residual <= 1e-9 * 2
    assert np.all(s.values > 0)
    dist = s.distance_to_torsion()[0]
    assert dist <= 0.05
    # self-convergence: a coarser grid gives the same distance up to the grid floor
    c = newton_solve(discretize(grid.dom, 0.04), SPHERE, Nonlinearity.quadratic(), 0.01)
    floor = newton_solve(grid, None, Nonlinearity.quadratic(), 0.0).distance_to_torsion()[0]
    assert abs(c.distance_to_torsion()[0] - dist) <= 10 * floor + 1e-6


def test_newton_quadratic_tail(coarse):
    s = newton_solve(coarse, ChartedManifold.euclidean(2), Nonlinearity.quadratic(), 1.0)
    assert s.iterations >= 3
    r = s.history
    pairs = [(a, b) for a, b in zip(r, r[1:]) if a <= 1e-3 and b > 1e-11]
    assert pairs
    assert all(b <= 10 * a * a for a, b in pairs)


def test_newton_nonconvergence(coarse):
    with pytest.raises(NonConvergenceError):
        newton_solve(coarse, ChartedManifold.euclidean(2), Nonlinearity.quadratic(), 1.2)
    with pytest.raises(NonConvergenceError):
        newton_solve(coarse, ChartedManifold.euclidean(2), Nonlinearity.quadratic(), 1.0, maxiter=1)


def test_continuation(coarse):
    nl = Nonlinearity.quadratic()
    one = continuation_in_eta(coarse, SPHERE, nl, 0.02, steps=1)
    direct = newton_solve(coarse, SPHERE, nl, 0.02)
    assert np.array_equal(one[0].values, direct.values)
    branch = continuation_in_eta(coarse, SPHERE, nl, 0.04, steps=4)
    assert [s.eta for s in branch] == pytest.approx([0.01, 0.02, 0.03, 0.04])
    d = [s.distance_to_torsion()[0] for s in branch]
    assert d[-1] >= d[0]
    for s in branch:
        cps = count_solution_critical_points(s)
        assert len(cps) == 3
    zero = continuation_in_eta(coarse, SPHERE, nl, 0.0)
    assert len(zero) == 1 and np.array_equal(zero[0].values, coarse.sampled_field())
    with pytest.raises(ValidationError):
        continuation_in_eta(coarse, SPHERE, nl, 0.02, steps=0)


def test_continuation_reports_failing_eta(coarse):
    with pytest.raises(NonConvergenceError, match="eta_2"):
        continuation_in_eta(coarse, ChartedManifold.euclidean(2), Nonlinearity.quadratic(), 1.2, steps=2)


def test_convergence_study(coarse):
    st_ = convergence_study(coarse, SPHERE, Nonlinearity.constant(), [0.04, 0.02, 0.01])
    assert st_.passed
    assert st_.sup[0] > st_.sup[1] > st_.sup[2]
    assert st_.grad_sup[0] > st_.grad_sup[2]
    flat = convergence_study(coarse, ChartedManifold.euclidean(2), Nonlinearity.constant(), [0.04, 0.02, 0.01])
    assert np.allclose(flat.sup, flat.floor, rtol=1e-6)
    with pytest.raises(ValidationError):
        convergence_study(coarse, SPHERE, Nonlinearity.constant(), [])
    with pytest.raises(ValidationError):
        convergence_study(coarse, SPHERE, Nonlinearity.constant(), [0.01, 0.02])


# ------------------------------------------------------- critical points of U


def test_flat_solution_critical_points(dom, grid):
    s = newton_solve(grid, None, Nonlinearity.constant(), 0.0)
    got = count_solution_critical_points(s)
    ref = find_critical_points(dom)
    assert [c.kind for c in got] == [c.kind for c in ref]
    for a, b in zip(got, ref):
        assert np.max(np.abs(np.subtract(a.location, b.location))) <= grid.h**2


def test_sphere_solution_critical_points(sphere_solution):
    cps = count_solution_critical_points(sphere_solution)
    assert [c.kind for c in cps] == ["maximum", "saddle", "maximum"]
    eps = sphere_solution.grid.dom.field.eps
    assert all(min(abs(e) for e in c.eigenvalues) >= 1e-3 * eps for c in cps)
    assert sum(c.index_sign for c in cps) == 1


def test_three_dimensional_sphere_solution():
    m = ChartedManifold.sphere(3, 1.0)
    gd = discretize(StarDomain(TorsionField.build(3, 3, 1e-5)), 0.05)
    s = newton_solve(gd, m, Nonlinearity.quadratic(), 1e-3)
    assert np.all(s.values > 0)
    cps = count_solution_critical_points(s)
    assert [c.kind for c in cps] == ["maximum", "saddle", "maximum", "saddle", "maximum"]
    assert sum(c.index_sign for c in cps) == -1
