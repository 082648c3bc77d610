import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starcrit.errors import StructuralError, ValidationError
from starcrit.harmonic_profile import HarmonicProfile, axis_profile, find_axis_critical_points
from starcrit.torsion_domain import (
    CriticalPoint,
    StarDomain,
    TorsionField,
    check_epsilon_admissible,
    count_superlevel_components,
    cylinder_convergence,
    direction_design,
    eval_torsion,
    find_critical_points,
    poincare_hopf_check,
    superlevel_components,
    verify_bounding_box,
    verify_transversality,
)

# fields below the admissibility threshold, used where the whole boundary is needed
ADMISSIBLE = [(2, 2, 1e-3), (2, 3, 1e-3), (2, 2, 5e-3), (3, 2, 1e-5), (3, 3, 1e-5), (4, 2, 1e-8)]


@pytest.fixture(scope="module")
def n2():
    return StarDomain(TorsionField.build(2, 2, 0.01))


def test_value_and_hessian_at_origin(n2):
    val, grad, hess = eval_torsion(n2.field, [0.0, 0.0])
    assert val == pytest.approx(0.46, abs=1e-15)
    assert np.all(grad == 0)
    np.testing.assert_allclose(hess, [[0.1, 0], [0, -1.1]], atol=1e-14)


def test_field_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        TorsionField.build(2, 1, 0.01)
    with pytest.raises(ValidationError):
        TorsionField.build(2, 2, -1.0)
    with pytest.raises(ValidationError):
        TorsionField.build(3, 2, 0.01, a=(1, 2))


@pytest.mark.parametrize("n,d", [(2, 2), (3, 3), (4, 4)])
def test_torsion_identity_and_symmetry(n, d):
    f = TorsionField.build(n, d, 1e-3)
    x = np.random.default_rng(n + d).uniform(-2, 2, (1000, d))
    val, grad, hess = eval_torsion(f, x)
    assert np.max(np.abs(np.trace(hess, axis1=1, axis2=2) + 1)) <= 1e-10
    for k in range(d):
        y = x.copy()
        y[:, k] *= -1
        np.testing.assert_allclose(f.value(y), val, rtol=1e-13, atol=1e-15)
    # block structure
    assert np.all(hess[:, 2:, :2] == 0)
    np.testing.assert_allclose(hess[:, 2:, 2:], np.broadcast_to(-np.eye(d - 2) / (d - 1), (1000, d - 2, d - 2)))


def test_gradient_matches_finite_differences():
    f = TorsionField.build(3, 3, 1e-2)
    x = np.random.default_rng(3).uniform(-2, 2, (50, 3))
    _, grad, hess = eval_torsion(f, x)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        np.testing.assert_allclose(fd, grad[:, k], atol=1e-6)
        gp = eval_torsion(f, x + e)[1]
        gm = eval_torsion(f, x - e)[1]
        np.testing.assert_allclose((gp - gm) / (2 * h), hess[:, :, k], atol=1e-5)


def test_radial_extent_on_axes(n2):
    assert n2.radial_extent([1.0, 0.0]) == pytest.approx(math.sqrt((5 + math.sqrt(209)) / 2), abs=1e-9)
    assert n2.radial_extent([1.0, 0.0]) == pytest.approx(3.11904, abs=1e-4)
    assert n2.radial_extent([0.0, 1.0]) == pytest.approx(0.9078, abs=1e-3)
    assert n2.radial_extent([-1.0, 0.0]) == pytest.approx(n2.radial_extent([1.0, 0.0]), abs=1e-10)


def test_radial_extent_tends_to_cylinder():
    dom = StarDomain(TorsionField.build(3, 3, 1e-9))
    w = np.array([0.0, 1.0, 1.0]) / math.sqrt(2)
    assert dom.radial_extent(w) == pytest.approx(1.0, abs=1e-6)


def test_contains(n2):
    pts = np.array([[0.0, 0.0], [3.2, 0.0], [1.5811, 0.0], [0.0, 0.95], [0.0, 0.9]])
    assert n2.contains(pts).tolist() == [True, False, True, False, True]
    assert n2.contains([0.0, 0.0]) is True


def test_radial_extent_raises_when_domain_reaches_box(n2):
    # at eps = 1e-2 the superlevel set {u > 0} joins the quartic horns near (3.16, 1.2)
    w = np.array([0.9534541723190013, 0.3015379599444958])
    with pytest.raises(StructuralError):
        n2.radial_extent(w)
    with pytest.raises(StructuralError):
        StarDomain(TorsionField.build(2, 2, 1.0)).radial_extent([1.0, 0.0])


def test_admissibility_examples():
    assert not check_epsilon_admissible(TorsionField.build(2, 2, 1.0)).axis_positive
    rep = check_epsilon_admissible(TorsionField.build(2, 2, 0.01))
    assert rep.axis_positive and not rep.admissible
    assert any("bounding box" in m for m in rep.diagnostics)
    assert check_epsilon_admissible(TorsionField.build(2, 2, 5e-3)).admissible
    assert check_epsilon_admissible(TorsionField.build(3, 3, 1e-12)).admissible


@pytest.mark.parametrize("n,d,eps", ADMISSIBLE)
def test_boundary_in_box_and_transversal(n, d, eps):
    dom = StarDomain(TorsionField.build(n, d, eps))
    box = verify_bounding_box(dom)
    assert box.passed and box.margin > 0 and box.samples >= 10_000
    tr = verify_transversality(dom)
    assert tr.passed and tr.max_value <= -dom.field.level
    pts, _, r = dom.boundary_samples()
    assert np.all(r > 0)
    assert np.max(np.abs(dom.field.value(pts))) <= 1e-9


def test_box_report_values():
    dom = StarDomain(TorsionField.build(2, 2, 5e-3))
    box = verify_bounding_box(dom)
    assert box.sup_u == pytest.approx(0.5 + 5e-3 * 2.25, rel=1e-12)
    assert box.max_abs_x1 < dom.half_width == pytest.approx(5e-3 ** -0.25)


def test_transversality_at_axis_points(n2):
    for w, expected in [([1.0, 0.0], -2.813), ([0.0, 1.0], -0.9336)]:
        x = n2.radial_extent(w) * np.array(w)
        assert x @ eval_torsion(n2.field, x)[1] == pytest.approx(expected, abs=1e-3)


def test_radial_consistency_single_sign_change():
    dom = StarDomain(TorsionField.build(2, 3, 1e-3))
    g = np.random.default_rng(0).standard_normal((10_000, 3))
    w = g / np.linalg.norm(g, axis=1, keepdims=True)
    r = dom.radial_extent(w)
    stop = np.minimum(r + 0.5, dom.exit_time(w))
    t = np.linspace(0, 1, 801)[None, :] * stop[:, None]
    vals = dom.field.value(t[:, :, None] * w[:, None, :])
    changes = np.sum(np.diff(np.sign(vals), axis=1) != 0, axis=1)
    assert np.all(changes == 1)


def test_component_count_n2(n2):
    rep = superlevel_components(n2)
    assert rep.count == 2
    assert rep.component_maxima == pytest.approx([0.5225, 0.5225], abs=1e-12)
    assert rep.stmax_passed
    assert count_superlevel_components(n2, level=0.6) == 0


@pytest.mark.parametrize("n,d,eps", [(3, 2, 1e-5), (3, 3, 1e-5), (4, 3, 1e-8)])
def test_component_count_matches_n(n, d, eps):
    assert count_superlevel_components(StarDomain(TorsionField.build(n, d, eps))) == n


def test_critical_points_n2(n2):
    cps = find_critical_points(n2)
    assert [c.kind for c in cps] == ["maximum", "saddle", "maximum"]
    r = math.sqrt(2.5)
    for c, x in zip(cps, [-r, 0.0, r]):
        np.testing.assert_allclose(c.location, [x, 0.0], atol=1e-10)
    assert sorted(cps[1].eigenvalues) == pytest.approx([-1.1, 0.1], abs=1e-12)
    assert sorted(cps[0].eigenvalues) == pytest.approx([-0.8, -0.2], abs=1e-10)
    assert poincare_hopf_check(cps, 2)


@pytest.mark.parametrize("n,d,eps", ADMISSIBLE + [(4, 3, 1e-8)])
def test_critical_point_invariants(n, d, eps):
    f = TorsionField.build(n, d, eps)
    cps = find_critical_points(StarDomain(f))
    assert sum(c.kind == "maximum" for c in cps) == n
    assert sum(c.kind == "saddle" for c in cps) == n - 1
    assert poincare_hopf_check(cps, d)
    axis = find_axis_critical_points(f.profile)
    for c in cps:
        x = np.array(c.location)
        _, grad, hess = eval_torsion(f, x)
        assert np.linalg.norm(grad) <= 1e-10
        assert np.all(np.abs(x[2:]) <= 1e-10)
        assert abs(x[1]) <= 1e-9
        if c.kind == "maximum":
            j = int(np.argmin(np.abs(np.array(axis.maxima) - x[0])))
            fpp = axis_profile(f.profile, axis.maxima[j])[2]
            ratio = np.linalg.det(hess[:2, :2]) / (-eps * fpp / (d - 1))
            # on the axis the block is diagonal, so the ratio is exactly 1 + (d-1) eps f''
            assert ratio == pytest.approx(1 + (d - 1) * eps * fpp, rel=1e-9)
            if (d - 1) * eps * abs(fpp) < 0.099:
                assert 0.9 <= ratio <= 1.1


def test_poincare_hopf_rejects_bad_lists():
    mx = CriticalPoint((1.0, 0.0), "maximum", (-1.0, -2.0), 1)
    assert not poincare_hopf_check([mx, mx], 2)
    degenerate = CriticalPoint((0.0, 0.0), "saddle", (0.0, -1.0), 0)
    with pytest.raises(ValidationError):
        poincare_hopf_check([mx, degenerate], 2)


def test_cylinder_convergence():
    p = HarmonicProfile.default(2)
    rep = cylinder_convergence(p, 3, (1.5, 1.3), [1e-2, 1e-3, 1e-4])
    assert rep.strictly_decreasing
    assert rep.distances[-1] < 2e-3
    # Q inside the cylinder: sets coincide
    assert cylinder_convergence(p, 2, (1.5, 0.5), [1e-2, 1e-3]).distances == [0.0, 0.0]
    assert cylinder_convergence(p, 2, (1.5, 1.3), [1e-14]).distances[0] < 1e-10


def test_direction_design_is_unit():
    for d in (2, 3, 5):
        w = direction_design(d, 500)
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-6, 4e-3), st.sampled_from([2, 3]))
def test_boundary_points_are_zeros_and_transversal(eps, d):
    dom = StarDomain(TorsionField.build(2, d, eps))
    w = direction_design(d, 200)
    r = dom.radial_extent(w)
    x = r[:, None] * w
    val, grad, _ = eval_torsion(dom.field, x)
    assert np.max(np.abs(val)) <= 1e-9
    assert np.all(np.einsum("ij,ij->i", x, grad) <= -dom.field.level)
    inner = 0.999 * x
    assert np.all(dom.contains(inner))
    assert not np.any(dom.contains(1.001 * x))
