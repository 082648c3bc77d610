import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from starcrit.errors import ValidationError
from starcrit.harmonic_profile import (
    HarmonicProfile,
    axis_profile,
    build_coefficients,
    eval_profile,
    find_axis_critical_points,
    monomial_coefficients,
)

X1, X2 = sp.symbols("x1 x2", real=True)
Z = sp.symbols("z")


def sympy_profile(a):
    """Independent expansion of Re(-prod (z^2 - a_i^2)) at z = x1 + i x2."""
    F = -sp.prod([(Z - ai) * (Z + ai) for ai in a])
    v = sp.expand(sp.re(sp.expand(F.subs(Z, X1 + sp.I * X2))))
    return sp.Poly(v, X1, X2)


@pytest.mark.parametrize(
    "a, expected",
    [
        ((1,), (-1, 1)),
        ((1, 2), (4, -5, 1)),
        ((1, 2, 3), (-36, 49, -14, 1)),
    ],
)
def test_build_coefficients(a, expected):
    assert build_coefficients(a).b == pytest.approx(expected, abs=0)


def test_build_coefficients_matches_symbolic_expansion():
    a = (0.5, 1.25, 2.0, 3.5)
    poly = sp.Poly(sp.expand(sp.prod([(Z**2 - sp.Rational(str(ai)) ** 2) for ai in a])), Z)
    sym = [float(poly.coeff_monomial(Z ** (2 * i))) for i in range(len(a) + 1)]
    assert build_coefficients(a).b == pytest.approx(sym, rel=1e-14)


@pytest.mark.parametrize("bad", [(2, 1), (0, 1), (-1, 2), (1, 1)])
def test_bad_points_rejected(bad):
    with pytest.raises(ValidationError):
        build_coefficients(bad)


def test_profile_requires_two_points():
    with pytest.raises(ValidationError):
        HarmonicProfile.from_points([1.0])


def test_eval_profile_closed_form_values():
    p = HarmonicProfile.from_points((1, 2))
    v, g, _ = eval_profile(p, 0.0, 0.0)
    assert v == -4.0
    assert np.all(g == 0.0)
    assert eval_profile(p, 1.0, 1.0)[0] == pytest.approx(0.0, abs=1e-14)


def test_eval_profile_matches_sympy_polynomial():
    a = (1, 2, 3)
    poly = sympy_profile(a)
    p = HarmonicProfile.from_points(a)
    f = sp.lambdify((X1, X2), poly.as_expr())
    fx = sp.lambdify((X1, X2), sp.diff(poly.as_expr(), X1))
    fyy = sp.lambdify((X1, X2), sp.diff(poly.as_expr(), X2, 2))
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 3, size=(50, 2))
    v, g, h = eval_profile(p, pts[:, 0], pts[:, 1])
    assert v == pytest.approx(f(pts[:, 0], pts[:, 1]), rel=1e-12, abs=1e-9)
    assert g[:, 0] == pytest.approx(fx(pts[:, 0], pts[:, 1]), rel=1e-12, abs=1e-9)
    assert h[:, 1, 1] == pytest.approx(fyy(pts[:, 0], pts[:, 1]), rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_harmonic_and_even(n):
    p = HarmonicProfile.default(n)
    rng = np.random.default_rng(n)
    pts = rng.uniform(-n, n, size=(1000, 2))
    v, _, h = eval_profile(p, pts[:, 0], pts[:, 1])
    assert np.all(np.abs(h[:, 0, 0] + h[:, 1, 1]) <= 1e-10 * (1 + np.abs(v)))
    for s1, s2 in [(-1, 1), (1, -1), (-1, -1)]:
        assert eval_profile(p, s1 * pts[:, 0], s2 * pts[:, 1])[0] == pytest.approx(v, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_derivatives_match_central_differences(n):
    p = HarmonicProfile.default(n)
    rng = np.random.default_rng(10 + n)
    pts = rng.uniform(-n, n, size=(100, 2))
    step = 1e-5
    _, g, h = eval_profile(p, pts[:, 0], pts[:, 1])
    for k, e in enumerate(np.eye(2)):
        vp, gp, _ = eval_profile(p, *(pts + step * e).T)
        vm, gm, _ = eval_profile(p, *(pts - step * e).T)
        fd_g = (vp - vm) / (2 * step)
        fd_h = (gp - gm) / (2 * step)
        scale = 1 + np.abs(g[:, k])
        assert np.all(np.abs(fd_g - g[:, k]) <= 1e-6 * scale)
        scale_h = 1 + np.abs(h[:, :, k])
        assert np.all(np.abs(fd_h - h[:, :, k]) <= 1e-6 * scale_h)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_leading_mixed_coefficient(n):
    coeffs = monomial_coefficients(HarmonicProfile.default(n))
    assert coeffs[(2 * n - 2, 2)] == n * (2 * n - 1)
    assert coeffs[(2 * n, 0)] == -1


def test_monomials_match_sympy():
    a = (1, 2, 3)
    poly = sympy_profile(a)
    ours = monomial_coefficients(HarmonicProfile.from_points(a))
    theirs = {m: sp.Rational(c) for m, c in zip(poly.monoms(), poly.coeffs())}
    assert ours == theirs


def test_axis_profile_values():
    p2 = HarmonicProfile.from_points((1, 2))
    f, _, _ = axis_profile(p2, np.array([1.0, 2.0, -1.0, -2.0]))
    assert np.all(f == 0.0)
    assert axis_profile(p2, math.sqrt(2.5))[2] == pytest.approx(-20.0, rel=1e-14)
    assert axis_profile(HarmonicProfile.from_points((1, 2, 3)), 0.0)[0] == 36.0


def test_axis_profile_equals_eval_profile_on_axis():
    p = HarmonicProfile.default(3)
    t = np.linspace(-3, 3, 41)
    f, df, ddf = axis_profile(p, t)
    v, g, h = eval_profile(p, t, np.zeros_like(t))
    np.testing.assert_allclose(f, v, rtol=1e-14)
    np.testing.assert_allclose(df, g[:, 0], rtol=1e-14)
    np.testing.assert_allclose(ddf, h[:, 0, 0], rtol=1e-14)


def test_axis_critical_points_n2():
    cp = find_axis_critical_points(HarmonicProfile.from_points((1, 2)))
    assert cp.maxima == pytest.approx((-math.sqrt(2.5), math.sqrt(2.5)), abs=1e-11)
    assert cp.minima == pytest.approx((0.0,), abs=1e-11)
    assert cp.d_prime == pytest.approx(2.25, rel=1e-12)
    assert cp.d_doubleprime == pytest.approx(4.0, rel=1e-12)


def test_axis_critical_points_n3():
    cp = find_axis_critical_points(HarmonicProfile.from_points((1, 2, 3)))
    assert cp.maxima == pytest.approx((-math.sqrt(7), 0.0, math.sqrt(7)), abs=1e-11)
    assert cp.minima == pytest.approx((-math.sqrt(7 / 3), math.sqrt(7 / 3)), abs=1e-11)
    assert cp.d_prime == pytest.approx(36.0, rel=1e-12)
    assert cp.d_doubleprime == pytest.approx(400 / 27, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.2, 5.0), min_size=2, max_size=5, unique=True).filter(
        lambda xs: min(abs(a - b) for i, a in enumerate(xs) for b in xs[i + 1 :]) > 0.05
    )
)
def test_axis_critical_points_interlace(raw):
    a = sorted(raw)
    p = HarmonicProfile.from_points(a)
    cp = find_axis_critical_points(p)
    seq = sorted(cp.maxima + cp.minima)
    kinds = ["max" if s in cp.maxima else "min" for s in seq]
    assert kinds == ["max", "min"] * (p.n - 1) + ["max"]
    assert -a[-1] < seq[0] and seq[-1] < a[-1]
    assert cp.d_prime > 0 and cp.d_doubleprime > 0
    # symmetric under x -> -x
    assert np.allclose(sorted(-np.array(seq)), seq, atol=1e-9)
    _, df, _ = axis_profile(p, np.array(seq))
    scale = max(1.0, float(np.max(np.abs(axis_profile(p, np.linspace(-a[-1], a[-1], 200))[2]))))
    assert np.all(np.abs(df) <= 1e-9 * scale)
