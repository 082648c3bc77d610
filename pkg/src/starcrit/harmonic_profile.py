"""Planar harmonic profile built from an even polynomial with prescribed real roots.

The profile is ``v(x1, x2) = Re F(x1 + i x2)`` with
``F(z) = -prod_i (z - a_i)(z + a_i) = -sum_i b_i z^(2i)``. Everything here is an
exact polynomial computation; derivatives come from the holomorphic identities
``(d1 v, d2 v) = (Re F', -Im F')`` and the analogous ones for ``F''``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy.optimize import bisect

from .errors import StructuralError, ValidationError

ROOT_XTOL = 1e-12


def validate_points(a, *, min_n: int = 2) -> tuple[float, ...]:
    """Return ``a`` as a tuple of floats after checking ``0 < a_1 < ... < a_n``."""
    pts = tuple(float(v) for v in np.atleast_1d(np.asarray(a, dtype=float)))
    if len(pts) < min_n:
        raise ValidationError(f"need at least {min_n} separation points, got {len(pts)}")
    if not all(np.isfinite(pts)):
        raise ValidationError("separation points must be finite")
    if pts[0] <= 0:
        raise ValidationError("separation points must be positive")
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValidationError("separation points must be strictly increasing")
    return pts


@dataclass(frozen=True)
class EvenPolynomial:
    """Coefficients ``b_0..b_n`` of ``F(z) = -sum_i b_i z^(2i)``; ``b_n == 1``."""

    b: tuple[float, ...]

    @property
    def degree(self) -> int:
        return 2 * (len(self.b) - 1)

    def __call__(self, z):
        return eval_even(self.b, z)[0]


def build_coefficients(a) -> EvenPolynomial:
    """Expand ``-prod (z^2 - a_i^2)`` into the ``b`` coefficients.

    Single points are accepted here (``n = 1``) as a degenerate utility.
    """
    pts = validate_points(a, min_n=1)
    # coefficients of prod (w - a_i^2) in w = z^2, lowest degree first
    coeffs = [Fraction(1)]
    for ai in pts:
        r = Fraction(ai) ** 2
        nxt = [Fraction(0)] * (len(coeffs) + 1)
        for k, c in enumerate(coeffs):
            nxt[k + 1] += c
            nxt[k] -= r * c
        coeffs = nxt
    return EvenPolynomial(tuple(float(c) for c in coeffs))


def eval_even(b, z):
    """Evaluate ``F, F', F''`` at complex ``z`` by Horner's scheme in ``w = z^2``."""
    z = np.asarray(z, dtype=complex)
    w = z * z
    p = np.zeros_like(w)
    dp = np.zeros_like(w)
    ddp = np.zeros_like(w)
    for coef in reversed(b):
        ddp = ddp * w + 2.0 * dp
        dp = dp * w + p
        p = p * w + coef
    f = -p
    df = -2.0 * z * dp
    ddf = -(2.0 * dp + 4.0 * w * ddp)
    return f, df, ddf


@dataclass(frozen=True)
class HarmonicProfile:
    """The harmonic function ``v_n`` attached to separation points ``a``."""

    a: tuple[float, ...]
    coeffs: EvenPolynomial

    @classmethod
    def from_points(cls, a) -> "HarmonicProfile":
        pts = validate_points(a, min_n=2)
        return cls(pts, build_coefficients(pts))

    @classmethod
    def default(cls, n: int) -> "HarmonicProfile":
        """Fixture with ``a_i = i``."""
        return cls.from_points(range(1, n + 1))

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def b(self) -> tuple[float, ...]:
        return self.coeffs.b

    def __call__(self, x1, x2):
        return eval_profile(self, x1, x2)[0]


def eval_profile(p: HarmonicProfile, x1, x2):
    """Value, gradient ``(..., 2)`` and Hessian ``(..., 2, 2)`` of the profile."""
    z = np.asarray(x1, dtype=float) + 1j * np.asarray(x2, dtype=float)
    f, df, ddf = eval_even(p.b, z)
    value = f.real
    grad = np.stack([df.real, -df.imag], axis=-1)
    h11 = ddf.real
    h12 = -ddf.imag
    hess = np.stack(
        [np.stack([h11, h12], axis=-1), np.stack([h12, -h11], axis=-1)], axis=-2
    )
    return value, grad, hess


def profile_value(p: HarmonicProfile, x1, x2):
    """Value of the profile only; cheaper than :func:`eval_profile` in hot loops."""
    z = np.asarray(x1, dtype=float) + 1j * np.asarray(x2, dtype=float)
    w = z * z
    acc = np.zeros_like(w)
    for coef in reversed(p.b):
        acc = acc * w + coef
    return -acc.real


def axis_profile(p: HarmonicProfile, x1):
    """Restriction ``f(t) = v(t, 0)`` with its first two derivatives."""
    f, df, ddf = eval_even(p.b, np.asarray(x1, dtype=float))
    return f.real, df.real, ddf.real


def monomial_coefficients(p: HarmonicProfile) -> dict[tuple[int, int], Fraction]:
    """Exact expansion ``v = sum c[(i, j)] x1^i x2^j`` (zero terms dropped)."""
    out: dict[tuple[int, int], Fraction] = {}
    for j, bj in enumerate(p.b):
        bj = Fraction(bj)
        for k in range(0, 2 * j + 1, 2):
            # Re(i^k) = (-1)^(k/2) for even k
            c = -bj * comb(2 * j, k) * (-1) ** (k // 2)
            key = (2 * j - k, k)
            out[key] = out.get(key, Fraction(0)) + c
    return {k: v for k, v in out.items() if v != 0}


@dataclass(frozen=True)
class AxisCriticalProfile:
    maxima: tuple[float, ...]
    minima: tuple[float, ...]
    d_prime: float
    d_doubleprime: float


def find_axis_critical_points(p: HarmonicProfile, nodes_per_root: int = 64) -> AxisCriticalProfile:
    """Locate the ``2n - 1`` critical points of ``f`` on ``(-a_n, a_n)``.

    Sign changes of ``f'`` are bracketed on a uniform grid and bisected to
    ``ROOT_XTOL``. The grid is refined up to four times if the bracket count
    comes out wrong; after that the profile is declared broken.
    """
    n = p.n
    an = p.a[-1]
    expected = 2 * n - 1
    num = nodes_per_root * n
    roots: list[float] = []
    for _ in range(5):
        t = np.linspace(-an, an, num)
        _, df, _ = axis_profile(p, t)
        roots = [float(ti) for ti, v in zip(t, df) if v == 0.0]
        sgn = np.sign(df)
        for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            roots.append(
                bisect(lambda s: axis_profile(p, s)[1], t[i], t[i + 1], xtol=ROOT_XTOL)
            )
        roots.sort()
        if len(roots) == expected:
            break
        num *= 4
    else:
        raise StructuralError(
            f"found {len(roots)} critical points of the axis profile, expected {expected}"
        )

    r = np.array(roots)
    fv, _, ddf = axis_profile(p, r)
    maxima = tuple(r[ddf < 0])
    minima = tuple(r[ddf > 0])
    if len(maxima) != n or len(minima) != n - 1:
        raise StructuralError("axis critical points do not alternate max/min")
    return AxisCriticalProfile(
        maxima=maxima,
        minima=minima,
        d_prime=float(fv[ddf < 0].min()),
        d_doubleprime=float(-fv[ddf > 0].max()),
    )
