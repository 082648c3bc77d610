"""Volumes of superlevel sets of ``u_eps`` inside the domain.

Deterministic route (any ``d``): ``u(x) = w(x1, x2) - |x''|^2 / (2(d-1))`` with
``x'' = (x3..xd)``, so ``{u > c}`` fibres over the planar set ``{w > c}`` with
round fibres of radius ``sqrt(2(d-1)(w - c))``. The volume is therefore a planar
integral, done with Gauss-Legendre rules on intervals whose ends are located by
root finding and whose square-root endpoint behaviour is removed by the
substitution ``t -> 3t^2 - 2t^3``.

Stochastic route: uniform sampling of the bounding box with a seeded PRNG.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import gamma

from .errors import ValidationError
from .harmonic_profile import profile_value
from .torsion_domain import TRANSVERSE_RADIUS, StarDomain

Z99 = 2.5758293035489004


@dataclass
class MeasureEstimate:
    value: float
    error: float
    method: str
    samples: int

    def to_dict(self):
        return asdict(self)


def ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / gamma(k / 2 + 1)


def _smooth_rule(nodes: int):
    """Gauss-Legendre rule on [0, 1] composed with ``t -> 3t^2 - 2t^3``."""
    x, w = leggauss(nodes)
    s = 0.5 * (x + 1)
    return 3 * s**2 - 2 * s**3, 0.5 * w * 6 * s * (1 - s)


def _slice_value(dom: StarDomain, x1, x2):
    f = dom.field
    return 0.5 / (f.d - 1) * (1 - x2**2) + f.eps * profile_value(f.profile, x1, x2)


def _axis_roots(dom: StarDomain, level: float):
    g = lambda t: float(_slice_value(dom, np.float64(t), 0.0)) - level  # noqa: E731
    t = np.linspace(0, dom.half_width, 4001)
    v = _slice_value(dom, t, 0.0) - level
    return [brentq(g, t[i], t[i + 1], xtol=1e-14) for i in np.nonzero(v[:-1] * v[1:] < 0)[0]]


def _bisect(fun, lo, hi, iters=60):
    flo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _default_fiber(d: int):
    vol = ball_volume(d - 2)

    def fiber(x1, x2, s):
        return vol * (2 * (d - 1) * s) ** ((d - 2) / 2)

    return fiber


def _sliced_quadrature(dom, level, fiber, nodes, inner_nodes, x2_grid=257):
    breaks = sorted({0.0, dom.half_width, *_axis_roots(dom, 0.0), *_axis_roots(dom, level)})
    s_out, w_out = _smooth_rule(nodes)
    x1 = np.concatenate([a + (b - a) * s_out for a, b in zip(breaks, breaks[1:])])
    w1 = np.concatenate([(b - a) * w_out for a, b in zip(breaks, breaks[1:])])

    t = np.linspace(0.0, TRANSVERSE_RADIUS, x2_grid)
    vals = _slice_value(dom, x1[:, None], t[None, :]) - level
    pos = vals > 0
    prev = np.zeros_like(pos)
    prev[:, 1:] = pos[:, :-1]
    nxt = np.zeros_like(pos)
    nxt[:, :-1] = pos[:, 1:]
    si, sj = np.nonzero(pos & ~prev)
    ei, ej = np.nonzero(pos & ~nxt)
    # row-major nonzero keeps starts and ends paired within each row
    start = np.zeros(len(si))
    inner = sj > 0
    fun_s = lambda y: _slice_value(dom, x1[si[inner]], y) - level  # noqa: E731
    start[inner] = _bisect(fun_s, t[sj[inner] - 1], t[sj[inner]])
    end = np.full(len(ei), TRANSVERSE_RADIUS)
    inner = ej < x2_grid - 1
    fun_e = lambda y: _slice_value(dom, x1[ei[inner]], y) - level  # noqa: E731
    end[inner] = _bisect(fun_e, t[ej[inner]], t[ej[inner] + 1])

    # keep only intervals in the slice of the component containing the origin
    mids = np.zeros((len(si), dom.d))
    mids[:, 0] = x1[si]
    mids[:, 1] = 0.5 * (start + end)
    keep = dom.contains(mids) if len(si) else np.zeros(0, bool)
    si, start, end = si[keep], start[keep], end[keep]

    s_in, w_in = _smooth_rule(inner_nodes)
    y = start[:, None] + (end - start)[:, None] * s_in[None, :]
    wy = (end - start)[:, None] * w_in[None, :]
    xx = np.broadcast_to(x1[si][:, None], y.shape)
    s = np.maximum(_slice_value(dom, xx, y) - level, 0.0)
    inner_int = np.sum(wy * fiber(xx, y, s), axis=1)
    per_x1 = np.bincount(si, weights=inner_int, minlength=len(x1))
    # factor 4: evenness in x1 and in x2
    return 4.0 * float(np.sum(w1 * per_x1))


def sliced_measure(
    dom: StarDomain, level: float = 0.0, fiber=None, nodes: int = 32, inner_nodes: int = 24
) -> MeasureEstimate:
    """Volume of ``{u_eps > level}`` in the domain, with a two-resolution error estimate.

    ``fiber(x1, x2, s)`` integrates the weight over the transverse ball above the
    slice point ``(x1, x2)`` where ``s = w - level``; the default is the plain ball
    volume. Only symmetric weights (even in ``x1`` and ``x2``) are supported.
    """
    if level < 0:
        raise ValidationError("level must be >= 0")
    fiber = fiber or _default_fiber(dom.d)
    coarse = _sliced_quadrature(dom, level, fiber, nodes, inner_nodes)
    fine = _sliced_quadrature(dom, level, fiber, 2 * nodes, 2 * inner_nodes)
    return MeasureEstimate(fine, abs(fine - coarse), "grid", 0)


def box_volume(dom: StarDomain) -> float:
    return 2 * dom.half_width * (2 * TRANSVERSE_RADIUS) ** (dom.d - 1)


def sample_box(dom: StarDomain, count: int, rng) -> np.ndarray:
    lo = np.array([-dom.half_width] + [-TRANSVERSE_RADIUS] * (dom.d - 1))
    return rng.uniform(lo, -lo, size=(count, dom.d))


@dataclass
class MonteCarloCounts:
    weight_domain: float
    weight_outside: float
    samples: int
    ratio: float
    ratio_error: float
    domain_measure: float
    domain_error: float


def monte_carlo_ratio(
    dom: StarDomain, threshold: float, samples: int = 1_000_000, seed: int = 0, weight=None, chunk: int = 50_000
) -> MonteCarloCounts:
    """Uniform box sampling of ``mea(domain minus {u > threshold})/mea(domain)``.

    ``weight(x)`` is an optional density (e.g. a volume form); the ratio error is
    the 99% half-width from the delta method for ratio estimators.
    """
    rng = np.random.default_rng(seed)
    sy = sz = syy = szz = syz = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = sample_box(dom, m, rng)
        inside = dom.contains(x)
        wv = np.ones(m) if weight is None else np.asarray(weight(x), dtype=float)
        z = np.where(inside, wv, 0.0)
        y = np.where(inside & (dom.field.value(x) <= threshold), wv, 0.0)
        sy += y.sum()
        sz += z.sum()
        syy += (y * y).sum()
        szz += (z * z).sum()
        syz += (y * z).sum()
        done += m
    n = samples
    ybar, zbar = sy / n, sz / n
    if zbar == 0:
        raise ValidationError("no sample landed in the domain")
    r = ybar / zbar
    var_y, var_z = syy / n - ybar**2, szz / n - zbar**2
    cov = syz / n - ybar * zbar
    var_r = max(var_y - 2 * r * cov + r * r * var_z, 0.0) / (n * zbar**2)
    vol = box_volume(dom)
    dom_err = Z99 * vol * math.sqrt(max(var_z, 0.0) / n)
    return MonteCarloCounts(sz, sy, n, r, Z99 * math.sqrt(var_r), vol * zbar, dom_err)
