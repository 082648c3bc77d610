"""Certified star points: the kernel region ``D_eps``, its star checks and its relative size.

A point ``xi`` is a star point of a smooth bounded domain when
``(x - xi) . grad u(x) < 0`` at every boundary point ``x``; here that is tested
on boundary samples. ``D_eps = {u_eps > A0 eps^(1/n)}`` is the candidate set.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import StructuralError, ValidationError
from .harmonic_profile import HarmonicProfile, find_axis_critical_points
from .measure import MeasureEstimate, monte_carlo_ratio, sample_box, sliced_measure
from .torsion_domain import StarDomain, TorsionField, eval_torsion

A0_GRID = tuple(2.0**k for k in range(-3, 13))


@dataclass(frozen=True)
class KernelRegion:
    field: TorsionField
    A0: float

    def __post_init__(self):
        if not self.A0 > 0:
            raise ValidationError("A0 must be positive")

    @property
    def threshold(self) -> float:
        return self.A0 * self.field.eps ** (1.0 / self.field.n)

    def __contains__(self, xi) -> bool:
        return bool(kernel_membership(self, xi))


def kernel_membership(k: KernelRegion, xi):
    """``u_eps(xi) > A0 eps^(1/n)``."""
    return k.field.value(np.asarray(xi, dtype=float)) > k.threshold


def max_value(field: TorsionField) -> float:
    """Global maximum of ``u_eps``; it is attained at the axis maxima of the profile."""
    pts = np.zeros((field.n, field.d))
    pts[:, 0] = find_axis_critical_points(field.profile).maxima
    return float(field.value(pts).max())


def sample_kernel(dom: StarDomain, k: KernelRegion, count: int, seed: int = 0, max_draws: int = 5_000_000):
    """Uniform samples of ``D_eps`` by rejection from the bounding box."""
    if k.threshold >= max_value(dom.field):
        return np.zeros((0, dom.d))
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    have = drawn = 0
    while have < count and drawn < max_draws:
        x = sample_box(dom, 20_000, rng)
        drawn += len(x)
        x = x[dom.field.value(x) > k.threshold]
        x = x[dom.contains(x)] if len(x) else x
        found.append(x)
        have += len(x)
    pts = np.concatenate(found)[:count]
    if len(pts) < count:
        raise StructuralError(f"kernel region too thin to sample: {len(pts)} of {count} after {drawn} draws")
    return pts


@dataclass
class StarReport:
    passed: bool
    margin: float
    witness: list[float]
    xi: list[float]

    def to_dict(self):
        return asdict(self)


def star_margins(dom: StarDomain, xis, samples: int = 2000):
    """Worst margin ``min_x -(x - xi) . grad u(x)`` for each row of ``xis``, with the witness index."""
    pts, _, _ = dom.boundary_samples(samples)
    _, grad, _ = eval_torsion(dom.field, pts)
    xis = np.atleast_2d(xis)
    # -(x - xi).g = -x.g + xi.g
    base = -np.einsum("ij,ij->i", pts, grad)
    m = base[None, :] + xis @ grad.T
    idx = np.argmin(m, axis=1)
    return m[np.arange(len(xis)), idx], pts[idx]


def verify_star_point(dom: StarDomain, xi, samples: int = 2000) -> StarReport:
    xi = np.asarray(xi, dtype=float)
    if not dom.contains(xi):
        raise ValidationError(f"{xi.tolist()} is not an interior point of the domain")
    margin, witness = star_margins(dom, xi, samples)
    return StarReport(bool(margin[0] > 0), float(margin[0]), witness[0].tolist(), xi.tolist())


@dataclass
class A0Choice:
    A0: float
    margin: float
    scanned: list[tuple[float, str]] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def choose_A0(
    dom: StarDomain, kernel_samples: int = 200, boundary_samples: int = 2000, seed: int = 0
) -> A0Choice:
    """Smallest ``A0 = 2^k`` (k = -3..12) whose nonempty ``D_eps`` passes the star check."""
    top = max_value(dom.field)
    scanned = []
    for A0 in A0_GRID:
        k = KernelRegion(dom.field, A0)
        if k.threshold >= top:
            scanned.append((A0, "empty"))
            break
        xis = sample_kernel(dom, k, kernel_samples, seed)
        margins, _ = star_margins(dom, xis, boundary_samples)
        if np.all(margins > 0):
            scanned.append((A0, "pass"))
            return A0Choice(A0, float(margins.min()), scanned)
        scanned.append((A0, "fail"))
    raise StructuralError(f"no A0 in the scan certifies D_eps: {scanned}")


@dataclass
class PerturbedStarReport:
    passed: bool
    margin: float
    c0: float
    witness: list[float]
    deviation: dict

    def to_dict(self):
        return asdict(self)


def map_deviation(phi, dphi, pts, d2phi=None, h: float = 1e-5) -> dict:
    """Sup over ``pts`` of ``|Phi - I|``, ``|DPhi - I|`` and ``|D^2 Phi|`` (spectral/Frobenius norms)."""
    pts = np.atleast_2d(pts)
    d = pts.shape[1]
    c0 = np.max(np.linalg.norm(phi(pts) - pts, axis=1))
    J = dphi(pts)
    c1 = np.max(np.linalg.norm(J - np.eye(d), ord=2, axis=(1, 2)))
    if d2phi is not None:
        H = d2phi(pts)
    else:
        H = np.stack([(dphi(pts + h * e) - dphi(pts - h * e)) / (2 * h) for e in np.eye(d)], axis=-1)
    c2 = np.max(np.sqrt(np.sum(H**2, axis=(1, 2, 3))))
    return {"c0": float(c0), "c1": float(c1), "c2": float(c2), "norm": float(max(c0, c1, c2))}


def perturbed_star_check(
    dom: StarDomain, kernel_pts, phi, dphi, delta: float | None = None, d2phi=None, samples: int = 2000
) -> PerturbedStarReport:
    """Star check for the image domain ``Phi(Omega)`` against kernel points ``xi``.

    The outward normal at ``Phi(x)`` is ``-DPhi(x)^{-T} grad u(x)`` (unnormalised,
    so the identity map reproduces :func:`star_margins` exactly). Passes when
    ``(Phi(x) - xi) . nu >= c0 / 2`` where ``c0`` is the unperturbed margin.
    """
    xis = np.atleast_2d(np.asarray(kernel_pts, dtype=float))
    pts, _, _ = dom.boundary_samples(samples)
    dev = map_deviation(phi, dphi, pts, d2phi)
    if delta is not None and dev["norm"] > delta:
        raise ValidationError(f"map deviates from the identity by {dev['norm']:.3g} > delta = {delta}")
    c0 = float(star_margins(dom, xis, samples)[0].min())
    _, grad, _ = eval_torsion(dom.field, pts)
    J = dphi(pts)
    nu = -np.linalg.solve(np.transpose(J, (0, 2, 1)), grad[..., None])[..., 0]
    y = phi(pts)
    m = np.einsum("ij,ij->i", y, nu)[None, :] - xis @ nu.T
    k = np.unravel_index(np.argmin(m), m.shape)
    margin = float(m[k])
    return PerturbedStarReport(bool(margin >= c0 / 2), margin, c0, y[k[1]].tolist(), dev)


def require_bounded(dom: StarDomain, samples: int = 2000):
    """Raise :class:`StructuralError` unless every sampled ray leaves the domain inside the box."""
    dom.boundary_samples(samples)


def measure_ratio(
    dom: StarDomain, k: KernelRegion, method: str = "auto", samples: int = 1_000_000, seed: int = 0
) -> MeasureEstimate:
    """``mea(Omega minus D_eps) / mea(Omega)`` with an error bar."""
    require_bounded(dom)
    if method == "auto":
        method = "grid" if dom.d <= 3 else "monte-carlo"
    if method == "grid":
        whole = sliced_measure(dom, 0.0)
        if whole.value <= 0:
            raise StructuralError("domain has zero measure")
        if k.threshold >= max_value(dom.field):
            return MeasureEstimate(1.0, 0.0, "grid", 0)
        inner = sliced_measure(dom, k.threshold)
        r = 1.0 - inner.value / whole.value
        err = (inner.error + (inner.value / whole.value) * whole.error) / whole.value
        return MeasureEstimate(min(max(r, 0.0), 1.0), max(err, 1e-14), "grid", 0)
    if method == "monte-carlo":
        mc = monte_carlo_ratio(dom, k.threshold, samples, seed)
        return MeasureEstimate(mc.ratio, mc.ratio_error, "monte-carlo", samples)
    raise ValidationError(f"unknown method {method!r}")


@dataclass
class SweepReport:
    eps: list[float]
    A0: float
    ratios: list[float]
    errors: list[float]
    slope: float
    theoretical_exponent: float
    strictly_decreasing: bool
    method: str

    def to_dict(self):
        return asdict(self)


def strictly_decreasing(values, errors) -> bool:
    return all(b + eb < a - ea for a, b, ea, eb in zip(values, values[1:], errors, errors[1:]))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sweep_almost_convexity(
    profile: HarmonicProfile, d: int, A0="auto", eps_list=(1e-2, 1e-3, 1e-4), method: str = "auto", seed: int = 0,
    samples: int = 1_000_000,
) -> SweepReport:
    """Measure ratio along a decreasing ``eps`` list and its log-log slope.

    ``A0="auto"`` runs :func:`choose_A0` at every ``eps`` and uses the largest
    result, so the same kernel rule applies across the sweep.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValidationError("need at least three eps values to fit a slope")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or eps_list[-1] <= 0:
        raise ValidationError("eps list must be positive and strictly decreasing")
    doms = [StarDomain(TorsionField(profile, d, e)) for e in eps_list]
    if A0 == "auto":
        A0 = max(choose_A0(dm, seed=seed).A0 for dm in doms)
    ests = [measure_ratio(dm, KernelRegion(dm.field, float(A0)), method, samples, seed) for dm in doms]
    ratios = [e.value for e in ests]
    errors = [e.error for e in ests]
    slope = loglog_slope(eps_list, ratios) if all(r > 0 for r in ratios) else math.nan
    return SweepReport(
        eps_list, float(A0), ratios, errors, slope, 1.0 / (2 * profile.n),
        strictly_decreasing(ratios, errors), ests[0].method,
    )
