"""Torsion field ``u_eps``, its star-shaped zero-superlevel domain and its critical points.

``u_eps(x) = (1 - x_2^2 - ... - x_d^2) / (2(d-1)) + eps * v(x_1, x_2)`` solves
``-Lap u = 1`` on all of R^d; the domain is the connected component of
``{u_eps > 0}`` containing the origin. The domain is represented by its radial
function ``r(omega)`` (first zero of ``u_eps`` along the ray), so no mesh is ever
stored.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import ndimage

from .errors import NonConvergenceError, StructuralError, ValidationError
from .harmonic_profile import (
    HarmonicProfile,
    axis_profile,
    eval_profile,
    find_axis_critical_points,
    profile_value,
)

BOUNDARY_XTOL = 1e-10
TRANSVERSE_RADIUS = math.sqrt(2.0)
_CHUNK = 20_000


@dataclass(frozen=True)
class TorsionField:
    profile: HarmonicProfile
    d: int
    eps: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValidationError(f"dimension must be an integer >= 2, got {self.d}")
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ValidationError(f"eps must be positive, got {self.eps}")

    @classmethod
    def build(cls, n: int | None = None, d: int = 2, eps: float = 0.01, a=None) -> "TorsionField":
        """Field for separation points ``a`` (default ``a_i = i, i = 1..n``)."""
        if a is None:
            if n is None:
                raise ValidationError("give either n or a")
            profile = HarmonicProfile.default(n)
        else:
            profile = HarmonicProfile.from_points(a)
            if n is not None and profile.n != n:
                raise ValidationError(f"n={n} does not match {profile.n} separation points")
        return cls(profile, int(d), float(eps))

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def level(self) -> float:
        """The cylinder value ``1 / (2(d-1))`` of the unperturbed field on its axis."""
        return 0.5 / (self.d - 1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        c = 1.0 / (self.d - 1)
        return 0.5 * c * (1.0 - np.sum(x[..., 1:] ** 2, axis=-1)) + self.eps * profile_value(
            self.profile, x[..., 0], x[..., 1]
        )

    __call__ = value


def eval_torsion(field: TorsionField, x):
    """Value, gradient and Hessian of ``u_eps`` at ``x`` of shape ``(d,)`` or ``(m, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != field.d:
        raise ValidationError(f"expected points of dimension {field.d}, got {x.shape[-1]}")
    c = 1.0 / (field.d - 1)
    v, g2, h2 = eval_profile(field.profile, x[:, 0], x[:, 1])
    value = 0.5 * c * (1.0 - np.sum(x[:, 1:] ** 2, axis=1)) + field.eps * v
    grad = -c * x
    grad[:, 0] = field.eps * g2[:, 0]
    grad[:, 1] += field.eps * g2[:, 1]
    hess = np.zeros((x.shape[0], field.d, field.d))
    idx = np.arange(1, field.d)
    hess[:, idx, idx] = -c
    hess[:, :2, :2] += field.eps * h2
    if single:
        return value[0], grad[0], hess[0]
    return value, grad, hess


def direction_design(d: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit directions in R^d."""
    if d == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (3 - math.sqrt(5)) * k
        s = np.sqrt(1 - z * z)
        return np.column_stack([z, s * np.cos(phi), s * np.sin(phi)])
    g = np.random.default_rng(12345).standard_normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class StarDomain:
    """Component of ``{u_eps > 0}`` containing the origin, in radial form."""

    field: TorsionField

    @property
    def d(self) -> int:
        return self.field.d

    @cached_property
    def half_width(self) -> float:
        """Half-length ``D eps^(-1/(2n))`` of the bounding box along ``x_1``."""
        n = self.field.n
        return (1.0 / (self.d - 1)) ** (1.0 / (2 * n)) * self.field.eps ** (-1.0 / (2 * n))

    @property
    def transverse_radius(self) -> float:
        return TRANSVERSE_RADIUS

    @cached_property
    def step(self) -> float:
        diag = 2.0 * math.hypot(self.half_width, TRANSVERSE_RADIUS)
        return 0.01 * diag

    def exit_time(self, omega) -> np.ndarray:
        """Ray parameter at which ``t * omega`` leaves the bounding box."""
        omega = np.atleast_2d(omega)
        a1 = np.abs(omega[:, 0])
        at = np.linalg.norm(omega[:, 1:], axis=1)
        with np.errstate(divide="ignore"):
            t1 = np.where(a1 > 0, self.half_width / np.where(a1 > 0, a1, 1), np.inf)
            t2 = np.where(at > 0, TRANSVERSE_RADIUS / np.where(at > 0, at, 1), np.inf)
        return np.minimum(t1, t2)

    def in_box(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return (np.abs(x[:, 0]) < self.half_width) & (
            np.linalg.norm(x[:, 1:], axis=1) < TRANSVERSE_RADIUS
        )

    def radial_extent(self, omega) -> np.ndarray | float:
        """First zero of ``u_eps`` along each unit direction ``omega``.

        Marches with :attr:`step` (capped at the bounding box) and bisects the
        first bracket to ``BOUNDARY_XTOL``.
        """
        omega = np.asarray(omega, dtype=float)
        single = omega.ndim == 1
        omega = np.atleast_2d(omega)
        omega = omega / np.linalg.norm(omega, axis=1, keepdims=True)
        if self.field.value(np.zeros(self.d)) <= 0:
            raise StructuralError("u_eps(0) <= 0: eps is too large for this profile")
        out = np.empty(len(omega))
        for s in range(0, len(omega), _CHUNK):
            out[s : s + _CHUNK] = self._radial_chunk(omega[s : s + _CHUNK])
        return float(out[0]) if single else out

    def _radial_chunk(self, omega):
        u = self.field.value
        t_exit = self.exit_time(omega)
        kmax = int(np.ceil(t_exit.max() / self.step))
        ks = np.arange(1, kmax + 1) * self.step
        t = np.minimum(ks[None, :], t_exit[:, None])
        vals = u(t[:, :, None] * omega[:, None, :])
        neg = vals <= 0
        found = neg.any(axis=1)
        if not found.all():
            bad = omega[~found][0]
            raise StructuralError(
                f"u_eps stays positive up to the bounding box along direction {bad.tolist()}: "
                "eps is too large"
            )
        k = neg.argmax(axis=1)
        rows = np.arange(len(omega))
        hi = t[rows, k]
        lo = np.where(k > 0, t[rows, np.maximum(k - 1, 0)], 0.0)
        iters = int(np.ceil(np.log2(self.step / BOUNDARY_XTOL))) + 2
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pos = u(mid[:, None] * omega) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        return 0.5 * (lo + hi)

    def contains(self, x) -> np.ndarray | bool:
        """Membership by radial comparison ``|x| < r(x / |x|)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        out = self.in_box(x) & (self.field.value(x) > 0)
        r = np.linalg.norm(x, axis=1)
        cand = np.nonzero(out & (r > 0))[0]
        u = self.field.value
        for s in range(0, len(cand), _CHUNK):
            idx = cand[s : s + _CHUNK]
            rr = r[idx]
            xhat = x[idx] / rr[:, None]
            kk = np.floor(rr / self.step).astype(int)
            kmax = int(kk.max())
            if kmax == 0:
                continue
            ts = np.arange(1, kmax + 1) * self.step
            vals = u(ts[None, :, None] * xhat[:, None, :])
            active = np.arange(1, kmax + 1)[None, :] <= kk[:, None]
            crossed = ((vals <= 0) & active).any(axis=1)
            out[idx[crossed]] = False
        return bool(out[0]) if single else out

    def boundary_samples(self, count: int = 10_000):
        """Boundary points ``r(omega) omega`` over :func:`direction_design` (cached)."""
        return _boundary_design(self, int(count))


@lru_cache(maxsize=64)
def _boundary_design(dom: StarDomain, count: int):
    omega = direction_design(dom.d, count)
    r = dom.radial_extent(omega)
    pts = r[:, None] * omega
    for arr in (omega, r, pts):
        arr.setflags(write=False)
    return pts, omega, r


# --------------------------------------------------------------------------- reports


@dataclass
class BoxReport:
    passed: bool
    half_width: float
    max_abs_x1: float
    max_transverse: float
    margin: float
    worst_point: list[float]
    sup_u: float
    samples: int

    def to_dict(self):
        return asdict(self)


@dataclass
class TransversalityReport:
    passed: bool
    bound: float
    max_value: float
    location: list[float]
    samples: int

    def to_dict(self):
        return asdict(self)


@dataclass
class AdmissibilityReport:
    admissible: bool
    axis_positive: bool
    bounding_box: bool
    transversality: bool
    diagnostics: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.admissible

    def to_dict(self):
        return asdict(self)


def verify_bounding_box(dom: StarDomain, samples: int = 10_000) -> BoxReport:
    pts, omega, r = dom.boundary_samples(samples)
    ax1 = np.abs(pts[:, 0])
    tr = np.linalg.norm(pts[:, 1:], axis=1)
    m1 = dom.half_width - ax1
    m2 = TRANSVERSE_RADIUS - tr
    worst = int(np.argmin(np.minimum(m1, m2)))
    # sup of u over the closure: interior rays plus the axis maxima of the profile
    fracs = np.linspace(0.0, 1.0, 21)
    interior = (fracs[None, :, None] * pts[:, None, :]).reshape(-1, dom.d)
    sup_u = float(dom.field.value(interior).max())
    axis_max = find_axis_critical_points(dom.field.profile).maxima
    on_axis = np.zeros((len(axis_max), dom.d))
    on_axis[:, 0] = axis_max
    sup_u = max(sup_u, float(dom.field.value(on_axis).max()))
    margin = float(min(m1.min(), m2.min()))
    return BoxReport(
        passed=bool(margin > 0),
        half_width=dom.half_width,
        max_abs_x1=float(ax1.max()),
        max_transverse=float(tr.max()),
        margin=margin,
        worst_point=pts[worst].tolist(),
        sup_u=sup_u,
        samples=len(pts),
    )


def verify_transversality(dom: StarDomain, samples: int = 10_000) -> TransversalityReport:
    """Check ``x . grad u <= -1/(2(d-1))`` on boundary samples."""
    pts, _, _ = dom.boundary_samples(samples)
    _, grad, _ = eval_torsion(dom.field, pts)
    s = np.einsum("ij,ij->i", pts, grad)
    k = int(np.argmax(s))
    bound = -dom.field.level
    return TransversalityReport(
        passed=bool(s[k] <= bound + 1e-8),
        bound=bound,
        max_value=float(s[k]),
        location=pts[k].tolist(),
        samples=len(pts),
    )


def check_epsilon_admissible(field: TorsionField, samples: int = 10_000) -> AdmissibilityReport:
    """Decidable stand-in for ``eps < eps_0``: three sub-checks, all must pass."""
    diags = []
    an = field.profile.a[-1]
    t = np.linspace(-an, an, 2001)
    axis = np.zeros((len(t), field.d))
    axis[:, 0] = t
    axis_ok = bool(field.value(axis).min() > 0)
    if not axis_ok:
        diags.append("u_eps is not positive on the axis segment |x1| <= a_n")
    box_ok = trans_ok = False
    dom = StarDomain(field)
    try:
        box = verify_bounding_box(dom, samples)
        box_ok = box.passed
        if not box_ok:
            diags.append(f"boundary leaves the bounding box (margin {box.margin:.3g})")
        tr = verify_transversality(dom, samples)
        trans_ok = tr.passed
        if not trans_ok:
            diags.append(f"transversality fails: max x.grad u = {tr.max_value:.4g}")
    except StructuralError as exc:
        diags.append(f"radial parameterization failed: {exc}")
    return AdmissibilityReport(axis_ok and box_ok and trans_ok, axis_ok, box_ok, trans_ok, diags)


# --------------------------------------------------------------------- slice Newton


def _slice_newton(field: TorsionField, seeds, maxiter: int = 50, tol: float = 1e-12):
    """Vectorised Newton on the gradient of ``u_eps`` restricted to the x1x2-plane."""
    x = np.array(seeds, dtype=float, copy=True)
    c = 1.0 / (field.d - 1)
    eps = field.eps
    alive = np.ones(len(x), dtype=bool)
    conv = np.zeros(len(x), dtype=bool)
    for _ in range(maxiter):
        _, g, h = eval_profile(field.profile, x[:, 0], x[:, 1])
        g1 = eps * g[:, 0]
        g2 = -c * x[:, 1] + eps * g[:, 1]
        res = np.hypot(g1, g2)
        conv |= alive & (res <= tol)
        act = alive & ~conv
        if not act.any():
            break
        a11 = eps * h[:, 0, 0]
        a12 = eps * h[:, 0, 1]
        a22 = -c + eps * h[:, 1, 1]
        det = a11 * a22 - a12 * a12
        ok = np.abs(det) > 1e-300
        safe = np.where(ok, det, 1.0)
        dx1 = (a22 * g1 - a12 * g2) / safe
        dx2 = (a11 * g2 - a12 * g1) / safe
        alive &= ok | conv
        upd = act & ok
        x[upd, 0] -= dx1[upd]
        x[upd, 1] -= dx2[upd]
        alive &= np.all(np.isfinite(x), axis=1)
        x[~alive] = 0.0
    _, g, _ = eval_profile(field.profile, x[:, 0], x[:, 1])
    res = np.hypot(eps * g[:, 0], -c * x[:, 1] + eps * g[:, 1])
    conv = alive & (res <= max(tol, 1e-11))
    return x, conv, res


# ------------------------------------------------------------------ critical points


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple[float, ...]
    kind: str
    eigenvalues: tuple[float, ...]
    index_sign: int
    value: float = float("nan")

    def to_dict(self):
        return asdict(self)


def classify(location, hessian, value=float("nan"), degenerate_tol: float = 0.0) -> CriticalPoint:
    eig = np.linalg.eigvalsh(0.5 * (hessian + hessian.T))
    npos = int(np.sum(eig > degenerate_tol))
    nneg = int(np.sum(eig < -degenerate_tol))
    if nneg == len(eig):
        kind = "maximum"
    elif npos == 1 and nneg == len(eig) - 1:
        kind = "saddle"
    elif npos == len(eig):
        kind = "minimum"
    else:
        kind = "degenerate" if npos + nneg < len(eig) else f"index-{npos}"
    sign = int(np.sign(np.prod(eig)))
    return CriticalPoint(
        tuple(float(v) for v in location),
        kind,
        tuple(float(v) for v in eig),
        sign,
        float(value),
    )


def _dedupe(points, tol):
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.max(np.abs(p - q)) > tol for q in kept):
            kept.append(p)
    return kept


def find_critical_points(
    dom: StarDomain, sweep: tuple[int, int] = (200, 50), dedupe_tol: float = 1e-7
) -> list[CriticalPoint]:
    """All critical points of ``u_eps`` in the domain, sorted by ``x_1``.

    Critical points lie in the x1x2-plane, so the search is a 2-D Newton
    iteration seeded at the axis critical points of the profile plus a
    sweep over the slice to rule out extras.
    """
    field = dom.field
    n = field.n
    axis = find_axis_critical_points(field.profile)
    designated = np.array([[s, 0.0] for s in sorted(axis.maxima + axis.minima)])
    xs, conv, res = _slice_newton(field, designated)
    if not conv.all():
        i = int(np.argmin(conv))
        raise NonConvergenceError(
            f"Newton from seed {designated[i].tolist()} did not converge (residual {res[i]:.3g})"
        )
    found = list(xs)

    nx, ny = sweep
    for _ in range(2):
        g1 = np.linspace(-dom.half_width, dom.half_width, nx + 2)[1:-1]
        g2 = np.linspace(-TRANSVERSE_RADIUS, TRANSVERSE_RADIUS, ny + 2)[1:-1]
        seeds = np.array(np.meshgrid(g1, g2, indexing="ij")).reshape(2, -1).T
        emb = np.zeros((len(seeds), dom.d))
        emb[:, :2] = seeds
        seeds = seeds[dom.contains(emb)]
        sx, sconv, _ = _slice_newton(field, seeds)
        emb = np.zeros((len(sx), dom.d))
        emb[:, :2] = sx
        inside = dom.in_box(emb)
        escaped = sconv & ~inside
        keep = sconv & inside
        emb_keep = emb[keep]
        keep_idx = np.nonzero(keep)[0][dom.contains(emb_keep)] if len(emb_keep) else []
        found.extend(sx[keep_idx])
        if not escaped.any():
            break
        nx, ny = 2 * nx, 2 * ny

    pts = _dedupe(found, dedupe_tol)
    out = []
    for p in pts:
        loc = np.zeros(dom.d)
        loc[:2] = p
        val, grad, hess = eval_torsion(field, loc)
        out.append(classify(loc, hess, val))
    out.sort(key=lambda c: c.location[0])
    nmax = sum(c.kind == "maximum" for c in out)
    nsad = sum(c.kind == "saddle" for c in out)
    if len(out) != 2 * n - 1 or nmax != n or nsad != n - 1:
        raise StructuralError(
            f"expected {n} maxima and {n - 1} saddles, found {nmax} maxima, {nsad} saddles "
            f"and {len(out) - nmax - nsad} other critical points: "
            f"{[(c.kind, c.location[:2]) for c in out]}"
        )
    return out


def poincare_hopf_check(points, d: int, degenerate_tol: float = 1e-9) -> bool:
    """``sum sign det Hess == (-1)^d`` over the critical points."""
    for c in points:
        if np.min(np.abs(c.eigenvalues)) <= degenerate_tol:
            raise ValidationError(f"degenerate critical point at {c.location}")
    return sum(c.index_sign for c in points) == (-1) ** d


# ---------------------------------------------------------------- superlevel sets


@dataclass
class ComponentReport:
    count: int
    level: float
    spacing: float
    component_maxima: list[float]
    required_excess: float
    stmax_passed: bool

    def to_dict(self):
        return asdict(self)


def _slice_components(dom: StarDomain, level: float, h: float):
    field = dom.field
    k1 = int(np.floor(dom.half_width / h))
    k2 = int(np.floor(TRANSVERSE_RADIUS / h))
    x1 = np.arange(-k1, k1 + 1) * h
    x2 = np.arange(-k2, k2 + 1) * h
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    c = 1.0 / (field.d - 1)
    u = 0.5 * c * (1 - X2**2) + field.eps * profile_value(field.profile, X1, X2)
    pos_lab, _ = ndimage.label(u > 0)
    omega = pos_lab == pos_lab[k1, k2]
    if not omega[k1, k2]:
        raise StructuralError("u_eps(0) <= 0")
    lab, count = ndimage.label((u > level) & omega)
    return x1, x2, u, lab, count


def superlevel_components(dom: StarDomain, level: float | None = None, spacing: float | None = None):
    """Connected components of ``{u_eps > level}`` in the domain, counted on the x1x2-slice.

    Every component of the full set meets the slice because
    ``u(x) = u_slice(x1, x2) - (x3^2 + ... + xd^2) / (2(d-1))``.
    """
    field = dom.field
    if level is None:
        level = field.level
    h = spacing or min(0.01, field.profile.a[0] / 50)
    x1, x2, u, lab, count = _slice_components(dom, level, h)
    for _ in range(3):
        _, _, _, _, count_fine = _slice_components(dom, level, h / 2)
        if count_fine == count:
            break
        h /= 2
        x1, x2, u, lab, count = _slice_components(dom, level, h)
    else:
        raise StructuralError("superlevel component count does not stabilise under refinement")

    maxima = []
    if count:
        idx = ndimage.maximum_position(u, lab, index=np.arange(1, count + 1))
        seeds = np.array([[x1[i], x2[j]] for i, j in idx])
        polished, conv, _ = _slice_newton(field, seeds)
        for s, p, ok in zip(seeds, polished, conv):
            cand = [s]
            if ok and np.max(np.abs(p - s)) < 2 * h:
                cand.append(p)
            emb = np.zeros((len(cand), dom.d))
            emb[:, :2] = cand
            maxima.append(float(field.value(emb).max()))
    d_prime = find_axis_critical_points(field.profile).d_prime
    excess = d_prime * field.eps * (1 - 1e-6)
    ok = all(m > level + excess for m in maxima) if level == field.level else True
    return ComponentReport(count, level, h, maxima, excess, bool(ok))


def count_superlevel_components(dom: StarDomain, level: float | None = None) -> int:
    return superlevel_components(dom, level).count


# ---------------------------------------------------------------- cylinder limit


@dataclass
class CylinderReport:
    eps: list[float]
    distances: list[float]
    strictly_decreasing: bool

    def to_dict(self):
        return asdict(self)


def _transverse_root(field: TorsionField, cs, dirs, tmax: float = 2.0):
    """First zero of ``t -> u(c, t * dir)`` for every pair of section ``c`` and transverse direction."""
    c = np.repeat(np.asarray(cs, float), len(dirs))
    w = np.tile(dirs, (len(cs), 1))

    def u(t):
        return field.value(np.concatenate([c[..., None] + 0 * t[..., None], t[..., None] * w], axis=-1))

    ts = np.linspace(0, tmax, 401)[1:]
    neg = np.column_stack([u(np.full(len(c), t)) <= 0 for t in ts])
    hit = neg.any(axis=1)
    k = neg.argmax(axis=1)
    hi = ts[k]
    lo = np.where(k > 0, ts[np.maximum(k - 1, 0)], 0.0)
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        pos = u(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    r = np.where(hit, 0.5 * (lo + hi), np.inf)
    return r.reshape(len(cs), len(dirs))


def cylinder_convergence(
    profile: HarmonicProfile,
    d: int,
    box: tuple[float, float],
    eps_list,
    sections: int = 101,
    directions: int = 64,
) -> CylinderReport:
    """Distance between the domain and the unit cylinder inside ``Q = [-L, L] x [-R, R]^(d-1)``.

    Each section ``x1 = c`` is compared along transverse rays from the axis;
    the reported number is ``sup |min(r_eps, t_Q) - min(1, t_Q)|``, which bounds
    the Hausdorff distance of the two sections inside ``Q``.
    """
    L, R = map(float, box)
    if L >= profile.a[-1]:
        raise ValidationError("Q must satisfy L < a_n so every section meets the axis")
    dirs = np.array([[1.0], [-1.0]]) if d == 2 else direction_design(d - 1, directions)
    t_q = R / np.max(np.abs(dirs), axis=1)
    cs = np.linspace(-L, L, sections)
    dist = []
    for eps in eps_list:
        f = TorsionField(profile, d, float(eps))
        r = _transverse_root(f, cs, dirs)
        diff = np.abs(np.minimum(r, t_q) - np.minimum(1.0, t_q))
        dist.append(float(diff.max()))
    dec = all(b < a for a, b in zip(dist, dist[1:]))
    return CylinderReport([float(e) for e in eps_list], dist, dec)
