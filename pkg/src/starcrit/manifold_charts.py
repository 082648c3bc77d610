"""Model manifolds in normal coordinates and the maps that carry planar domains onto them.

Constant-curvature models use closed forms throughout. With ``s_k`` the
generalised sine and ``sigma(r) = s_k(r) / r`` the metric in normal coordinates
is ``g = P + sigma^2 Q`` (``P`` radial projector, ``Q = I - P``), its volume
density is ``sigma^(d-1)`` and the Laplace-Beltrami operator is

    Lap_g = g^{jk} d_jk + Gamma . grad,    Gamma(y) = (d-1) (s s' - r) / s^2 * y / r.

Spheres live in R^{d+1} (radius ``1/sqrt(k)``), hyperbolic space on the
hyperboloid ``<X, X>_L = -1/|k|``. Everything is computed on the unit model and
rescaled by ``sqrt|k|``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ValidationError

CHART_CAP = 1e3
_SMALL = 0.1


# ----------------------------------------------------------- stable scalar kernels


def _series(x, coeffs):
    """``sum_k coeffs[k] x^(2k)``."""
    x2 = x * x
    out = np.zeros_like(x2)
    for c in reversed(coeffs):
        out = out * x2 + c
    return out


def _sig(s: int, k: int) -> float:
    # (-s)^k: alternating on the sphere, all positive on the hyperboloid
    return float((-s) ** k)


def _sin_over(s: int, r):
    """``S(r) / r`` with ``S = sin`` (s=+1) or ``sinh`` (s=-1)."""
    r = np.asarray(r, dtype=float)
    coeffs = [_sig(s, k) / math.factorial(2 * k + 1) for k in range(8)]
    small = np.abs(r) < _SMALL
    safe = np.where(small, 1.0, r)
    direct = (np.sin(safe) if s > 0 else np.sinh(safe)) / safe
    return np.where(small, _series(r, coeffs), direct)


def _cos(s: int, r):
    return np.cos(r) if s > 0 else np.cosh(r)


def _dsinc_over_r(s: int, r):
    """``(r C(r) - S(r)) / r^3``, the radial derivative of ``S/r`` divided by ``r``."""
    r = np.asarray(r, dtype=float)
    coeffs = [_sig(s, k) * 2 * k / math.factorial(2 * k + 1) for k in range(1, 9)]
    small = np.abs(r) < _SMALL
    safe = np.where(small, 1.0, r)
    S = np.sin(safe) if s > 0 else np.sinh(safe)
    direct = (safe * _cos(s, safe) - S) / safe**3
    return np.where(small, _series(r, coeffs), direct)


def _log_coeff(s: int, t):
    """``sum_{k>=1} (-s)^k 2k/(2k+1) t^(2k-2)``: stable form of the log Jacobian correction."""
    t = np.asarray(t, dtype=float)
    coeffs = [_sig(s, k) * 2 * k / (2 * k + 1) for k in range(1, 12)]
    return _series(t, coeffs)


def _sincos_defect(s: int, z):
    """``(S(2z) - 2z) / 2``, i.e. ``S(z) C(z) - z``, without cancellation."""
    z = np.asarray(z, dtype=float)
    coeffs = [_sig(s, k) * 2 ** (2 * k + 1) / math.factorial(2 * k + 1) / 2 for k in range(1, 9)]
    small = np.abs(z) < _SMALL
    safe = np.where(small, 1.0, z)
    direct = 0.5 * ((np.sin(2 * safe) if s > 0 else np.sinh(2 * safe)) - 2 * safe)
    return np.where(small, z**3 * _series(z, coeffs), direct)


# ------------------------------------------------------------------ manifolds


@dataclass(frozen=True)
class ChartedManifold:
    """A model manifold with a normal-coordinate chart at a fixed base point.

    ``kind`` is ``"euclidean"``, ``"sphere"``, ``"hyperbolic"`` or ``"custom"``.
    A custom manifold is given by ``metric(y) -> (m, d, d)`` in normal
    coordinates and optionally ``dmetric(y) -> (m, d, d, d)`` with the last axis
    the derivative direction; its exp/log maps are the identity on chart
    coordinates.
    """

    kind: str
    d: int
    kappa: float = 0.0
    metric: object = None
    dmetric: object = None
    scale: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValidationError("dimension must be an integer >= 2")
        if self.kind == "sphere" and not self.kappa > 0:
            raise ValidationError("sphere needs kappa > 0")
        if self.kind == "hyperbolic" and not self.kappa < 0:
            raise ValidationError("hyperbolic space needs kappa < 0")
        if self.kind == "euclidean" and self.kappa != 0:
            raise ValidationError("euclidean space has kappa = 0")
        if self.kind == "custom" and self.metric is None:
            raise ValidationError("custom manifold needs a metric callback")
        if self.kind not in ("euclidean", "sphere", "hyperbolic", "custom"):
            raise ValidationError(f"unknown manifold kind {self.kind!r}")

    @classmethod
    def euclidean(cls, d: int):
        return cls("euclidean", d)

    @classmethod
    def sphere(cls, d: int, kappa: float = 1.0):
        return cls("sphere", d, float(kappa))

    @classmethod
    def hyperbolic(cls, d: int, kappa: float = -1.0):
        return cls("hyperbolic", d, float(kappa))

    @classmethod
    def custom(cls, d: int, metric, dmetric=None, scale: float = 1.0):
        return cls("custom", d, 0.0, metric, dmetric, scale)

    @property
    def model(self) -> bool:
        return self.kind in ("sphere", "hyperbolic")

    @property
    def sign(self) -> int:
        return 1 if self.kappa > 0 else -1

    @property
    def root(self) -> float:
        return math.sqrt(abs(self.kappa))

    @property
    def chart_radius(self) -> float:
        if self.kind == "sphere":
            return math.pi / self.root * (1 - 1e-6)
        return CHART_CAP

    @property
    def base_point(self) -> np.ndarray:
        if self.model:
            p = np.zeros(self.d + 1)
            p[0] = 1.0 / self.root
            return p
        return np.zeros(self.d)

    def _check_radius(self, r):
        if np.any(np.asarray(r) > self.chart_radius):
            raise DomainError(
                f"point at radius {float(np.max(r)):.6g} exceeds the chart radius {self.chart_radius:.6g}"
            )

    def s_kappa(self, r):
        r = np.asarray(r, dtype=float)
        if not self.model:
            return r
        return r * _sin_over(self.sign, self.root * r)

    def sigma(self, r):
        """``s_k(r) / r`` with the limit 1 at ``r = 0``."""
        r = np.asarray(r, dtype=float)
        if not self.model:
            return np.ones_like(r)
        return _sin_over(self.sign, self.root * r)


# --------------------------------------------------------------- exp and log


def _unit_exp(s, v):
    r = np.linalg.norm(v, axis=-1)
    return np.concatenate([_cos(s, r)[..., None], _sin_over(s, r)[..., None] * v], axis=-1)


def _unit_dexp(s, v):
    """``(m, d+1, d)`` Jacobian of the unit-model exponential."""
    r = np.linalg.norm(v, axis=-1)
    m, d = v.shape
    out = np.empty((m, d + 1, d))
    out[:, 0, :] = -s * _sin_over(s, r)[:, None] * v
    out[:, 1:, :] = _sin_over(s, r)[:, None, None] * np.eye(d) + _dsinc_over_r(s, r)[:, None, None] * (
        v[:, :, None] * v[:, None, :]
    )
    return out


def _unit_log(s, X):
    x0, xt = X[..., 0], X[..., 1:]
    rho = np.linalg.norm(xt, axis=-1)
    if s > 0:
        theta = np.arctan2(rho, x0)
        ratio = np.where(rho > 0, theta / np.where(rho > 0, rho, 1.0), 1.0 / x0)
    else:
        t = rho / x0
        series = _series(t, [1.0 / (2 * k + 1) for k in range(12)]) / x0
        exact = np.arctanh(np.minimum(t, 1 - 1e-16)) / np.where(rho > 0, rho, 1.0)
        ratio = np.where(t < _SMALL, series, exact)
    return ratio[..., None] * xt


def _unit_dlog(s, X):
    """``(m, d, d+1)`` Jacobian of the extension ``X -> theta(X) / rho * xt``."""
    x0, xt = X[:, 0], X[:, 1:]
    m, d = xt.shape
    rho = np.linalg.norm(xt, axis=-1)
    N = x0**2 + s * rho**2
    t = rho / x0
    if s > 0:
        theta = np.arctan2(rho, x0)
    else:
        theta = np.arctanh(t)
    safe = np.where(rho > 0, rho, 1.0)
    ratio = np.where(t < _SMALL, _series(t, [_sig(s, k) / (2 * k + 1) for k in range(12)]) / x0, theta / safe)
    c = np.where(t < _SMALL, _log_coeff(s, t) / x0**3, (x0 * rho / N - theta) / safe**3)
    out = np.empty((m, d, d + 1))
    out[:, :, 0] = -xt / N[:, None]
    out[:, :, 1:] = ratio[:, None, None] * np.eye(d) + c[:, None, None] * (xt[:, :, None] * xt[:, None, :])
    return out


def exp_map(m: ChartedManifold, v):
    """Point ``exp_p(v)`` in embedding coordinates (chart coordinates for flat/custom)."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    m._check_radius(np.linalg.norm(v, axis=1))
    if m.model:
        out = _unit_exp(m.sign, m.root * v) / m.root
    else:
        out = v.copy()
    return out[0] if single else out


def log_map(m: ChartedManifold, q):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if m.model:
        X = m.root * q
        if m.kind == "sphere":
            theta = np.arctan2(np.linalg.norm(X[:, 1:], axis=1), X[:, 0])
            m._check_radius(theta / m.root)
        out = _unit_log(m.sign, X) / m.root
    else:
        out = q.copy()
    m._check_radius(np.linalg.norm(out, axis=1))
    return out[0] if single else out


def geodesic_distance(m: ChartedManifold, X, Y):
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    if m.kind == "sphere":
        c = np.clip(m.kappa * np.sum(X * Y, axis=1), -1, 1)
        return np.arccos(c) / m.root
    if m.kind == "hyperbolic":
        inner = -X[:, 0] * Y[:, 0] + np.sum(X[:, 1:] * Y[:, 1:], axis=1)
        return np.arccosh(np.maximum(-abs(m.kappa) * inner, 1.0)) / m.root
    return np.linalg.norm(X - Y, axis=1)


# ------------------------------------------------------------------ metric


def metric_normal_coords(m: ChartedManifold, x):
    """Metric tensor ``g(x)`` in normal coordinates, shape ``(d, d)`` or ``(k, d, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    r = np.linalg.norm(x, axis=1)
    m._check_radius(r)
    if m.kind == "custom":
        g = np.asarray(m.metric(x), dtype=float)
    else:
        P = _radial_projector(x, r)
        sig = m.sigma(r)
        g = P + (sig**2)[:, None, None] * (np.eye(m.d) - P)
    return g[0] if single else g


def _radial_projector(x, r):
    safe = np.where(r > 0, r, 1.0)
    u = x / safe[:, None]
    return u[:, :, None] * u[:, None, :]


def _custom_dmetric(m: ChartedManifold, y):
    if m.dmetric is not None:
        return np.asarray(m.dmetric(y), dtype=float)
    h = 1e-6 * m.scale
    out = np.empty(y.shape + (m.d,))
    out = np.empty((len(y), m.d, m.d, m.d))
    for k, e in enumerate(np.eye(m.d)):
        out[..., k] = (np.asarray(m.metric(y + h * e)) - np.asarray(m.metric(y - h * e))) / (2 * h)
    return out


def drift_field(m: ChartedManifold, y):
    """First-order coefficient ``Gamma_k = g^{-1/2} d_j(g^{1/2} g^{jk})`` of ``Lap_g`` at chart points ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(y, axis=1)
    if m.kind == "euclidean":
        return np.zeros_like(y)
    if m.model:
        z = m.root * r
        s = m.s_kappa(r)
        # (s s' - r) / s^2 * y / r, with s s' - r = (S(2z) - 2z) / (2 sqrt|k|)
        defect = _sincos_defect(m.sign, z) / m.root
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(r > 0, defect / np.where(r > 0, s**2 * r, 1.0), 0.0)
        return (m.d - 1) * coef[:, None] * y
    g = np.asarray(m.metric(y), dtype=float)
    dg = _custom_dmetric(m, y)
    gi = np.linalg.inv(g)
    # d_j g^{jk} = -g^{ja} d_j g_ab g^{bk};  d_j log sqrt(g) = 1/2 g^{ab} d_j g_ab
    div_inv = -np.einsum("nja,nabj,nbk->nk", gi, dg, gi)
    dlog = 0.5 * np.einsum("nab,nabj->nj", gi, dg)
    return div_inv + np.einsum("nj,njk->nk", dlog, gi)


@dataclass(frozen=True)
class RescaledMetric:
    """Metric pulled back by ``x -> exp_p(eta x)``: ``eta^2 (I + h(eta x))``."""

    manifold: ChartedManifold
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("eta must be positive")

    def base(self, x):
        return metric_normal_coords(self.manifold, self.eta * np.asarray(x, dtype=float))

    def metric(self, x):
        return self.eta**2 * self.base(x)

    def h(self, x):
        return self.base(x) - np.eye(self.manifold.d)

    def inverse(self, x):
        return np.linalg.inv(self.metric(x))

    def sqrt_det(self, x):
        return np.sqrt(np.linalg.det(self.metric(x)))

    def density(self, x):
        """``rho(eta x) = sqrt det g / eta^d``."""
        return np.sqrt(np.linalg.det(self.base(x)))


def rescaled_operator_coeffs(rm: RescaledMetric, x):
    """``(A_jk, A_k, rho)`` with ``Lap_g = eta^-2 (Lap - eta^2 (A_jk d_jk + A_k d_k))``."""
    m, eta = rm.manifold, rm.eta
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = eta * x
    r = np.linalg.norm(y, axis=1)
    m._check_radius(r)
    if m.model or m.kind == "euclidean":
        P = _radial_projector(y, r)
        sig = m.sigma(r)
        rho = sig ** (m.d - 1)
        # (1 - sigma^-2) / eta^2 = (sigma^2 - 1) / (sigma eta)^2
        Ajk = ((sig**2 - 1) / (sig * eta) ** 2)[:, None, None] * (np.eye(m.d) - P)
    else:
        g = metric_normal_coords(m, y)
        Ajk = (np.eye(m.d) - np.linalg.inv(g)) / eta**2
        rho = np.sqrt(np.linalg.det(g))
    Ak = -drift_field(m, y) / eta
    if single:
        return Ajk[0], Ak[0], float(rho[0])
    return Ajk, Ak, rho


# ------------------------------------------------------------ transition maps


@dataclass(frozen=True)
class TransitionMap:
    """``psi(y) = exp_q^{-1}(exp_p(y))`` with ``q = exp_p(eta xi)``.

    ``T_q M`` is identified with ``R^d`` by parallel transport along the
    geodesic from ``p`` to ``q``; on the models this is the transvection
    (rotation or boost) that moves ``q`` back to ``p``.
    """

    manifold: ChartedManifold
    eta: float
    xi: tuple[float, ...]

    @property
    def shift(self) -> np.ndarray:
        return self.eta * np.asarray(self.xi, dtype=float)

    def _transvection(self):
        m = self.manifold
        a = m.root * self.shift
        th = float(np.linalg.norm(a))
        d = m.d
        T = np.eye(d + 1)
        if th == 0:
            return T
        ahat = np.zeros(d + 1)
        ahat[1:] = a / th
        e0 = np.zeros(d + 1)
        e0[0] = 1.0
        sym = np.outer(e0, e0) + np.outer(ahat, ahat)
        if m.sign > 0:
            return T + (math.cos(th) - 1) * sym + math.sin(th) * (np.outer(e0, ahat) - np.outer(ahat, e0))
        return T + (math.cosh(th) - 1) * sym - math.sinh(th) * (np.outer(e0, ahat) + np.outer(ahat, e0))

    def _check(self, y):
        m = self.manifold
        m._check_radius(np.linalg.norm(y, axis=1))
        m._check_radius(np.linalg.norm(self.shift))

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        self._check(y)
        m = self.manifold
        if not m.model:
            return y - self.shift
        X = _unit_exp(m.sign, m.root * y) @ self._transvection().T
        if m.kind == "sphere":
            theta = np.arctan2(np.linalg.norm(X[:, 1:], axis=1), X[:, 0])
            m._check_radius(theta / m.root)
        return _unit_log(m.sign, X) / m.root

    def jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        self._check(y)
        m = self.manifold
        if not m.model:
            return np.broadcast_to(np.eye(m.d), (len(y), m.d, m.d)).copy()
        v = m.root * y
        T = self._transvection()
        X = _unit_exp(m.sign, v) @ T.T
        return np.einsum("nij,jk,nkl->nil", _unit_dlog(m.sign, X), T, _unit_dexp(m.sign, v))

    def hessian(self, y, h: float = 1e-5):
        """``(m, d, d, d)`` second derivatives, ``[n, i, j, k] = d_j d_k psi_i``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        m = self.manifold
        if not m.model:
            return np.zeros((len(y), m.d, m.d, m.d))
        step = h / m.root
        return np.stack(
            [(self.jacobian(y + step * e) - self.jacobian(y - step * e)) / (2 * step) for e in np.eye(m.d)],
            axis=-1,
        )

    def second_order(self, y):
        """``psi''(y) = psi(y) - y + eta xi``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self(y) - y + self.shift

    # normalised map Psi(x) = x + psi''(eta x) / eta, i.e. psi(eta x) / eta + xi
    def Psi(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + self.second_order(self.eta * x) / self.eta

    def dPsi(self, x):
        return self.jacobian(self.eta * np.atleast_2d(np.asarray(x, dtype=float)))

    def d2Psi(self, x):
        return self.eta * self.hessian(self.eta * np.atleast_2d(np.asarray(x, dtype=float)))


def transition_map(m: ChartedManifold, eta: float, xi) -> TransitionMap:
    xi = tuple(float(v) for v in np.asarray(xi, dtype=float))
    if len(xi) != m.d:
        raise ValidationError("xi has the wrong dimension")
    if m.kind == "custom":
        raise ValidationError("transition maps need closed-form exponential maps (model manifolds only)")
    return TransitionMap(m, float(eta), xi)


# ----------------------------------------------------------------- calibration


def disc_samples(d: int, radius: float = 2.0, count: int = 2000, seed: int = 0):
    """Points in the closed ball of ``radius``: a seeded uniform cloud plus the sphere ``|x| = radius``."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, count) ** (1 / d)
    return np.concatenate([g * r[:, None], g * radius])


@dataclass
class Calibration:
    etas: list[float]
    sup: list[float]
    constant: float
    slope: float

    def to_dict(self):
        return asdict(self)


def _slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(y <= 0):
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def calibrate_metric(m: ChartedManifold, etas=(0.04, 0.02, 0.01), radius: float = 2.0) -> Calibration:
    """``sup |h(eta x)|`` over ``|x| <= radius`` and ``C = sup |h| / (eta |x|)^2``."""
    x = disc_samples(m.d, radius)
    sups, cs = [], []
    r2 = np.sum(x * x, axis=1)
    nz = r2 > 0
    for eta in etas:
        h = np.max(np.abs(RescaledMetric(m, eta).h(x)), axis=(1, 2))
        sups.append(float(h.max()))
        cs.append(float(np.max(h[nz] / (eta**2 * r2[nz]))))
    return Calibration(list(etas), sups, max(cs), _slope(etas, sups))


def calibrate_density(m: ChartedManifold, etas=(0.04, 0.02, 0.01), points=None) -> Calibration:
    """``sup |rho(eta x) - 1|`` over the sample points and ``C = sup / eta``."""
    x = disc_samples(m.d) if points is None else np.atleast_2d(points)
    sups = []
    for eta in etas:
        rho = rescaled_operator_coeffs(RescaledMetric(m, eta), x)[2]
        sups.append(float(np.max(np.abs(rho - 1))))
    return Calibration(list(etas), sups, max(s / e for s, e in zip(sups, etas)), _slope(etas, sups))


def calibrate_operator(m: ChartedManifold, etas=(0.04, 0.02, 0.01), radius: float = 2.0) -> dict:
    """Bounds ``|A_jk| / |x|^2`` and ``|A_k| / |x|`` across the sweep."""
    x = disc_samples(m.d, radius)
    r = np.linalg.norm(x, axis=1)
    nz = r > 0
    cjk = ck = 0.0
    for eta in etas:
        Ajk, Ak, _ = rescaled_operator_coeffs(RescaledMetric(m, eta), x)
        cjk = max(cjk, float(np.max(np.abs(Ajk[nz]).max(axis=(1, 2)) / r[nz] ** 2)))
        ck = max(ck, float(np.max(np.linalg.norm(Ak[nz], axis=1) / r[nz])))
    return {"A_jk_over_r2": cjk, "A_k_over_r": ck}


def calibrate_transition(
    m: ChartedManifold, xi, etas=(0.04, 0.02, 0.01), radius: float = 2.0, points=None
) -> dict:
    """``sup |psi''(eta x)|`` slope and ``||Psi - I||`` (value, first, second derivative) over ``eta``."""
    x = disc_samples(m.d, radius) if points is None else np.atleast_2d(points)
    sup2, closeness = [], []
    for eta in etas:
        tm = transition_map(m, eta, xi)
        sup2.append(float(np.max(np.linalg.norm(tm.second_order(eta * x), axis=1))))
        c0 = np.max(np.linalg.norm(tm.Psi(x) - x, axis=1))
        c1 = np.max(np.linalg.norm(tm.dPsi(x) - np.eye(m.d), ord=2, axis=(1, 2)))
        c2 = np.max(np.sqrt(np.sum(tm.d2Psi(x) ** 2, axis=(1, 2, 3))))
        closeness.append(float(max(c0, c1, c2)))
    return {
        "etas": list(etas),
        "sup_psi2": sup2,
        "psi2_slope": _slope(etas, sup2),
        "Psi_minus_I": closeness,
        "Psi_constant": max(c / e for c, e in zip(closeness, etas)),
        "Psi_slope": _slope(etas, closeness),
    }


# ------------------------------------------------------------- domains on M


@dataclass
class GeodesicStarReport:
    passed: bool
    margins: list[float]
    flat_margins: list[float]
    worst_xi: list[float]
    witness: list[float]
    deviation: float

    def to_dict(self):
        return asdict(self)


def _check_domain_in_chart(m: ChartedManifold, dom, eta: float, xis):
    pts, _, r = dom.boundary_samples(2000)
    reach = eta * (float(r.max()) + float(np.max(np.linalg.norm(np.atleast_2d(xis), axis=1))))
    if reach > m.chart_radius:
        raise DomainError(f"eta * (domain radius + |xi|) = {reach:.4g} exceeds the chart radius {m.chart_radius:.4g}")


def verify_geodesic_star(m: ChartedManifold, dom, kernel, eta: float, xis, samples: int = 2000):
    """Star check of ``Omega_xi = psi_xi(eta Omega) / eta`` around the origin for each ``xi``.

    ``Omega_xi`` is the translate by ``-xi`` of ``Psi_xi(Omega)``, so the check is
    the perturbed star check of ``Psi_xi`` against the kernel point ``xi``.
    """
    from .star_geometry import kernel_membership, perturbed_star_check, star_margins

    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    if not np.all(kernel_membership(kernel, xis)):
        raise ValidationError("every xi must lie in the kernel region")
    _check_domain_in_chart(m, dom, eta, xis)
    flat = star_margins(dom, xis, samples)[0]
    margins, dev, worst, witness = [], 0.0, 0, None
    for i, xi in enumerate(xis):
        if m.kind == "euclidean":
            margins.append(float(flat[i]))
            continue
        tm = transition_map(m, eta, xi)
        rep = perturbed_star_check(dom, xi, tm.Psi, tm.dPsi, d2phi=tm.d2Psi, samples=samples)
        margins.append(rep.margin)
        dev = max(dev, rep.deviation["norm"])
        if rep.margin <= min(margins):
            worst, witness = i, rep.witness
    margins_a = np.array(margins)
    passed = bool(np.all(margins_a >= flat / 2))
    if witness is None:
        witness = star_margins(dom, xis[worst], samples)[1][0].tolist()
    return GeodesicStarReport(passed, margins, flat.tolist(), xis[worst].tolist(), list(witness), dev)


def manifold_measure_ratio(
    m: ChartedManifold, dom, kernel, eta: float, method: str = "auto", samples: int = 1_000_000, seed: int = 0
):
    """Density-weighted ratio ``int_{Omega minus D} rho(eta x) dx / int_Omega rho(eta x) dx``."""
    from numpy.polynomial.legendre import leggauss

    from .measure import MeasureEstimate, monte_carlo_ratio, sliced_measure
    from .star_geometry import max_value, measure_ratio, require_bounded

    if m.kind == "euclidean":
        return measure_ratio(dom, kernel, method, samples, seed)
    require_bounded(dom)
    _check_domain_in_chart(m, dom, eta, np.zeros(dom.d))
    rm = RescaledMetric(m, eta)

    def density(x):
        return rescaled_operator_coeffs(rm, x)[2]

    if method == "auto":
        method = "grid" if (dom.d <= 3 and m.model) else "monte-carlo"
    if method == "grid":
        gx, gw = leggauss(24)

        def fiber(x1, x2, s):
            base = np.stack([x1, x2], axis=-1)
            if dom.d == 2:
                return density(base.reshape(-1, 2)).reshape(x1.shape)
            h = np.sqrt(4.0 * s)
            t = h[..., None] * gx
            pts = np.concatenate(
                [np.broadcast_to(base[..., None, :], t.shape + (2,)), t[..., None]], axis=-1
            ).reshape(-1, 3)
            vals = density(pts).reshape(t.shape)
            return np.sum(gw * vals, axis=-1) * h

        whole = sliced_measure(dom, 0.0, fiber)
        if kernel.threshold >= max_value(dom.field):
            return MeasureEstimate(1.0, 0.0, "grid", 0)
        inner = sliced_measure(dom, kernel.threshold, fiber)
        r = 1.0 - inner.value / whole.value
        err = (inner.error + (inner.value / whole.value) * whole.error) / whole.value
        return MeasureEstimate(min(max(r, 0.0), 1.0), max(err, 1e-14), "grid", 0)
    mc = monte_carlo_ratio(dom, kernel.threshold, samples, seed, weight=density)
    return MeasureEstimate(mc.ratio, mc.ratio_error, "monte-carlo", samples)
