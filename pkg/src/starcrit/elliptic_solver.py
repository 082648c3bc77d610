"""Finite-difference solver for ``Lap U - eta^2 T_eta U + f(eta x, eta^2 U) = 0`` on the domain.

The lattice is the bounding box sampled with spacing ``h``; nodes inside the
domain are unknowns and the zero boundary data enters through Shortley-Weller
stencils whose arm lengths are the distances from a node to the boundary along
each grid edge. ``T_eta`` uses the coefficients of
:func:`~starcrit.manifold_charts.rescaled_operator_coeffs`, so a solution in
rescaled normal coordinates lifts to a solution on the manifold by
``u(exp_p(eta x)) = eta^2 U(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import NdBSpline, make_interp_spline
from scipy.sparse.linalg import bicgstab, gmres, splu

from .errors import HypothesisError, NonConvergenceError, ResolutionError, StructuralError, ValidationError
from .manifold_charts import ChartedManifold, RescaledMetric, metric_normal_coords, rescaled_operator_coeffs
from .torsion_domain import (
    BOUNDARY_XTOL,
    TRANSVERSE_RADIUS,
    CriticalPoint,
    StarDomain,
    classify,
    eval_torsion,
    find_critical_points,
)

NEWTON_TOL = 1e-9
LINEAR_RTOL = 1e-10


# ---------------------------------------------------------------- nonlinearity


@dataclass(frozen=True)
class Nonlinearity:
    """``f(y, u)`` and ``df/du(y, u)``, vectorised over rows of chart points ``y``.

    ``scale`` is the factor that maps solutions of this problem back to the
    original one; it is 1 unless the object came from :func:`normalize_nonlinearity`.
    """

    value: object
    du: object
    name: str = "custom"
    scale: float = 1.0

    def __call__(self, y, u):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.broadcast_to(np.asarray(self.value(y, np.asarray(u, dtype=float)), dtype=float), (len(y),))

    def derivative(self, y, u):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.broadcast_to(np.asarray(self.du(y, np.asarray(u, dtype=float)), dtype=float), (len(y),))

    def base_value(self, d: int) -> float:
        return float(self(np.zeros((1, d)), np.zeros(1))[0])

    @classmethod
    def constant(cls, c: float = 1.0):
        return cls(lambda y, u: np.full(len(y), float(c)), lambda y, u: np.zeros(len(y)), f"{c:g}")

    @classmethod
    def affine(cls, c: float = 1.0):
        return cls(lambda y, u: c + u, lambda y, u: np.ones(len(y)), f"{c:g}+u")

    @classmethod
    def quadratic(cls, c: float = 1.0):
        return cls(lambda y, u: c + u * u, lambda y, u: 2.0 * u, f"{c:g}+u^2")


def check_nonlinearity(nl: Nonlinearity, d: int, count: int = 200, seed: int = 0, h: float = 1e-6, tol: float = 1e-4):
    """Raise :class:`HypothesisError` unless ``f(p, 0) > 0`` and ``df/du`` matches central differences."""
    f0 = nl.base_value(d)
    if not f0 > 0:
        raise HypothesisError(f"f(p, 0) = {f0:g} must be positive")
    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.5, 0.5, (count, d))
    u = rng.uniform(-1.0, 1.0, count)
    fd = (nl(y, u + h) - nl(y, u - h)) / (2 * h)
    err = float(np.max(np.abs(nl.derivative(y, u) - fd)))
    if err > tol:
        raise HypothesisError(f"df/du disagrees with finite differences by {err:.3g}")
    return err


def normalize_nonlinearity(nl: Nonlinearity, d: int) -> Nonlinearity:
    """``g(q, v) = f(q, f0 v) / f0`` with ``f0 = f(p, 0)``; solutions satisfy ``u = f0 v``."""
    f0 = nl.base_value(d)
    if not f0 > 0:
        raise HypothesisError(f"f(p, 0) = {f0:g} must be positive")
    if f0 == 1.0:
        return nl
    return Nonlinearity(
        lambda y, v: nl(y, f0 * v) / f0,
        lambda y, v: nl.derivative(y, f0 * v),
        f"({nl.name})/{f0:g}",
        nl.scale * f0,
    )


# ------------------------------------------------------------------ the grid


@dataclass(eq=False)
class GridDiscretization:
    """Lattice ``h Z^d`` restricted to the bounding box, with the domain nodes as unknowns.

    ``nbr[k, s]`` is the unknown index of the neighbour in direction
    ``(2s - 1) e_k`` or -1 when the edge leaves the domain; ``arm[k, s]`` is the
    corresponding arm length (``h`` or the distance to the boundary).
    """

    dom: StarDomain
    h: float
    axes: list
    mask: np.ndarray
    index: np.ndarray
    lattice: np.ndarray
    nodes: np.ndarray
    nbr: np.ndarray
    arm: np.ndarray

    @property
    def d(self) -> int:
        return self.dom.d

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def count(self) -> int:
        return len(self.nodes)

    @property
    def boundary_distances(self) -> np.ndarray:
        return self.arm[self.nbr < 0]

    def sampled_field(self) -> np.ndarray:
        return self.dom.field.value(self.nodes)

    def to_lattice(self, values, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.shape, fill)
        out[self.mask] = values
        return out


def _edge_distance(field, starts, dirs, h):
    """Distance from interior ``starts`` to the first zero of ``u`` along ``dirs`` within ``h``."""
    sub = 8
    ts = h * np.arange(1, sub + 1) / sub
    vals = field.value(starts[:, None, :] + ts[None, :, None] * dirs[:, None, :])
    # an endpoint that is a zero of u up to rounding counts as the crossing
    vals[:, -1] = np.where(np.abs(vals[:, -1]) <= 1e-13, 0.0, vals[:, -1])
    neg = vals <= 0
    if not neg.any(axis=1).all():
        bad = starts[~neg.any(axis=1)][0]
        raise StructuralError(f"lattice edge from {bad.tolist()} leaves the domain without crossing u = 0")
    j = neg.argmax(axis=1)
    lo = np.where(j > 0, ts[np.maximum(j - 1, 0)], 0.0)
    hi = ts[j]
    for _ in range(int(math.ceil(math.log2(h / sub / BOUNDARY_XTOL))) + 1):
        mid = 0.5 * (lo + hi)
        pos = field.value(starts + mid[:, None] * dirs) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return np.maximum(0.5 * (lo + hi), BOUNDARY_XTOL)


def _transverse_half_chord(field, x1, k, d):
    """Largest ``t`` in ``[0, sqrt 2]`` with ``u(x1 e_1 + s e_k) > 0`` for all ``s < t``."""
    pts = np.zeros((len(x1), d))
    pts[:, 0] = x1
    ek = np.eye(d)[k]
    return _edge_distance(field, pts, np.broadcast_to(ek, pts.shape), TRANSVERSE_RADIUS)


def _check_resolution(dom: StarDomain, h: float, sections: int = 11):
    L = dom.radial_extent(np.eye(dom.d)[0])
    if 2 * L < 3 * h:
        raise ResolutionError(f"domain length {2 * L:.4g} is below 3h = {3 * h:.4g}")
    x1 = np.linspace(-0.5 * L, 0.5 * L, sections)
    for k in range(1, dom.d):
        chord = 2 * _transverse_half_chord(dom.field, x1, k, dom.d)
        if chord.min() < 3 * h:
            i = int(np.argmin(chord))
            raise ResolutionError(
                f"domain is {chord[i]:.4g} thick along x{k + 1} at x1 = {x1[i]:.4g}, below 3h = {3 * h:.4g}"
            )


def discretize(dom: StarDomain, h: float) -> GridDiscretization:
    """Lattice, interior mask and boundary arms for spacing ``h``."""
    if dom.d not in (2, 3):
        raise ValidationError("the solver supports d = 2 and d = 3")
    h = float(h)
    a1 = float(dom.field.profile.a[0])
    if not 0 < h <= a1 / 10 * (1 + 1e-12):
        raise ValidationError(f"grid spacing must lie in (0, a_1/10] = (0, {a1 / 10:g}]")
    # raises StructuralError when the domain is not bounded inside its box
    dom.boundary_samples(2000)
    _check_resolution(dom, h)

    d = dom.d
    ks = [int(math.floor(dom.half_width / h))] + [int(math.floor(TRANSVERSE_RADIUS / h))] * (d - 1)
    axes = [h * np.arange(-k, k + 1) for k in ks]
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    shape = grids[0].shape
    mask = dom.contains(flat).reshape(shape)
    index = np.full(shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    lattice = np.argwhere(mask)
    nodes = flat[mask.ravel()]

    m = len(nodes)
    nbr = np.full((d, 2, m), -1, dtype=np.int64)
    arm = np.full((d, 2, m), h)
    for k in range(d):
        for s, sign in enumerate((-1, 1)):
            j = lattice[:, k] + sign
            ok = (j >= 0) & (j < shape[k])
            lat = lattice[ok].copy()
            lat[:, k] = j[ok]
            nb = np.full(m, -1, dtype=np.int64)
            nb[ok] = index[tuple(lat.T)]
            nbr[k, s] = nb
            cut = nb < 0
            if cut.any():
                dirs = np.zeros((int(cut.sum()), d))
                dirs[:, k] = sign
                arm[k, s, cut] = _edge_distance(dom.field, nodes[cut], dirs, h)
    return GridDiscretization(dom, h, axes, mask, index, lattice, nodes, nbr, arm)


# ------------------------------------------------------------------ assembly


def _diagonal_neighbour(gd: GridDiscretization, j: int, k: int, sj: int, sk: int):
    lat = gd.lattice.copy()
    lat[:, j] += sj
    lat[:, k] += sk
    ok = (lat[:, j] >= 0) & (lat[:, j] < gd.shape[j]) & (lat[:, k] >= 0) & (lat[:, k] < gd.shape[k])
    out = np.full(gd.count, -1, dtype=np.int64)
    out[ok] = gd.index[tuple(lat[ok].T)]
    return out


def linear_operator(gd: GridDiscretization, rm: RescaledMetric | None = None) -> sp.csr_matrix:
    """Sparse matrix of ``Lap - eta^2 T_eta`` on the unknowns (zero boundary values).

    Second differences are Shortley-Weller, first differences use the
    three-point rule on the same unequal arms, and mixed differences use the
    centred four-point rule, falling back to the average of the complete
    one-sided quadrant rules next to the boundary.
    """
    m, d, h = gd.count, gd.d, gd.h
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    me = np.arange(m)

    def add(r, c, v):
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    if rm is None:
        Ajk = np.zeros((m, d, d))
        Ak = np.zeros((m, d))
        e2 = 0.0
    else:
        Ajk, Ak, _ = rescaled_operator_coeffs(rm, gd.nodes)
        e2 = rm.eta**2

    for k in range(d):
        hm, hp = gd.arm[k, 0], gd.arm[k, 1]
        a = 1.0 - e2 * Ajk[:, k, k]
        b = -e2 * Ak[:, k]
        s = hp + hm
        cp, cm, c0 = 2 / (hp * s), 2 / (hm * s), -2 / (hp * hm)
        dp, dm, d0 = hm / (hp * s), -hp / (hm * s), (hp - hm) / (hp * hm)
        add(me, gd.nbr[k, 1], a * cp + b * dp)
        add(me, gd.nbr[k, 0], a * cm + b * dm)
        add(me, me, a * c0 + b * d0)

    if e2 > 0:
        for j in range(d):
            for k in range(j + 1, d):
                w = -2.0 * e2 * Ajk[:, j, k]
                diag = {(sj, sk): _diagonal_neighbour(gd, j, k, sj, sk) for sj in (-1, 1) for sk in (-1, 1)}
                full = np.all([v >= 0 for v in diag.values()], axis=0)
                for (sj, sk), nb in diag.items():
                    add(me[full], nb[full], (sj * sk * w / (4 * h * h))[full])
                # quadrant (sj, sk) is complete when its three lattice neighbours are unknowns
                quad = {
                    q: (nb >= 0) & (gd.nbr[j, (q[0] + 1) // 2] >= 0) & (gd.nbr[k, (q[1] + 1) // 2] >= 0)
                    & (gd.arm[j, (q[0] + 1) // 2] == h) & (gd.arm[k, (q[1] + 1) // 2] == h)
                    for q, nb in diag.items()
                }
                nq = np.sum([v for v in quad.values()], axis=0)
                part = ~full & (nq > 0)
                for (sj, sk), ok in quad.items():
                    sel = part & ok
                    if not sel.any():
                        continue
                    c = (sj * sk * w / (nq.clip(1) * h * h))[sel]
                    r = me[sel]
                    add(r, diag[(sj, sk)][sel], c)
                    add(r, gd.nbr[j, (sj + 1) // 2][sel], -c)
                    add(r, gd.nbr[k, (sk + 1) // 2][sel], -c)
                    add(r, r, c)
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    return L.tocsr()


def _chart_points(gd: GridDiscretization, eta: float):
    return eta * gd.nodes


def assemble(gd: GridDiscretization, rm: RescaledMetric | None, nl: Nonlinearity, U, L=None):
    """Residual ``G(eta, U)`` and its Jacobian ``L + eta^2 diag(df/du)``.

    ``rm = None`` is the flat problem at ``eta = 0``.
    """
    eta = 0.0 if rm is None else rm.eta
    if L is None:
        L = linear_operator(gd, rm)
    U = np.asarray(U, dtype=float)
    y = _chart_points(gd, eta)
    res = L @ U + nl(y, eta**2 * U)
    J = L + sp.diags(eta**2 * nl.derivative(y, eta**2 * U))
    return res, J.tocsr()


# ------------------------------------------------------------------ solving


@dataclass
class DiscreteSolution:
    grid: GridDiscretization
    values: np.ndarray
    eta: float
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    scale: float = 1.0
    manifold: ChartedManifold | None = None

    def distance_to_torsion(self) -> tuple[float, float]:
        """Sup-norm of ``U - f0 u_eps`` and of its centred-difference gradient."""
        E = self.values - self.scale * self.grid.sampled_field()
        grads = np.gradient(self.grid.to_lattice(E), self.grid.h)
        gmax = max(float(np.max(np.abs(g[self.grid.mask]))) for g in grads)
        return float(np.max(np.abs(E))), gmax

    def to_dict(self):
        sup, gsup = self.distance_to_torsion()
        return {
            "eta": self.eta,
            "residual": self.residual,
            "iterations": self.iterations,
            "history": list(self.history),
            "nodes": self.grid.count,
            "h": self.grid.h,
            "sup_distance": sup,
            "grad_distance": gsup,
            "min_value": float(self.values.min()),
        }


def _linear_solve(J, rhs, d: int):
    if d == 2:
        return splu(J.tocsc()).solve(rhs)
    diag = J.diagonal()
    M = sp.diags(1.0 / diag)
    x, info = bicgstab(J, rhs, rtol=LINEAR_RTOL, atol=0.0, M=M, maxiter=20 * J.shape[0])
    if info != 0:
        x, info = gmres(J, rhs, x0=x, rtol=LINEAR_RTOL, atol=0.0, M=M, restart=200, maxiter=200)
    if info != 0:
        raise NonConvergenceError(f"Krylov solve did not reach relative tolerance {LINEAR_RTOL:g} (info={info})")
    return x


def newton_solve(
    gd: GridDiscretization,
    manifold: ChartedManifold | None,
    nl: Nonlinearity,
    eta: float,
    init=None,
    maxiter: int = 50,
    tol: float = NEWTON_TOL,
) -> DiscreteSolution:
    """Damped Newton on the normalised problem, started from ``init`` (default ``f0 u_eps``).

    Converged when ``f0 |G|_inf <= tol (1 + f0)``, the residual of the original
    problem. Steps are halved until the residual sup-norm drops by the Armijo
    factor ``1 - 1e-4 alpha``.
    """
    if manifold is not None and manifold.d != gd.d:
        raise ValidationError(f"manifold dimension {manifold.d} does not match the grid ({gd.d})")
    f0 = nl.base_value(gd.d)
    g = normalize_nonlinearity(nl, gd.d)
    scale = f0
    rm = None if eta == 0 else RescaledMetric(manifold or ChartedManifold.euclidean(gd.d), float(eta))
    L = linear_operator(gd, rm)
    V = gd.sampled_field() if init is None else np.asarray(init, dtype=float) / scale
    res, J = assemble(gd, rm, g, V, L)
    rnorm = float(np.max(np.abs(res)))
    history = [scale * rnorm]
    goal = tol * (1 + abs(f0))
    it = 0
    while scale * rnorm > goal:
        if it >= maxiter:
            raise NonConvergenceError(
                f"Newton did not converge in {maxiter} iterations at eta = {eta:g} "
                f"(residual {scale * rnorm:.3g}); eta may exceed the admissible range"
            )
        delta = _linear_solve(J, -res, gd.d)
        alpha = 1.0
        while True:
            Vn = V + alpha * delta
            rn, Jn = assemble(gd, rm, g, Vn, L)
            rn_norm = float(np.max(np.abs(rn)))
            if np.isfinite(rn_norm) and rn_norm <= (1 - 1e-4 * alpha) * rnorm:
                break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NonConvergenceError(f"line search stalled at eta = {eta:g} (residual {scale * rnorm:.3g})")
        V, res, J, rnorm = Vn, rn, Jn, rn_norm
        history.append(scale * rnorm)
        it += 1
    U = scale * V
    if not np.all(U > 0):
        raise StructuralError(f"solution is not positive at eta = {eta:g} (min {U.min():.3g})")
    return DiscreteSolution(gd, U, float(eta), scale * rnorm, it, history, scale, manifold)


def continuation_in_eta(
    gd: GridDiscretization, manifold: ChartedManifold | None, nl: Nonlinearity, eta_target: float, steps: int = 4
) -> list[DiscreteSolution]:
    """Solutions at ``eta_j = eta_target j / steps``, each warm-started from the previous one."""
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    f0 = nl.base_value(gd.d)
    if eta_target == 0:
        rm_res, _ = assemble(gd, None, nl, f0 * gd.sampled_field())
        return [DiscreteSolution(gd, f0 * gd.sampled_field(), 0.0, float(np.max(np.abs(rm_res))), 0, [], f0, manifold)]
    out: list[DiscreteSolution] = []
    init = None
    for j in range(1, steps + 1):
        eta = eta_target * j / steps
        try:
            sol = newton_solve(gd, manifold, nl, eta, init)
        except (NonConvergenceError, StructuralError) as exc:
            raise type(exc)(f"continuation failed at eta_{j} = {eta:g}: {exc}") from exc
        out.append(sol)
        init = sol.values
    return out


@dataclass
class ConvergenceStudy:
    etas: list[float]
    sup: list[float]
    grad_sup: list[float]
    iterations: list[int]
    floor: float
    passed: bool

    def to_dict(self):
        return {k: getattr(self, k) for k in ("etas", "sup", "grad_sup", "iterations", "floor", "passed")}


def convergence_study(
    gd: GridDiscretization, manifold: ChartedManifold | None, nl: Nonlinearity, etas, floor_factor: float = 2.0
) -> ConvergenceStudy:
    """Distances ``|U_eta - f0 u_eps|`` along a decreasing ``eta`` list on a fixed grid.

    The floor is the distance of the ``eta = 0`` discrete solution; the study
    passes when distances strictly decrease while they stay above
    ``floor_factor`` times the floor.
    """
    etas = [float(e) for e in etas]
    if not etas:
        raise ValidationError("eta list is empty")
    if any(b >= a for a, b in zip(etas, etas[1:])) or etas[-1] <= 0:
        raise ValidationError("eta list must be positive and strictly decreasing")
    floor = newton_solve(gd, None, nl, 0.0).distance_to_torsion()[0]
    sup, gsup, its = [], [], []
    for eta in etas:
        s = newton_solve(gd, manifold, nl, eta)
        a, b = s.distance_to_torsion()
        sup.append(a)
        gsup.append(b)
        its.append(s.iterations)
    above = floor_factor * floor
    passed = all(b < a for a, b in zip(sup, sup[1:]) if a > above)
    return ConvergenceStudy(etas, sup, gsup, its, floor, passed)


# ------------------------------------------------------- critical points of U


def _tensor_spline(axes, values):
    c = values
    knots = []
    for ax, x in enumerate(axes):
        spl = make_interp_spline(x, c, k=3, axis=ax)
        knots.append(spl.t)
        c = np.moveaxis(spl.c, 0, ax)
    return NdBSpline(tuple(knots), c, 3)


class SolutionInterpolant:
    """``U(x) = f0 u_eps(x) + E(x)`` with ``E`` a tensor cubic spline of the lattice correction."""

    def __init__(self, sol: DiscreteSolution):
        gd = sol.grid
        self.sol = sol
        self.field = gd.dom.field
        self.scale = sol.scale
        E = gd.to_lattice(sol.values - sol.scale * gd.sampled_field())
        self.spline = _tensor_spline(gd.axes, E)
        d = gd.d
        self._first = [tuple(int(i == k) for i in range(d)) for k in range(d)]
        self._second = {
            (j, k): tuple(int(i == j) + int(i == k) for i in range(d)) for j in range(d) for k in range(j, d)
        }

    def evaluate(self, x):
        x = np.atleast_2d(x)
        u, g, H = eval_torsion(self.field, x)
        val = self.scale * u + self.spline(x)
        grad = self.scale * g + np.stack([self.spline(x, nu=nu) for nu in self._first], axis=1)
        hess = self.scale * H
        for (j, k), nu in self._second.items():
            e = self.spline(x, nu=nu)
            hess[:, j, k] += e
            if j != k:
                hess[:, k, j] += e
        return val, grad, hess


def _interp_newton(ip: SolutionInterpolant, seeds, maxiter: int = 60, tol: float = 1e-11, max_step: float = 0.5):
    x = np.array(seeds, dtype=float, copy=True)
    conv = np.zeros(len(x), dtype=bool)
    alive = np.ones(len(x), dtype=bool)
    for _ in range(maxiter):
        act = alive & ~conv
        if not act.any():
            break
        _, g, H = ip.evaluate(x[act])
        done = np.linalg.norm(g, axis=1) <= tol
        idx = np.nonzero(act)[0]
        conv[idx[done]] = True
        step = np.zeros_like(g)
        ok = np.abs(np.linalg.det(H)) > 1e-300
        step[ok] = np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        n = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, max_step / np.where(n > 0, n, 1))[:, None]
        move = ~done & ok
        x[idx[move]] -= step[move]
        alive[idx[~ok & ~done]] = False
        inside = ip.sol.grid.dom.in_box(x[idx])
        alive[idx[~inside]] = False
    _, g, _ = ip.evaluate(x)
    conv = alive & (np.linalg.norm(g, axis=1) <= 10 * tol)
    return x, conv


def count_solution_critical_points(
    sol: DiscreteSolution, sweep_spacing: float = 0.25, dedupe_tol: float = 1e-6
) -> list[CriticalPoint]:
    """Critical points of the interpolated solution, sorted by ``x_1``.

    Newton is seeded at the critical points of ``u_eps`` (each must converge)
    and at a coarse lattice over the domain; the result must consist of ``n``
    nondegenerate maxima and ``n - 1`` nondegenerate saddles, with ``|lambda_min|
    >= 1e-3 eps``.
    """
    gd = sol.grid
    dom = gd.dom
    n, d, eps = dom.field.n, gd.d, dom.field.eps
    ip = SolutionInterpolant(sol)
    designated = np.array([c.location for c in find_critical_points(dom)])
    xs, conv = _interp_newton(ip, designated)
    if not conv.all():
        i = int(np.argmin(conv))
        raise NonConvergenceError(f"Newton on the interpolant did not converge from {designated[i].tolist()}")
    found = list(xs)

    stride = max(1, int(round(sweep_spacing / gd.h)))
    coarse = gd.nodes[np.all(gd.lattice % stride == 0, axis=1)]
    sx, sconv = _interp_newton(ip, coarse)
    sx = sx[sconv]
    if len(sx):
        found.extend(sx[dom.contains(sx)])

    pts: list[np.ndarray] = []
    for p in found:
        if all(np.max(np.abs(p - q)) > dedupe_tol for q in pts):
            pts.append(p)
    vals, _, hess = ip.evaluate(np.array(pts))
    out = [classify(p, H, v) for p, H, v in zip(pts, hess, vals)]
    out.sort(key=lambda c: c.location[0])

    nmax = sum(c.kind == "maximum" for c in out)
    nsad = sum(c.kind == "saddle" for c in out)
    if len(out) != 2 * n - 1 or nmax != n or nsad != n - 1:
        raise StructuralError(
            f"expected {n} maxima and {n - 1} saddles, found {nmax} maxima, {nsad} saddles and "
            f"{len(out) - nmax - nsad} other points: {[(c.kind, c.location) for c in out]}"
        )
    weakest = min(min(abs(e) for e in c.eigenvalues) for c in out)
    if weakest < 1e-3 * eps:
        raise StructuralError(f"near-degenerate critical point: |lambda_min| = {weakest:.3g} < 1e-3 eps")
    if sol.manifold is not None and sol.eta > 0:
        # chart critical points correspond to manifold ones when the pulled-back metric is invertible
        g = metric_normal_coords(sol.manifold, sol.eta * np.array([c.location for c in out]))
        if np.any(np.linalg.det(g) <= 0):
            raise StructuralError("pulled-back metric is singular at a critical point")
    return out
