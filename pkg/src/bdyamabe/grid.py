"""Cell-centered finite volumes on spherical grids (three dimensions).

Cells are products of intervals in ``(r, theta, phi)``; Cartesian points
are ``r (sin t cos p, sin t sin p, cos t)`` so that the last coordinate is
the normal one. With ``theta_max = pi/2`` the grid covers the half-ball
and the face ``theta = pi/2`` is the flat boundary; ``theta_max = pi``
gives a full ball. An inner radius ``r_min > 0`` gives an annulus.

The operator ``Delta_g u + c u`` is integrated over each cell in the
coordinates ``xi = (r, theta, phi)``; face fluxes use the density
``M = sqrt(det g) r^2 sin(t) (grad xi)^T g^-1 (grad xi)``.

Boundary conditions are given in terms of the outward unit normal
derivative measured in ``g``: ``Robin(a, b)`` means ``d_out u = a u + b``
and ``Dirichlet(value)`` fixes the trace.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FitError, ParameterError, SolverError

Coef = Union[float, Callable]


def _geometric_faces(a, b, m, beta):
    s = np.linspace(0.0, 1.0, m + 1)
    if abs(beta) < 1e-12:
        return a + (b - a) * s
    return a + (b - a) * np.expm1(beta * s) / np.expm1(beta)


def stretch_for_first_cell(a, b, m, h0):
    """Stretch exponent ``beta`` whose first radial cell has width about ``h0``."""
    if h0 * m >= (b - a):
        return 0.0
    lo, hi = 1e-9, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = (b - a) * np.expm1(mid / m) / np.expm1(mid)
        lo, hi = (mid, hi) if h > h0 else (lo, mid)
    return 0.5 * (lo + hi)


@dataclass
class SphericalGrid:
    """Spherical product grid; see the module docstring."""

    radius: float
    nr: int
    nt: int
    nphi: int
    r_min: float = 0.0
    theta_max: float = np.pi / 2
    beta: float = 0.0
    rf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nphi % 4:
            raise ParameterError("nphi must be divisible by 4 (keeps the grid symmetric)")
        if not (0 <= self.r_min < self.radius):
            raise ParameterError("need 0 <= r_min < radius")
        self.rf = _geometric_faces(self.r_min, self.radius, self.nr, self.beta)
        self.tf = np.linspace(0.0, self.theta_max, self.nt + 1)
        self.pf = np.linspace(0.0, 2 * np.pi, self.nphi + 1)
        self.rc = 0.5 * (self.rf[1:] + self.rf[:-1])
        self.tc = 0.5 * (self.tf[1:] + self.tf[:-1])
        self.pc = 0.5 * (self.pf[1:] + self.pf[:-1])
        self.dr = np.diff(self.rf)
        self.dt = self.theta_max / self.nt
        self.dp = 2 * np.pi / self.nphi

    @property
    def half(self) -> bool:
        return abs(self.theta_max - np.pi / 2) < 1e-14

    @property
    def shape(self):
        return (self.nr, self.nt, self.nphi)

    @property
    def size(self) -> int:
        return self.nr * self.nt * self.nphi

    @property
    def h(self) -> float:
        """Largest physical cell extent."""
        return float(max(self.dr.max(), self.radius * self.dt, self.radius * self.dp))

    def refined(self, factor: int = 2) -> "SphericalGrid":
        return SphericalGrid(self.radius, self.nr * factor, self.nt * factor, self.nphi * factor,
                             self.r_min, self.theta_max, self.beta)

    def spherical_centers(self):
        R, T, P = np.meshgrid(self.rc, self.tc, self.pc, indexing="ij")
        return R.ravel(), T.ravel(), P.ravel()

    @staticmethod
    def to_cartesian(r, t, p):
        st = np.sin(t)
        return np.stack([r * st * np.cos(p), r * st * np.sin(p), r * np.cos(t)], axis=-1)

    def centers(self):
        return self.to_cartesian(*self.spherical_centers())

    def euclidean_volumes(self):
        vr = (self.rf[1:] ** 3 - self.rf[:-1] ** 3) / 3.0
        vt = np.cos(self.tf[:-1]) - np.cos(self.tf[1:])
        return (vr[:, None, None] * vt[None, :, None] * np.full(self.nphi, self.dp)[None, None, :]).ravel()

    def node_classes(self):
        """Per-cell class: ``interior``, ``flat_face``, ``sphere_face`` or ``inner_face``."""
        cls = np.full(self.shape, "interior", dtype=object)
        if self.half:
            cls[:, -1, :] = "flat_face"
        cls[-1, :, :] = "sphere_face"
        if self.r_min > 0:
            cls[0, :, :] = "inner_face"
        return cls.ravel()

    def index(self):
        return np.arange(self.size).reshape(self.shape)


def half_ball_grid(radius, nr, nt, nphi, h0=None, r_min=0.0) -> SphericalGrid:
    beta = 0.0 if h0 is None else stretch_for_first_cell(r_min, radius, nr, h0)
    return SphericalGrid(radius, nr, nt, nphi, r_min, np.pi / 2, beta)


def ball_grid(radius, nr, nt, nphi, h0=None) -> SphericalGrid:
    beta = 0.0 if h0 is None else stretch_for_first_cell(0.0, radius, nr, h0)
    return SphericalGrid(radius, nr, nt, nphi, 0.0, np.pi, beta)


def annulus_grid(r_min, radius, nr, nt, nphi) -> SphericalGrid:
    """Half-annulus with logarithmic radial spacing."""
    g = SphericalGrid(radius, nr, nt, nphi, r_min, np.pi / 2, 0.0)
    g.rf = np.geomspace(r_min, radius, nr + 1)
    g.rc = np.sqrt(g.rf[1:] * g.rf[:-1])
    g.dr = np.diff(g.rf)
    return g


# ---------------------------------------------------------------------------
# problems


@dataclass
class Robin:
    """``d u / d(outward unit normal) = a u + b``."""

    a: Coef = 0.0
    b: Coef = 0.0


@dataclass
class Dirichlet:
    value: Coef = 0.0


def Neumann() -> Robin:
    return Robin(0.0, 0.0)


def decay_closure(power: float, center=None) -> Robin:
    """Outward derivative of ``|y - center|^-p`` divided by its value.

    With ``center = None`` (the origin) this is ``d_r u + (p/r) u = 0``.
    """
    if center is None:
        return Robin(lambda y: -power / np.linalg.norm(y, axis=-1), 0.0)
    c = np.asarray(center, float)

    def a(y):
        r = np.linalg.norm(y, axis=-1)
        d = y - c
        return -power * np.einsum("...i,...i->...", y, d) / (r * np.einsum("...i,...i->...", d, d))

    return Robin(a, 0.0)


@dataclass
class RobinProblem:
    """``Delta_g u + c u = f`` with conditions on the grid's boundary faces.

    ``metric`` is ``None`` for the Euclidean metric; otherwise a callable
    returning ``g`` at Cartesian points (a :class:`MetricField` works).
    """

    c: Coef = 0.0
    f: Coef = 0.0
    flat: Robin | Dirichlet = field(default_factory=Neumann)
    outer: Robin | Dirichlet = field(default_factory=Dirichlet)
    inner: Robin | Dirichlet = field(default_factory=Dirichlet)
    metric: Optional[Callable] = None
    boundary_order: int = 2


@dataclass
class SparseSystem:
    """``A u + const = V f`` with ``V`` the cell measures."""

    A: sp.csr_matrix
    vol: np.ndarray
    const: np.ndarray
    grid: SphericalGrid
    symmetric: bool
    meta: dict = field(default_factory=dict)
    points: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def apply(self, u):
        """Discrete operator applied to cell values (boundary data included)."""
        return (self.A @ u + self.const) / self.vol


def _eval(coef, pts):
    if callable(coef):
        val = np.asarray(coef(pts), float)
        return np.broadcast_to(val, pts.shape[:-1]).copy()
    return np.full(pts.shape[:-1], float(coef))


def _frame(r, t, p):
    st, ct, sp_, cp = np.sin(t), np.cos(t), np.sin(p), np.cos(p)
    er = np.stack([st * cp, st * sp_, ct], -1)
    et = np.stack([ct * cp, ct * sp_, -st], -1)
    ep = np.stack([-sp_, cp, np.zeros_like(p)], -1)
    return er, et, ep


def flux_density(metric, r, t, p):
    """``M[..., i, j]`` at spherical points, plus ``sqrt(det g)``."""
    st = np.sin(t)
    if metric is None:
        M = np.zeros(np.shape(r) + (3, 3))
        M[..., 0, 0] = r * r * st
        M[..., 1, 1] = st
        M[..., 2, 2] = 1.0 / st
        return M, np.ones(np.shape(r))
    y = SphericalGrid.to_cartesian(r, t, p)
    g = metric(y) if not hasattr(metric, "g") else metric.g(y)
    gi = np.linalg.inv(g)
    sq = np.sqrt(np.linalg.det(g))
    er, et, ep = _frame(r, t, p)
    D = np.stack([er, et / r[..., None], ep / (r * st)[..., None]], -2)  # rows grad xi_i
    M = np.einsum("...ia,...ab,...jb->...ij", D, gi, D) * (sq * r * r * st)[..., None, None]
    return M, sq


def assemble(problem: RobinProblem, grid: SphericalGrid, mode: int | None = None) -> SparseSystem:
    """Assemble the finite-volume system of ``problem`` on ``grid``.

    With ``mode=m`` the problem must be invariant under rotations about the
    normal axis; the result is the block of the full system acting on
    fields ``v(r, theta) exp(i m phi)`` sampled on the grid's azimuthal
    cells. The full discrete operator is block-circulant in ``phi``, so its
    spectrum is the union of these blocks over ``m = 0, ..., nphi - 1``
    (blocks ``m`` and ``nphi - m`` coincide).
    """
    nr, nt = grid.nr, grid.nt
    npp = grid.nphi if mode is None else 1
    pcs = grid.pc[:npp]
    pfs = grid.pf[1:npp + 1]
    size = nr * nt * npp
    idx = np.arange(size).reshape(nr, nt, npp)
    rows, cols, vals = [], [], []
    const = np.zeros(size)
    metric = problem.metric

    def add(P, Q, w):
        rows.append(P.ravel())
        cols.append(Q.ravel())
        vals.append(w.ravel())

    R, T, Pp = np.meshgrid(grid.rc, grid.tc, pcs, indexing="ij")
    centers = grid.to_cartesian(R, T, Pp)
    _, sq_c = flux_density(metric, R, T, Pp)
    vol = grid.euclidean_volumes().reshape(grid.shape)[:, :, :npp].ravel() * sq_c.ravel()
    if np.any(~np.isfinite(vol)) or np.any(vol <= 0):
        raise SolverError("nonpositive cell measure", {"grid": repr(grid)})
    cvals = _eval(problem.c, centers)
    if np.any(~np.isfinite(cvals)):
        bad = int(np.flatnonzero(~np.isfinite(cvals.ravel()))[0])
        raise SolverError(f"coefficient not evaluable at cell {bad}", {"cell": bad})
    add(idx, idx, cvals * vol.reshape(idx.shape))

    dr, dt, dp = grid.dr, grid.dt, grid.dp
    cross = []

    # --- radial faces
    if nr > 1:
        rfi = grid.rf[1:-1][:, None, None] * np.ones((1, nt, npp))
        Tf = np.broadcast_to(grid.tc[None, :, None], rfi.shape)
        Pf = np.broadcast_to(pcs[None, None, :], rfi.shape)
        M, _ = flux_density(metric, rfi, Tf, Pf)
        d = (grid.rc[1:] - grid.rc[:-1])[:, None, None]
        w = M[..., 0, 0] * dt * dp / d
        P, Q = idx[:-1], idx[1:]
        add(P, Q, w), add(P, P, -w), add(Q, P, w), add(Q, Q, -w)
        cross.append((0, P, Q, M, dt * dp))
    # --- polar faces
    if nt > 1:
        Rf = np.broadcast_to(grid.rc[:, None, None], (nr, nt - 1, npp))
        Tf = np.broadcast_to(grid.tf[1:-1][None, :, None], Rf.shape)
        Pf = np.broadcast_to(pcs[None, None, :], Rf.shape)
        M, _ = flux_density(metric, Rf, Tf, Pf)
        w = M[..., 1, 1] * dr[:, None, None] * dp / dt
        P, Q = idx[:, :-1], idx[:, 1:]
        add(P, Q, w), add(P, P, -w), add(Q, P, w), add(Q, Q, -w)
        cross.append((1, P, Q, M, dr[:, None, None] * dp))
    # --- azimuthal faces (periodic)
    Rf = np.broadcast_to(grid.rc[:, None, None], (nr, nt, npp))
    Tf = np.broadcast_to(grid.tc[None, :, None], Rf.shape)
    Pf = np.broadcast_to(pfs[None, None, :], Rf.shape)
    M, _ = flux_density(metric, Rf, Tf, Pf)
    w = M[..., 2, 2] * dr[:, None, None] * dt / dp
    if mode is None:
        P, Q = idx, np.roll(idx, -1, axis=2)
        add(P, Q, w), add(P, P, -w), add(Q, P, w), add(Q, Q, -w)
    else:
        add(idx, idx, w * (2.0 * np.cos(mode * dp) - 2.0))
    cross.append((2, idx, np.roll(idx, -1, axis=2), M, dr[:, None, None] * dt))
    symmetric = True
    stencils = [_cell_gradient_stencils(grid, j) for j in range(3)] if mode is None else None
    if metric is not None:
        if mode is not None:
            if any(np.max(np.abs(M[..., k, j])) > 1e-14 * np.max(np.abs(M[..., k, k]))
                   for k, _, _, M, _ in cross for j in range(3) if j != k):
                raise ParameterError("azimuthal reduction needs a metric without cross terms")
        else:
            symmetric = _add_cross_terms(grid, cross, add, stencils)

    # --- boundary faces
    def boundary(bc, k, sigma, cells, nxt, rr, tt, pp, area, dl, d):
        """One boundary face per cell in ``cells``; ``nxt`` are the next cells inward.

        ``dl`` is the coordinate distance from the cell center to the face and
        ``d`` the distance between the two cell centers. With
        ``boundary_order=2`` the face value comes from the quadratic through
        the face and both centers; with ``1`` from the linear one.
        """
        M, _ = flux_density(metric, rr, tt, pp)
        Mkk = M[..., k, k]
        w0 = Mkk * area
        # s = sqrt(G^kk): physical outward derivative = s * coordinate outward derivative
        s = np.sqrt(Mkk / _jac(metric, rr, tt, pp))
        pts = grid.to_cartesian(rr, tt, pp)
        two = problem.boundary_order == 2
        D = dl + d
        if isinstance(bc, Dirichlet):
            ub = _eval(bc.value, pts)
            if two:
                # outward derivative -u'(0) of the quadratic through (0,ub),(dl,uP),(D,uQ)
                cP = -D * D / (dl * D * d)
                cQ = dl * dl / (dl * D * d)
                cB = -(cP + cQ)
                add(cells, cells, w0 * cP), add(cells, nxt, w0 * cQ)
                const[cells.ravel()] += (w0 * cB * ub).ravel()
            else:
                add(cells, cells, -w0 / dl)
                const[cells.ravel()] += (w0 * ub / dl).ravel()
            if metric is None:
                return
            # tangential part of the outward flux, from the boundary cell's gradient
            for j in range(3):
                m = sigma * M[..., k, j] * area
                if j == k or np.max(np.abs(m)) < 1e-14 * np.max(np.abs(w0)):
                    continue
                mi, pl, spc = (a.ravel()[cells.ravel()].reshape(cells.shape) for a in stencils[j])
                add(cells, pl, m / spc), add(cells, mi, -m / spc)
            return
        alpha = _eval(bc.a, pts) / s
        gam = _eval(bc.b, pts) / s
        if two:
            # face value u0 with -u'(0) = alpha u0 + gam on the quadratic through both centers
            den = d * (2 * dl + d) - alpha * dl * D * d
            eP, eQ, eG = D * D / den, -dl * dl / den, dl * D * d / den
        else:
            den = 1.0 - alpha * dl
            eP, eQ, eG = 1.0 / den, 0.0 * den, dl / den
        if np.any(den <= 0):
            raise SolverError("Robin coefficient too large for the boundary cell size; refine the grid",
                              {"max_alpha_h": float(np.max(alpha * dl))})
        # outward flux = w0 (alpha u0 + gam)
        add(cells, cells, w0 * alpha * eP)
        if two:
            add(cells, nxt, w0 * alpha * eQ)
        const[cells.ravel()] += (w0 * (alpha * eG * gam + gam)).ravel()

    shp = (nt, npp)
    rr = np.full(shp, grid.rf[-1])
    tt, pp = np.meshgrid(grid.tc, pcs, indexing="ij")
    boundary(problem.outer, 0, 1.0, idx[-1], idx[-2], rr, tt, pp, dt * dp,
             grid.rf[-1] - grid.rc[-1], grid.rc[-1] - grid.rc[-2])
    if grid.r_min > 0:
        rr = np.full(shp, grid.rf[0])
        boundary(problem.inner, 0, -1.0, idx[0], idx[1], rr, tt, pp, dt * dp,
                 grid.rc[0] - grid.rf[0], grid.rc[1] - grid.rc[0])
    if grid.half:
        rr, pp = np.meshgrid(grid.rc, pcs, indexing="ij")
        tt = np.full(rr.shape, grid.tf[-1])
        boundary(problem.flat, 1, 1.0, idx[:, -1], idx[:, -2], rr, tt, pp, dr[:, None] * dp,
                 grid.tf[-1] - grid.tc[-1], dt)
    if problem.boundary_order == 2:
        symmetric = False

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size, size))
    A.sum_duplicates()
    return SparseSystem(A, vol, const, grid, symmetric,
                        {"scheme_order": 2, "mode": mode, "source": problem.f,
                         "grid": repr((grid.radius, grid.shape, grid.r_min, grid.beta))},
                        centers.reshape(-1, 3))


def _jac(metric, r, t, p):
    """``sqrt(det g) r^2 sin t`` -- the coordinate density ``sqrt(G)``."""
    if metric is None:
        sq = 1.0
    else:
        y = SphericalGrid.to_cartesian(r, t, p)
        g = metric(y) if not hasattr(metric, "g") else metric.g(y)
        sq = np.sqrt(np.linalg.det(g))
    return sq * r * r * np.sin(t)


def _cell_gradient_stencils(grid: SphericalGrid, j: int):
    """(minus, plus, spacing) index arrays for the coordinate derivative ``d_j`` per cell."""
    idx = grid.index()
    if j == 2:
        return np.roll(idx, 1, axis=2), np.roll(idx, -1, axis=2), np.full(grid.shape, 2 * grid.dp)
    coord = grid.rc if j == 0 else grid.tc
    m = idx.shape[j]
    lo = np.clip(np.arange(m) - 1, 0, m - 1)
    hi = np.clip(np.arange(m) + 1, 0, m - 1)
    minus = np.take(idx, lo, axis=j)
    plus = np.take(idx, hi, axis=j)
    sh = [1, 1, 1]
    sh[j] = m
    spacing = (coord[hi] - coord[lo]).reshape(sh) * np.ones(grid.shape)
    return minus, plus, spacing


def _add_cross_terms(grid, faces, add, stencils) -> bool:
    """Off-diagonal flux terms ``M^{kj} d_j u`` on interior faces."""
    any_cross = False
    for k, P, Q, M, area in faces:
        for j in range(3):
            if j == k:
                continue
            m = M[..., k, j] * area
            if np.max(np.abs(m)) < 1e-14 * (np.max(np.abs(M[..., k, k] * area)) + 1e-300):
                continue
            any_cross = True
            for cell in (P, Q):
                mi, pl, spc = stencils[j]
                mi = mi.ravel()[cell.ravel()].reshape(cell.shape)
                pl = pl.ravel()[cell.ravel()].reshape(cell.shape)
                spc = spc.ravel()[cell.ravel()].reshape(cell.shape)
                w = 0.5 * m / spc
                # flux out of P is +F, out of Q is -F
                add(P, pl, w), add(P, mi, -w), add(Q, pl, -w), add(Q, mi, w)
    return not any_cross


# ---------------------------------------------------------------------------
# solving


def solve(system: SparseSystem, f=None, rtol: float = 1e-10):
    """Solve ``A u = V f - const`` and verify the relative residual.

    ``f`` defaults to the source of the assembled problem.
    """
    n = system.size
    pts = system.points if system.points is not None else system.grid.centers()
    if f is None:
        f = system.meta.get("source")
    if f is None:
        fv = np.zeros(n)
    elif callable(f) or np.isscalar(f):
        fv = _eval(f, pts)
    else:
        fv = np.asarray(f, float)
    b = system.vol * fv - system.const
    if not np.any(b):
        return np.zeros(n)
    lu = spla.splu(system.A.tocsc())
    u = lu.solve(b)
    res = np.linalg.norm(system.A @ u - b) / np.linalg.norm(b)
    if not np.all(np.isfinite(u)) or res > rtol:
        diag = np.abs(lu.U.diagonal())
        cond = float(diag.max() / max(diag.min(), 1e-300))
        raise SolverError(f"linear solve failed (relative residual {res:.2e})",
                          {"residual": float(res), "pivot_ratio": cond})
    return u


def near_null_space(system: SparseSystem, k: int = 6, threshold: float | None = None, seed: int = 0,
                    weight=None):
    """The ``k`` eigenpairs of ``A u = mu W V u`` closest to zero.

    ``W`` is a positive cell weight (default 1). Returns
    ``(sv, vectors, count, mu)`` with ``sv = |mu|`` ascending and ``count``
    the number of values below ``threshold`` (when given).
    """
    n = system.A.shape[0]
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    w = system.vol if weight is None else system.vol * np.asarray(weight, float)
    if np.any(w <= 0):
        raise ParameterError("eigenproblem weight must be positive")
    Mv = sp.diags(w)
    try:
        if system.symmetric:
            mu, vec = spla.eigsh(system.A, k=k, M=Mv, sigma=0.0, which="LM", v0=v0, tol=1e-12, maxiter=5000)
        else:
            mu, vec = spla.eigs(system.A, k=k, M=Mv, sigma=0.0, which="LM", v0=v0, tol=1e-12, maxiter=5000)
            mu, vec = mu.real, vec.real
    except spla.ArpackNoConvergence as exc:
        raise SolverError("eigensolver did not converge", {"converged": len(exc.eigenvalues)}) from exc
    order = np.argsort(np.abs(mu))
    mu, vec = mu[order], vec[:, order]
    sv = np.abs(mu)
    # fix signs deterministically
    for i in range(vec.shape[1]):
        j = np.argmax(np.abs(vec[:, i]))
        if vec[j, i] < 0:
            vec[:, i] *= -1
    count = None if threshold is None else int(np.sum(sv < threshold))
    return sv, vec, count, mu


# ---------------------------------------------------------------------------
# fitting and derivatives


def mode_columns(grid: SphericalGrid, funcs, m: int):
    """Independent real azimuthal-``m`` components of ``funcs`` on the ``(r, theta)`` cells.

    ``funcs`` maps labels to callables on Cartesian points. A mode-``m``
    cell vector fits ``span(funcs)`` in the lifted sense exactly when it
    fits these columns, because different modes are orthogonal. Returns
    ``(columns, labels)``; components that vanish or repeat an earlier
    column are dropped.
    """
    nphi = max(8, 4 * (m + 2))
    pc = (np.arange(nphi) + 0.5) * 2 * np.pi / nphi
    R, T, P = np.meshgrid(grid.rc, grid.tc, pc, indexing="ij")
    y = grid.to_cartesian(R, T, P).reshape(-1, 3)
    cols, labels = [], []
    for name, f in funcs.items():
        F = np.asarray(f(y), float).reshape(grid.nr * grid.nt, nphi)
        c = 2.0 / nphi * F @ np.cos(m * pc) if m else F.mean(axis=1)
        s = 2.0 / nphi * F @ np.sin(m * pc)
        for part, kind in ((c, "cos"), (s, "sin")):
            if np.max(np.abs(part)) <= 1e-12 * max(np.max(np.abs(F)), 1e-300):
                continue
            if cols:
                B = np.column_stack(cols)
                resid = part - B @ np.linalg.lstsq(B, part, rcond=None)[0]
                if np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(part):
                    continue
            cols.append(part)
            labels.append(f"{name}:{kind}{m}")
    return cols, labels


def weighted_lstsq(columns, target, weights, cond_max: float = 1e10):
    """Least squares in the ``weights``-norm; returns (coefficients, relative residual)."""
    B = np.column_stack(columns)
    w = np.sqrt(np.asarray(weights, float))
    Bw = B * w[:, None]
    tw = np.asarray(target, float) * w
    s = np.linalg.svd(Bw, compute_uv=False)
    if s[-1] <= s[0] / cond_max:
        raise FitError(f"degenerate fit basis (condition {s[0] / max(s[-1], 1e-300):.2e})")
    coef, *_ = np.linalg.lstsq(Bw, tw, rcond=None)
    res = np.linalg.norm(Bw @ coef - tw) / max(np.linalg.norm(tw), 1e-300)
    return coef, float(res)


def _d1d2(f, x, axis):
    """First and second derivatives on a nonuniform 1D grid along ``axis``.

    Interior points use the three-point Lagrange stencil; endpoints use the
    one-sided three-point stencil.
    """
    f = np.moveaxis(f, axis, 0)
    m = len(x)
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    for i in range(m):
        if m < 3:
            raise ParameterError("need at least three cells per direction")
        a = min(max(i - 1, 0), m - 3)
        j = [a, a + 1, a + 2]
        xs = x[j]
        x0 = x[i]
        # Lagrange derivative weights
        w1 = np.empty(3)
        w2 = np.empty(3)
        for k in range(3):
            o = [xs[q] for q in range(3) if q != k]
            den = np.prod([xs[k] - oo for oo in o])
            w1[k] = ((x0 - o[0]) + (x0 - o[1])) / den
            w2[k] = 2.0 / den
        d1[i] = sum(w1[k] * f[j[k]] for k in range(3))
        d2[i] = sum(w2[k] * f[j[k]] for k in range(3))
    return np.moveaxis(d1, 0, axis), np.moveaxis(d2, 0, axis)


def grid_derivatives(grid: SphericalGrid, u):
    """Cartesian gradient norm and Hessian Frobenius norm of a cell field.

    Derivatives are taken in ``(r, theta, phi)`` and converted with the
    orthonormal spherical frame. Across the pole the stencil uses the cell
    on the opposite meridian. Returns ``(grad, hess_norm)`` with ``grad``
    of shape ``(size, 3)``.
    """
    U = np.asarray(u, float).reshape(grid.shape)
    nr, nt, npp = grid.shape
    # theta with a reflected ghost across the pole
    ghost = np.roll(U[:, :1, :], npp // 2, axis=2)
    Ut = np.concatenate([ghost, U], axis=1)
    tt = np.concatenate([[-grid.tc[0]], grid.tc])
    ut, utt = _d1d2(Ut, tt, 1)
    ut, utt = ut[:, 1:], utt[:, 1:]
    ur, urr = _d1d2(U, grid.rc, 0)
    # periodic phi
    up = (np.roll(U, -1, 2) - np.roll(U, 1, 2)) / (2 * grid.dp)
    upp = (np.roll(U, -1, 2) - 2 * U + np.roll(U, 1, 2)) / grid.dp**2
    urt, _ = _d1d2(ut, grid.rc, 0)
    urp = (np.roll(ur, -1, 2) - np.roll(ur, 1, 2)) / (2 * grid.dp)
    utp = (np.roll(ut, -1, 2) - np.roll(ut, 1, 2)) / (2 * grid.dp)

    r = grid.rc[:, None, None]
    t = grid.tc[None, :, None]
    p = grid.pc[None, None, :]
    st, ct = np.sin(t), np.cos(t)
    g_r, g_t, g_p = ur, ut / r, up / (r * st)
    H = np.empty(grid.shape + (3, 3))
    H[..., 0, 0] = urr
    H[..., 0, 1] = H[..., 1, 0] = urt / r - ut / r**2
    H[..., 0, 2] = H[..., 2, 0] = urp / (r * st) - up / (r**2 * st)
    H[..., 1, 1] = utt / r**2 + ur / r
    H[..., 1, 2] = H[..., 2, 1] = utp / (r**2 * st) - ct * up / (r**2 * st**2)
    H[..., 2, 2] = upp / (r**2 * st**2) + ur / r + ct * ut / (r**2 * st)
    R, T, P = np.broadcast_arrays(r, t, p)
    er, et, ep = _frame(R, T, P)
    grad = g_r[..., None] * er + g_t[..., None] * et + g_p[..., None] * ep
    hess_norm = np.sqrt(np.einsum("...ij,...ij->...", H, H))
    return grad.reshape(-1, 3), hess_norm.ravel()


def quadratic_origin_fit(grid: SphericalGrid, r_fit: float, ncells_min: int = 40):
    """Linear functional giving (value, d1, d2, d3) at the origin from cell values.

    Fits a full quadratic in Cartesian coordinates to the cells with
    centers inside ``r_fit`` by least squares and returns the matrix
    ``W`` (4 x size) with ``W @ u = (u(0), grad u(0))`` of the fit.
    """
    y = grid.centers()
    rr = np.linalg.norm(y, axis=1)
    sel = np.flatnonzero(rr < r_fit)
    if len(sel) < ncells_min:
        raise FitError("too few cells for the origin fit; increase r_fit")
    ys = y[sel]
    cols = [np.ones(len(sel)), ys[:, 0], ys[:, 1], ys[:, 2]]
    for a in range(3):
        for b in range(a, 3):
            cols.append(ys[:, a] * ys[:, b])
    B = np.column_stack(cols)
    pinv = np.linalg.pinv(B)
    W = np.zeros((4, grid.size))
    W[:, sel] = pinv[:4]
    return W


def export_csv(grid: SphericalGrid, u) -> str:
    """Cell centers and values as CSV text."""
    from .report import table_to_csv

    y = grid.centers()
    return table_to_csv({"y1": y[:, 0], "y2": y[:, 1], "y3": y[:, 2], "value": np.asarray(u)})


# ---------------------------------------------------------------------------
# near-null census over azimuthal modes


def multiplicity(m: int, nphi: int) -> int:
    """Number of real fields carried by azimuthal mode ``m`` on ``nphi`` cells."""
    return 1 if m == 0 or 2 * m == nphi else 2


def rayleigh(system: SparseSystem, v, weight=None) -> float:
    w = system.vol if weight is None else system.vol * weight
    return float(v @ (system.A @ v) / (v @ (w * v)))


@dataclass
class ModeCensus:
    """Eigenvalues of ``A u = mu W V u`` near zero, mode by mode, with fits and a count."""

    grid: SphericalGrid
    modes: list
    mu: dict
    fits: dict
    threshold: float
    h: float
    defects: dict
    count: int
    gap_ratio: float | None
    kernel_values: list

    @property
    def constant(self) -> float:
        """``C`` in ``threshold = C h^2``."""
        return self.threshold / self.h**2

    def max_kernel_fit(self):
        vals = [f for m in self.modes for f, mu in zip(self.fits[m], self.mu[m]) if abs(mu) < self.threshold]
        return max(vals) if vals else None

    def summary(self) -> dict:
        return {
            "count": self.count,
            "gap_ratio": self.gap_ratio,
            "threshold": self.threshold,
            "h": self.h,
            "C": self.constant,
            "kernel_values": self.kernel_values,
            "max_fit_residual": self.max_kernel_fit(),
            "mu": {str(m): self.mu[m].tolist() for m in self.modes},
            "fit_residuals": {str(m): list(self.fits[m]) for m in self.modes},
            "calibration_defects": self.defects,
            "grid": [self.grid.nr, self.grid.nt, self.grid.nphi, self.grid.radius],
        }


def mode_census(grid: SphericalGrid, problem_for_mode, funcs, modes=(0, 1, 2, 3), k: int = 4,
                weight=None, reference_for_mode=None, safety: float = 3.0, seed: int = 0,
                threshold: float | None = None) -> ModeCensus:
    """Count near-null eigenvalues of a rotation-invariant problem and fit them against ``funcs``.

    ``problem_for_mode(m)`` returns the :class:`RobinProblem` used for mode
    ``m``; ``weight(system)`` gives the eigenproblem weight ``W``. The
    threshold is ``safety`` times the largest Rayleigh quotient of the
    mode components of ``funcs`` in the reference problem
    (``reference_for_mode``, defaulting to ``problem_for_mode``), i.e. the
    scheme's own defect on the expected kernel; written as ``C h^2`` with
    ``h`` the polar step. Perturbed problems are thus judged on the scale
    of the unperturbed one. An explicit ``threshold`` skips the calibration.
    """
    reference_for_mode = reference_for_mode or problem_for_mode
    defects = {}
    for m in modes if threshold is None else ():
        cols, labels = mode_columns(grid, funcs, m)
        if not cols:
            continue
        S = assemble(reference_for_mode(m), grid, mode=m)
        W = None if weight is None else weight(S)
        for c, lab in zip(cols, labels):
            defects[lab] = rayleigh(S, c, W)
    if threshold is not None:
        thr = float(threshold)
    elif not defects:
        raise ParameterError("no expected kernel field has a component in the requested modes")
    else:
        thr = safety * max(abs(v) for v in defects.values())
    mus, fits = {}, {}
    kern, rest = [], []
    count = 0
    for m in modes:
        S = assemble(problem_for_mode(m), grid, mode=m)
        W = None if weight is None else weight(S)
        sv, vec, _, mu = near_null_space(S, k=k, seed=seed, weight=W)
        cols, _ = mode_columns(grid, funcs, m)
        wv = S.vol if W is None else S.vol * W
        mus[m] = mu
        fits[m] = [weighted_lstsq(cols, vec[:, i], wv)[1] if cols else 1.0 for i in range(vec.shape[1])]
        for v in sv:
            if v < thr:
                kern.append(float(v))
                count += multiplicity(m, grid.nphi)
            else:
                rest.append(float(v))
    gap = (min(rest) / max(kern)) if kern and rest else None
    return ModeCensus(grid, list(modes), mus, fits, thr, float(grid.dt), defects, count, gap, sorted(kern))
