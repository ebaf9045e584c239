"""Ball and hyperboloid models of hyperbolic space attached to the bubble.

Scale: the hyperboloid of the bubble with parameter ``kappa`` is
``{<z, z> = -r^2, z_0 > 0}`` with ``r = r_kappa = 1/(2 sqrt(kappa))`` and
``<z, w> = -z_0 w_0 + sum z_a w_a``. Its sectional curvature is
``-1/r^2 = -4 kappa``, matching ``(1 - kappa |xi + e_n|^2)^-2 delta``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .anchors import anchor
from .errors import DomainError, ParameterError, PreconditionError
from .geometry import MetricField, ScalarField, laplace_beltrami
from .models import BubbleParams, eval_bubble
from .report import VerificationReport


def r_kappa(kappa: float) -> float:
    if not 0 < kappa < 1:
        raise ParameterError("kappa must lie in (0, 1)")
    return 0.5 / math.sqrt(kappa)


@dataclass(frozen=True)
class GeodesicBallSpec:
    """Geodesic ball ``{z_0 < r cosh t0}`` about the base point ``(r, 0, ..., 0)``.

    ``t0="auto"`` picks ``coth t0 = 2 r``, i.e. ``tanh t0 = sqrt(kappa)``;
    ``t0="cosh"`` picks ``cosh t0 = 2 r`` (kept as a contrasting choice).
    """

    kappa: float
    t0: float | str = "auto"
    n: int = 3

    def __post_init__(self):
        r_kappa(self.kappa)
        if isinstance(self.t0, str):
            if self.t0 == "auto":
                t = math.atanh(math.sqrt(self.kappa))
            elif self.t0 == "cosh":
                t = math.acosh(2.0 * r_kappa(self.kappa))
            else:
                raise ParameterError(f"unknown t0 rule {self.t0!r}")
            object.__setattr__(self, "t0", t)
        if not self.t0 > 0:
            raise ParameterError("t0 must be positive")

    @property
    def r(self) -> float:
        return r_kappa(self.kappa)

    @property
    def boundary_radius(self) -> float:
        """Spatial radius ``r sinh t0`` of the boundary sphere."""
        return self.r * math.sinh(self.t0)

    @property
    def robin_coefficient(self) -> float:
        """``coth(t0)/r``; equals 2 exactly under the ``auto`` rule."""
        return 1.0 / (self.r * math.tanh(self.t0))

    @classmethod
    def from_json(cls, d: dict) -> "GeodesicBallSpec":
        return cls(float(d["kappa"]), d.get("t0", "auto"), int(d.get("n", 3)))


def minkowski(z, w):
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    return -z[..., 0] * w[..., 0] + np.einsum("...a,...a->...", z[..., 1:], w[..., 1:])


# ---------------------------------------------------------------------------
# ball model and the inversion F


def ball_metric_factor(kappa: float, xi):
    xi = np.asarray(xi, float)
    s = np.einsum("...a,...a->...", xi, xi) + 2.0 * xi[..., -1] + 1.0
    den = 1.0 - kappa * s
    if np.any(den <= 0):
        raise DomainError("point outside the ball model")
    return den ** (-2.0)


def ball_metric(kappa: float, xi):
    """Metric matrix of the ball model at ``xi``."""
    xi = np.asarray(xi, float)
    n = xi.shape[-1]
    return ball_metric_factor(kappa, xi)[..., None, None] * np.eye(n)


def map_F(y):
    """``F(y) = (y + e_n)/|y + e_n|^2 - e_n``; an involution of R^n minus ``-e_n``."""
    y = np.asarray(y, float)
    w = y.copy()
    w[..., -1] += 1.0
    s = np.einsum("...a,...a->...", w, w)
    if np.any(s < 1e-300):
        raise DomainError("F is undefined at -e_n")
    out = w / s[..., None]
    out[..., -1] -= 1.0
    return out


map_F_inv = map_F


def jacobian_F(y):
    y = np.asarray(y, float)
    n = y.shape[-1]
    w = y.copy()
    w[..., -1] += 1.0
    s = np.einsum("...a,...a->...", w, w)
    return (np.eye(n) - 2.0 * w[..., :, None] * w[..., None, :] / s[..., None, None]) / s[..., None, None]


def pullback_audit(kappa: float, y, tol: float = 1e-8) -> VerificationReport:
    """Compare ``DF^T g_H(F(y)) DF`` with ``U^(4/(n-2)) delta`` componentwise."""
    t0 = time.perf_counter()
    y = np.asarray(y, float)
    n = y.shape[-1]
    DF = jacobian_F(y)
    pulled = np.einsum("...ba,...bc,...cd->...ad", DF, ball_metric(kappa, map_F(y)), DF)
    U = eval_bubble(BubbleParams(kappa, 1.0, (), n), y, 1)[0]
    target = (U ** (4.0 / (n - 2)))[..., None, None] * np.eye(n)
    scale = np.max(np.abs(target), axis=(-1, -2), keepdims=True)
    err = float(np.max(np.abs(pulled - target) / scale))
    rep = VerificationReport(
        "pullback", anchor("pullback"),
        inputs={"kappa": kappa, "n": n, "points": int(y.size // n)},
        computed={"max_rel_error": err}, reference={"max_rel_error": 0.0},
        provenance="exact", tolerance=tol,
    ).set_verdict(err < tol)
    rep.runtime = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# hyperboloid


def _poincare(kappa, xi):
    r = r_kappa(kappa)
    p = math.sqrt(kappa) * np.asarray(xi, float)
    p = p.copy()
    p[..., -1] += math.sqrt(kappa)
    s = np.einsum("...a,...a->...", p, p)
    if np.any(s >= 1):
        raise DomainError("point outside the ball model")
    z = np.empty(p.shape[:-1] + (p.shape[-1] + 1,))
    z[..., 0] = r * (1 + s) / (1 - s)
    z[..., 1:] = 2 * r * p / (1 - s)[..., None]
    return z, p, s


def _boost(z, tau):
    out = z.copy()
    c, sh = math.cosh(tau), math.sinh(tau)
    out[..., 0] = c * z[..., 0] + sh * z[..., -1]
    out[..., -1] = sh * z[..., 0] + c * z[..., -1]
    return out


def _boost_matrix(n, tau):
    B = np.eye(n + 1)
    c, sh = math.cosh(tau), math.sinh(tau)
    B[0, 0] = B[n, n] = c
    B[0, n] = B[n, 0] = sh
    return B


def gamma_rapidity(kappa: float, normalization: str = "hyperbolic_center") -> float:
    """Boost rapidity used by :func:`ball_to_hyperboloid`.

    ``"hyperbolic_center"`` sends the hyperbolic center of the image of the
    half-space, a geodesic ball of radius ``r t0`` with ``tanh t0 = sqrt(kappa)``,
    to the base point, so that the image is exactly the ball of
    :class:`GeodesicBallSpec` with the ``auto`` rule. ``"euclidean_center"``
    sends the Euclidean center ``-e_n/2`` there instead.
    """
    if normalization == "hyperbolic_center":
        return -math.atanh(math.sqrt(kappa))
    if normalization == "euclidean_center":
        return -2.0 * math.atanh(0.5 * math.sqrt(kappa))
    raise ParameterError(f"unknown normalization {normalization!r}")


def ball_to_hyperboloid(kappa: float, xi, normalization: str = "hyperbolic_center"):
    """The isometry from the ball model onto the hyperboloid (``z_0`` first)."""
    z, _, _ = _poincare(kappa, xi)
    return _boost(z, gamma_rapidity(kappa, normalization))


def jacobian_ball_to_hyperboloid(kappa: float, xi, normalization: str = "hyperbolic_center"):
    """``d z / d xi`` with shape ``(..., n+1, n)``."""
    xi = np.asarray(xi, float)
    n = xi.shape[-1]
    r = r_kappa(kappa)
    _, p, s = _poincare(kappa, xi)
    d = 1.0 - s
    J = np.empty(p.shape[:-1] + (n + 1, n))
    J[..., 0, :] = 4 * r * p / (d**2)[..., None]
    J[..., 1:, :] = 2 * r * (np.eye(n) / d[..., None, None]
                             + 2 * p[..., :, None] * p[..., None, :] / (d**2)[..., None, None])
    J *= math.sqrt(kappa)
    B = _boost_matrix(n, gamma_rapidity(kappa, normalization))
    return np.einsum("ij,...jk->...ik", B, J)


def map_F_kappa(kappa: float, y, normalization: str = "hyperbolic_center"):
    return ball_to_hyperboloid(kappa, map_F(y), normalization)


def hyperboloid_isometry_audit(kappa: float, xi, tol: float = 1e-8) -> VerificationReport:
    """Constraint and metric-pullback residuals of :func:`ball_to_hyperboloid`."""
    xi = np.asarray(xi, float)
    n = xi.shape[-1]
    r = r_kappa(kappa)
    z = ball_to_hyperboloid(kappa, xi)
    constraint = float(np.max(np.abs(minkowski(z, z) + r * r)) / (r * r))
    J = jacobian_ball_to_hyperboloid(kappa, xi)
    eta = np.diag([-1.0] + [1.0] * n)
    pulled = np.einsum("...ia,ij,...jb->...ab", J, eta, J)
    target = ball_metric(kappa, xi)
    iso = float(np.max(np.abs(pulled - target) / np.max(np.abs(target), axis=(-1, -2), keepdims=True)))
    center = ball_to_hyperboloid(kappa, hyperbolic_center_of_image(kappa, n))
    rep = VerificationReport(
        "hyperboloid_isometry", anchor("hyperboloid_isometry"),
        inputs={"kappa": kappa, "n": n, "points": int(xi.size // n)},
        computed={"constraint": constraint, "isometry": iso, "center_image": center},
        reference={"constraint": 0.0, "isometry": 0.0, "center_image": [r] + [0.0] * n},
        provenance="exact", tolerance=tol,
    ).set_verdict(constraint < 1e-12 and iso < tol and np.allclose(center, [r] + [0.0] * n, atol=1e-10 * r))
    return rep


def hyperbolic_center_of_image(kappa: float, n: int = 3):
    """Ball-model point at the hyperbolic center of ``F(half-space)``."""
    # on the axis p = sqrt(kappa)(xi + e_n) = tanh(t0/2) e_n with tanh t0 = sqrt(kappa)
    th = math.tanh(0.5 * math.atanh(math.sqrt(kappa)))
    xi = np.zeros(n)
    xi[-1] = th / math.sqrt(kappa) - 1.0
    return xi


# ---------------------------------------------------------------------------
# conormal and coordinate eigenfunctions


def conormal(spec: GeodesicBallSpec, z, tol: float = 1e-9):
    """Inward unit co-normal on the boundary sphere of the geodesic ball."""
    z = np.asarray(z, float)
    r = spec.r
    cz = r * math.cosh(spec.t0)
    if np.any(np.abs(z[..., 0] - cz) > tol * cz):
        raise PreconditionError("point is not on the boundary of the geodesic ball")
    rr = np.linalg.norm(z[..., 1:], axis=-1)
    nu = np.empty_like(z)
    nu[..., 0] = -rr / r
    nu[..., 1:] = -(z[..., 0] / rr)[..., None] * z[..., 1:] / r
    return nu


def graph_metric(kappa: float, n: int = 3) -> MetricField:
    """Hyperboloid metric in the chart ``x -> (sqrt(r^2 + |x|^2), x)``."""
    R2 = r_kappa(kappa) ** 2
    eye = np.eye(n)

    def g(x):
        x = np.asarray(x, float)
        S = R2 + np.einsum("...a,...a->...", x, x)
        return eye - x[..., :, None] * x[..., None, :] / S[..., None, None]

    def dg(x):
        x = np.asarray(x, float)
        S = (R2 + np.einsum("...a,...a->...", x, x))[..., None, None, None]
        xa = x[..., :, None, None]
        xb = x[..., None, :, None]
        xc = x[..., None, None, :]
        return -(eye[:, None, :] * xb + xa * eye[None, :, :]) / S + 2 * xa * xb * xc / S**2

    def d2g(x):
        x = np.asarray(x, float)
        S = (R2 + np.einsum("...a,...a->...", x, x))[..., None, None, None, None]
        e = eye
        xa = x[..., :, None, None, None]
        xb = x[..., None, :, None, None]
        xc = x[..., None, None, :, None]
        xd = x[..., None, None, None, :]
        d_ac = e[:, None, :, None]
        d_bc = e[None, :, :, None]
        d_ad = e[:, None, None, :]
        d_bd = e[None, :, None, :]
        d_cd = e[None, None, :, :]
        return (-(d_ac * d_bd + d_ad * d_bc) / S
                + 2 * (d_ac * xb + xa * d_bc) * xd / S**2
                + 2 * (d_ad * xb * xc + xa * d_bd * xc + xa * xb * d_cd) / S**2
                - 8 * xa * xb * xc * xd / S**3)

    return MetricField(n, g, dg, d2g, name="hyperboloid_graph")


def ambient_function(kappa: float, which, n: int = 3) -> ScalarField:
    """Restriction of an ambient function to the graph chart.

    ``which`` is ``0`` for ``z_0``, ``a`` in ``1..n`` for ``z_a`` or a
    pair ``(a, b)`` for ``z_a z_b``.
    """
    R2 = r_kappa(kappa) ** 2
    if isinstance(which, tuple):
        a, b = which
        return ambient_function(kappa, a, n) * ambient_function(kappa, b, n)
    if which == 0:
        def val(x):
            return np.sqrt(R2 + np.einsum("...a,...a->...", x, x))

        def grad(x):
            return np.asarray(x, float) / val(x)[..., None]

        def hess(x):
            x = np.asarray(x, float)
            z0 = val(x)[..., None, None]
            return (np.eye(n) - x[..., :, None] * x[..., None, :] / z0**2) / z0

        return ScalarField(n, val, grad, hess)
    a = int(which)
    if not 1 <= a <= n:
        raise ParameterError("coordinate index out of range")
    e = np.eye(n)[a - 1]
    return ScalarField(n, lambda x: np.asarray(x, float)[..., a - 1], lambda x: np.broadcast_to(e, np.shape(x)).copy(),
                       lambda x: np.zeros(np.shape(x) + (n,)))


def coordinate_eigenfunction_residual(spec: GeodesicBallSpec, which, z_interior=None, z_boundary=None,
                                      boundary_coefficient: float | None = None):
    """Residuals of ``Delta f - n r^-2 f`` and ``df/dnu + c f`` for an ambient function.

    ``z_interior`` and ``z_boundary`` are hyperboloid points; ``c``
    defaults to ``coth(t0)/r``. Returns ``(interior, boundary)`` arrays of
    relative residuals (absolute values divided by the term scale).
    """
    n = spec.n
    r = spec.r
    f = ambient_function(spec.kappa, which, n)
    gH = graph_metric(spec.kappa, n)
    out_i = out_b = None
    if z_interior is not None:
        x = np.asarray(z_interior, float)[..., 1:]
        lap = laplace_beltrami(gH, f, x)
        zero = n / r**2 * f.value(x)
        out_i = np.abs(lap - zero) / (np.abs(lap) + np.abs(zero) + 1e-300)
    if z_boundary is not None:
        zb = np.asarray(z_boundary, float)
        c = spec.robin_coefficient if boundary_coefficient is None else boundary_coefficient
        nu = conormal(spec, zb)
        x = zb[..., 1:]
        # ambient gradient of f in tangent directions: push forward via the chart
        dfdnu = np.einsum("...a,...a->...", f.grad(x), nu[..., 1:])
        term = c * f.value(x)
        out_b = np.abs(dfdnu + term) / (np.abs(dfdnu) + np.abs(term) + 1e-300)
    return out_i, out_b


def sample_ball(spec: GeodesicBallSpec, m: int, rng, boundary: bool = False):
    """Uniform-direction samples inside (or on the boundary of) the geodesic ball."""
    n = spec.n
    d = rng.normal(size=(m, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = spec.boundary_radius * (np.ones(m) if boundary else rng.random(m) ** (1.0 / n))
    x = d * rad[:, None]
    z0 = np.sqrt(spec.r**2 + np.einsum("ij,ij->i", x, x))
    if boundary:
        z0 = np.full(m, spec.r * math.cosh(spec.t0))
    return np.concatenate([z0[:, None], x], axis=1)


def discrete_ball_eigenproblem(spec: GeodesicBallSpec, nr: int = 24, nt: int = 24, coef_scale: float = 1.0,
                               modes=(0, 1, 2), k: int = 4, safety: float = 3.0):
    """Discrete near-null census of ``Delta f - 4 n kappa f = 0``, ``df/dnu + 2 f = 0`` on the ball.

    The geodesic ball is the Euclidean ball of radius ``r sinh t0`` in the
    graph chart, whose metric is rotation invariant, so the census runs by
    azimuthal modes (three dimensions only). The weight is the hyperbolic
    volume. The expected kernel is ``span{z_1, ..., z_n}``; the threshold
    is calibrated on the coordinate functions in the unperturbed problem;
    when ``t0`` breaks the compatibility rule the coordinate functions are
    no solutions, and the threshold is taken from the compatible ball at
    the same resolution. Returns ``(census, boundary_defect)`` where ``boundary_defect`` is
    ``|coth(t0)/r - 2|``, the mismatch between the ball's natural
    coefficient and the prescribed one.
    """
    from .grid import Robin, RobinProblem, ball_grid, mode_census

    if spec.n != 3:
        raise ParameterError("the discrete eigenproblem is implemented for n = 3")
    n = spec.n
    gH = graph_metric(spec.kappa, n)
    grid = ball_grid(spec.boundary_radius, nr, nt, 4 * nt)
    c0 = -4.0 * n * spec.kappa

    def problem(scale):
        return lambda m: RobinProblem(c=c0 * scale, flat=Robin(0.0), outer=Robin(2.0, 0.0), metric=gH.g)

    funcs = {f"z{a}": (lambda y, a=a: y[..., a - 1]) for a in range(1, n + 1)}
    defect = abs(spec.robin_coefficient - 2.0)
    thr = None
    if defect > 1e-9:
        ref, _ = discrete_ball_eigenproblem(GeodesicBallSpec(spec.kappa, "auto", n), nr, nt, 1.0, modes, k, safety)
        thr = ref.threshold
    census = mode_census(grid, problem(coef_scale), funcs, modes, k,
                         reference_for_mode=problem(1.0), safety=safety, threshold=thr)
    return census, defect
