"""Exact model solutions on the half-space and their residual evaluators.

The bubble family::

    U(y) = (eps / (|ybar - c|^2 + (y_n + eps)^2 - eps^2 kappa))^((n-2)/2)

solves ``Delta U = n(n-2) kappa U^((n+2)/(n-2))`` in the half-space and
``d_n U = -(n-2) U^(n/(n-2))`` on its boundary, for every ``kappa`` in
``[0, 1)``. All derivatives here are closed forms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParameterError
from .geometry import ScalarField


@dataclass(frozen=True)
class BubbleParams:
    kappa: float
    eps: float = 1.0
    center: tuple = ()
    n: int = 3

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError("dimension must be at least 3")
        if not (0.0 <= self.kappa < 1.0):
            raise ParameterError(f"kappa must lie in [0, 1), got {self.kappa}")
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        c = tuple(float(x) for x in self.center) if len(self.center) else (0.0,) * (self.n - 1)
        if len(c) != self.n - 1:
            raise ParameterError("center must have n-1 components")
        object.__setattr__(self, "center", c)

    @property
    def lam(self) -> float:
        return 1.0 - self.kappa

    @property
    def q(self) -> float:
        return 0.5 * (self.n - 2)

    def to_json(self) -> str:
        return json.dumps({"kappa": self.kappa, "eps": self.eps, "center": list(self.center), "n": self.n})

    @classmethod
    def from_json(cls, text: str | dict) -> "BubbleParams":
        d = json.loads(text) if isinstance(text, str) else text
        n = int(d.get("n", 3))
        return cls(float(d["kappa"]), float(d.get("eps", 1.0)), tuple(d.get("center", [0.0] * (n - 1))), n)


@dataclass(frozen=True)
class HorosphereParams:
    eps: float = 1.0
    n: int = 3

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("eps must be positive")


class Residual(NamedTuple):
    interior: np.ndarray
    boundary: np.ndarray
    interior_scale: np.ndarray
    boundary_scale: np.ndarray

    @property
    def interior_rel(self):
        return np.abs(self.interior) / self.interior_scale

    @property
    def boundary_rel(self):
        return np.abs(self.boundary) / self.boundary_scale

    @property
    def max_rel(self) -> float:
        return float(max(np.max(self.interior_rel, initial=0.0), np.max(self.boundary_rel, initial=0.0)))


def _check_points(y, n):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != n:
        raise ParameterError(f"points must have last axis of length {n}")
    if np.any(y[..., -1] < 0):
        raise DomainError("point outside the closed half-space")
    return y


def _offset(p: BubbleParams, y):
    w = np.array(y, dtype=float, copy=True)
    w[..., :-1] -= np.asarray(p.center)
    w[..., -1] += p.eps
    return w


# ---------------------------------------------------------------------------
# bubble


def _radial_coeffs(p: BubbleParams, y):
    """Return (w, U, f', f'', f''') for U = f(D), D = |w|^2 - eps^2 kappa."""
    w = _offset(p, y)
    D = np.einsum("...a,...a->...", w, w) - p.eps**2 * p.kappa
    q = p.q
    U = (p.eps / D) ** q
    f1 = -q * U / D
    f2 = q * (q + 1) * U / D**2
    f3 = -q * (q + 1) * (q + 2) * U / D**3
    return w, U, f1, f2, f3


def eval_bubble(p: BubbleParams, y, order: int = 2):
    """Value, gradient and Hessian of the bubble at ``y`` (shape ``(..., n)``)."""
    y = _check_points(y, p.n)
    w, U, f1, f2, _ = _radial_coeffs(p, y)
    grad = 2.0 * f1[..., None] * w
    if order < 2:
        return U, grad
    hess = 4.0 * f2[..., None, None] * w[..., :, None] * w[..., None, :] + 2.0 * f1[..., None, None] * np.eye(p.n)
    return U, grad, hess


def bubble_third(p: BubbleParams, y):
    """Third derivatives ``T[..., a, b, c] = d_a d_b d_c U``."""
    y = _check_points(y, p.n)
    w, _, _, f2, f3 = _radial_coeffs(p, y)
    eye = np.eye(p.n)
    T = 8.0 * f3[..., None, None, None] * w[..., :, None, None] * w[..., None, :, None] * w[..., None, None, :]
    T += 4.0 * f2[..., None, None, None] * (
        eye[:, None, :] * w[..., None, :, None]
        + eye[None, :, :] * w[..., :, None, None]
        + eye[:, :, None] * w[..., None, None, :]
    )
    return T


def bubble_field(p: BubbleParams) -> ScalarField:
    return ScalarField(
        p.n,
        lambda y: eval_bubble(p, y, 1)[0],
        lambda y: eval_bubble(p, y, 1)[1],
        lambda y: eval_bubble(p, y)[2],
    )


def residual_system(p: BubbleParams, y, K: float | None = None, c: float | None = None) -> Residual:
    """Residuals of the half-space system for the bubble.

    The interior residual ``Delta U + K U^((n+2)/(n-2))`` is evaluated at
    ``y``; the boundary residual ``d_n U + c U^(n/(n-2))`` at the boundary
    projection ``(ybar, 0)``. Defaults ``K = -n(n-2) kappa`` and
    ``c = n - 2``. Scales are sums of absolute values of the terms, so
    the relative residual is well defined also when ``kappa = 0``.
    """
    n = p.n
    K = -n * (n - 2) * p.kappa if K is None else K
    c = (n - 2) if c is None else c
    y = _check_points(y, n)
    U, g, H = eval_bubble(p, y)
    diag = np.einsum("...aa->...a", H)
    nl = K * U ** ((n + 2) / (n - 2))
    res_i = diag.sum(-1) + nl
    sc_i = np.abs(diag).sum(-1) + np.abs(nl) + 1e-300
    yb = y.copy()
    yb[..., -1] = 0.0
    Ub, gb = eval_bubble(p, yb, 1)
    nlb = c * Ub ** (n / (n - 2))
    res_b = gb[..., -1] + nlb
    sc_b = np.abs(gb[..., -1]) + np.abs(nlb) + 1e-300
    return Residual(res_i, res_b, sc_i, sc_b)


# ---------------------------------------------------------------------------
# horosphere family (kappa = 1)


def eval_horosphere(p: HorosphereParams, y, reading: str = "normal"):
    """``(2 y_k + eps)^((2-n)/2)`` with ``k = n`` (``reading="normal"``) or ``k = 1`` (``"first"``).

    Returns value, gradient and Hessian. Only the normal-coordinate
    reading satisfies the boundary equation; the other is kept so that
    its boundary defect can be displayed.
    """
    n = p.n
    y = np.asarray(y, dtype=float)
    k = {"normal": n - 1, "first": 0}[reading]
    base = 2.0 * y[..., k] + p.eps
    if np.any(base <= 0):
        raise DomainError("horosphere base must be positive")
    q = 0.5 * (n - 2)
    W = base ** (-q)
    grad = np.zeros(y.shape)
    grad[..., k] = -2.0 * q * base ** (-q - 1)
    hess = np.zeros(y.shape + (n,))
    hess[..., k, k] = 4.0 * q * (q + 1) * base ** (-q - 2)
    return W, grad, hess


def residual_horosphere(p: HorosphereParams, y, reading: str = "normal") -> Residual:
    n = p.n
    y = np.asarray(y, dtype=float)
    W, _, H = eval_horosphere(p, y, reading)
    lap = np.einsum("...aa->...", H)
    nl = n * (n - 2) * W ** ((n + 2) / (n - 2))
    yb = y.copy()
    yb[..., -1] = 0.0
    Wb, gb, _ = eval_horosphere(p, yb, reading)
    nlb = (n - 2) * Wb ** (n / (n - 2))
    return Residual(lap - nl, gb[..., -1] + nlb, np.abs(lap) + np.abs(nl) + 1e-300,
                    np.abs(gb[..., -1]) + np.abs(nlb) + 1e-300)


# ---------------------------------------------------------------------------
# linearized kernel


def _jacobi_all(p: BubbleParams, a: int, y):
    n = p.n
    if not 1 <= a <= n:
        raise ParameterError(f"Jacobi index must be in 1..{n}, got {a}")
    y = _check_points(y, n)
    U, g, H = eval_bubble(p, y)
    T = bubble_third(p, y)
    if a < n:
        j = a - 1
        return g[..., j], H[..., j, :], T[..., j, :, :]
    x = y.copy()
    x[..., :-1] -= np.asarray(p.center)
    q = p.q
    val = q * U + np.einsum("...b,...b->...", x, g)
    grad = (q + 1) * g + np.einsum("...c,...cb->...b", x, H)
    hess = (q + 2) * H + np.einsum("...c,...cbd->...bd", x, T)
    return val, grad, hess


def eval_jacobi_field(a: int, kappa: float | BubbleParams, y, n: int | None = None):
    """Kernel field ``J_a`` of the linearized problem at ``y``.

    ``J_j = d_j U`` for ``j < n`` and ``J_n = (n-2)/2 U + y . grad U``.
    ``kappa`` may be a float (canonical bubble, eps=1) or full params.
    """
    p = kappa if isinstance(kappa, BubbleParams) else BubbleParams(float(kappa), 1.0, (), n or np.shape(y)[-1])
    return _jacobi_all(p, a, y)[0]


def jacobi_field(a: int, p: BubbleParams) -> ScalarField:
    return ScalarField(
        p.n,
        lambda y: _jacobi_all(p, a, y)[0],
        lambda y: _jacobi_all(p, a, y)[1],
        lambda y: _jacobi_all(p, a, y)[2],
    )


def linearized_residual(psi: ScalarField, p: BubbleParams | float, y) -> Residual:
    """Residuals of ``Delta psi - n(n+2) kappa U^(4/(n-2)) psi`` and ``d_n psi + n U^(2/(n-2)) psi``."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    p = p if isinstance(p, BubbleParams) else BubbleParams(float(p), 1.0, (), n)
    U = eval_bubble(p, y, 1)[0]
    H = psi.hess(y)
    diag = np.einsum("...aa->...a", H)
    zeroth = n * (n + 2) * p.kappa * U ** (4.0 / (n - 2)) * psi.value(y)
    yb = y.copy()
    yb[..., -1] = 0.0
    Ub = eval_bubble(p, yb, 1)[0]
    dn = psi.grad(yb)[..., -1]
    rob = n * Ub ** (2.0 / (n - 2)) * psi.value(yb)
    return Residual(diag.sum(-1) - zeroth, dn + rob, np.abs(diag).sum(-1) + np.abs(zeroth) + 1e-300,
                    np.abs(dn) + np.abs(rob) + 1e-300)


# ---------------------------------------------------------------------------
# exact solutions on a warped chart


@dataclass
class WarpedBubble:
    """Exact solution of the system on ``dt^2 + a(t)^2 |dx|^2``.

    With ``s(t) = int_0^t a^-1`` the metric equals ``a^2 (ds^2 + |dx|^2)``,
    so ``u(x, t) = a(t)^(-(n-2)/2) U(x, s(t))`` solves
    ``L_g u - n(n-2) kappa u^((n+2)/(n-2)) = 0`` and
    ``B_g u + (n-2) u^(n/(n-2)) = 0``.
    """

    p: BubbleParams
    b1: float = 0.0
    b2: float = 0.0
    nodes: int = 40
    _gl: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self._gl = np.polynomial.legendre.leggauss(self.nodes)

    def a(self, t):
        return 1.0 + self.b1 * t + self.b2 * t * t

    def s(self, t):
        t = np.asarray(t, float)
        x, w = self._gl
        tt = 0.5 * t[..., None] * (x + 1.0)
        return 0.5 * t * np.sum(w / self.a(tt), axis=-1)

    def _all(self, z):
        z = np.asarray(z, float)
        n, q = self.p.n, self.p.q
        t = z[..., -1]
        a = self.a(t)
        if np.any(a <= 0):
            raise DomainError("warping function must stay positive")
        a1 = self.b1 + 2 * self.b2 * t
        a2 = 2 * self.b2
        s1 = 1.0 / a
        s2 = -a1 / a**2
        A = a ** (-q)
        A1 = -q * a ** (-q - 1) * a1
        A2 = q * (q + 1) * a ** (-q - 2) * a1**2 - q * a ** (-q - 1) * a2
        zs = z.copy()
        zs[..., -1] = self.s(t)
        U, g, H = eval_bubble(self.p, zs)
        val = A * U
        grad = np.empty_like(g)
        grad[..., :-1] = A[..., None] * g[..., :-1]
        grad[..., -1] = A1 * U + A * g[..., -1] * s1
        hess = np.empty_like(H)
        hess[..., :-1, :-1] = A[..., None, None] * H[..., :-1, :-1]
        cross = A1[..., None] * g[..., :-1] + (A * s1)[..., None] * H[..., :-1, -1]
        hess[..., :-1, -1] = cross
        hess[..., -1, :-1] = cross
        hess[..., -1, -1] = A2 * U + 2 * A1 * g[..., -1] * s1 + A * (H[..., -1, -1] * s1**2 + g[..., -1] * s2)
        return val, grad, hess

    def field(self) -> ScalarField:
        return ScalarField(self.p.n, lambda z: self._all(z)[0], lambda z: self._all(z)[1],
                           lambda z: self._all(z)[2])
