"""Product quadrature on hemispheres, disks, circles and half-balls.

Points are in ``R^n`` with the normal coordinate last; the boundary of
the half-space is ``{z_n = 0}``. Angular rules are Gauss-Legendre in the
polar angles (weighted by the spherical Jacobian) and uniform in the
azimuth with an even node count, so odd harmonics and the ``cos 2 phi``
family cancel to round-off. ``m`` is the number of nodes per dimension;
error estimates compare ``m`` with ``2m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    m: int

    def integrate(self, f):
        """``sum w_i f(x_i)``; ``f`` maps ``(N, n)`` points to ``(N,)`` values."""
        vals = np.asarray(f(self.nodes), float)
        return float(np.dot(self.weights, vals))


@lru_cache(maxsize=None)
def _gl(m: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * (x + 1.0) + a, 0.5 * (b - a) * w


@lru_cache(maxsize=None)
def _sphere(k: int, m: int):
    """Unit sphere ``S^k`` in ``R^(k+1)``: directions and weights."""
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if k == 1:
        M = 4 * max(1, (m + 1) // 2)
        p = 2 * np.pi * np.arange(M) / M
        return np.stack([np.cos(p), np.sin(p)], -1), np.full(M, 2 * np.pi / M)
    th, wt = _gl(m, 0.0, np.pi)
    d, wd = _sphere(k - 1, m)
    dirs = np.concatenate([np.sin(th)[:, None, None] * d[None, :, :],
                           np.broadcast_to(np.cos(th)[:, None, None], (m, len(d), 1))], -1)
    w = (wt * np.sin(th) ** (k - 1))[:, None] * wd[None, :]
    return dirs.reshape(-1, k + 1), w.ravel()


def _check(n, rho, m):
    if n < 2:
        raise ParameterError("dimension must be at least 2")
    if rho <= 0:
        raise ParameterError("radius must be positive")
    if m < 2:
        raise ParameterError("need at least two nodes per dimension")


def hemisphere_rule(rho: float, n: int = 3, m: int = 24, center=None) -> QuadratureRule:
    """``S^+_rho = {|z| = rho, z_n > 0}``."""
    _check(n, rho, m)
    th, wt = _gl(m, 0.0, np.pi / 2)
    d, wd = _sphere(n - 2, m)
    dirs = np.concatenate([np.sin(th)[:, None, None] * d[None, :, :],
                           np.broadcast_to(np.cos(th)[:, None, None], (m, len(d), 1))], -1).reshape(-1, n)
    w = ((wt * np.sin(th) ** (n - 2))[:, None] * wd[None, :]).ravel() * rho ** (n - 1)
    return QuadratureRule(_shift(rho * dirs, center), w, "hemisphere", m)


def circle_rule(rho: float, n: int = 3, m: int = 24, center=None) -> QuadratureRule:
    """``dD_rho = {|z| = rho, z_n = 0}`` (a sphere of dimension ``n - 2``)."""
    _check(n, rho, m)
    d, wd = _sphere(n - 2, m)
    x = np.concatenate([rho * d, np.zeros((len(d), 1))], -1)
    return QuadratureRule(_shift(x, center), wd * rho ** (n - 2), "circle", m)


def disk_rule(rho: float, n: int = 3, m: int = 24, center=None) -> QuadratureRule:
    """``D_rho = {|z| < rho, z_n = 0}``."""
    _check(n, rho, m)
    r, wr = _gl(m, 0.0, rho)
    d, wd = _sphere(n - 2, m)
    x = r[:, None, None] * d[None, :, :]
    x = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], -1).reshape(-1, n)
    w = ((wr * r ** (n - 2))[:, None] * wd[None, :]).ravel()
    return QuadratureRule(_shift(x, center), w, "disk", m)


def half_ball_rule(rho: float, n: int = 3, m: int = 24, center=None) -> QuadratureRule:
    """``B^+_rho = {|z| < rho, z_n > 0}``."""
    _check(n, rho, m)
    r, wr = _gl(m, 0.0, rho)
    hs = hemisphere_rule(1.0, n, m)
    x = (r[:, None, None] * hs.nodes[None, :, :]).reshape(-1, n)
    w = ((wr * r ** (n - 1))[:, None] * hs.weights[None, :]).ravel()
    return QuadratureRule(_shift(x, center), w, "half_ball", m)


def _shift(x, center):
    return x if center is None else x + np.asarray(center, float)


RULES = {"hemisphere": hemisphere_rule, "circle": circle_rule, "disk": disk_rule, "half_ball": half_ball_rule}


def integrate(kind: str, f, rho: float, n: int = 3, m: int = 24):
    """Integral of ``f`` over the named region with an order-doubling error estimate.

    Returns ``(value, error)`` where ``value`` uses ``2m`` nodes per
    dimension and ``error`` is its difference from the ``m``-node value.
    """
    rule = RULES[kind]
    coarse = rule(rho, n, m).integrate(f)
    fine = rule(rho, n, 2 * m).integrate(f)
    return fine, abs(fine - coarse)


def sphere_area(n: int) -> float:
    """``|S^(n-1)|``."""
    from math import gamma, pi

    return 2 * pi ** (n / 2) / gamma(n / 2)
