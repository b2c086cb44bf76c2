"""Ready-made metrics with closed-form structure."""
import numpy as np
from scipy.optimize import brentq

from .atlas import FlatAtlas, SphereAtlas
from .errors import NavigationTooFast, NotPositiveDefinite
from .geometry import FinslerMetric


class EuclideanMetric(FinslerMetric):
    reversible = True
    is_flat = True
    has_analytic_g = True
    has_analytic_dg = True

    def __init__(self, dim=2, scale=1.0):
        super().__init__(FlatAtlas(dim), {"m": dim} if scale == 1.0 else {"m": dim, "scale": scale})
        self.scale = float(scale)
        self.name = "euclidean"

    def F(self, x, y, chart=0):
        return self.scale * np.linalg.norm(np.asarray(y, dtype=float), axis=-1)

    def g(self, x, y, chart=0):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.scale**2 * np.eye(self.dim), y.shape + (self.dim,)).copy()

    def dg(self, x, y, chart=0):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1] + (self.dim,) * 3)

    def disc_bounds(self, x, chart=0):
        x = np.asarray(x, dtype=float)
        half = np.full(x.shape, 1.0 / self.scale)
        return -half, half

    def disc_centroid(self, x, chart=0):
        return np.zeros(np.shape(x))

    def disc_radius(self, x, center, directions, chart=0):
        return _ball_radius(np.eye(self.dim) * self.scale**2, center, directions)


def _ball_radius(h, center, directions):
    # positive root of h(c + rho u, c + rho u) = 1
    a = np.einsum("...ij,...i,...j->...", h, directions, directions)
    b = np.einsum("...ij,...i,...j->...", h, directions, center)
    c = np.einsum("...ij,...i,...j->...", h, center, center) - 1.0
    return (-b + np.sqrt(b * b - a * c)) / a


class RiemannianMetric(FinslerMetric):
    """``F = sqrt(h(y, y))`` for a field of symmetric positive definite matrices.

    ``h(x, chart)`` returns ``(..., m, m)``; ``dh(x, chart)`` (optional)
    returns ``(..., s, m, m)``.
    """

    reversible = True
    has_analytic_g = True

    def __init__(self, h, atlas, dh=None, name="riemannian", params=None):
        super().__init__(atlas, params)
        self._h = h
        self._dh = dh
        self.name = name
        self.has_analytic_dg = dh is not None

    def h(self, x, chart=0):
        return self._h(np.asarray(x, dtype=float), chart)

    def F(self, x, y, chart=0):
        y = np.asarray(y, dtype=float)
        return np.sqrt(np.einsum("...ij,...i,...j->...", self.h(x, chart), y, y))

    def g(self, x, y, chart=0):
        h = self.h(x, chart)
        return np.broadcast_to(h, np.shape(y)[:-1] + h.shape[-2:]).copy()

    def dg(self, x, y, chart=0):
        dh = self._dh(np.asarray(x, dtype=float), chart)
        return np.broadcast_to(dh, np.shape(y)[:-1] + dh.shape[-3:]).copy()

    def check(self, x, chart=0):
        eig = np.linalg.eigvalsh(self.h(x, chart))
        if np.any(eig[..., 0] <= 0):
            raise NotPositiveDefinite("Riemannian field is not positive definite")

    def disc_bounds(self, x, chart=0):
        hinv = np.linalg.inv(self.h(x, chart))
        half = np.sqrt(np.diagonal(hinv, axis1=-2, axis2=-1))
        return -half, half

    def disc_centroid(self, x, chart=0):
        return np.zeros(np.shape(x))

    def disc_radius(self, x, center, directions, chart=0):
        return _ball_radius(self.h(x, chart), center, directions)


class ZermeloMetric(FinslerMetric):
    """Navigation metric of a Riemannian field ``h`` and a wind ``W``.

    ``F(x, y)`` is the ``s > 0`` with ``h(y/s - W, y/s - W) = 1``. The unit
    disc is the ``h``-unit ball translated by ``W``. The fundamental tensor
    comes from the equivalent Randers form ``alpha + beta``.
    """

    has_analytic_g = True

    def __init__(self, h, wind, atlas, name="zermelo", params=None, speed_margin=1e-9):
        super().__init__(atlas, params)
        self._h = h
        self._wind = wind
        self.name = name
        self.speed_margin = speed_margin

    def h(self, x, chart=0):
        return self._h(np.asarray(x, dtype=float), chart)

    def wind(self, x, chart=0):
        return self._wind(np.asarray(x, dtype=float), chart)

    def _parts(self, x, chart):
        h = self.h(x, chart)
        w = self.wind(x, chart)
        w_low = np.einsum("...ij,...j->...i", h, w)
        lam = 1.0 - np.einsum("...i,...i->...", w_low, w)
        if np.any(lam <= self.speed_margin):
            raise NavigationTooFast(f"h(W, W) = {1 - lam.min():.6g} is not below 1")
        return h, w, w_low, lam

    def F(self, x, y, chart=0):
        y = np.asarray(y, dtype=float)
        h, _, w_low, lam = self._parts(x, chart)
        hyy = np.einsum("...ij,...i,...j->...", h, y, y)
        hwy = np.einsum("...i,...i->...", w_low, y)
        return (np.sqrt(lam * hyy + hwy**2) - hwy) / lam

    def randers(self, x, chart=0):
        """Randers data ``(a_ij, b_i)`` with ``F = sqrt(a(y, y)) + b(y)``."""
        h, _, w_low, lam = self._parts(x, chart)
        lam = lam[..., None]
        a = h / lam[..., None] + np.einsum("...i,...j->...ij", w_low, w_low) / (lam[..., None] ** 2)
        b = -w_low / lam
        return a, b

    def g(self, x, y, chart=0):
        y = np.asarray(y, dtype=float)
        a, b = self.randers(x, chart)
        a = np.broadcast_to(a, y.shape[:-1] + a.shape[-2:])
        b = np.broadcast_to(b, y.shape)
        ay = np.einsum("...ij,...j->...i", a, y)
        alpha = np.sqrt(np.einsum("...i,...i->...", ay, y))
        beta = np.einsum("...i,...i->...", b, y)
        ell = ay / alpha[..., None]
        ratio = ((alpha + beta) / alpha)[..., None, None]
        lb = ell + b
        return ratio * (a - np.einsum("...i,...j->...ij", ell, ell)) + np.einsum("...i,...j->...ij", lb, lb)

    def disc_bounds(self, x, chart=0):
        w = self.wind(x, chart)
        half = np.sqrt(np.diagonal(np.linalg.inv(self.h(x, chart)), axis1=-2, axis2=-1))
        return w - half, w + half

    def disc_centroid(self, x, chart=0):
        return np.array(self.wind(x, chart), dtype=float)

    def disc_radius(self, x, center, directions, chart=0):
        return _ball_radius(self.h(x, chart), np.asarray(center) - self.wind(x, chart), directions)


def zermelo_root_solve(metric, x, y, chart=0):
    """Reference value of a Zermelo ``F`` by bracketing root search; scalar inputs only."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    h = metric.h(x, chart)
    w = metric.wind(x, chart)

    def residual(s):
        v = y / s - w
        return v @ h @ v - 1.0

    lo, hi = 1e-12, 1.0
    while residual(hi) > 0:
        hi *= 2.0
    while residual(lo) < 0:
        lo *= 0.5
    return brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def euclidean(m=2, scale=1.0):
    return EuclideanMetric(m, scale)


def riemannian(h, atlas, dh=None, name="riemannian"):
    metric = RiemannianMetric(h, atlas, dh=dh, name=name)
    return metric


def _round_h(x, chart=0):
    x = np.asarray(x, dtype=float)
    c2 = np.cos(x[..., 1]) ** 2
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 0] = c2
    out[..., 1, 1] = 1.0
    return out


def _round_dh(x, chart=0):
    x = np.asarray(x, dtype=float)
    th = x[..., 1]
    out = np.zeros(x.shape[:-1] + (2, 2, 2))
    out[..., 1, 0, 0] = -2.0 * np.sin(th) * np.cos(th)
    return out


def round_sphere(atlas=None):
    """Unit round sphere, ``cos^2(theta) dpsi^2 + dtheta^2`` in both charts."""
    metric = RiemannianMetric(_round_h, atlas or SphereAtlas(), dh=_round_dh, name="sphere")
    return metric


def zermelo(h, wind, atlas, name="zermelo", params=None):
    return ZermeloMetric(h, wind, atlas, name=name, params=params)


def rotation_wind(atlas, r):
    """Chart components of ``r`` times the rotation field about the z-axis."""

    def wind(x, chart=0):
        x = np.asarray(x, dtype=float)
        chart = np.broadcast_to(np.asarray(chart), x.shape[:-1])
        out = np.zeros(x.shape)
        out[..., 0] = r
        other = chart != 0
        if np.any(other):
            xs = x[other]
            p = atlas.embed(chart[other], xs)
            amb = r * np.stack([-p[..., 1], p[..., 0], np.zeros_like(p[..., 0])], axis=-1)
            out[other] = atlas.ambient_to_tangent(chart[other], xs, amb)
        return out

    return wind


def katok(r, atlas=None):
    """Katok metric: round sphere navigated by the wind ``r d/dpsi``."""
    if not abs(r) < 1:
        raise NavigationTooFast("Katok parameter must satisfy |r| < 1")
    atlas = atlas or SphereAtlas()
    metric = ZermeloMetric(_round_h, rotation_wind(atlas, float(r)), atlas, name="katok", params={"r": float(r)})
    metric.reversible = r == 0
    metric.r = float(r)
    return metric


def constant_wind(wind, m=None):
    """Flat Zermelo metric: Euclidean ``h`` with a constant wind; geodesics are lines."""
    w = np.atleast_1d(np.asarray(wind, dtype=float))
    m = w.size if m is None else int(m)
    if w.size != m:
        raise ValueError(f"wind has {w.size} components, dimension is {m}")
    eye = np.eye(m)

    def h(x, chart=0):
        return np.broadcast_to(eye, np.shape(x)[:-1] + (m, m)).copy()

    def wind_field(x, chart=0):
        return np.broadcast_to(w, np.shape(x)).copy()

    metric = ZermeloMetric(h, wind_field, FlatAtlas(m), params={"wind": w.tolist()})
    metric.is_flat = True
    metric.reversible = not np.any(w)
    return metric


ZOO = {
    "euclidean": lambda m=2, scale=1.0: euclidean(int(m), float(scale)),
    "zermelo": lambda wind=(0.3, 0.0), m=None: constant_wind(wind, m),
    "sphere": lambda: round_sphere(),
    "katok": lambda r=0.5: katok(float(r)),
}


def by_name(name, **params):
    try:
        factory = ZOO[name]
    except KeyError:
        raise KeyError(f"unknown metric '{name}'; known: {', '.join(sorted(ZOO))}") from None
    return factory(**params)
