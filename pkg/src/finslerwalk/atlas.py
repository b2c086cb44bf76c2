"""Coordinate charts for the modeled manifolds.

Points are carried as ``(chart, x)`` pairs. All maps are vectorized: ``x``
has shape ``(..., m)`` and ``chart`` is an int or an int array broadcastable
against ``x[..., 0]``.
"""
import numpy as np

from .errors import NoCoveringChart


class ChartAtlas:
    dim = None
    n_charts = 1
    name = "atlas"

    def in_domain(self, chart, x, margin=0.0):
        raise NotImplementedError

    def needs_switch(self, chart, x):
        return np.zeros(np.shape(x)[:-1], dtype=bool)

    def change_chart(self, chart, x, target):
        raise NotImplementedError

    def push_vector(self, chart, x, v, target, x_target):
        raise NotImplementedError

    def transition(self, chart, x, v=None):
        """Re-express points that fail the switch policy.

        Returns ``(chart, x)`` or ``(chart, x, v)`` when tangent vectors are
        passed along. Points already acceptable are returned unchanged.
        """
        x = np.asarray(x, dtype=float)
        chart = np.broadcast_to(np.asarray(chart), x.shape[:-1]).copy()
        if not np.all(self.in_domain(chart, x)):
            raise NoCoveringChart(f"point outside every chart of {self.name}")
        if v is None:
            return chart, x
        return chart, x, np.asarray(v, dtype=float)

    def embed(self, chart, x):
        return np.asarray(x, dtype=float)

    def embedding_jacobian(self, chart, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def embedding_hessian(self, chart, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim, self.dim, self.dim))

    def chart_distance(self, chart_a, xa, chart_b, xb):
        """Euclidean distance between embedded points; used for continuity checks."""
        return np.linalg.norm(self.embed(chart_a, xa) - self.embed(chart_b, xb), axis=-1)


class FlatAtlas(ChartAtlas):
    """R^m with the identity chart."""

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        self.dim = int(dim)
        self.name = f"flat R^{dim}"

    def in_domain(self, chart, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1) & (np.asarray(chart) == 0)

    def transition(self, chart, x, v=None):
        x = np.asarray(x, dtype=float)
        if not np.all(self.in_domain(chart, x)):
            raise NoCoveringChart("non-finite coordinates")
        chart = np.zeros(x.shape[:-1], dtype=np.int64)
        return (chart, x) if v is None else (chart, x, np.asarray(v, dtype=float))

    def change_chart(self, chart, x, target):
        return np.asarray(x, dtype=float)

    def push_vector(self, chart, x, v, target, x_target):
        return np.asarray(v, dtype=float)


def _spherical(x):
    psi, th = x[..., 0], x[..., 1]
    c = np.cos(th)
    return np.stack([np.cos(psi) * c, np.sin(psi) * c, np.sin(th)], axis=-1)


def _spherical_inverse(p):
    return np.stack([np.arctan2(p[..., 1], p[..., 0]), np.arcsin(np.clip(p[..., 2], -1.0, 1.0))], axis=-1)


def _spherical_jacobian(x):
    psi, th = x[..., 0], x[..., 1]
    cp, sp, ct, st = np.cos(psi), np.sin(psi), np.cos(th), np.sin(th)
    d_psi = np.stack([-sp * ct, cp * ct, np.zeros_like(th)], axis=-1)
    d_th = np.stack([-cp * st, -sp * st, ct], axis=-1)
    return np.stack([d_psi, d_th], axis=-1)


def _spherical_hessian(x):
    psi, th = x[..., 0], x[..., 1]
    cp, sp, ct, st = np.cos(psi), np.sin(psi), np.cos(th), np.sin(th)
    z = np.zeros_like(th)
    pp = np.stack([-cp * ct, -sp * ct, z], axis=-1)
    pt = np.stack([sp * st, -cp * st, z], axis=-1)
    tt = np.stack([-cp * ct, -sp * ct, -st], axis=-1)
    row0 = np.stack([pp, pt], axis=-1)
    row1 = np.stack([pt, tt], axis=-1)
    return np.stack([row0, row1], axis=-2)


# chart 1 is chart 0 composed with the rotation by pi/2 about the x-axis
_ROT = [np.eye(3), np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])]


class SphereAtlas(ChartAtlas):
    """Unit sphere covered by two (psi, theta) charts.

    Chart 0 maps ``(psi, theta)`` to ``(cos psi cos theta, sin psi cos theta,
    sin theta)``; chart 1 is the same map followed by a quarter turn about
    the x-axis, so the poles of one chart sit on the equator of the other.
    A point is moved to the other chart once ``|theta|`` exceeds
    ``switch_theta``.
    """

    dim = 2
    n_charts = 2
    name = "sphere"
    ambient_dim = 3

    def __init__(self, switch_theta=1.0, pole_margin=1e-6):
        self.switch_theta = float(switch_theta)
        self.pole_margin = float(pole_margin)

    def in_domain(self, chart, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        chart = np.asarray(chart)
        ok = np.all(np.isfinite(x), axis=-1) & ((chart == 0) | (chart == 1))
        return ok & (np.abs(x[..., 1]) < np.pi / 2 - self.pole_margin - margin)

    def needs_switch(self, chart, x):
        return np.abs(np.asarray(x)[..., 1]) > self.switch_theta

    def rotation(self, chart):
        chart = np.asarray(chart)
        return np.where(chart[..., None, None] == 1, _ROT[1], _ROT[0])

    def embed(self, chart, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...ab,...b->...a", self.rotation(chart), _spherical(x))

    def from_ambient(self, p, chart):
        q = np.einsum("...ba,...b->...a", self.rotation(chart), np.asarray(p, dtype=float))
        return _spherical_inverse(q)

    def embedding_jacobian(self, chart, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...ab,...bi->...ai", self.rotation(chart), _spherical_jacobian(x))

    def embedding_hessian(self, chart, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...ab,...bij->...aij", self.rotation(chart), _spherical_hessian(x))

    def change_chart(self, chart, x, target):
        return self.from_ambient(self.embed(chart, x), target)

    def ambient_to_tangent(self, chart, x, vec):
        """Chart components of an ambient vector tangent at ``embed(chart, x)``."""
        jac = self.embedding_jacobian(chart, x)
        comp = np.einsum("...ai,...a->...i", jac, vec)
        cos2 = np.cos(np.asarray(x)[..., 1]) ** 2
        return np.stack([comp[..., 0] / cos2, comp[..., 1]], axis=-1)

    def push_vector(self, chart, x, v, target, x_target):
        amb = np.einsum("...ai,...i->...a", self.embedding_jacobian(chart, x), v)
        return self.ambient_to_tangent(target, x_target, amb)

    def transition(self, chart, x, v=None):
        x = np.array(x, dtype=float)
        chart = np.broadcast_to(np.asarray(chart, dtype=np.int64), x.shape[:-1]).copy()
        if not np.all(self.in_domain(chart, x)):
            raise NoCoveringChart("point outside both sphere charts")
        vv = None if v is None else np.array(v, dtype=float)
        mask = self.needs_switch(chart, x)
        if np.any(mask):
            src = chart[mask]
            dst = 1 - src
            xs = x[mask]
            xt = self.change_chart(src, xs, dst)
            if vv is not None:
                vv[mask] = self.push_vector(src, xs, vv[mask], dst, xt)
            x[mask] = xt
            chart[mask] = dst
        return (chart, x) if vv is None else (chart, x, vv)

    def great_circle_distance(self, chart_a, xa, chart_b, xb):
        pa = self.embed(chart_a, xa)
        pb = self.embed(chart_b, xb)
        cross = np.linalg.norm(np.cross(pa, pb), axis=-1)
        dot = np.sum(pa * pb, axis=-1)
        return np.arctan2(cross, dot)
