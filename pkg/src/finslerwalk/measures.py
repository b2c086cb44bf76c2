"""Per-point probability measures on tangent spaces.

A family knows how to draw from ``nu_p`` (vectorized over a batch of
points), how to build a quadrature rule for ``nu_p`` at a single point, and
how to produce the mean ``mu_p``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import RejectionBudgetExceeded
from .rng import as_stream

REJECTION_BUDGET = 100_000
N_ANGLES = 256
N_RADIAL = 64
N_INDICATRIX = 1024


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))


def _directions(n):
    phi = 2.0 * np.pi * np.arange(n) / n
    return phi, np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def _radius_bisect(metric, x, center, dirs, chart):
    # largest rho with F(center + rho u) <= 1; F(center) < 1 is assumed
    xs = np.broadcast_to(x, dirs.shape)
    lo = np.zeros(len(dirs))
    hi = np.ones(len(dirs))
    for _ in range(200):
        out = metric.F(xs, center + hi[:, None] * dirs, chart) > 1.0
        if out.all():
            break
        hi = np.where(out, hi, 2.0 * hi)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = metric.F(xs, center + mid[:, None] * dirs, chart) <= 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def disc_radius(metric, x, center, dirs, chart=0):
    r = metric.disc_radius(x, center, dirs, chart)
    if r is None:
        r = _radius_bisect(metric, np.asarray(x, dtype=float), np.asarray(center, dtype=float), dirs, chart)
    return r


def disc_bounds(metric, x, chart=0, n_dirs=256, inflate=1.1):
    """Coordinate box containing ``{F(x, .) <= 1}``, shape ``(..., m)`` each side."""
    bounds = metric.disc_bounds(x, chart)
    if bounds is not None:
        return bounds
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    if m == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif m == 2:
        dirs = _directions(n_dirs)[1]
    else:
        dirs = np.random.default_rng(0).standard_normal((n_dirs * 4, m))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    flat = x.reshape(-1, m)
    chart_flat = np.broadcast_to(np.asarray(chart), x.shape[:-1]).reshape(-1)
    lo = np.empty_like(flat)
    hi = np.empty_like(flat)
    for i, xi in enumerate(flat):
        xs = np.broadcast_to(xi, dirs.shape)
        ext = dirs / metric.F(xs, dirs, chart_flat[i])[:, None]
        lo[i] = ext.min(axis=0) * inflate
        hi[i] = ext.max(axis=0) * inflate
    return lo.reshape(x.shape), hi.reshape(x.shape)


class MeasureFamily:
    kind = "custom"
    mean_policy = "quadrature"

    def __init__(self):
        self._mean_cache = {}

    def sample(self, metric, x, stream, chart=0):
        raise NotImplementedError

    def quadrature(self, metric, x, chart=0, center=None):
        raise NotImplementedError

    def analytic_mean(self, metric, x, chart=0):
        return None

    def mean(self, metric, x, chart=0):
        """Mean ``mu_p``; batched points use the analytic form when available."""
        x = np.asarray(x, dtype=float)
        if self.mean_policy in ("analytic", "auto"):
            mu = self.analytic_mean(metric, x, chart)
            if mu is not None:
                return np.broadcast_to(mu, x.shape).copy()
            if self.mean_policy == "analytic":
                raise ValueError(f"{self.kind} measure has no analytic mean for {metric.name}")
        if self.mean_policy.startswith("monte-carlo"):
            return self._mc_mean(metric, x, chart)
        if x.ndim == 1:
            return self._quadrature_mean(metric, x, int(chart))
        charts = np.broadcast_to(np.asarray(chart), x.shape[:-1])
        out = np.empty_like(x)
        for idx in np.ndindex(x.shape[:-1]):
            out[idx] = self._quadrature_mean(metric, x[idx], int(charts[idx]))
        return out

    def _key(self, x, chart):
        return (int(chart),) + tuple(np.round(np.asarray(x) / 1e-12).astype(np.int64).tolist())

    def _quadrature_mean(self, metric, x, chart):
        key = (id(metric),) + self._key(x, chart)
        cached = self._mean_cache.get(key)
        if cached is None:
            rule = self.quadrature(metric, x, chart)
            cached = rule.integrate(rule.nodes)
            if len(self._mean_cache) > 100_000:
                self._mean_cache.clear()
            self._mean_cache[key] = cached
        return cached.copy()

    def _mc_mean(self, metric, x, chart):
        n = int(self.mean_policy.split("(")[1].rstrip(")")) if "(" in self.mean_policy else 10_000
        xs = np.atleast_2d(x).reshape(-1, x.shape[-1])
        rng = np.random.default_rng(0)
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            pts = np.broadcast_to(xi, (n, xi.size))
            out[i] = self.sample(metric, pts, as_stream(rng, n), chart).mean(axis=0)
        return out.reshape(x.shape)


class LebesgueDisc(MeasureFamily):
    """Normalized Lebesgue measure on the unit disc ``D_p = {F <= 1}``."""

    kind = "lebesgue-disc"

    def __init__(self, mean_policy="auto", n_angles=N_ANGLES, n_radial=N_RADIAL):
        super().__init__()
        self.mean_policy = mean_policy
        self.n_angles = n_angles
        self.n_radial = n_radial

    def analytic_mean(self, metric, x, chart=0):
        return metric.disc_centroid(x, chart)

    def sample(self, metric, x, stream, chart=0):
        """Rejection sampling from the coordinate box around ``D_p``."""
        x = np.asarray(x, dtype=float)
        batch, m = x.shape[0], x.shape[-1]
        stream = as_stream(stream, batch)
        charts = np.broadcast_to(np.asarray(chart), (batch,))
        lo, hi = disc_bounds(metric, x, charts)
        lo = np.broadcast_to(lo, x.shape)
        hi = np.broadcast_to(hi, x.shape)
        out = np.empty_like(x)
        pending = np.arange(batch)
        tries = 0
        while pending.size:
            u = stream.random(m, subset=pending)
            cand = lo[pending] + u * (hi[pending] - lo[pending])
            ok = metric.F(x[pending], cand, charts[pending]) <= 1.0
            out[pending[ok]] = cand[ok]
            pending = pending[~ok]
            tries += 1
            if tries > REJECTION_BUDGET:
                raise RejectionBudgetExceeded(f"{pending.size} draws still rejected after {REJECTION_BUDGET} tries")
        return out

    def quadrature(self, metric, x, chart=0, center=None):
        """Polar Gauss-Legendre rule over ``D_p`` around ``center`` (default origin).

        ``center`` must be interior. Integrands that are smooth along rays from
        ``center`` (for example homogeneous in ``Y - center``) are integrated
        to near machine precision.
        """
        x = np.asarray(x, dtype=float)
        m = x.shape[-1]
        c = np.zeros(m) if center is None else np.asarray(center, dtype=float)
        if m == 1:
            lo, hi = _interval(metric, x, chart)
            t, w = np.polynomial.legendre.leggauss(self.n_radial)
            nodes, weights = [], []
            for a, b in ((lo, c[0]), (c[0], hi)):
                nodes.append(0.5 * (b - a) * t + 0.5 * (a + b))
                weights.append(0.5 * (b - a) * w)
            nodes = np.concatenate(nodes)[:, None]
            weights = np.concatenate(weights)
            return QuadratureRule(nodes, weights / weights.sum())
        if m != 2:
            raise NotImplementedError("disc quadrature is implemented for m = 1, 2")
        _, dirs = _directions(self.n_angles)
        rho = disc_radius(metric, x, np.broadcast_to(c, dirs.shape), dirs, chart)
        t, w = np.polynomial.legendre.leggauss(self.n_radial)
        s = 0.5 * (t + 1.0)
        r = rho[:, None] * s[None, :]
        wr = (0.5 * w)[None, :] * rho[:, None] * r
        nodes = c + r[..., None] * dirs[:, None, :]
        weights = wr * (2.0 * np.pi / self.n_angles)
        nodes = nodes.reshape(-1, 2)
        weights = weights.reshape(-1)
        return QuadratureRule(nodes, weights / weights.sum())


def _interval(metric, x, chart):
    fp = float(metric.F(x, np.array([1.0]), chart))
    fm = float(metric.F(x, np.array([-1.0]), chart))
    return -1.0 / fm, 1.0 / fp


class IndicatrixFundamental(MeasureFamily):
    """Normalized volume of the fundamental tensor on the indicatrix ``{F = 1}``."""

    kind = "indicatrix-fundamental"

    def __init__(self, mean_policy="quadrature", n_nodes=N_INDICATRIX):
        super().__init__()
        self.mean_policy = mean_policy
        self.n_nodes = n_nodes

    def _table(self, metric, x, chart):
        from .geometry import fundamental_tensor

        phi, dirs = _directions(self.n_nodes)
        xs = np.broadcast_to(x, dirs.shape)
        curve = dirs / metric.F(xs, dirs, chart)[:, None]
        eps = 1e-5
        tangent = []
        for sgn in (1.0, -1.0):
            d = np.stack([np.cos(phi + sgn * eps), np.sin(phi + sgn * eps)], axis=-1)
            tangent.append(d / metric.F(xs, d, chart)[:, None])
        velocity = (tangent[0] - tangent[1]) / (2 * eps)
        g = fundamental_tensor(metric, xs, curve, chart)
        density = np.sqrt(np.einsum("nij,ni,nj->n", g, velocity, velocity))
        return phi, curve, density

    def quadrature(self, metric, x, chart=0, center=None):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] == 1:
            lo, hi = _interval(metric, x, chart)
            return QuadratureRule(np.array([[lo], [hi]]), np.array([0.5, 0.5]))
        if x.shape[-1] != 2:
            raise NotImplementedError("indicatrix measure is implemented for m = 1, 2")
        _, curve, density = self._table(metric, x, chart)
        return QuadratureRule(curve, density / density.sum())

    def sample(self, metric, x, stream, chart=0):
        """Inverse-CDF draw of the indicatrix angle from a per-point node table."""
        x = np.asarray(x, dtype=float)
        batch, m = x.shape[0], x.shape[-1]
        stream = as_stream(stream, batch)
        charts = np.broadcast_to(np.asarray(chart), (batch,))
        u = stream.random(1)[:, 0]
        out = np.empty_like(x)
        if m == 1:
            for i in range(batch):
                lo, hi = _interval(metric, x[i], charts[i])
                out[i, 0] = lo if u[i] < 0.5 else hi
            return out
        step = 2.0 * np.pi / self.n_nodes
        tables = {}
        for i in range(batch):
            key = (int(charts[i]), x[i].tobytes())
            if key not in tables:
                tables[key] = self._table(metric, x[i], charts[i])
            phi, _, density = tables[key]
            # piecewise-linear density over the periodic grid
            nxt = np.roll(density, -1)
            cell = 0.5 * (density + nxt) * step
            cdf = np.concatenate([[0.0], np.cumsum(cell)])
            target = u[i] * cdf[-1]
            k = min(int(np.searchsorted(cdf, target, side="right")) - 1, self.n_nodes - 1)
            a, b = density[k], nxt[k]
            rem = target - cdf[k]
            if abs(b - a) < 1e-14 * max(a, 1.0):
                frac = rem / (a * step)
            else:
                slope = (b - a) / step
                frac = (-a + np.sqrt(a * a + 2 * slope * rem)) / slope / step
            angle = phi[k] + np.clip(frac, 0.0, 1.0) * step
            d = np.array([np.cos(angle), np.sin(angle)])
            out[i] = d / metric.F(x[i], d, charts[i])
        return out


class DiscreteFamily(MeasureFamily):
    """Finitely many tangent vectors with fixed weights, the same at every point."""

    kind = "discrete"
    mean_policy = "analytic"

    def __init__(self, vectors, weights):
        super().__init__()
        vectors = np.asarray(vectors, dtype=float)
        self.vectors = vectors[:, None] if vectors.ndim == 1 else vectors
        w = np.asarray(weights, dtype=float)
        if w.shape[0] != self.vectors.shape[0] or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative, one per vector")
        self.weights = w / w.sum()
        self._cum = np.cumsum(self.weights)

    def analytic_mean(self, metric, x, chart=0):
        return self.weights @ self.vectors

    def quadrature(self, metric, x, chart=0, center=None):
        return QuadratureRule(self.vectors.copy(), self.weights.copy())

    def sample(self, metric, x, stream, chart=0):
        x = np.asarray(x, dtype=float)
        stream = as_stream(stream, x.shape[0])
        u = stream.random(1)[:, 0]
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.weights) - 1)
        return self.vectors[idx].copy()


def point_mass(vector):
    return DiscreteFamily([np.asarray(vector, dtype=float)], [1.0])


def biased_coin():
    """``+1`` with probability 3/4 and ``-1`` with probability 1/4 on the line."""
    return DiscreteFamily([[1.0], [-1.0]], [0.75, 0.25])


def sample(family, metric, p, rng=None, chart=0):
    """One draw from ``nu_p`` (``p`` a single point) or a batch (``p`` 2-D)."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[None, :] if single else p
    draws = family.sample(metric, pts, as_stream(rng, len(pts)), chart)
    return draws[0] if single else draws


def mean(family, metric, p, chart=0):
    return family.mean(metric, p, chart)


def rescale(Y, mu, N, alpha=1.0):
    """Map a draw of ``nu_p`` to ``nu_p^N``: ``(Y - mu)/sqrt(N) + alpha mu / N``."""
    return (Y - mu) / np.sqrt(N) + alpha * mu / N


def rescaled_sample(family, metric, p, N, rng=None, chart=0, alpha=1.0):
    if N < 1:
        raise ValueError("N must be at least 1")
    p = np.asarray(p, dtype=float)
    Y = sample(family, metric, p, rng, chart)
    mu = family.mean(metric, p, chart)
    return rescale(Y, mu, N, alpha)


def quadrature_integrate(family, metric, p, integrand, chart=0, center=None):
    """Integrate ``integrand(nodes)`` against ``nu_p``; values may be scalar, vector or matrix."""
    rule = family.quadrature(metric, np.asarray(p, dtype=float), chart, center)
    return rule.integrate(integrand(rule.nodes))


FAMILIES = {
    "lebesgue-disc": LebesgueDisc,
    "indicatrix-fundamental": IndicatrixFundamental,
}


def family_by_name(name, **params):
    if name == "discrete":
        return DiscreteFamily(params["vectors"], params["weights"])
    if name == "point-mass":
        return point_mass(params["vector"])
    if name == "biased-coin":
        return biased_coin()
    try:
        return FAMILIES[name](**params)
    except KeyError:
        raise KeyError(f"unknown measure '{name}'") from None
