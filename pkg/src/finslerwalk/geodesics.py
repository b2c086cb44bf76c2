"""Geodesic flow, exponential map and short-range distances."""
import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import EnergyDriftExceeded, LeftAtlas, NoCoveringChart, ShootingDiverged
from .geometry import spray

TOL_ENERGY = 1e-6
SHORT_RANGE = 0.5


@dataclass(frozen=True)
class GeodesicState:
    chart: int
    x: np.ndarray
    y: np.ndarray
    t: float


@dataclass
class Trajectory:
    """States of one geodesic on a uniform time grid."""

    t: np.ndarray
    chart: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    h_ode: float

    def __len__(self):
        return len(self.t)

    def state(self, i):
        return GeodesicState(int(self.chart[i]), self.x[i].copy(), self.y[i].copy(), float(self.t[i]))

    @property
    def endpoint(self):
        return int(self.chart[-1]), self.x[-1].copy()

    def to_csv(self, fh=None):
        """Write ``t, chart, x..., y..., F`` records; returns the text when ``fh`` is None."""
        out = fh or io.StringIO()
        m = self.x.shape[-1]
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["t", "chart"] + [f"x{i}" for i in range(m)] + [f"y{i}" for i in range(m)] + ["F"])
        for i in range(len(self.t)):
            writer.writerow(
                [repr(float(self.t[i])), int(self.chart[i])]
                + [repr(float(v)) for v in self.x[i]]
                + [repr(float(v)) for v in self.y[i]]
                + [repr(float(self.speed[i]))]
            )
        return out.getvalue() if fh is None else None


def rk4_step(metric, chart, x, y, dt):
    """One classical Runge-Kutta step of ``x' = y, y' = -Gamma(x, y) y y``."""
    k1x, k1y = y, -spray(metric, x, y, chart)
    x2, y2 = x + 0.5 * dt * k1x, y + 0.5 * dt * k1y
    k2x, k2y = y2, -spray(metric, x2, y2, chart)
    x3, y3 = x + 0.5 * dt * k2x, y + 0.5 * dt * k2y
    k3x, k3y = y3, -spray(metric, x3, y3, chart)
    x4, y4 = x + dt * k3x, y + dt * k3y
    k4x, k4y = y4, -spray(metric, x4, y4, chart)
    x_new = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    y_new = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
    return x_new, y_new


def _transition(atlas, chart, x, y):
    try:
        return atlas.transition(chart, x, y)
    except NoCoveringChart as exc:
        raise LeftAtlas(str(exc)) from None


def geodesic_flow(metric, x0, y0, T, h_ode=1e-3, chart=0, tol_energy=TOL_ENERGY):
    """Integrate the geodesic with initial data ``(x0, y0)`` over ``[0, T]``.

    The step is ``T / ceil(T / h_ode)`` so the grid is uniform and ends at
    ``T``. States that fail the atlas switch policy are re-expressed between
    steps. Raises :class:`EnergyDriftExceeded` if ``F(x, y)`` wanders more
    than ``tol_energy`` from its initial value.
    """
    atlas = metric.atlas
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    if T < 0:
        raise ValueError("duration must be nonnegative")
    c, x, y = _transition(atlas, chart, x, y)
    c = int(c)
    n = int(np.ceil(T / h_ode - 1e-12)) if T > 0 else 0
    dt = T / n if n else 0.0
    ts = np.linspace(0.0, T, n + 1)
    xs = np.empty((n + 1, x.size))
    ys = np.empty((n + 1, y.size))
    cs = np.empty(n + 1, dtype=np.int64)
    xs[0], ys[0], cs[0] = x, y, c
    for i in range(n):
        x, y = rk4_step(metric, c, x, y, dt)
        c, x, y = _transition(atlas, c, x, y)
        c = int(c)
        xs[i + 1], ys[i + 1], cs[i + 1] = x, y, c
    speed = metric.F(xs, ys, cs)
    drift = np.max(np.abs(speed - speed[0]))
    if drift > tol_energy:
        raise EnergyDriftExceeded(f"speed drift {drift:.3g} exceeds {tol_energy:g}; reduce h_ode")
    return Trajectory(ts, cs, xs, ys, speed, dt)


def exp_map(metric, p, Y, h_ode=0.01, chart=0, return_velocity=False):
    """Exponential map ``exp_p(Y)``, vectorized over leading axes.

    Integrates the geodesic with initial velocity ``Y`` over parameter time
    ``[0, 1]`` using ``ceil(F(Y) / h_ode)`` equal RK4 steps, so no step
    covers more than ``h_ode`` of arc length. The step count is set per
    element, which keeps each result independent of the rest of the batch.
    Returns ``(chart, point)``.
    """
    atlas = metric.atlas
    x = np.array(p, dtype=float)
    y = np.array(Y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    x, y = x.copy(), y.copy()
    c, x, y = _transition(atlas, chart, x, y)
    length = metric.F(x, y, c)
    n = np.where(length > 0, np.maximum(1, np.ceil(length / h_ode)), 0).astype(np.int64)
    if np.ndim(n) == 0:
        for _ in range(int(n)):
            x, y = rk4_step(metric, c, x, y, 1.0 / n)
            c, x, y = _transition(atlas, c, x, y)
        c = int(c)
        return (c, x, y) if return_velocity else (c, x)
    c = np.array(c)
    shape = n.shape
    c, x, y, n = c.reshape(-1), x.reshape(-1, x.shape[-1]), y.reshape(-1, y.shape[-1]), n.reshape(-1)
    dt = np.where(n > 0, 1.0 / np.maximum(n, 1), 0.0)[:, None]
    for k in range(int(n.max()) if n.size else 0):
        act = np.nonzero(n > k)[0]
        if act.size == n.size:
            x, y = rk4_step(metric, c, x, y, dt)
            c, x, y = _transition(atlas, c, x, y)
        else:
            xa, ya = rk4_step(metric, c[act], x[act], y[act], dt[act])
            c[act], x[act], y[act] = _transition(atlas, c[act], xa, ya)
    c, x, y = c.reshape(shape), x.reshape(shape + (-1,)), y.reshape(shape + (-1,))
    return (c, x, y) if return_velocity else (c, x)


def exp_path(metric, p, Y, s, h_ode=0.01, chart=0):
    """``exp_p(s Y)`` for a vector of parameters ``s`` (one geodesic, many times)."""
    s = np.asarray(s, dtype=float)
    Ys = s[:, None] * np.asarray(Y, dtype=float)[None, :]
    ps = np.broadcast_to(np.asarray(p, dtype=float), Ys.shape)
    return exp_map(metric, ps, Ys, h_ode, chart)


def _one_way(metric, p, q, chart, h_ode, tol, max_iter):
    m = len(p)
    diff = q - p
    scale = np.linalg.norm(diff)
    angles = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    if m == 2:
        starts = [diff] + [scale * np.array([np.cos(a), np.sin(a)]) for a in angles]
    else:
        starts = [diff] + [scale * s * np.eye(m)[i] for i in range(m) for s in (1.0, -1.0)]
    best = None
    eps = 1e-7
    for Y in starts:
        Y = np.array(Y, dtype=float)
        res = None
        for _ in range(max_iter):
            cols = [Y] + [Y + eps * np.eye(m)[i] for i in range(m)]
            c, pts = exp_map(metric, np.broadcast_to(p, (m + 1, m)), np.array(cols), h_ode, chart)
            if np.any(c != chart):
                res = None
                break
            r = pts[0] - q
            res = np.linalg.norm(r)
            if res < tol:
                break
            J = (pts[1:] - pts[0]).T / eps
            try:
                Y = Y - np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                res = None
                break
        if res is not None and res < tol:
            length = float(metric.F(p, Y, chart))
            if best is None or length < best[0] - 1e-12:
                best = (length, res)
    return best


def asymmetric_distance(metric, p, q, chart=0, h_ode=5e-3, tol=1e-10, max_iter=30):
    """``d_a(p, q)`` by Newton shooting with multi-start; short range only."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.array_equal(p, q):
        return 0.0
    if np.linalg.norm(q - p) > SHORT_RANGE:
        raise ShootingDiverged(f"points {np.linalg.norm(q - p):.3g} apart exceed short range {SHORT_RANGE}")
    best = _one_way(metric, p, q, chart, h_ode, tol, max_iter)
    if best is None or best[1] > 1e-6:
        raise ShootingDiverged("no shooting start converged")
    return best[0]


def symmetrized_distance(metric, p, q, chart=0, h_ode=5e-3, tol=1e-10, max_iter=30):
    """``max(d_a(p, q), d_a(q, p))`` for nearby points of one chart."""
    return max(
        asymmetric_distance(metric, p, q, chart, h_ode, tol, max_iter),
        asymmetric_distance(metric, q, p, chart, h_ode, tol, max_iter),
    )


def round_sphere_distance(atlas, chart_a, xa, chart_b, xb):
    """Closed-form geodesic distance on the unit round sphere."""
    return atlas.great_circle_distance(chart_a, xa, chart_b, xb)


def navigation_distance(metric, chart_a, xa, chart_b, xb, tol=1e-13):
    """One-way distance ``d(a, b)`` for a Zermelo metric whose wind is a Killing field of ``h``.

    Supports the Katok sphere and flat constant-wind metrics. The time-t
    reachable set from ``a`` is the wind flow of the h-ball of radius t, so
    ``d(a, b)`` is the unique root of ``t = d_h(a, phi_{-t}(b))``. The gap is
    increasing with slope at least ``1 - max|W|``, which brackets the root.
    Vectorized over points.
    """
    if metric.name == "katok":
        atlas, r = metric.atlas, metric.r
        pa, pb = atlas.embed(chart_a, xa), atlas.embed(chart_b, xb)
        pa, pb = np.broadcast_arrays(pa, pb)

        def d_h(t):
            c, s = np.cos(r * t), np.sin(r * t)
            back = np.stack([c * pb[..., 0] + s * pb[..., 1], c * pb[..., 1] - s * pb[..., 0], pb[..., 2]], axis=-1)
            return np.arctan2(np.linalg.norm(np.cross(pa, back), axis=-1), np.sum(pa * back, axis=-1))

        wmax = abs(r)
    elif metric.name == "zermelo" and getattr(metric, "is_flat", False):
        w = np.asarray(metric.params["wind"], dtype=float)
        xa, xb = np.broadcast_arrays(np.asarray(xa, dtype=float), np.asarray(xb, dtype=float))

        def d_h(t):
            return np.linalg.norm(xb - np.multiply.outer(t, w) - xa, axis=-1)

        wmax = float(np.linalg.norm(w))
    else:
        raise ValueError(f"no navigation distance for metric '{metric.name}'")
    lo = np.zeros(np.shape(d_h(0.0)))
    hi = d_h(lo) / (1.0 - wmax)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        short = mid < d_h(mid)
        lo, hi = np.where(short, mid, lo), np.where(short, hi, mid)
    return 0.5 * (lo + hi)
