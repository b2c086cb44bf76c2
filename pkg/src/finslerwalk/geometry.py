"""Finsler metrics, fundamental tensors and formal Christoffel symbols.

Everything here is vectorized over leading axes. ``x`` and ``y`` have shape
``(..., m)``; tensors come back as ``(..., m, m)`` and Christoffel arrays as
``(..., m, m, m)`` indexed ``[k, i, j]``.
"""
import numpy as np

from .errors import IllConditioned, NotPositiveDefinite, SingularDirection

Y_STEP = 1e-4
X_STEP = 1e-4
MIN_NORM = 1e-8
MAX_CONDITION = 1e10
STACK_LIMIT = 4096


class FinslerMetric:
    """A Finsler function on the charts of an atlas.

    Subclasses implement :meth:`F`. They may also override :meth:`g` (the
    fundamental tensor) and :meth:`dg` (its x-derivatives, indexed
    ``[..., s, i, j]`` for ``d g_ij / d x^s``); the module-level functions
    fall back to finite differences when these are absent.

    The ``disc_*`` hooks describe the unit disc ``{F <= 1}`` in closed form
    when the metric knows it; measures use them to skip root-finding.
    """

    name = "finsler"
    reversible = False
    has_analytic_g = False
    has_analytic_dg = False

    def __init__(self, atlas, params=None):
        self.atlas = atlas
        self.dim = atlas.dim
        self.params = dict(params or {})

    def __repr__(self):
        extra = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{type(self).__name__}({self.name}{', ' + extra if extra else ''})"

    def F(self, x, y, chart=0):
        raise NotImplementedError

    def g(self, x, y, chart=0):
        raise NotImplementedError

    def dg(self, x, y, chart=0):
        raise NotImplementedError

    def disc_bounds(self, x, chart=0):
        return None

    def disc_radius(self, x, center, directions, chart=0):
        return None

    def disc_centroid(self, x, chart=0):
        return None


class FunctionMetric(FinslerMetric):
    """Wraps a user-supplied vectorized ``F(x, y, chart)``; derivatives by finite differences."""

    def __init__(self, func, atlas, name="custom", reversible=False, params=None):
        super().__init__(atlas, params)
        self._func = func
        self.name = name
        self.reversible = reversible

    def F(self, x, y, chart=0):
        return self._func(np.asarray(x, dtype=float), np.asarray(y, dtype=float), chart)


def _unit(m, i):
    e = np.zeros(m)
    e[i] = 1.0
    return e


def _check_direction(y):
    norm = np.linalg.norm(y, axis=-1)
    if np.any(norm < MIN_NORM):
        raise SingularDirection(f"tangent vector norm {norm.min():.3g} below {MIN_NORM}")
    return norm


def _fd_tensor(metric, x, y, chart, h):
    m = y.shape[-1]
    step = (h * np.linalg.norm(y, axis=-1))[..., None]

    def half_sq(z):
        return 0.5 * metric.F(x, z, chart) ** 2

    out = np.empty(y.shape[:-1] + (m, m))
    for i in range(m):
        ei = _unit(m, i) * step
        for j in range(i, m):
            ej = _unit(m, j) * step
            val = (half_sq(y + ei + ej) - half_sq(y + ei - ej) - half_sq(y - ei + ej) + half_sq(y - ei - ej))
            out[..., i, j] = out[..., j, i] = val / (4.0 * step[..., 0] ** 2)
    return out


def fundamental_tensor(metric, x, y, chart=0, h=Y_STEP, check=True):
    """Fundamental tensor ``g_ij = (F^2/2)_{y^i y^j}`` at ``(x, y)``.

    Uses the metric's closed form when it has one; otherwise central
    differences of ``F^2/2`` in ``y`` with step ``h * |y|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if check:
        _check_direction(y)
    if metric.has_analytic_g:
        g = metric.g(x, y, chart)
    else:
        g = _fd_tensor(metric, x, y, chart, h)
    if check:
        eig = np.linalg.eigvalsh(g)
        if np.any(eig[..., 0] <= 0):
            raise NotPositiveDefinite(f"fundamental tensor eigenvalue {eig[..., 0].min():.3g}")
    return g


def tensor_x_derivative(metric, x, y, chart=0, h=X_STEP, h_y=Y_STEP):
    """``d g_ij / d x^s`` as an array indexed ``[..., s, i, j]``.

    Closed form when the metric provides it, else the five-point central
    stencil applied to :func:`fundamental_tensor`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if metric.has_analytic_dg:
        return metric.dg(x, y, chart)
    x, y = np.broadcast_arrays(x, y)
    m = x.shape[-1]
    coef = np.array([1.0, -1.0, 2.0, -2.0])
    if x.size <= STACK_LIMIT:
        # small batches: one tensor evaluation over all 4m shifted points
        shifts = (coef[None, :, None] * np.eye(m)[:, None, :] * h).reshape((4 * m,) + (1,) * (x.ndim - 1) + (m,))
        xs = x[None] + shifts
        cs = np.broadcast_to(np.asarray(chart), xs.shape[:-1])
        g = fundamental_tensor(metric, xs, np.broadcast_to(y, xs.shape), cs, h_y, check=False)
        g = g.reshape((m, 4) + x.shape + (m,))
    else:
        g = np.stack(
            [
                np.stack([fundamental_tensor(metric, x + c * h * _unit(m, s), y, chart, h_y, check=False) for c in coef])
                for s in range(m)
            ]
        )
    d = (8.0 * (g[:, 0] - g[:, 1]) - (g[:, 2] - g[:, 3])) / (12.0 * h)
    return np.moveaxis(d, 0, -3)


def solve_small(a, b):
    """Batched ``a^{-1} b`` for ``(..., m, m)`` and ``(..., m)``; closed form for m <= 2."""
    m = a.shape[-1]
    if m == 1:
        return b / a[..., 0]
    if m == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        r0 = (a[..., 1, 1] * b[..., 0] - a[..., 0, 1] * b[..., 1]) / det
        r1 = (a[..., 0, 0] * b[..., 1] - a[..., 1, 0] * b[..., 0]) / det
        return np.stack([r0, r1], axis=-1)
    return np.linalg.solve(a, b[..., None])[..., 0]


def _christoffel_from(g, dg):
    # Gamma^k_ij = 1/2 g^{ks} (d_j g_is + d_i g_js - d_s g_ij), dg indexed [s, i, j]
    term = np.einsum("...jis->...ijs", dg) + dg - np.einsum("...sij->...ijs", dg)
    ginv = np.linalg.inv(g)
    return 0.5 * np.einsum("...ks,...ijs->...kij", ginv, term)


def christoffel(metric, x, y, chart=0, h=X_STEP, check=True):
    """Formal Christoffel symbols of the second kind, indexed ``[..., k, i, j]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = fundamental_tensor(metric, x, y, chart, check=check)
    if check:
        cond = np.linalg.cond(g)
        if np.any(cond > MAX_CONDITION):
            raise IllConditioned(f"condition number {np.max(cond):.3g} exceeds {MAX_CONDITION:g}")
        np.linalg.cholesky(g)
    dg = tensor_x_derivative(metric, x, y, chart, h)
    return _christoffel_from(g, dg)


def spray(metric, x, y, chart=0):
    """Geodesic acceleration term ``Gamma^k_ij(x, y) y^i y^j``.

    Gamma is evaluated at the unit-rescaled direction; zero vectors map to
    zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if getattr(metric, "is_flat", False):
        return np.zeros(np.broadcast_shapes(x.shape, y.shape))
    norm = np.sqrt(np.einsum("...i,...i->...", y, y))
    small = norm < MIN_NORM
    u = y / np.where(small, 1.0, norm)[..., None]
    if np.any(small):
        u = np.where(small[..., None], _unit(y.shape[-1], 0), u)
    g = fundamental_tensor(metric, x, u, chart, check=False)
    dg = tensor_x_derivative(metric, x, u, chart)
    # Gamma^k_ij u^i u^j = g^{ks} (d_j g_is u^i u^j - 1/2 d_s g_ij u^i u^j)
    a = np.einsum("...jis,...i,...j->...s", dg, u, u)
    b = np.einsum("...sij,...i,...j->...s", dg, u, u)
    acc = solve_small(g, a - 0.5 * b)
    return np.where(small[..., None], 0.0, acc * (norm**2)[..., None])


def ellipticity_ratio(metric, x, n_samples, rng=None, chart=0):
    """Largest sampled ``sqrt(g_u(v, v) / g_v(v, v))`` over unit directions.

    Directions are drawn from ``rng`` one pair at a time, so for a fixed seed
    the estimate is nondecreasing in ``n_samples``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = np.random.default_rng(rng)
    m = metric.dim
    dirs = rng.standard_normal((n_samples, 2, m))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    u, v = dirs[:, 0], dirs[:, 1]
    xs = np.broadcast_to(np.asarray(x, dtype=float), (n_samples, m))
    gu = fundamental_tensor(metric, xs, u, chart)
    guv = np.einsum("nij,ni,nj->n", gu, v, v)
    fv2 = metric.F(xs, v, chart) ** 2
    return float(np.sqrt(np.max(guv / fv2)))


def ellipticity_grid(metric, x, n_angles=360, chart=0):
    """Dense angle-grid version of :func:`ellipticity_ratio` for planar charts."""
    phi = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    xs = np.broadcast_to(np.asarray(x, dtype=float), dirs.shape)
    g = fundamental_tensor(metric, xs, dirs, chart)
    guv = np.einsum("uij,vi,vj->uv", g, dirs, dirs)
    fv2 = metric.F(xs, dirs, chart) ** 2
    return float(np.sqrt(np.max(guv / fv2[None, :])))
