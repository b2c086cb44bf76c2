"""Limit generator, walk generators, symbol, associated metric and drift."""
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .errors import NotPositiveDefinite, StencilLeftChart
from .geodesics import exp_map
from .geometry import X_STEP, _christoffel_from, spray
from .measures import LebesgueDisc
from .rng import as_stream

GAMMA_EXCLUSION = 1e-10


class TestFunction:
    """Scalar function with gradient and Hessian in chart coordinates.

    ``value``, ``grad`` and ``hess`` take ``(x, chart)`` with ``x`` of shape
    ``(..., m)``.
    """

    __test__ = False

    def __init__(self, value, grad, hess, name="f", compact_support=False):
        self._value = value
        self._grad = grad
        self._hess = hess
        self.name = name
        self.compact_support = compact_support

    def __repr__(self):
        return f"TestFunction({self.name})"

    def value(self, x, chart=0):
        return self._value(np.asarray(x, dtype=float), chart)

    def grad(self, x, chart=0):
        return self._grad(np.asarray(x, dtype=float), chart)

    def hess(self, x, chart=0):
        return self._hess(np.asarray(x, dtype=float), chart)

    def __call__(self, x, chart=0):
        return self.value(x, chart)


def chart_function(value, grad, hess, name="f"):
    """Test function given directly in (single-chart) coordinates."""
    return TestFunction(lambda x, c: value(x), lambda x, c: grad(x), lambda x, c: hess(x), name)


def ambient_function(atlas, value, grad, hess, name="f"):
    """Test function on an embedded manifold from an ambient function and its derivatives."""

    def f(x, chart):
        return value(atlas.embed(chart, x))

    def df(x, chart):
        jac = atlas.embedding_jacobian(chart, x)
        return np.einsum("...a,...ai->...i", grad(atlas.embed(chart, x)), jac)

    def d2f(x, chart):
        p = atlas.embed(chart, x)
        jac = atlas.embedding_jacobian(chart, x)
        second = atlas.embedding_hessian(chart, x)
        return np.einsum("...ai,...ab,...bj->...ij", jac, hess(p), jac) + np.einsum("...a,...aij->...ij", grad(p), second)

    return TestFunction(f, df, d2f, name)


def linear_ambient(atlas, a, name=None):
    a = np.asarray(a, dtype=float)
    n = a.size
    return ambient_function(
        atlas,
        lambda p: p @ a,
        lambda p: np.broadcast_to(a, p.shape),
        lambda p: np.zeros(p.shape + (n,)),
        name or f"linear{tuple(a.tolist())}",
    )


def quadratic_ambient(atlas, Q, b=None, name="quadratic"):
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    b = np.zeros(len(Q)) if b is None else np.asarray(b, dtype=float)
    return ambient_function(
        atlas,
        lambda p: np.einsum("...a,ab,...b->...", p, Q, p) + p @ b,
        lambda p: 2.0 * p @ Q + b,
        lambda p: np.broadcast_to(2.0 * Q, p.shape + (len(Q),)),
        name,
    )


def exp_ambient(atlas, a, name="exp"):
    a = np.asarray(a, dtype=float)
    return ambient_function(
        atlas,
        lambda p: np.exp(p @ a),
        lambda p: np.exp(p @ a)[..., None] * a,
        lambda p: np.exp(p @ a)[..., None, None] * np.outer(a, a),
        name,
    )


def gaussian_ambient(atlas, center, width, name="bump"):
    """``exp(-|P - center|^2 / (2 width^2))``; smooth and effectively localized."""
    c = np.asarray(center, dtype=float)
    s2 = float(width) ** 2

    def value(p):
        return np.exp(-np.sum((p - c) ** 2, axis=-1) / (2 * s2))

    def grad(p):
        return -value(p)[..., None] * (p - c) / s2

    def hess(p):
        d = p - c
        n = len(c)
        return value(p)[..., None, None] * (np.einsum("...a,...b->...ab", d, d) / s2**2 - np.eye(n) / s2)

    return ambient_function(atlas, value, grad, hess, name)


def polynomial_1d(coeffs, name=None):
    """``sum_k c_k x^k`` on the line."""
    poly = np.polynomial.Polynomial(coeffs)
    d1, d2 = poly.deriv(1), poly.deriv(2)
    return chart_function(
        lambda x: poly(x[..., 0]),
        lambda x: d1(x[..., 0])[..., None],
        lambda x: d2(x[..., 0])[..., None, None],
        name or f"poly{tuple(coeffs)}",
    )


def coordinate_function(i, m, name=None):
    e = np.eye(m)[i]
    return chart_function(
        lambda x: x[..., i],
        lambda x: np.broadcast_to(e, x.shape),
        lambda x: np.zeros(x.shape + (m,)),
        name or f"x{i}",
    )


def check_derivatives(f, x, chart=0, h=1e-4, tol=1e-6):
    """Largest deviation of ``grad``/``hess`` from central differences; raises if above ``tol``."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    g_fd = np.empty(m)
    h_fd = np.empty((m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        g_fd[i] = (f.value(x + e, chart) - f.value(x - e, chart)) / (2 * h)
        h_fd[i] = (f.grad(x + e, chart) - f.grad(x - e, chart)) / (2 * h)
    err = max(np.max(np.abs(g_fd - f.grad(x, chart))), np.max(np.abs(h_fd - f.hess(x, chart))))
    if err > tol:
        raise ValueError(f"derivatives of {f.name} disagree with finite differences by {err:.3g}")
    return float(err)


@dataclass
class GeneratorEstimate:
    """Coefficients of ``A f = first_order . df + second_order : d^2 f`` at a point."""

    point: np.ndarray
    chart: int
    second_order: np.ndarray
    first_order: np.ndarray
    symbol: np.ndarray
    mean: np.ndarray
    provenance: str = "quadrature"
    drift: np.ndarray = None
    se: float = None
    extra: dict = field(default_factory=dict)

    def apply(self, f):
        return float(
            self.first_order @ f.grad(self.point, self.chart)
            + np.sum(self.second_order * f.hess(self.point, self.chart))
        )

    def to_record(self):
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif isinstance(v, (np.floating, np.integer)):
                out[k] = v.item()
            else:
                out[k] = v
        return out


def _rule_about_mean(metric, family, p, chart):
    mu = np.asarray(family.mean(metric, p, chart), dtype=float)
    center = mu if isinstance(family, LebesgueDisc) else None
    rule = family.quadrature(metric, p, chart, center)
    return mu, rule


def symbol(metric, family, p, chart=0):
    """``1/2`` of the covariance of ``nu_p``; raises unless positive definite."""
    p = np.asarray(p, dtype=float)
    mu, rule = _rule_about_mean(metric, family, p, chart)
    v = rule.nodes - mu
    sym = 0.5 * np.einsum("q,qi,qj->ij", rule.weights, v, v)
    eig = np.linalg.eigvalsh(sym)
    if eig[0] <= 1e-14 * max(1.0, abs(eig[-1])):
        raise NotPositiveDefinite(f"symbol is degenerate (smallest eigenvalue {eig[0]:.3g})")
    return sym


def generator_coefficients(metric, family, p, chart=0):
    """Second- and first-order coefficients of the limit generator at ``p`` by quadrature."""
    p = np.asarray(p, dtype=float)
    mu, rule = _rule_about_mean(metric, family, p, chart)
    v = rule.nodes - mu
    sym = 0.5 * np.einsum("q,qi,qj->ij", rule.weights, v, v)
    keep = np.linalg.norm(v, axis=-1) >= GAMMA_EXCLUSION
    acc = np.zeros_like(v)
    if keep.any():
        acc[keep] = spray(metric, np.broadcast_to(p, v[keep].shape), v[keep], chart)
    first = mu - 0.5 * rule.weights @ acc
    return GeneratorEstimate(p.copy(), int(chart), sym, first, sym.copy(), mu)


def apply_A(metric, family, f, p, chart=0):
    """Limit generator applied to ``f`` at ``p``."""
    return generator_coefficients(metric, family, p, chart).apply(f)


def _parse_mode(mode):
    if isinstance(mode, str):
        if mode == "quadrature":
            return "quadrature", None
        if mode.startswith("mc"):
            n = mode.split(":")[1] if ":" in mode else mode[mode.index("(") + 1 : mode.index(")")]
            return "mc", int(n)
    if isinstance(mode, tuple):
        return mode[0], int(mode[1])
    raise ValueError(f"unknown mode {mode!r}")


def apply_AN(metric, family, f, p, N, mode="quadrature", chart=0, h_ode=0.01, rng=None, alpha=1.0):
    """``N (P^N f(p) - f(p))`` for the one-step kernel of the rescaled walk.

    Quadrature mode returns a float. ``mode=("mc", n)`` draws ``n`` steps and
    returns ``(value, standard_error)``.
    """
    p = np.asarray(p, dtype=float)
    kind, n = _parse_mode(mode)
    mu = np.asarray(family.mean(metric, p, chart), dtype=float)
    f0 = float(f.value(p, chart))
    if kind == "quadrature":
        center = mu - alpha * mu / math.sqrt(N) if isinstance(family, LebesgueDisc) else None
        rule = family.quadrature(metric, p, chart, center)
        Y = rule.nodes
    else:
        Y = family.sample(metric, np.broadcast_to(p, (n, p.size)), as_stream(rng, n), chart)
    w = (Y - mu) / math.sqrt(N) + alpha * mu / N
    c, q = exp_map(metric, np.broadcast_to(p, w.shape), w, h_ode, chart)
    diff = f.value(q, c) - f0
    if kind == "quadrature":
        return float(N * (rule.weights @ diff))
    vals = N * diff
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


@dataclass
class AssociatedMetric:
    """Riemannian metric whose co-metric equals the generator symbol."""

    cometric: np.ndarray
    metric: np.ndarray


def associated_metric(symbols):
    """Co-metric ``g_A^{-1} := sigma(A)`` and its inverse, for one symbol or a grid of them."""
    sym = np.array(symbols, dtype=float, copy=True)
    eig = np.linalg.eigvalsh(sym)
    if np.any(eig[..., 0] <= 0):
        raise NotPositiveDefinite("symbol field is not positive definite")
    return AssociatedMetric(sym, np.linalg.inv(sym))


def laplacian_first_order(metric, family, p, chart=0, h=X_STEP):
    """First-order coefficients ``-sigma^{ij} Gamma(g_A)^k_ij`` of the Laplacian of ``g_A``."""
    p = np.asarray(p, dtype=float)
    atlas = metric.atlas
    m = p.size
    if not np.all(atlas.in_domain(chart, p, margin=2 * h)):
        raise StencilLeftChart("finite-difference stencil leaves the chart")
    sig = symbol(metric, family, p, chart)
    G = np.linalg.inv(sig)
    dG = np.empty((m, m, m))
    for s in range(m):
        e = np.zeros(m)
        e[s] = h
        dsig = (symbol(metric, family, p + e, chart) - symbol(metric, family, p - e, chart)) / (2 * h)
        dG[s] = -G @ dsig @ G
    gam = _christoffel_from(G, dG)
    return -np.einsum("ij,kij->k", sig, gam)


def drift(metric, family, p, chart=0, h=X_STEP, atlas=None):
    """Drift ``A - Laplacian(g_A)`` as a coefficient vector at ``p``."""
    est = generator_coefficients(metric, family, p, chart)
    return est.first_order - laplacian_first_order(metric, family, p, chart, h)


def generator_estimate(metric, family, p, chart=0, with_drift=True):
    est = generator_coefficients(metric, family, p, chart)
    if with_drift:
        est.drift = est.first_order - laplacian_first_order(metric, family, p, chart)
    return est


def katok_drift_closed_form(r, theta):
    """Closed-form drift of the Katok disc-measure diffusion in the ``(psi, theta)`` chart."""
    if not abs(r) < 1:
        raise ValueError("need |r| < 1")
    if not abs(theta) < math.pi / 2:
        raise ValueError("need |theta| < pi/2")
    c, s = math.cos(theta), math.sin(theta)
    rc2 = (r * c) ** 2
    return np.array([r, 0.25 * r * r * c * s * (rc2 - 2.0) / (1.0 - rc2) ** 2])


@dataclass
class MCEstimate:
    value: float
    se: float
    n: int

    def within(self, target, k=3.0, rel=0.0):
        return abs(self.value - target) <= max(k * self.se, rel * abs(target))


def mc_generator_estimate(values, f_p, t):
    """``(mean f(xi_t) - f(p)) / t`` with its standard error from per-path values."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if t <= 0:
        raise ValueError("t must be positive")
    diff = values - f_p
    se = float(diff.std(ddof=1) / math.sqrt(n) / t) if n > 1 else math.inf
    return MCEstimate(float(np.sum(diff) / n / t), se, n)


def simulate_generator(config, f, t, path_ids=None):
    """Monte Carlo ``A f(p)`` from subordinated paths started at ``config.start``."""
    from .walk import simulate_at_times

    c, x, _ = simulate_at_times(config, [t], path_ids)
    values = f.value(x[:, 0], c[:, 0])
    f_p = float(f.value(config.start, config.chart))
    return mc_generator_estimate(values, f_p, t)


def simulate_drift(config, reference, f, t, path_ids=None):
    """Common-random-number estimate of ``(A - A_ref) f(p)`` from paired walks.

    ``reference`` is a walk config with the same seed whose limit generator
    is the Laplacian of ``g_A``; pairing the walks cancels most of the
    diffusive noise.
    """
    from .walk import simulate_at_times

    c1, x1, n1 = simulate_at_times(config, [t], path_ids)
    c0, x0, n0 = simulate_at_times(reference, [t], path_ids)
    if not np.array_equal(n0, n1):
        raise ValueError("paired walks must share the Poisson clock (same seed)")
    diff = f.value(x1[:, 0], c1[:, 0]) - f.value(x0[:, 0], c0[:, 0])
    return mc_generator_estimate(diff, 0.0, t)


@dataclass
class ConvergenceTable:
    Ns: np.ndarray
    errors: np.ndarray
    slope: float
    probe_errors: np.ndarray
    exact: np.ndarray

    def rows(self):
        return [(float(N), float(e)) for N, e in zip(self.Ns, self.errors)]


def convergence_study(metric, family, f, probes, Ns, h_ode=0.01, alpha=1.0):
    """``sup_probes |A_N f - A f|`` over a geometric grid of ``N`` and the log-log slope."""
    Ns = np.asarray(sorted(Ns), dtype=float)
    if len(Ns) < 3:
        raise ValueError("need at least three values of N")
    ratios = Ns[1:] / Ns[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("values of N must form a geometric progression")
    exact = np.array([apply_A(metric, family, f, x, c) for c, x in probes])
    errs = np.empty((len(Ns), len(probes)))
    for i, N in enumerate(Ns):
        for j, (c, x) in enumerate(probes):
            errs[i, j] = abs(apply_AN(metric, family, f, x, N, "quadrature", c, h_ode, alpha=alpha) - exact[j])
    sup = errs.max(axis=1)
    with np.errstate(divide="ignore"):
        logs = np.log(sup)
    slope = float(np.polyfit(np.log(Ns), logs, 1)[0]) if np.all(np.isfinite(logs)) else float("nan")
    return ConvergenceTable(Ns, sup, slope, errs, exact)


@dataclass
class ExitTable:
    rows: list
    fits: dict

    def probabilities(self, delta):
        return [r for r in self.rows if r["delta"] == delta]


def wilson_interval(k, n, level=0.95):
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def exit_time_study(config, deltas, ts, distance=None, center=None, center_chart=None, level=0.95):
    """Empirical ``P(tau^{N, delta} <= t)`` with Wilson intervals and a through-origin fit per ``delta``."""
    from .walk import distance_for, simulate_exit_times

    distance = distance or distance_for(config.metric)
    center = config.start if center is None else np.asarray(center, dtype=float)
    center_chart = config.chart if center_chart is None else center_chart
    ts = np.asarray(sorted(ts), dtype=float)
    horizon = float(ts.max())
    rows = []
    fits = {}
    for delta in sorted(deltas):
        tau = simulate_exit_times(config, center, delta, horizon, distance, center_chart)
        n = len(tau)
        ps = []
        for t in ts:
            k = int(np.count_nonzero(tau <= t))
            lo, hi = wilson_interval(k, n, level)
            p_hat = k / n
            row = {"delta": float(delta), "t": float(t), "n": n, "count": k, "p": p_hat, "lo": lo, "hi": hi}
            if t > 0:
                row.update(ratio=p_hat / t, ratio_lo=lo / t, ratio_hi=hi / t)
            else:
                row.update(ratio=float("nan"), ratio_lo=float("nan"), ratio_hi=float("nan"))
            rows.append(row)
            ps.append(p_hat)
        ps = np.array(ps)
        pos = ts > 0
        C = float(np.sum(ts[pos] * ps[pos]) / np.sum(ts[pos] ** 2)) if pos.any() else float("nan")
        fits[float(delta)] = C
    return ExitTable(rows, fits)
