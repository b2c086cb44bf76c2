"""Rescaled geodesic random walks, their Poisson subordination and interpolation.

Randomness comes from counter streams keyed by ``(seed, path id, step)``, so
a path is identical whether it is simulated alone, in a batch, or in a
thread pool of any size.
"""
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSteps, OutOfHorizon
from .geodesics import exp_map
from .measures import rescale
from .rng import CounterStream, clock_arrivals

KINDS = ("discrete", "subordinated", "interpolated")


@dataclass
class WalkConfig:
    metric: object
    family: object
    start: np.ndarray
    N: float = 100
    chart: int = 0
    n_steps: int = None
    horizon: float = None
    h_ode: float = 0.05
    seed: int = 0
    n_paths: int = 1
    alpha: float = 1.0
    threads: int = 1
    regenerate: bool = True

    def __post_init__(self):
        self.start = np.atleast_1d(np.asarray(self.start, dtype=float))
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.h_ode <= 0:
            raise ValueError("h_ode must be positive")
        if self.start.shape[-1] != self.metric.dim:
            raise ValueError(f"start point has {self.start.shape[-1]} coordinates, metric has dimension {self.metric.dim}")

    def steps_for_horizon(self, horizon=None):
        """Chain length that covers Poisson fluctuations over ``horizon`` with margin."""
        T = self.horizon if horizon is None else horizon
        if T is None:
            return int(self.n_steps or 0)
        lam = self.N * T
        return int(math.ceil(1.1 * (math.ceil(lam) + 4.0 * math.sqrt(lam)))) + 1


@dataclass
class WalkPath:
    """One realization. ``t`` is the record time; ``increments[k]`` moves record ``k`` to ``k + 1``."""

    kind: str
    t: np.ndarray
    chart: np.ndarray
    x: np.ndarray
    N: float
    path_id: int = 0
    increments: np.ndarray = None
    jump_index: np.ndarray = None

    def __len__(self):
        return len(self.t)

    def at(self, times):
        """State of a right-continuous step path at the given times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        idx = np.searchsorted(self.t, times, side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 1)
        return self.chart[idx], self.x[idx]

    def rows(self):
        for i in range(len(self.t)):
            yield [self.path_id, self.kind, repr(float(self.t[i])), int(self.chart[i])] + [repr(float(v)) for v in self.x[i]]


@dataclass
class PathEnsemble:
    """Discrete chains for many paths stored as arrays."""

    chart: np.ndarray
    x: np.ndarray
    increments: np.ndarray
    path_ids: np.ndarray
    N: float
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.x.shape[1] - 1

    def path(self, i):
        n = self.n_steps
        return WalkPath(
            "discrete",
            np.arange(n + 1) / self.N,
            self.chart[i].copy(),
            self.x[i].copy(),
            self.N,
            int(self.path_ids[i]),
            self.increments[i].copy(),
        )

    def paths(self):
        return [self.path(i) for i in range(len(self.path_ids))]


def walk_step(metric, family, p, N, rng, h_ode=0.05, chart=0, alpha=1.0):
    """One step of the rescaled walk from ``p`` (single point or batch).

    Returns ``(chart, point, increment)`` where ``increment`` is the rescaled
    tangent vector that ``exp`` was applied to.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[None, :] if single else p
    charts = np.broadcast_to(np.asarray(chart), pts.shape[:-1])
    Y = family.sample(metric, pts, _stream(rng, len(pts)), charts)
    mu = family.mean(metric, pts, charts)
    inc = rescale(Y, mu, N, alpha)
    c, x = exp_map(metric, pts, inc, h_ode, charts)
    if single:
        return int(c[0]), x[0], inc[0]
    return c, x, inc


def _stream(rng, n):
    from .rng import as_stream

    return as_stream(rng, n)


def _advance(config, chart, x, path_ids, step):
    stream = CounterStream(config.seed, path_ids, step, "walk")
    Y = config.family.sample(config.metric, x, stream, chart)
    mu = config.family.mean(config.metric, x, chart)
    inc = rescale(Y, mu, config.N, config.alpha)
    c, xn = exp_map(config.metric, x, inc, config.h_ode, chart)
    return c, xn, inc


def _start(config, n):
    c, x = config.metric.atlas.transition(config.chart, config.start)
    c = np.full(n, int(np.asarray(c).reshape(-1)[0]), dtype=np.int64)
    x = np.broadcast_to(np.asarray(x, dtype=float).reshape(-1), (n, config.metric.dim)).copy()
    return c, x


def _chunked(config, path_ids, func):
    path_ids = np.asarray(path_ids, dtype=np.int64)
    threads = max(1, int(config.threads))
    if threads == 1 or len(path_ids) < 2 * threads:
        return [func(path_ids)]
    chunks = np.array_split(path_ids, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, chunks))


def simulate_discrete(config, n_steps=None, path_ids=None):
    """Discrete chains ``zeta^N`` for ``path_ids`` (default ``0 .. n_paths-1``)."""
    n_steps = config.steps_for_horizon() if n_steps is None else int(n_steps)
    if path_ids is None:
        path_ids = np.arange(config.n_paths)
    m = config.metric.dim

    def run(ids):
        n = len(ids)
        charts = np.empty((n, n_steps + 1), dtype=np.int64)
        xs = np.empty((n, n_steps + 1, m))
        incs = np.empty((n, n_steps, m))
        c, x = _start(config, n)
        charts[:, 0], xs[:, 0] = c, x
        for k in range(n_steps):
            c, x, inc = _advance(config, c, x, ids, k)
            charts[:, k + 1], xs[:, k + 1], incs[:, k] = c, x, inc
        return charts, xs, incs

    parts = _chunked(config, path_ids, run)
    return PathEnsemble(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.asarray(path_ids, dtype=np.int64),
        config.N,
        config.seed,
    )


def run_discrete(config, path_id=0, n_steps=None):
    """The discrete walk ``zeta^N`` of one path."""
    return simulate_discrete(config, n_steps, [path_id]).path(0)


def jump_times(seed, path_id, N, horizon):
    times, counts = clock_arrivals(seed, [path_id], horizon, N)
    return times[0, : counts[0]]


def subordinate(path, N, horizon, seed=0, regenerate=None):
    """Pseudo-Poisson process ``xi_t = zeta_{Q(N t)}`` on ``[0, horizon]``.

    Records sit at ``t = 0``, at each jump time, and a closing record at
    ``horizon``. ``regenerate(n_steps)`` may return a longer discrete path
    when the supplied one runs out of steps.
    """
    times = jump_times(seed, path.path_id, N, horizon) if horizon > 0 else np.zeros(0)
    k = len(times)
    if k > len(path.t) - 1:
        if regenerate is None:
            raise InsufficientSteps(f"path has {len(path.t) - 1} steps, clock needs {k}")
        path = regenerate(k)
    idx = np.arange(k + 1)
    t = np.concatenate([[0.0], times, [horizon]])
    idx = np.concatenate([idx, [k]])
    return WalkPath(
        "subordinated", t, path.chart[idx].copy(), path.x[idx].copy(), N, path.path_id, jump_index=idx
    )


def subordinate_config(config, path_id=0, horizon=None):
    horizon = config.horizon if horizon is None else horizon
    path = run_discrete(config, path_id, config.steps_for_horizon(horizon))

    def regen(n):
        return run_discrete(config, path_id, int(n * 1.1) + 1)

    return subordinate(path, config.N, horizon, config.seed, regen if config.regenerate else None)


def interpolate(path, N, times, metric, h_ode=0.01):
    """Piecewise-geodesic interpolation ``xi-hat`` of a discrete path at ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n = len(path.t) - 1
    if np.any(times < 0) or np.any(times > n / N + 1e-12):
        raise OutOfHorizon(f"query times must lie in [0, {n / N}]")
    if n == 0:
        k = np.zeros(len(times), dtype=int)
        return WalkPath("interpolated", times, path.chart[k], path.x[k], N, path.path_id)
    k = np.minimum(np.floor(times * N + 1e-12).astype(int), n - 1)
    s = np.clip(times * N - k, 0.0, 1.0)
    vec = s[:, None] * path.increments[k]
    c, x = exp_map(metric, path.x[k], vec, h_ode, path.chart[k])
    return WalkPath("interpolated", times, np.asarray(c), x, N, path.path_id)


def simulate_at_times(config, times, path_ids=None):
    """States ``xi^N_t`` of the subordinated walk at each of ``times`` for every path.

    Returns ``(charts, points, counts)`` with shapes ``(P, len(times))``,
    ``(P, len(times), m)`` and ``(P, len(times))``. Consistent with
    :func:`subordinate` on the same seed and path id.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if path_ids is None:
        path_ids = np.arange(config.n_paths)
    horizon = float(times.max()) if times.size else 0.0
    m = config.metric.dim

    def run(ids):
        n = len(ids)
        arrivals, _ = clock_arrivals(config.seed, ids, horizon, config.N)
        counts = np.stack([(arrivals <= t).sum(axis=1) for t in times], axis=1) if arrivals.size else np.zeros((n, len(times)), dtype=int)
        charts = np.empty((n, len(times)), dtype=np.int64)
        xs = np.empty((n, len(times), m))
        c, x = _start(config, n)
        k_max = int(counts.max()) if counts.size else 0
        for j in range(len(times)):
            hit = counts[:, j] == 0
            charts[hit, j], xs[hit, j] = c[hit], x[hit]
        for k in range(k_max):
            active = counts.max(axis=1) > k
            idx = np.nonzero(active)[0]
            cn, xn, _ = _advance(config, c[idx], x[idx], ids[idx], k)
            c[idx], x[idx] = cn, xn
            for j in range(len(times)):
                hit = counts[:, j] == k + 1
                charts[hit, j], xs[hit, j] = c[hit], x[hit]
        return charts, xs, counts

    parts = _chunked(config, path_ids, run)
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


def exit_time(path, center, delta, distance, center_chart=0):
    """First record time at which ``distance(center, path) > delta``; ``inf`` if never."""
    d = distance(center_chart, np.asarray(center, dtype=float), path.chart, path.x)
    out = np.nonzero(d > delta)[0]
    return float(path.t[out[0]]) if out.size else math.inf


def simulate_exit_times(config, center, delta, horizon, distance, center_chart=0, path_ids=None):
    """First exit times of ``xi^N`` from the ``delta``-ball, detected at jump times."""
    if path_ids is None:
        path_ids = np.arange(config.n_paths)
    center = np.asarray(center, dtype=float)

    def run(ids):
        n = len(ids)
        arrivals, counts = clock_arrivals(config.seed, ids, horizon, config.N)
        tau = np.full(n, np.inf)
        c, x = _start(config, n)
        d0 = distance(center_chart, center, c, x)
        tau[d0 > delta] = 0.0
        for k in range(arrivals.shape[1]):
            active = (counts > k) & np.isinf(tau)
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            cn, xn, _ = _advance(config, c[idx], x[idx], ids[idx], k)
            c[idx], x[idx] = cn, xn
            out = distance(center_chart, center, cn, xn) > delta
            tau[idx[out]] = arrivals[idx[out], k]
        return tau

    return np.concatenate(_chunked(config, path_ids, run))


def distance_for(metric):
    """A vectorized ``distance(chart_a, xa, chart_b, xb)`` suited to ``metric``."""
    from .geodesics import navigation_distance, round_sphere_distance, symmetrized_distance
    from .zoo import EuclideanMetric

    atlas = metric.atlas
    if isinstance(metric, EuclideanMetric):
        return lambda ca, xa, cb, xb: metric.scale * np.linalg.norm(np.asarray(xb) - np.asarray(xa), axis=-1)
    if metric.name == "sphere" or (metric.name == "katok" and metric.params.get("r") == 0):
        return lambda ca, xa, cb, xb: round_sphere_distance(atlas, ca, xa, cb, xb)
    if metric.name == "katok" or (metric.name == "zermelo" and getattr(metric, "is_flat", False)):
        # symmetrized like the shooting fallback: the larger of the two one-way distances
        return lambda ca, xa, cb, xb: np.maximum(
            navigation_distance(metric, ca, xa, cb, xb), navigation_distance(metric, cb, xb, ca, xa)
        )

    def shooting(ca, xa, cb, xb):
        cb = np.broadcast_to(np.asarray(cb), np.shape(xb)[:-1])
        flat_c = cb.reshape(-1)
        flat_x = np.asarray(xb, dtype=float).reshape(-1, metric.dim)
        out = np.empty(len(flat_x))
        for i, (c, q) in enumerate(zip(flat_c, flat_x)):
            if c != ca:
                q = atlas.change_chart(c, q, ca)
            out[i] = symmetrized_distance(metric, xa, q, ca)
        return out.reshape(cb.shape)

    return shooting


def write_paths_csv(paths, fh, header_lines=()):
    """Comma-separated ``path_id, kind, t, chart, x0, ...`` records."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    m = paths[0].x.shape[-1] if paths else 0
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["path_id", "kind", "t", "chart"] + [f"x{i}" for i in range(m)])
    for p in paths:
        for row in p.rows():
            writer.writerow(row)


def paths_to_csv(paths, header_lines=()):
    out = io.StringIO()
    write_paths_csv(paths, out, header_lines)
    return out.getvalue()
