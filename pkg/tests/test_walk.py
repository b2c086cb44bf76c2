import io
import math

import numpy as np
import pytest

from finslerwalk import zoo
from finslerwalk.errors import InsufficientSteps, OutOfHorizon
from finslerwalk.geodesics import exp_map, geodesic_flow
from finslerwalk.measures import LebesgueDisc, biased_coin, point_mass
from finslerwalk.walk import (
    WalkConfig,
    distance_for,
    exit_time,
    interpolate,
    jump_times,
    run_discrete,
    simulate_at_times,
    simulate_discrete,
    simulate_exit_times,
    subordinate,
    subordinate_config,
    walk_step,
    write_paths_csv,
)


def katok_config(**kw):
    base = dict(metric=zoo.katok(0.5), family=LebesgueDisc(), start=[0.2, 0.3], N=100, seed=1, n_paths=4)
    base.update(kw)
    return WalkConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        katok_config(N=0.5)
    with pytest.raises(ValueError):
        katok_config(h_ode=0)
    with pytest.raises(ValueError):
        katok_config(start=[0.0, 0.0, 0.0])
    assert katok_config().steps_for_horizon(1.0) == math.ceil(1.1 * (100 + 40)) + 1


def test_zero_steps_is_a_single_record():
    path = run_discrete(katok_config(), 0, n_steps=0)
    assert len(path) == 1 and np.array_equal(path.x[0], [0.2, 0.3])


def test_point_mass_step_on_the_plane():
    e = zoo.euclidean(2)
    c, q, inc = walk_step(e, point_mass([0.3, -0.1]), np.array([1.0, 1.0]), 1, np.random.default_rng(0))
    assert np.allclose(q, [1.3, 0.9])


def test_step_displacement_bound():
    e = zoo.euclidean(2)
    fam = LebesgueDisc()
    for N in (1, 10, 1000):
        ens = simulate_discrete(WalkConfig(metric=e, family=fam, start=[0.0, 0.0], N=N, seed=2, n_paths=200), 5)
        step = np.linalg.norm(np.diff(ens.x, axis=1), axis=-1)
        assert np.all(step <= 1 / np.sqrt(N) + 1e-12)


def test_katok_walk_stays_on_the_sphere():
    cfg = katok_config(N=50, n_paths=100)
    ens = simulate_discrete(cfg, 100)
    atlas = cfg.metric.atlas
    pts = atlas.embed(ens.chart, ens.x)
    assert np.allclose(np.linalg.norm(pts, axis=-1), 1.0, atol=1e-12)
    assert np.all(np.abs(ens.x[..., 1]) <= atlas.switch_theta + 1e-12)
    # one-step jumps are of size O(1/sqrt(N)) on the sphere
    jumps = np.linalg.norm(np.diff(pts, axis=1), axis=-1)
    assert jumps.max() <= (1 + 0.5) / np.sqrt(50) + 0.5 / 50


def test_chain_consistency():
    cfg = katok_config(N=30, n_paths=5)
    ens = simulate_discrete(cfg, 10)
    for i in range(5):
        c, q = exp_map(cfg.metric, ens.x[i, :-1], ens.increments[i], cfg.h_ode, ens.chart[i, :-1])
        assert np.array_equal(c, ens.chart[i, 1:])
        assert np.max(np.abs(q - ens.x[i, 1:])) <= 1e-9


def test_degenerate_family_is_deterministic():
    e = zoo.euclidean(2)
    v = np.array([0.4, 0.2])
    ens = simulate_discrete(WalkConfig(metric=e, family=point_mass(v), start=[0.0, 0.0], N=8, seed=3, n_paths=3), 16)
    expected = np.arange(17)[:, None] * v / 8
    assert np.allclose(ens.x, expected[None], atol=1e-14)


def test_determinism_across_threads_and_subsets():
    cfg = dict(metric=zoo.katok(0.5), family=LebesgueDisc(), start=[0.0, 0.9], N=20, seed=11, n_paths=12)
    a = simulate_discrete(WalkConfig(**cfg), 15)
    b = simulate_discrete(WalkConfig(threads=4, **cfg), 15)
    c = simulate_discrete(WalkConfig(**cfg), 15, path_ids=[3])
    assert np.array_equal(a.x, b.x) and np.array_equal(a.chart, b.chart)
    assert np.array_equal(a.x[3], c.x[0])
    d = simulate_discrete(WalkConfig(**dict(cfg, seed=12)), 15)
    assert not np.array_equal(a.x, d.x)


def test_subordination_zero_horizon():
    cfg = katok_config()
    path = subordinate(run_discrete(cfg, 0, 5), cfg.N, 0.0, cfg.seed)
    assert np.all(path.x == path.x[0]) and path.t[-1] == 0.0


def test_subordinated_path_structure():
    cfg = katok_config(N=50)
    path = subordinate_config(cfg, 1, horizon=1.0)
    jumps = path.t[1:-1]
    assert np.all(np.diff(jumps) > 0)
    assert np.array_equal(jumps, jump_times(cfg.seed, 1, cfg.N, 1.0))
    # constant between jumps, right-continuous at jumps
    mid = 0.5 * (path.t[1:-2] + path.t[2:-1])
    _, xm = path.at(mid)
    assert np.array_equal(xm, path.x[1:-2])
    _, xj = path.at(jumps)
    assert np.array_equal(xj, path.x[1:-1])


def test_subordination_needs_steps():
    cfg = katok_config(N=100)
    short = run_discrete(cfg, 0, 3)
    with pytest.raises(InsufficientSteps):
        subordinate(short, cfg.N, 1.0, cfg.seed)
    longer = subordinate(short, cfg.N, 1.0, cfg.seed, regenerate=lambda n: run_discrete(cfg, 0, n))
    assert len(longer) > 10


def test_simulate_at_times_matches_subordinate():
    cfg = katok_config(N=40, n_paths=3)
    times = [0.0, 0.05, 0.3]
    charts, xs, counts = simulate_at_times(cfg, times)
    for i in range(3):
        c, x = subordinate_config(cfg, i, horizon=0.3).at(times)
        assert np.array_equal(c, charts[i]) and np.array_equal(x, xs[i])


def test_interpolation_hits_the_chain_and_lies_on_geodesics():
    cfg = katok_config(N=10)
    path = run_discrete(cfg, 0, 4)
    at_nodes = interpolate(path, cfg.N, np.arange(5) / 10, cfg.metric, 1e-3)
    assert np.allclose(at_nodes.x, path.x, atol=1e-9)
    # ten interior times of slab 1 lie on the stored geodesic segment
    s = np.linspace(0.05, 0.95, 10)
    mid = interpolate(path, cfg.N, (1 + s) / 10, cfg.metric, 1e-3)
    tr = geodesic_flow(cfg.metric, path.x[1], path.increments[1], 1.0, h_ode=1e-3, chart=path.chart[1])
    atlas = cfg.metric.atlas
    ref = atlas.embed(tr.chart[np.rint(s * 1000).astype(int)], tr.x[np.rint(s * 1000).astype(int)])
    assert np.allclose(atlas.embed(mid.chart, mid.x), ref, atol=1e-9)
    with pytest.raises(OutOfHorizon):
        interpolate(path, cfg.N, [0.5], cfg.metric)


def test_euclidean_interpolation_is_piecewise_linear():
    e = zoo.euclidean(2)
    cfg = WalkConfig(metric=e, family=LebesgueDisc(), start=[0.0, 0.0], N=5, seed=4)
    path = run_discrete(cfg, 0, 3)
    t = np.array([0.07, 0.33, 0.5])
    k = np.floor(t * 5).astype(int)
    lin = path.x[k] + (t * 5 - k)[:, None] * (path.x[k + 1] - path.x[k])
    assert np.allclose(interpolate(path, 5, t, e).x, lin, atol=1e-14)


def test_exit_time_examples():
    e = zoo.euclidean(2)
    dist = distance_for(e)
    still = run_discrete(WalkConfig(metric=e, family=point_mass([0.0, 0.0]), start=[0.0, 0.0], N=10), 0, 20)
    assert exit_time(still, [0.0, 0.0], 0.1, dist) == math.inf
    # deterministic unit drift: the 0.3-ball is left at step k with k/N > 0.3,
    # so the exit time is the k-th clock arrival, whose mean is k/N
    cfg = WalkConfig(metric=e, family=point_mass([1.0, 0.0]), start=[0.0, 0.0], N=100, seed=5, n_paths=200)
    tau = simulate_exit_times(cfg, [0.0, 0.0], 0.3, 2.0, dist)
    chain = run_discrete(cfg, 0, 40)
    k = int(np.argmax(np.linalg.norm(chain.x, axis=-1) > 0.3))
    assert 30 <= k <= 31
    for i in range(5):
        assert tau[i] == jump_times(cfg.seed, i, cfg.N, 2.0)[k - 1]
    assert abs(tau.mean() - k / cfg.N) <= 3 * np.sqrt(k) / cfg.N / np.sqrt(len(tau))


def test_exit_probability_monotone():
    cfg = WalkConfig(metric=zoo.round_sphere(), family=LebesgueDisc(), start=[0.0, 0.0], N=50, seed=6, n_paths=2000)
    dist = distance_for(cfg.metric)
    t_small = simulate_exit_times(cfg, [0.0, 0.0], 0.15, 0.2, dist)
    t_big = simulate_exit_times(cfg, [0.0, 0.0], 0.3, 0.2, dist)
    assert np.all(t_big >= t_small)
    probs = [np.mean(t_small <= t) for t in (0.02, 0.05, 0.1, 0.2)]
    assert probs == sorted(probs)


def test_subordinated_and_discrete_agree_in_mean():
    line = zoo.euclidean(1)
    cfg = WalkConfig(metric=line, family=biased_coin(), start=[0.0], N=50, seed=7, n_paths=40_000)
    _, xs, _ = simulate_at_times(cfg, [1.0])
    zeta = simulate_discrete(cfg, 50).x[:, -1, 0]
    xi = xs[:, 0, 0]
    se = np.hypot(xi.std(), zeta.std()) / np.sqrt(len(xi))
    assert abs(xi.mean() - zeta.mean()) <= 4 * se


def test_csv_export():
    cfg = katok_config(n_paths=2)
    paths = simulate_discrete(cfg, 2).paths()
    out = io.StringIO()
    write_paths_csv(paths, out, ["seed: 1"])
    lines = out.getvalue().splitlines()
    assert lines[0] == "# seed: 1"
    assert lines[1] == "path_id,kind,t,chart,x0,x1"
    assert len(lines) == 2 + 2 * 3
