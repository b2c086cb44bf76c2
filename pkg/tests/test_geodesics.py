import numpy as np
import pytest

from finslerwalk import geodesics, zoo
from finslerwalk.errors import EnergyDriftExceeded, ShootingDiverged
from finslerwalk.geodesics import asymmetric_distance, exp_map, exp_path, geodesic_flow, symmetrized_distance


def test_euclidean_straight_line():
    tr = geodesic_flow(zoo.euclidean(2), [0.0, 0.0], [1.0, 0.0], 1.0, h_ode=0.1)
    assert np.allclose(tr.x[-1], [1.0, 0.0], atol=1e-15)
    assert np.allclose(tr.x[:, 1], 0.0)
    assert np.allclose(np.diff(tr.t), 0.1) and tr.t[-1] == 1.0


def test_quarter_great_circle_reaches_the_pole():
    s = zoo.round_sphere()
    tr = geodesic_flow(s, [0.0, 0.0], [0.0, 1.0], np.pi / 2, h_ode=1e-3)
    c, x = tr.endpoint
    assert np.allclose(s.atlas.embed(c, x), [0.0, 0.0, 1.0], atol=1e-10)
    # oracle: explicit great circle in R^3
    pts = s.atlas.embed(tr.chart, tr.x)
    assert np.allclose(pts, np.stack([np.cos(tr.t), 0 * tr.t, np.sin(tr.t)], axis=-1), atol=1e-10)


def test_exp_map_examples():
    s = zoo.round_sphere()
    p = np.array([0.3, -0.2])
    assert np.array_equal(exp_map(s, p, np.zeros(2))[1], p)
    assert np.allclose(exp_map(zoo.euclidean(2), p, [1.0, 2.0])[1], p + [1.0, 2.0])
    c, q = exp_map(s, [0.0, 0.0], [0.0, np.pi / 2], h_ode=1e-3)
    assert np.allclose(s.atlas.embed(c, q), [0.0, 0.0, 1.0], atol=1e-10)


def test_exp_map_batch_matches_single():
    k = zoo.katok(0.5)
    p = np.array([[0.1, 0.2], [1.0, 0.9], [-2.0, -0.3]])
    Y = np.array([[0.01, 0.02], [0.4, 0.3], [-0.05, 0.0]])
    c, q = exp_map(k, p, Y, 0.01)
    for i in range(3):
        ci, qi = exp_map(k, p[i], Y[i], 0.01)
        assert ci == c[i] and np.array_equal(qi, q[i])


def test_reparametrization_matches_flow():
    k = zoo.katok(0.5)
    p, Y = np.array([0.2, 0.1]), np.array([0.5, 0.7])
    tr = geodesic_flow(k, p, Y, 1.0, h_ode=1e-3)
    s = np.array([0.25, 0.5, 1.0])
    c, q = exp_path(k, p, Y, s, h_ode=1e-3)
    for j, sj in enumerate(s):
        i = int(round(sj * 1000))
        assert np.allclose(k.atlas.embed(c[j], q[j]), k.atlas.embed(tr.chart[i], tr.x[i]), atol=1e-9)


def test_energy_check_raises_for_coarse_steps():
    with pytest.raises(EnergyDriftExceeded):
        geodesic_flow(zoo.katok(0.5), [0.0, 0.5], [3.0, 1.0], 3.0, h_ode=0.5, tol_energy=1e-12)


def test_speed_conserved_with_small_steps():
    tr = geodesic_flow(zoo.katok(0.5), [0.0, 0.5], [0.3, 0.8], 1.0, h_ode=1e-3, tol_energy=1e-8)
    assert np.max(np.abs(tr.speed - tr.speed[0])) <= 1e-8


def test_trajectory_csv():
    tr = geodesic_flow(zoo.euclidean(2), [0.0, 0.0], [1.0, 0.0], 0.5, h_ode=0.25)
    text = tr.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "t,chart,x0,x1,y0,y1,F"
    assert len(lines) == 4 and lines[-1].startswith("0.5,0,0.5,0.0")


def test_distance_examples():
    e = zoo.euclidean(2)
    assert symmetrized_distance(e, [0.0, 0.0], [0.0, 0.0]) == 0.0
    assert symmetrized_distance(e, [0.0, 0.0], [0.3, 0.4]) == pytest.approx(0.5, abs=1e-9)


def test_katok_asymmetric_distance():
    r = 0.5
    k = zoo.katok(r)
    p, q = np.array([0.0, 0.0]), np.array([0.1, 0.0])
    # oracle: the rotated great circle along the equator moves at ground speed 1 + r (with) or 1 - r (against)
    fwd = asymmetric_distance(k, p, q)
    back = asymmetric_distance(k, q, p)
    assert fwd == pytest.approx(0.1 / (1 + r), abs=1e-7)
    assert back == pytest.approx(0.1 / (1 - r), abs=1e-7)
    d = symmetrized_distance(k, p, q)
    assert d == pytest.approx(max(fwd, back)) and d > min(fwd, back)


def test_shooting_refuses_far_points():
    with pytest.raises(ShootingDiverged):
        asymmetric_distance(zoo.katok(0.5), [0.0, 0.0], [1.0, 0.0])


def test_round_sphere_distance():
    s = zoo.round_sphere()
    assert geodesics.round_sphere_distance(s.atlas, 0, [0.0, 0.0], 0, [0.5, 0.0]) == pytest.approx(0.5)


def test_navigation_distance_matches_exp_map():
    k = zoo.katok(0.5)
    rng = np.random.default_rng(8)
    xs = np.stack([rng.uniform(-2, 2, 6), rng.uniform(-0.8, 0.8, 6)], axis=-1)
    vs = rng.normal(0, 0.15, (6, 2))
    charts, ends = exp_map(k, xs, vs, h_ode=1e-3)
    d = geodesics.navigation_distance(k, 0, xs, charts, ends)
    assert np.allclose(d, k.F(xs, vs), atol=1e-9)


def test_navigation_distance_flat_closed_form():
    w = np.array([0.3, -0.4])
    z = zoo.constant_wind(w)
    delta = np.array([[0.5, 0.2], [-1.0, 0.3], [0.0, 0.0]])
    # |delta - t w| = t  <=>  (1 - |w|^2) t^2 + 2 t (delta.w) - |delta|^2 = 0
    a, b, c = 1 - w @ w, 2 * delta @ w, -np.sum(delta**2, axis=-1)
    exact = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    assert np.allclose(geodesics.navigation_distance(z, 0, np.zeros(2), 0, delta), exact, atol=1e-12)


def test_navigation_distance_without_wind_is_great_circle():
    k = zoo.katok(0.0)
    d = geodesics.navigation_distance(k, 0, [0.1, 0.2], 1, [0.4, -0.3])
    assert d == pytest.approx(geodesics.round_sphere_distance(k.atlas, 0, [0.1, 0.2], 1, [0.4, -0.3]), abs=1e-12)
    with pytest.raises(ValueError):
        geodesics.navigation_distance(zoo.euclidean(2), 0, [0, 0], 0, [1, 0])


def test_navigation_distance_agrees_with_shooting():
    k = zoo.katok(0.5)
    p, q = np.array([1.0, 0.5]), np.array([1.1, 0.7])
    assert geodesics.navigation_distance(k, 0, p, 0, q) == pytest.approx(asymmetric_distance(k, p, q), abs=1e-9)
