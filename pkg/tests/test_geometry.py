import math

import numpy as np
import pytest

from kinoplan.errors import InvalidInputError
from planning.geometry.core import (
    Pose2D,
    Trajectory,
    VehicleModel,
    dubins_length,
    dubins_shortest,
    euler_step,
    integrate_kinematics,
    pose_at,
    resample_trajectory,
    rollout,
    sample_dubins,
    wrap_angle,
)

TWO_PI = 2.0 * math.pi


def _mod2pi(a):
    r = a % TWO_PI
    return 0.0 if r > TWO_PI - 1e-9 else r


def _circle(p, side, rho):
    s, c = math.sin(p[2]), math.cos(p[2])
    if side == "L":
        return np.array([p[0] - rho * s, p[1] + rho * c])
    return np.array([p[0] + rho * s, p[1] - rho * c])


def _oracle_length(p0, p1, rho):
    """Shortest Dubins length by tangent-line / tangent-circle construction."""
    best = math.inf
    for a, b in (("L", "L"), ("R", "R"), ("L", "R"), ("R", "L")):
        c1, c2 = _circle(p0, a, rho), _circle(p1, b, rho)
        v = c2 - c1
        dist = math.hypot(*v)
        ang = math.atan2(v[1], v[0])
        if a == b:
            s, h = dist, ang
        else:
            if dist < 2 * rho:
                continue
            s = math.sqrt(dist * dist - 4 * rho * rho)
            h = ang + math.atan2(2 * rho, s) if a == "L" else ang - math.atan2(2 * rho, s)
        arc1 = _mod2pi(h - p0[2]) if a == "L" else _mod2pi(p0[2] - h)
        arc2 = _mod2pi(p1[2] - h) if b == "L" else _mod2pi(h - p1[2])
        best = min(best, rho * (arc1 + arc2) + s)
    for side in ("L", "R"):
        c1, c2 = _circle(p0, side, rho), _circle(p1, side, rho)
        v = c2 - c1
        dist = math.hypot(*v)
        if dist > 4 * rho or dist < 1e-12:
            continue
        for sign in (1.0, -1.0):
            a = math.atan2(v[1], v[0]) + sign * math.acos(dist / (4 * rho))
            c3 = c1 + 2 * rho * np.array([math.cos(a), math.sin(a)])
            m1, m2 = 0.5 * (c1 + c3), 0.5 * (c3 + c2)
            off = -math.pi / 2 if side == "R" else math.pi / 2
            h1 = math.atan2(*(m1 - c1)[::-1]) + off
            h2 = math.atan2(*(m2 - c2)[::-1]) + off
            if side == "R":
                total = _mod2pi(p0[2] - h1) + _mod2pi(h2 - h1) + _mod2pi(h2 - p1[2])
            else:
                total = _mod2pi(h1 - p0[2]) + _mod2pi(h1 - h2) + _mod2pi(p1[2] - h2)
            best = min(best, rho * total)
    return best


def _random_pose(rng, span=6.0):
    return Pose2D.of(rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-math.pi, math.pi))


# ---- Pose2D / VehicleModel ----
def test_theta_is_wrapped_into_half_open_interval():
    assert Pose2D.of(0, 0, math.pi).theta == pytest.approx(-math.pi)
    assert Pose2D.of(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
    for a in np.linspace(-20, 20, 101):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi


def test_non_finite_pose_is_rejected():
    with pytest.raises(ValueError):
        Pose2D.of(float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        Pose2D.of(0.0, float("inf"), 0.0)


@pytest.mark.parametrize("kwargs", [{"speed_vs": 0.0}, {"wheelbase_d": -1.0}, {"max_steer_phi": math.pi / 2}])
def test_vehicle_model_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        VehicleModel(**kwargs)


def test_turning_radius_follows_wheelbase_and_max_steer():
    m = VehicleModel(wheelbase_d=0.3, max_steer_phi=0.5)
    assert m.rho == pytest.approx(0.3 / math.tan(0.5))


# ---- Kinematics ----
def test_straight_motion():
    m = VehicleModel(speed_vs=1.0)
    p = integrate_kinematics(Pose2D.of(0, 0, 0), m, 0.0, 2.0)
    assert (p.x, p.y, p.theta) == pytest.approx((2.0, 0.0, 0.0), abs=1e-12)
    q = integrate_kinematics(Pose2D.of(1, 1, math.pi / 2), m, 0.0, 1.0)
    assert (q.x, q.y, q.theta) == pytest.approx((1.0, 2.0, math.pi / 2), abs=1e-12)


def test_full_circle_returns_to_start():
    m = VehicleModel(speed_vs=1.0, wheelbase_d=0.3, max_steer_phi=0.5)
    phi = 0.4
    period = TWO_PI * m.wheelbase_d / (m.speed_vs * math.tan(phi))
    n = 2000
    poses = rollout(Pose2D.of(0, 0, 0), m, [phi] * n, period / n)
    end = poses[-1]
    assert math.hypot(end.x, end.y) < 1e-6
    assert abs(wrap_angle(end.theta)) < 1e-6


def test_rk4_is_fourth_order():
    m = VehicleModel(speed_vs=1.0, wheelbase_d=0.3, max_steer_phi=0.5)
    phi, T = 0.3, 2.0
    omega = m.yaw_rate(phi)
    exact = np.array([math.sin(omega * T) / omega, (1 - math.cos(omega * T)) / omega])

    def err(n):
        p = rollout(Pose2D.of(0, 0, 0), m, [phi] * n, T / n)[-1]
        return float(np.hypot(p.x - exact[0], p.y - exact[1]))

    assert err(10) / err(20) >= 8.0


def test_integration_rejects_bad_inputs():
    m = VehicleModel()
    with pytest.raises(InvalidInputError):
        integrate_kinematics(Pose2D.of(0, 0, 0), m, 0.0, 0.0)
    with pytest.raises(InvalidInputError):
        integrate_kinematics(Pose2D.of(0, 0, 0), m, m.max_steer_phi + 0.1, 0.1)
    with pytest.raises(InvalidInputError):
        integrate_kinematics(Pose2D.of(0, 0, 0), m, float("nan"), 0.1)


def test_euler_step_matches_first_order_update():
    m = VehicleModel(speed_vs=0.5)
    p = euler_step(Pose2D.of(1.0, 2.0, 0.3), m, 0.2, 0.1)
    assert p.x == pytest.approx(1.0 + 0.05 * math.cos(0.3))
    assert p.y == pytest.approx(2.0 + 0.05 * math.sin(0.3))
    assert p.theta == pytest.approx(0.3 + 0.1 * m.yaw_rate(0.2))


# ---- Dubins ----
def test_aligned_poses_give_pure_straight():
    path = dubins_shortest(Pose2D.of(0, 0, 0), Pose2D.of(4, 0, 0), 1.0)
    assert path.length == pytest.approx(4.0)
    assert path.word == "LSL"
    assert path.segment_params[0] == pytest.approx(0.0, abs=1e-12)
    assert path.segment_params[2] == pytest.approx(0.0, abs=1e-12)


def test_identity_path_has_zero_length():
    p = Pose2D.of(0, 0, 0)
    path = dubins_shortest(p, p, 1.0)
    assert path.length == 0.0
    assert sample_dubins(path, 0.1) == [p]


def test_quarter_turn_matches_oracle():
    a, b = Pose2D.of(0, 0, 0), Pose2D.of(0, 4, math.pi / 2)
    path = dubins_shortest(a, b, 1.0)
    assert path.length == pytest.approx(_oracle_length(a.as_array(), b.as_array(), 1.0), abs=1e-6)


def test_random_pairs_match_oracle_and_exceed_euclidean():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a, b = _random_pose(rng), _random_pose(rng)
        rho = rng.uniform(0.3, 2.0)
        length = dubins_shortest(a, b, rho).length
        assert length == pytest.approx(_oracle_length(a.as_array(), b.as_array(), rho), abs=1e-6)
        assert length >= a.distance_to(b) - 1e-9


def test_vectorized_length_agrees_with_shortest():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a, b = _random_pose(rng), _random_pose(rng)
        assert dubins_length(a, b, 0.55) == pytest.approx(dubins_shortest(a, b, 0.55).length, abs=1e-9)


def test_mirror_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a, b = _random_pose(rng), _random_pose(rng)
        ma, mb = Pose2D.of(a.x, -a.y, -a.theta), Pose2D.of(b.x, -b.y, -b.theta)
        assert dubins_shortest(a, b, 0.8).length == pytest.approx(dubins_shortest(ma, mb, 0.8).length, abs=1e-9)


def test_rejects_non_positive_radius():
    with pytest.raises(InvalidInputError):
        dubins_shortest(Pose2D.of(0, 0, 0), Pose2D.of(1, 0, 0), 0.0)


# ---- Sampling ----
def test_straight_sampling_is_evenly_spaced():
    path = dubins_shortest(Pose2D.of(0, 0, 0), Pose2D.of(4, 0, 0), 1.0)
    xs = [p.x for p in sample_dubins(path, 1.0)]
    assert xs == pytest.approx([0, 1, 2, 3, 4])


def test_samples_respect_step_and_keep_endpoints():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b = _random_pose(rng), _random_pose(rng)
        path = dubins_shortest(a, b, 0.55)
        samples = sample_dubins(path, 0.05)
        assert samples[0] == a and samples[-1] == b
        gaps = [p.distance_to(q) for p, q in zip(samples, samples[1:])]
        assert max(gaps) <= 0.05 + 1e-9


def test_samples_reproduce_integrated_steering_schedule():
    m = VehicleModel(speed_vs=1.0, wheelbase_d=0.3, max_steer_phi=0.5)
    rng = np.random.default_rng(9)
    for _ in range(20):
        a, b = _random_pose(rng, 3.0), _random_pose(rng, 3.0)
        path = dubins_shortest(a, b, m.rho)
        pose = a
        for kind, seg_len in zip(path.word, path.segment_lengths):
            if seg_len <= 0:
                continue
            phi = {"L": m.max_steer_phi, "R": -m.max_steer_phi, "S": 0.0}[kind]
            n = max(1, int(math.ceil(seg_len / 0.01)))
            pose = rollout(pose, m, [phi] * n, seg_len / m.speed_vs / n)[-1]
        assert pose.distance_to(b) < 1e-5


def test_curvature_bound_along_samples():
    rng = np.random.default_rng(13)
    rho = 0.55
    for _ in range(30):
        a, b = _random_pose(rng), _random_pose(rng)
        path = dubins_shortest(a, b, rho)
        arr = np.array([p.as_array() for p in sample_dubins(path, 0.01)])
        ds = np.hypot(*np.diff(arr[:, :2], axis=0).T)
        dth = np.abs(np.angle(np.exp(1j * np.diff(arr[:, 2]))))
        ok = ds > 1e-6
        assert np.all(dth[ok] / ds[ok] <= 1.0 / rho + 1e-3)


def test_pose_at_endpoints():
    a, b = Pose2D.of(0, 0, 0), Pose2D.of(2, 2, math.pi / 2)
    path = dubins_shortest(a, b, 0.5)
    assert pose_at(path, 0.0).distance_to(a) < 1e-9
    assert pose_at(path, path.length).distance_to(b) < 1e-6


# ---- Trajectory ----
def test_concat_and_resample():
    a, b, c = Pose2D.of(0, 0, 0), Pose2D.of(2, 0, 0), Pose2D.of(3, 1, math.pi / 2)
    t1 = Trajectory.from_path(dubins_shortest(a, b, 0.55), 0.05)
    t2 = Trajectory.from_path(dubins_shortest(b, c, 0.55), 0.05)
    joined = t1.concat(t2)
    assert joined.total_length == pytest.approx(t1.total_length + t2.total_length)
    assert joined.waypoints() == [a, b, c]
    nodes = resample_trajectory(joined, 0.2)
    assert nodes[0] == a and nodes[-1] == c
    assert len(nodes) == round(joined.total_length / 0.2) + 1


def test_concat_rejects_gaps():
    t1 = Trajectory.from_path(dubins_shortest(Pose2D.of(0, 0, 0), Pose2D.of(1, 0, 0), 0.55), 0.05)
    t2 = Trajectory.from_path(dubins_shortest(Pose2D.of(2, 0, 0), Pose2D.of(3, 0, 0), 0.55), 0.05)
    with pytest.raises(InvalidInputError):
        t1.concat(t2)
