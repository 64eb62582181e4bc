"""
Tests for trajectory types and trajectory algebra
"""

import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from geometry import GripperPose
from trajectory import (Scene, ShadowTrajectory, Trajectory, arrival_time,
                        constant_speed, deviation_cost, distance_to_path,
                        interpolate, lookahead, path_length, resample,
                        stationary, straight_line, time_grid, trajectory_from_waypoints)
from utils import TrajectoryError


START = GripperPose(0.0, 40.0, 20.0)
GREEN = GripperPose(11.5, 0.0, 10.0)
RED = GripperPose(-11.5, 0.0, 10.0)


def brute_distance(point, a, b):
    """Point-to-polyline distance by dense sampling of every segment"""
    best = np.inf
    for p, q in zip(a, b):
        ts = np.linspace(0.0, 1.0, 20001)[:, None]
        best = min(best, float(np.min(np.linalg.norm(p + ts * (q - p) - point, axis=1))))
    return best


def test_time_grid_includes_end():
    """The grid always ends exactly at t_end"""
    grid = time_grid(0.0, 10.0, 0.1)
    assert len(grid) == 101
    assert grid[0] == 0.0 and grid[-1] == 10.0

    grid = time_grid(0.0, 1.05, 0.1)
    assert grid[-1] == 1.05
    assert np.all(np.diff(grid) > 0)

    with pytest.raises(TrajectoryError):
        time_grid(0.0, 1.0, 0.0)
    with pytest.raises(TrajectoryError):
        time_grid(1.0, 1.0, 0.1)


def test_trajectory_validation():
    """Malformed trajectories are rejected"""
    with pytest.raises(TrajectoryError):
        Trajectory(np.array([0.0]), np.zeros((1, 3)))
    with pytest.raises(TrajectoryError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)))
    with pytest.raises(TrajectoryError):
        Trajectory(np.array([0.0, 1.0]), np.array([[0, 0, 1], [0, 0, -1]]))
    with pytest.raises(TrajectoryError):
        ShadowTrajectory(np.array([0.0, 1.0]), np.zeros((2, 3)))


def test_trajectory_is_immutable():
    """Sample arrays cannot be modified in place"""
    traj = straight_line(START, GREEN, 10.0, 0.1)
    with pytest.raises(ValueError):
        traj.points[0, 0] = 1.0


def test_resample_preserves_endpoints():
    """Endpoints are kept exactly and interior samples are interpolated"""
    traj = Trajectory(np.array([0.0, 1.0, 2.5]), np.array([[0, 0, 1], [1, 2, 3], [4, 4, 4.0]]))
    resampled = resample(traj, 0.2)
    assert resampled.times[0] == 0.0 and resampled.times[-1] == 2.5
    assert np.array_equal(resampled.points[0], traj.points[0])
    assert np.array_equal(resampled.points[-1], traj.points[-1])
    assert resampled.pose_at(0.5).as_array() == pytest.approx([0.5, 1.0, 2.0])


def test_resample_is_idempotent_and_never_lengthens():
    """Resampling twice on the same step changes nothing; polyline length never grows"""
    rng = np.random.default_rng(5)
    waypoints = np.vstack([START.as_array(), rng.uniform([-15, 5, 10], [15, 35, 25], size=(4, 3)),
                           GREEN.as_array()])
    traj = constant_speed(waypoints, 10.0)
    once = resample(traj, 0.1)
    assert resample(once, 0.1) == once
    assert path_length(once) <= path_length(traj) + 1e-9


def test_samples_round_trip():
    """Trajectories rebuild from their (t, pose) samples"""
    traj = straight_line(START, GREEN, 2.0, 0.5)
    assert Trajectory.from_samples(traj.samples) == traj
    track = traj.ground_track()
    assert ShadowTrajectory.from_samples(track.samples) == track
    assert track.lift().points[:, 2].tolist() == [0.0] * len(traj)


def test_straight_line_endpoints_and_speed():
    """Straight line starts and ends exactly at its poses with constant speed"""
    traj = straight_line(START, GREEN, 10.0, 0.1)
    assert traj.first_pose == START
    assert traj.last_pose == GREEN
    steps = np.linalg.norm(np.diff(traj.points, axis=0), axis=1)
    assert np.allclose(steps, steps[0])
    with pytest.raises(TrajectoryError):
        straight_line(START, START, 10.0, 0.1)


def test_path_length():
    """Sum of segment lengths"""
    traj = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([[0, 0, 0], [3, 4, 0], [3, 4, 12.0]]))
    assert path_length(traj) == pytest.approx(17.0)
    assert path_length(straight_line(START, GREEN, 10.0, 0.1)) == pytest.approx(
        np.linalg.norm(GREEN.as_array() - START.as_array()))


def test_deviation_cost_examples():
    """Three samples 1, 2 and 3 cm off a straight reference give 14 cm^2"""
    reference = Trajectory(np.array([0.0, 1.0]), np.array([[0, 0, 0], [10, 0, 0.0]]))
    traj = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([[2, 1, 0], [5, 2, 0], [8, 0, 3.0]]))
    assert deviation_cost(traj, reference) == pytest.approx(14.0)

    straight = straight_line(START, GREEN, 10.0, 0.1)
    assert deviation_cost(straight, straight_line(START, GREEN, 10.0, 0.5)) == 0.0


def test_deviation_cost_quadratic_in_offset():
    """Shifting samples perpendicular to the reference by c changes each term to (d + c)^2"""
    reference = Trajectory(np.array([0.0, 1.0]), np.array([[0, 0, 0], [10, 0, 0.0]]))
    d = np.array([1.0, 2.0, 0.5])
    c = 1.5
    xs = np.array([2.0, 5.0, 7.0])
    base = Trajectory(np.arange(3.0), np.column_stack([xs, d, np.zeros(3)]))
    shifted = Trajectory(np.arange(3.0), np.column_stack([xs, d + c, np.zeros(3)]))
    assert deviation_cost(base, reference) == pytest.approx(np.sum(d ** 2))
    assert deviation_cost(shifted, reference) == pytest.approx(np.sum((d + c) ** 2))


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=5))
@settings(max_examples=30, deadline=None)
def test_distance_to_path_matches_dense_sampling(points):
    """Vectorized point-to-polyline distance agrees with dense sampling"""
    path = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
    query = np.array(points)
    distances = distance_to_path(query, path)
    for point, distance in zip(query, distances):
        assert distance == pytest.approx(brute_distance(point, path[:-1], path[1:]), abs=2e-3)


def test_lookahead_shift_and_clamp():
    """Output at t equals input at t + k, holding the final pose past the end"""
    traj = straight_line(START, GREEN, 10.0, 0.1)
    shifted = lookahead(traj, 4.0)
    assert np.array_equal(shifted.times, traj.times)
    assert shifted.points[10] == pytest.approx(traj.pose_at(5.0).as_array())
    assert np.array_equal(shifted.points[-1], traj.points[-1])
    assert np.all(shifted.points[traj.times >= 6.0 + 1e-9] == traj.points[-1])

    for k in (0.0, -1.0, 10.0, 12.0):
        with pytest.raises(TrajectoryError):
            lookahead(traj, k)


def test_lookahead_composes_before_the_clamp():
    """Looking ahead by k then j equals looking ahead by k + j away from the held tail"""
    rng = np.random.default_rng(13)
    waypoints = np.vstack([START.as_array(), rng.uniform([-15, 5, 10], [15, 35, 25], size=(3, 3)),
                           GREEN.as_array()])
    traj = resample(constant_speed(waypoints, 10.0), 0.1)
    twice = lookahead(lookahead(traj, 3.0), 2.5)
    once = lookahead(traj, 5.5)
    early = traj.times <= traj.times[-1] - 5.5 + 1e-9
    assert np.allclose(twice.points[early], once.points[early], atol=1e-9)


def test_stationary_and_waypoints():
    """Helpers building trajectories"""
    still = stationary(GripperPose(1, 2, 3), time_grid(0.0, 1.0, 0.5))
    assert still.points.tolist() == [[1, 2, 3]] * 3

    traj = trajectory_from_waypoints([[0, 0, 0, 10], [3, 10, 0, 10]])
    assert traj.duration == 3.0
    with pytest.raises(TrajectoryError):
        trajectory_from_waypoints([[0, 0, 0], [1, 1, 1]])


def test_constant_speed_timing():
    """Knot times are proportional to arc length"""
    traj = constant_speed(np.array([[0, 0, 0], [3, 0, 0], [3, 1, 0.0]]), 8.0)
    assert traj.times.tolist() == pytest.approx([0.0, 6.0, 8.0])


def test_interpolate_clamps():
    """Queries outside the time domain clamp to the end samples"""
    traj = straight_line(START, GREEN, 10.0, 1.0)
    values = interpolate(traj, [-1.0, 20.0])
    assert np.array_equal(values[0], START.as_array())
    assert np.array_equal(values[1], GREEN.as_array())


def test_scene_validation():
    """Scenes need unique labels and goals distinct from the start"""
    scene = Scene(START, {'green': GREEN, 'red': RED}, table_height=10.0)
    assert scene.labels == ['green', 'red']
    assert scene.ground_projected().goal('red') == GripperPose(-11.5, 0.0, 0.0)
    with pytest.raises(TrajectoryError):
        Scene(START, (('a', GREEN), ('a', RED)))
    with pytest.raises(TrajectoryError):
        Scene(START, (('a', START),))
    with pytest.raises(TrajectoryError):
        scene.goal('blue')


def test_ground_projection_of_a_goal_under_the_start():
    """Dropping a vertical descent onto the ground puts the goal on the start, which is allowed"""
    scene = Scene(GripperPose(0.0, 0.0, 30.0), (('glass', GripperPose(0.0, 0.0, 15.0)),))
    ground = scene.ground_projected()
    assert ground.goal('glass') == ground.start == GripperPose(0.0, 0.0, 0.0)
    assert ground.duration == scene.duration
    with pytest.raises(TrajectoryError):
        Scene(ground.start, (('glass', ground.start),))


def test_arrival_time():
    """First sample within the radius"""
    track = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    times = np.array([0.0, 0.5, 1.0])
    assert arrival_time(track, times, np.array([1.0, 0.0])) == 0.5
    assert arrival_time(track, times, np.array([5.0, 0.0])) is None


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
