"""
Trajectory Module for the Active Shadowing planner

Time-stamped gripper and shadow trajectories, the two-cup style Scene, and
the trajectory algebra the planners build on: interpolation, resampling,
straight-line generation, path length, the sum-of-squares deviation cost
and the lookahead shift used for foreshadowing.

Trajectories are piecewise linear in pose space between their samples.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geometry import GripperPose, GroundPoint
from utils import TrajectoryError


# Relative slack when deciding whether a grid point coincides with the end time
GRID_TOLERANCE = 1e-9

# Distances below this (cm) count as lying on the path
ON_PATH_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


def _validate_samples(times: np.ndarray, points: np.ndarray, width: int, what: str) -> None:
    if times.ndim != 1 or points.ndim != 2 or points.shape != (times.shape[0], width):
        raise TrajectoryError(
            f"{what} needs {width} coordinates per sample, got times {times.shape} "
            f"and points {points.shape}")
    if times.shape[0] < 2:
        raise TrajectoryError(f"{what} needs at least 2 samples, got {times.shape[0]}")
    if not (np.all(np.isfinite(times)) and np.all(np.isfinite(points))):
        raise TrajectoryError(f"{what} contains non-finite values")
    if np.any(np.diff(times) <= 0):
        raise TrajectoryError(f"{what} timestamps must be strictly increasing")


def time_grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    """
    Uniform grid t0, t0+dt, ... that always ends exactly at t_end

    Args:
        t0: First time
        t_end: Last time (> t0)
        dt: Step (> 0)

    Returns:
        Strictly increasing array of times
    """
    if not dt > 0 or not math.isfinite(dt):
        raise TrajectoryError(f"Time step must be > 0, got {dt}")
    span = t_end - t0
    if span <= 0:
        raise TrajectoryError(f"Time span must be positive, got [{t0}, {t_end}]")

    steps = int(math.floor(span / dt + GRID_TOLERANCE))
    times = t0 + dt * np.arange(steps + 1, dtype=float)
    if span - steps * dt > GRID_TOLERANCE * max(dt, 1.0):
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Gripper tip trajectory: times (n,) in seconds and points (n, 3) as (x, y, h) in cm"""
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        points = _frozen(self.points)
        _validate_samples(times, points, 3, "Trajectory")
        if np.any(points[:, 2] < 0):
            raise TrajectoryError("Trajectory heights must be >= 0")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'points', points)

    @classmethod
    def from_samples(cls, samples: Sequence[Tuple[float, GripperPose]]) -> "Trajectory":
        times = [t for t, _ in samples]
        points = [pose.as_array() for _, pose in samples]
        return cls(np.asarray(times, dtype=float), np.asarray(points, dtype=float).reshape(-1, 3))

    @property
    def samples(self) -> List[Tuple[float, GripperPose]]:
        return [(float(t), GripperPose.from_array(p)) for t, p in zip(self.times, self.points)]

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time

    @property
    def first_pose(self) -> GripperPose:
        return GripperPose.from_array(self.points[0])

    @property
    def last_pose(self) -> GripperPose:
        return GripperPose.from_array(self.points[-1])

    def __len__(self) -> int:
        return self.times.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.points, other.points))

    def pose_at(self, t: float) -> GripperPose:
        return GripperPose.from_array(interpolate(self, np.array([t]))[0])

    def ground_track(self) -> "ShadowTrajectory":
        """Overhead (vertical) projection of the trajectory onto the ground plane"""
        return ShadowTrajectory(self.times, self.points[:, :2])


@dataclass(frozen=True, eq=False)
class ShadowTrajectory:
    """Shadow trajectory on the ground plane: times (n,) and points (n, 2) in cm"""
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        points = _frozen(self.points)
        _validate_samples(times, points, 2, "ShadowTrajectory")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'points', points)

    @classmethod
    def from_samples(cls, samples: Sequence[Tuple[float, GroundPoint]]) -> "ShadowTrajectory":
        times = [t for t, _ in samples]
        points = [p.as_array() for _, p in samples]
        return cls(np.asarray(times, dtype=float), np.asarray(points, dtype=float).reshape(-1, 2))

    @property
    def samples(self) -> List[Tuple[float, GroundPoint]]:
        return [(float(t), GroundPoint(float(p[0]), float(p[1])))
                for t, p in zip(self.times, self.points)]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self) -> int:
        return self.times.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ShadowTrajectory):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.points, other.points))

    def lift(self) -> Trajectory:
        """The shadow as a trajectory lying on the ground plane (h = 0)"""
        points = np.column_stack([self.points, np.zeros(len(self))])
        return Trajectory(self.times, points)


@dataclass(frozen=True)
class Scene:
    """
    Task scene: start pose, labelled goal poses, table height and task duration

    table_height is the height of goal approach poses above the shadow plane;
    scenario goals declared without a height take it. A ground projection
    may put a goal directly under the start, so projected scenes skip the
    start-versus-goal check.
    """
    start: GripperPose
    goals: Tuple[Tuple[str, GripperPose], ...]
    table_height: float = 0.0
    duration: float = 10.0
    projected: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        goals = tuple((str(label), pose) for label, pose in
                      (self.goals.items() if isinstance(self.goals, dict) else self.goals))
        object.__setattr__(self, 'goals', goals)
        if not goals:
            raise TrajectoryError("Scene needs at least one goal")
        labels = [label for label, _ in goals]
        if len(set(labels)) != len(labels):
            raise TrajectoryError(f"Goal labels must be unique, got {labels}")
        if not self.duration > 0:
            raise TrajectoryError(f"Scene duration must be > 0, got {self.duration}")
        if not math.isfinite(self.table_height) or self.table_height < 0:
            raise TrajectoryError(f"Table height must be finite and >= 0, got {self.table_height}")
        for label, pose in goals:
            if not self.projected and pose == self.start:
                raise TrajectoryError(f"Goal '{label}' coincides with the start pose")

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.goals]

    def goal(self, label: str) -> GripperPose:
        for goal_label, pose in self.goals:
            if goal_label == label:
                return pose
        raise TrajectoryError(f"Unknown goal '{label}'; scene goals are {self.labels}")

    def goal_array(self) -> np.ndarray:
        return np.array([pose.as_array() for _, pose in self.goals])

    def ground_projected(self) -> "Scene":
        """The same scene with the start and every goal dropped onto the ground plane"""
        start = GripperPose(self.start.x, self.start.y, 0.0)
        goals = tuple((label, GripperPose(pose.x, pose.y, 0.0)) for label, pose in self.goals)
        return Scene(start, goals, table_height=0.0, duration=self.duration, projected=True)


def interpolate(traj, query_times) -> np.ndarray:
    """
    Piecewise-linear poses at the query times, clamped to the end samples

    Args:
        traj: Trajectory or ShadowTrajectory
        query_times: Times to evaluate

    Returns:
        Array of shape (len(query_times), traj coordinate count)
    """
    query_times = np.atleast_1d(np.asarray(query_times, dtype=float))
    return np.column_stack([np.interp(query_times, traj.times, traj.points[:, axis])
                            for axis in range(traj.points.shape[1])])


def cumulative_length(points: np.ndarray) -> np.ndarray:
    """Arc length from the first point to every point of a polyline"""
    segments = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(segments)])


def resample(traj: Trajectory, dt: float) -> Trajectory:
    """
    Resample a trajectory on a uniform grid that keeps both endpoints

    Args:
        traj: Trajectory to resample
        dt: Grid step in seconds

    Returns:
        Trajectory with samples at t0, t0+dt, ..., t_end
    """
    if not dt > 0:
        raise TrajectoryError(f"Resampling step must be > 0, got {dt}")
    times = time_grid(traj.start_time, traj.end_time, dt)
    points = interpolate(traj, times)
    points[0] = traj.points[0]
    points[-1] = traj.points[-1]
    return Trajectory(times, points)


def straight_line(start: GripperPose, goal: GripperPose, duration: float, dt: float) -> Trajectory:
    """
    Constant-speed straight path from start to goal

    Args:
        start: Pose at t = 0
        goal: Pose at t = duration
        duration: Travel time in seconds
        dt: Sampling step in seconds

    Returns:
        Trajectory sampled every dt, ending exactly at goal
    """
    if start == goal:
        raise TrajectoryError("Straight line needs distinct start and goal")
    if not duration > 0:
        raise TrajectoryError(f"Duration must be > 0, got {duration}")

    times = time_grid(0.0, duration, dt)
    a = start.as_array()
    b = goal.as_array()
    fractions = (times / duration)[:, None]
    points = a + fractions * (b - a)
    points[0] = a
    points[-1] = b
    return Trajectory(times, points)


def constant_speed(waypoints: np.ndarray, duration: float, t0: float = 0.0) -> Trajectory:
    """
    Time a polyline so the tip moves along it at constant speed

    Args:
        waypoints: (m, 3) polyline
        duration: Total travel time
        t0: Start time

    Returns:
        Trajectory whose knots are the waypoints
    """
    waypoints = np.asarray(waypoints, dtype=float)
    arc = cumulative_length(waypoints)
    if arc[-1] <= 0:
        raise TrajectoryError("Cannot time a polyline of zero length")
    keep = np.concatenate([[True], np.diff(arc) > 0])
    times = t0 + duration * arc[keep] / arc[-1]
    times[-1] = t0 + duration
    return Trajectory(times, waypoints[keep])


def path_length(traj: Trajectory) -> float:
    """Sum of Euclidean segment lengths of the trajectory"""
    return float(cumulative_length(traj.points)[-1])


def distance_to_path(points: np.ndarray, path: np.ndarray) -> np.ndarray:
    """
    Euclidean distance from each point to the nearest point on a polyline

    Args:
        points: (n, d) query points
        path: (m, d) polyline vertices, m >= 1

    Returns:
        (n,) distances
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.shape[0] == 1:
        path = np.vstack([path, path])

    a = path[:-1]
    ab = path[1:] - a
    ab_sq = np.einsum('ij,ij->i', ab, ab)
    # (n, m-1) projection parameters, degenerate segments collapse onto their start
    ap = points[:, None, :] - a[None, :, :]
    with np.errstate(invalid='ignore', divide='ignore'):
        u = np.where(ab_sq > 0, np.einsum('nij,ij->ni', ap, ab) / ab_sq, 0.0)
    u = np.clip(u, 0.0, 1.0)
    closest = a[None, :, :] + u[:, :, None] * ab[None, :, :]
    distances = np.linalg.norm(points[:, None, :] - closest, axis=2).min(axis=1)
    distances[distances <= ON_PATH_TOLERANCE] = 0.0
    return distances


def deviation_cost(traj: Trajectory, reference: Trajectory) -> float:
    """
    Sum-of-squares deviation of the trajectory's samples from a reference path

    Args:
        traj: Evaluated trajectory
        reference: Reference, used as a geometric path (its timing is ignored)

    Returns:
        Sum over samples of the squared point-to-path distance, in cm^2
    """
    distances = distance_to_path(traj.points, reference.points)
    return float(np.sum(distances ** 2))


def lookahead(traj: Trajectory, k: float) -> Trajectory:
    """
    Shift a trajectory forward in time: output at t is the input at t + k

    Args:
        traj: Trajectory to shift
        k: Time displacement in seconds, 0 < k < duration

    Returns:
        Trajectory on the same time samples; past the end it holds the final pose
    """
    if not k > 0:
        raise TrajectoryError(f"Lookahead must be > 0, got {k}")
    if k >= traj.duration:
        raise TrajectoryError(f"Lookahead {k} s must be shorter than the trajectory ({traj.duration} s)")
    points = interpolate(traj, traj.times + k)
    return Trajectory(traj.times, points)


def stationary(pose: GripperPose, times: np.ndarray) -> Trajectory:
    """Trajectory that holds a single pose at every given time"""
    times = np.asarray(times, dtype=float)
    return Trajectory(times, np.tile(pose.as_array(), (times.shape[0], 1)))


def trajectory_from_waypoints(rows: Sequence[Sequence[float]]) -> Trajectory:
    """Build a trajectory from [t, x, y, h] rows"""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 4:
        raise TrajectoryError(f"Waypoint rows must be [t, x, y, h], got shape {rows.shape}")
    return Trajectory(rows[:, 0], rows[:, 1:])


def arrival_time(track: np.ndarray, times: np.ndarray, target: np.ndarray,
                 radius: float = 1e-6) -> Optional[float]:
    """
    First sample time at which a track comes within radius of a target

    Args:
        track: (n, d) positions
        times: (n,) sample times
        target: (d,) target position
        radius: Arrival radius

    Returns:
        Arrival time or None if never reached
    """
    distances = np.linalg.norm(np.asarray(track) - np.asarray(target), axis=1)
    hits = np.flatnonzero(distances <= radius)
    if hits.size == 0:
        return None
    return float(times[hits[0]])
