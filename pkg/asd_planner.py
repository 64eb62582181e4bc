"""
Active Shadowing Planner Module

Plans a virtual directional light so that the robot's real gripper tip casts
a shadow along a desired trajectory while the robot itself moves along a
different one. Three illusions are supported:

- motion: the robot stays still, only its shadow moves
- legible motion: the robot takes the straight path, its shadow takes the legible path
- imminent collision: the shadow runs k seconds ahead of the robot

Light changes are checked against a rate constraint (at most epsilon degrees
of great-circle change per delta_t seconds); violations are reported, and
optionally removed by geodesic clamping.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from geometry import (GripperPose, GroundPoint, LightDirection, OVERHEAD_LIGHT,
                      angular_distance, light_vector, project_shadow,
                      rotate_toward, shadow_offset, solve_light)
from legibility import LegibleOptimizer, ObserverModel, OptimizerParams, get_optimizer, legibility_score
from trajectory import (Scene, ShadowTrajectory, Trajectory, arrival_time,
                        deviation_cost, interpolate, lookahead, path_length,
                        resample, stationary, straight_line, time_grid)
from utils import InfeasibleShadowError, TrajectoryError, setup_logger


# Window changes may exceed epsilon by this much (degrees) before being flagged
VIOLATION_TOLERANCE = 1e-9
WINDOW_TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RateConstraint:
    """At most epsilon degrees of light change per delta_t seconds"""
    epsilon: float = 15.0
    delta_t: float = 3.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise TrajectoryError(f"Rate constraint epsilon must be > 0, got {self.epsilon}")
        if not (math.isfinite(self.delta_t) and self.delta_t > 0):
            raise TrajectoryError(f"Rate constraint delta_t must be > 0, got {self.delta_t}")

    def step_budget(self, step: float) -> float:
        """Largest light change allowed over a single step of the given length"""
        return self.epsilon * step / self.delta_t


@dataclass(frozen=True, eq=False)
class LightSchedule:
    """Time-stamped light directions"""
    times: np.ndarray
    lights: Tuple[LightDirection, ...]

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        times.flags.writeable = False
        lights = tuple(self.lights)
        if times.ndim != 1 or times.shape[0] != len(lights) or not lights:
            raise TrajectoryError("Light schedule needs one light per timestamp")
        if np.any(np.diff(times) <= 0):
            raise TrajectoryError("Light schedule timestamps must be strictly increasing")
        if not all(isinstance(light, LightDirection) for light in lights):
            raise TrajectoryError("Light schedule entries must be LightDirection values")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'lights', lights)

    def __len__(self) -> int:
        return len(self.lights)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LightSchedule):
            return NotImplemented
        return np.array_equal(self.times, other.times) and self.lights == other.lights

    @property
    def samples(self) -> List[Tuple[float, LightDirection]]:
        return list(zip((float(t) for t in self.times), self.lights))

    @property
    def elevations(self) -> np.ndarray:
        return np.array([light.elevation_alpha for light in self.lights])

    @property
    def azimuths(self) -> np.ndarray:
        return np.array([light.azimuth_phi for light in self.lights])

    def vectors(self) -> np.ndarray:
        return np.array([light_vector(light) for light in self.lights])


@dataclass(frozen=True)
class WindowCheck:
    """One delta_t window of the constraint report"""
    window_start: float
    window_end: float
    angular_change: float
    violated: bool
    start_index: int = 0
    end_index: int = 0


@dataclass(frozen=True)
class ClampRecord:
    """A sample moved by enforce_rate_limit"""
    index: int
    t: float
    requested_change: float
    applied_change: float


@dataclass(frozen=True, eq=False)
class PlanResult:
    """Executed robot trajectory, planned shadow, light schedule and their checks"""
    method: str
    robot: Trajectory
    desired: Trajectory
    shadow: ShadowTrajectory
    lights: LightSchedule
    constraint_report: Tuple[WindowCheck, ...]
    metrics: Dict[str, float] = field(default_factory=dict)
    infeasible_samples: Tuple[int, ...] = ()
    clamped: Tuple[ClampRecord, ...] = ()
    converged: Optional[bool] = None

    @property
    def violations(self) -> int:
        return sum(1 for window in self.constraint_report if window.violated)

    @property
    def is_clean(self) -> bool:
        """True when every sample is feasible and no window is violated"""
        return not self.infeasible_samples and self.violations == 0

    def violated_samples(self) -> np.ndarray:
        """Per-sample flag: inside a violated window, or infeasible"""
        flags = np.zeros(len(self.robot), dtype=bool)
        for window in self.constraint_report:
            if window.violated:
                flags[window.start_index:window.end_index + 1] = True
        if self.infeasible_samples:
            flags[list(self.infeasible_samples)] = True
        return flags

    def rows(self) -> List[dict]:
        """One dict per sample, keyed by the plan.csv column names"""
        flags = self.violated_samples()
        rows = []
        for i, t in enumerate(self.robot.times):
            light = self.lights.lights[i]
            rows.append({
                't': float(t),
                'robot_x': float(self.robot.points[i, 0]),
                'robot_y': float(self.robot.points[i, 1]),
                'robot_h': float(self.robot.points[i, 2]),
                'shadow_x': float(self.shadow.points[i, 0]),
                'shadow_y': float(self.shadow.points[i, 1]),
                'alpha_deg': light.elevation_alpha,
                'phi_deg': light.azimuth_phi,
                'violated': bool(flags[i]),
            })
        return rows


def evaluate_rate_constraint(lights: LightSchedule,
                             constraint: RateConstraint) -> Tuple[WindowCheck, ...]:
    """
    Sliding-window check of a light schedule

    One window starts at every sample whose window [t, t + delta_t] fits in
    the schedule (a single window when the schedule is shorter than delta_t).
    A window's angular change is the largest great-circle deviation of any
    light inside it from the window's first light.

    Args:
        lights: Light schedule
        constraint: Rate constraint

    Returns:
        Tuple of WindowCheck, one per window, in time order
    """
    times = lights.times
    vectors = lights.vectors()
    t_end = times[-1]

    if t_end - times[0] <= constraint.delta_t + WINDOW_TIME_TOLERANCE:
        starts = [0]
    else:
        starts = np.flatnonzero(times + constraint.delta_t <= t_end + WINDOW_TIME_TOLERANCE)

    report = []
    for i in starts:
        j = int(np.searchsorted(times, times[i] + constraint.delta_t + WINDOW_TIME_TOLERANCE,
                                side='right')) - 1
        window = vectors[i:j + 1]
        cross = np.linalg.norm(np.cross(vectors[i][None, :], window), axis=1)
        dot = window @ vectors[i]
        change = float(np.degrees(np.arctan2(cross, dot)).max())
        report.append(WindowCheck(
            window_start=float(times[i]),
            window_end=float(times[j]),
            angular_change=change,
            violated=change > constraint.epsilon + VIOLATION_TOLERANCE,
            start_index=int(i),
            end_index=j,
        ))
    return tuple(report)


def enforce_rate_limit(lights: LightSchedule,
                       constraint: RateConstraint) -> Tuple[LightSchedule, Tuple[ClampRecord, ...]]:
    """
    Clamp a light schedule so every step stays within epsilon * step / delta_t

    Per-step budgets sum to at most epsilon over any delta_t window, so the
    output passes evaluate_rate_constraint. A sample that already fits its
    budget from the previous output sample is kept as is; otherwise it is
    moved along the great circle toward its requested direction by exactly
    the budget.

    Args:
        lights: Requested schedule
        constraint: Rate constraint

    Returns:
        (compliant schedule, clamped sample records)
    """
    output = [lights.lights[0]]
    clamped = []
    for i in range(1, len(lights)):
        budget = constraint.step_budget(float(lights.times[i] - lights.times[i - 1]))
        requested = lights.lights[i]
        change = angular_distance(output[-1], requested)
        if change <= budget:
            output.append(requested)
            continue
        moved = rotate_toward(output[-1], requested, budget)
        output.append(moved)
        clamped.append(ClampRecord(index=i, t=float(lights.times[i]),
                                   requested_change=change,
                                   applied_change=angular_distance(output[-2], moved)))
    return LightSchedule(lights.times, tuple(output)), tuple(clamped)


def smooth_shadow(desired: ShadowTrajectory, gain: float) -> ShadowTrajectory:
    """
    First-order discrete-time tracking of a desired shadow path

    s_0 = d_0 and s_k = s_(k-1) + gain * (d_k - s_(k-1)).

    Args:
        desired: Desired shadow positions
        gain: Tracking gain in (0, 1]; 1 reproduces the input

    Returns:
        Smoothed shadow trajectory on the same timestamps
    """
    if not 0.0 < gain <= 1.0:
        raise TrajectoryError(f"Smoothing gain must lie in (0, 1], got {gain}")
    points = desired.points
    if gain == 1.0:
        return ShadowTrajectory(desired.times, points.copy())

    b = [gain]
    a = [1.0, gain - 1.0]
    smoothed = np.empty_like(points)
    for axis in range(points.shape[1]):
        # Initial state makes s_0 = d_0
        zi = [(1.0 - gain) * points[0, axis]]
        smoothed[:, axis], _ = lfilter(b, a, points[:, axis], zi=zi)
    # Exact, not one rounding away
    smoothed[0] = points[0]
    return ShadowTrajectory(desired.times, smoothed)


def perception_discrepancy(perceived: Trajectory, actual: Trajectory, dt: float = 0.1) -> float:
    """
    Time-mean distance between the perceived and the actual trajectory

    Args:
        perceived: Trajectory the observer is led to perceive
        actual: Trajectory actually executed
        dt: Step of the common grid over the overlapping time span

    Returns:
        Mean Euclidean distance (cm) over the common grid
    """
    t0 = max(perceived.start_time, actual.start_time)
    t1 = min(perceived.end_time, actual.end_time)
    if t1 <= t0:
        raise TrajectoryError(
            f"Trajectories do not overlap in time: [{perceived.start_time}, {perceived.end_time}] "
            f"vs [{actual.start_time}, {actual.end_time}]")
    grid = time_grid(t0, t1, dt)
    distances = np.linalg.norm(interpolate(perceived, grid) - interpolate(actual, grid), axis=1)
    return float(distances.mean())


def light_sweep_trajectory(stationary_pose: GripperPose, amplitude: float, period: float,
                           duration: float, azimuth: float = 0.0, dt: float = 0.1) -> Trajectory:
    """
    Desired trajectory whose shadow, cast by a still tip, needs a triangle-wave light

    The light drops from overhead by `amplitude` degrees over `period`
    seconds and climbs back over the next `period`, repeating.

    Args:
        stationary_pose: Pose of the still gripper tip (h > 0)
        amplitude: Elevation swing in degrees, 0 <= amplitude < 90
        period: Seconds per half-cycle
        duration: Trajectory duration
        azimuth: Direction of the shadow's excursion (degrees)
        dt: Sampling step

    Returns:
        Trajectory at the tip's height whose ground projection is the shadow path
    """
    if not 0.0 <= amplitude < 90.0:
        raise TrajectoryError(f"Sweep amplitude must lie in [0, 90), got {amplitude}")
    if not period > 0:
        raise TrajectoryError(f"Sweep period must be > 0, got {period}")
    if stationary_pose.h <= 0 and amplitude > 0:
        raise InfeasibleShadowError("A tip on the ground plane cannot sweep its shadow")

    times = time_grid(0.0, duration, dt)
    phase = np.mod(times, 2 * period) / period
    drop = amplitude * np.where(phase <= 1.0, phase, 2.0 - phase)
    offsets = np.array([shadow_offset(stationary_pose.h, 90.0 - d) for d in drop])
    phi = math.radians(azimuth)
    points = np.column_stack([
        stationary_pose.x + offsets * math.cos(phi),
        stationary_pose.y + offsets * math.sin(phi),
        np.full(times.shape, stationary_pose.h),
    ])
    return Trajectory(times, points)


def foreshadow_lead(plan: PlanResult, target: GroundPoint, radius: float = 1e-6) -> dict:
    """
    How long before the robot's overhead shadow the planned shadow reaches a target

    Args:
        plan: Plan to inspect
        target: Ground position of interest (e.g. the glass)
        radius: Arrival radius (cm)

    Returns:
        Dict with shadow_arrival, robot_arrival and lead (seconds, None if unreached)
    """
    target_xy = target.as_array()
    shadow_arrival = arrival_time(plan.shadow.points, plan.shadow.times, target_xy, radius)
    robot_arrival = arrival_time(plan.robot.points[:, :2], plan.robot.times, target_xy, radius)
    lead = None
    if shadow_arrival is not None and robot_arrival is not None:
        lead = robot_arrival - shadow_arrival
    return {'shadow_arrival': shadow_arrival, 'robot_arrival': robot_arrival, 'lead': lead}


class ActiveShadowPlanner:
    """
    Plans shadows and light schedules for the active-shadowing illusions
    """

    def __init__(self, constraint: Optional[RateConstraint] = None,
                 nominal_light: LightDirection = OVERHEAD_LIGHT,
                 initial_light: LightDirection = OVERHEAD_LIGHT,
                 smoothing_gain: Optional[float] = None,
                 enforce: bool = False,
                 optimizer: Optional[LegibleOptimizer] = None):
        """
        Initialize the planner

        Args:
            constraint: Light rate constraint (defaults to 15 degrees per 3 s)
            nominal_light: Light that maps the desired trajectory to its shadow
            initial_light: Light assumed before the first sample (azimuth tie-break)
            smoothing_gain: Apply smooth_shadow with this gain before solving lights
            enforce: Clamp the solved schedule with enforce_rate_limit
            optimizer: Legible optimizer (defaults to the global instance)
        """
        self.logger = setup_logger(__name__)
        self.constraint = constraint or RateConstraint()
        self.nominal_light = nominal_light
        self.initial_light = initial_light
        self.smoothing_gain = smoothing_gain
        self.enforce = enforce
        self.optimizer = optimizer or get_optimizer()

    def _desired_shadow(self, desired: Trajectory) -> ShadowTrajectory:
        points = np.array([project_shadow(GripperPose.from_array(p), self.nominal_light).as_array()
                           for p in desired.points])
        shadow = ShadowTrajectory(desired.times, points)
        if self.smoothing_gain is not None:
            shadow = smooth_shadow(shadow, self.smoothing_gain)
        return shadow

    def _solve_lights(self, robot: Trajectory,
                      shadow: ShadowTrajectory) -> Tuple[LightSchedule, List[int]]:
        lights = []
        infeasible = []
        previous = self.initial_light
        for i, (point, target) in enumerate(zip(robot.points, shadow.points)):
            pose = GripperPose.from_array(point)
            try:
                light = solve_light(pose, GroundPoint(float(target[0]), float(target[1])), previous)
            except InfeasibleShadowError:
                # Hold the last feasible light
                infeasible.append(i)
                light = previous
            lights.append(light)
            previous = light
        return LightSchedule(robot.times, tuple(lights)), infeasible

    def _realize(self, method: str, robot: Trajectory, desired: Trajectory,
                 constraint: Optional[RateConstraint] = None,
                 enforce: Optional[bool] = None) -> PlanResult:
        constraint = constraint or self.constraint
        enforce = self.enforce if enforce is None else enforce

        shadow = self._desired_shadow(desired)
        lights, infeasible = self._solve_lights(robot, shadow)
        if infeasible:
            self.logger.warning(f"{method}: {len(infeasible)} samples infeasible "
                                f"(tip on the ground plane), holding the last light")

        clamped = ()
        if enforce:
            lights, clamped = enforce_rate_limit(lights, constraint)
            if clamped:
                self.logger.warning(f"{method}: rate limit clamped {len(clamped)} light samples")
                realized = [project_shadow(GripperPose.from_array(p), light).as_array()
                            for p, light in zip(robot.points, lights.lights)]
                shadow = ShadowTrajectory(robot.times, np.array(realized))

        report = evaluate_rate_constraint(lights, constraint)
        errors = [0.0]
        for i, (point, light) in enumerate(zip(robot.points, lights.lights)):
            if i in infeasible:
                continue
            cast = project_shadow(GripperPose.from_array(point), light).as_array()
            errors.append(float(np.linalg.norm(cast - shadow.points[i])))

        reference = robot.points[[0, -1]]
        reference_path = Trajectory(np.array([0.0, 1.0]), reference)
        metrics = {
            'zeta_robot_cm2': deviation_cost(robot, reference_path),
            'zeta_desired_cm2': deviation_cost(desired, reference_path),
            'path_length_robot_cm': path_length(robot),
            'path_length_desired_cm': path_length(desired),
            'perception_discrepancy_cm': perception_discrepancy(desired, robot,
                                                                dt=_grid_step(robot)),
            'max_window_change_deg': max(window.angular_change for window in report),
            'max_realization_error_cm': max(errors),
        }

        plan = PlanResult(method=method, robot=robot, desired=desired, shadow=shadow,
                          lights=lights, constraint_report=report, metrics=metrics,
                          infeasible_samples=tuple(infeasible), clamped=tuple(clamped))
        level = self.logger.warning if plan.violations else self.logger.info
        level(f"{method}: {len(robot)} samples, {plan.violations}/{len(report)} windows violate "
              f"{constraint.epsilon} deg per {constraint.delta_t} s, "
              f"max change {metrics['max_window_change_deg']:.3f} deg")
        return plan

    def plan_motion_illusion(self, stationary_pose: GripperPose, desired: Trajectory,
                             constraint: Optional[RateConstraint] = None,
                             dt: float = 0.1) -> PlanResult:
        """
        Keep the robot still and move only its shadow along the desired trajectory

        Args:
            stationary_pose: Pose the tip holds
            desired: Trajectory the observer should perceive
            constraint: Rate constraint (defaults to the planner's)
            dt: Sampling step

        Returns:
            PlanResult; raises InfeasibleShadowError for a grounded tip
        """
        desired = resample(desired, dt)
        robot = stationary(stationary_pose, desired.times)
        plan = self._realize('motion', robot, desired, constraint)
        if plan.infeasible_samples:
            raise InfeasibleShadowError(
                f"Stationary tip at height {stationary_pose.h} cannot cast the desired shadow "
                f"at {len(plan.infeasible_samples)} samples")
        return plan

    def plan_legible_illusion(self, scene: Scene, intended_goal: str, observer: ObserverModel,
                              constraint: Optional[RateConstraint] = None,
                              params: Optional[OptimizerParams] = None) -> PlanResult:
        """
        Move the robot on the straight path while its shadow traces a legible path

        Args:
            scene: Scene with start and goals
            intended_goal: Goal the robot reaches
            observer: Observer model used by the legibility optimizer
            constraint: Rate constraint (defaults to the planner's)
            params: Optimizer settings (dt is the plan's sampling step)

        Returns:
            PlanResult with legibility metrics of the robot and the shadow
        """
        params = params or self.optimizer.params
        robot = straight_line(scene.start, scene.goal(intended_goal), scene.duration, params.dt)
        result = self.optimizer.optimize(scene, intended_goal, observer, params)
        plan = self._realize('legible', robot, result.trajectory, constraint)

        ground = scene.ground_projected()
        metrics = dict(plan.metrics)
        metrics.update({
            'legibility_robot': legibility_score(robot, intended_goal, scene, observer).value,
            'legibility_desired': result.score,
            'legibility_shadow': legibility_score(plan.shadow.lift(), intended_goal,
                                                  ground, observer).value,
            'optimizer_iterations': float(result.iterations),
        })
        return replace(plan, metrics=metrics, converged=result.converged)

    def plan_collision_foreshadow(self, robot: Trajectory, k: float,
                                  constraint: Optional[RateConstraint] = None,
                                  dt: Optional[float] = None) -> PlanResult:
        """
        Cast the shadow where the robot will be k seconds later

        Args:
            robot: Executed robot trajectory
            k: Lookahead in seconds, 0 < k < duration
            constraint: Rate constraint (defaults to the planner's)
            dt: Optional resampling step for the robot trajectory

        Returns:
            PlanResult whose shadow leads the robot by k seconds
        """
        if dt is not None:
            robot = resample(robot, dt)
        desired = lookahead(robot, k)
        plan = self._realize('foreshadow', robot, desired, constraint)
        return replace(plan, metrics={**plan.metrics, 'lookahead_s': float(k)})


def _grid_step(traj: Trajectory) -> float:
    return float(np.min(np.diff(traj.times)))


# Global planner instance
_planner = None

def get_planner() -> ActiveShadowPlanner:
    """Get global active-shadow planner instance"""
    global _planner
    if _planner is None:
        _planner = ActiveShadowPlanner()
    return _planner


def plan_motion_illusion(stationary_pose: GripperPose, desired: Trajectory,
                         constraint: Optional[RateConstraint] = None,
                         dt: float = 0.1) -> PlanResult:
    """Convenience function for the illusion of motion"""
    return get_planner().plan_motion_illusion(stationary_pose, desired, constraint, dt)


def plan_legible_illusion(scene: Scene, intended_goal: str, observer: ObserverModel,
                          constraint: Optional[RateConstraint] = None,
                          params: Optional[OptimizerParams] = None) -> PlanResult:
    """Convenience function for the illusion of legible motion"""
    return get_planner().plan_legible_illusion(scene, intended_goal, observer, constraint, params)


def plan_collision_foreshadow(robot: Trajectory, k: float,
                              constraint: Optional[RateConstraint] = None,
                              dt: Optional[float] = None) -> PlanResult:
    """Convenience function for the illusion of imminent collision"""
    return get_planner().plan_collision_foreshadow(robot, k, constraint, dt)
