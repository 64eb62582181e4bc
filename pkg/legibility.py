"""
Legibility Module for the Active Shadowing planner

Implements a Boltzmann-rational observer that infers the robot's goal from a
partial trajectory, the time-weighted legibility score of a whole trajectory,
and a gradient-ascent optimizer that bends the straight path into a legible
one by exaggerating away from the competing goals.

Observer model, with C the path length travelled so far and V_G the
straight-line distance to goal G:

    P(G | S -> Q)  ∝  prior(G) * exp(-beta * (C + V_G(Q))) / exp(-beta * V_G(S))

evaluated in the log domain.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from trajectory import (Scene, Trajectory, constant_speed, cumulative_length,
                        resample, straight_line)
from utils import ObserverError, TrajectoryError, setup_logger


PRIOR_TOLERANCE = 1e-9

WEIGHTINGS: Dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    'linear': lambda t, total: total - t,
    'quadratic': lambda t, total: (total - t) ** 2,
    'uniform': lambda t, total: np.ones_like(t),
}


@dataclass(frozen=True)
class ObserverModel:
    """
    Goal-inference parameters of the simulated observer

    prior maps goal labels to probabilities (None means uniform over the
    scene's goals). weighting is a WEIGHTINGS key or a callable f(t, T) with
    t measured from the trajectory start and T its duration.
    """
    temperature_beta: float = 1.0
    prior: Optional[Tuple[Tuple[str, float], ...]] = None
    weighting: Union[str, Callable[[np.ndarray, float], np.ndarray]] = 'linear'
    commit_threshold_theta: float = 0.8

    def __post_init__(self):
        if not (math.isfinite(self.temperature_beta) and self.temperature_beta > 0):
            raise ObserverError(f"Observer beta must be finite and > 0, got {self.temperature_beta}")
        if not 0.5 < self.commit_threshold_theta <= 1.0:
            raise ObserverError(
                f"Commit threshold must satisfy 0.5 < theta <= 1, got {self.commit_threshold_theta}")
        if isinstance(self.weighting, str) and self.weighting not in WEIGHTINGS:
            raise ObserverError(
                f"Unknown weighting '{self.weighting}', expected one of {sorted(WEIGHTINGS)}")
        if not isinstance(self.weighting, str) and not callable(self.weighting):
            raise ObserverError("Observer weighting must be a name or a callable f(t, T)")

        if self.prior is not None:
            items = self.prior.items() if isinstance(self.prior, dict) else self.prior
            prior = tuple((str(label), float(p)) for label, p in items)
            values = [p for _, p in prior]
            if any(not math.isfinite(p) or p < 0 for p in values):
                raise ObserverError(f"Prior entries must be finite and >= 0, got {values}")
            if abs(sum(values) - 1.0) > PRIOR_TOLERANCE:
                raise ObserverError(f"Prior must sum to 1, got {sum(values)!r}")
            object.__setattr__(self, 'prior', prior)

    @classmethod
    def from_weights(cls, weights: Dict[str, float], **kwargs) -> "ObserverModel":
        """Build an observer whose prior is the normalized version of weights"""
        total = float(sum(weights.values()))
        if not total > 0:
            raise ObserverError(f"Prior weights must have a positive sum, got {total}")
        return cls(prior=tuple((label, w / total) for label, w in weights.items()), **kwargs)

    def log_prior(self, labels: List[str]) -> np.ndarray:
        """Log prior over the given goal labels, normalized over those labels"""
        if self.prior is None:
            return np.full(len(labels), -math.log(len(labels)))
        lookup = dict(self.prior)
        missing = [label for label in labels if label not in lookup]
        if missing:
            raise ObserverError(f"Prior has no entry for goals {missing}")
        values = np.array([lookup[label] for label in labels], dtype=float)
        with np.errstate(divide='ignore'):
            logs = np.log(values)
        return logs - logsumexp(logs)

    def weights(self, times: np.ndarray) -> np.ndarray:
        """Evaluate f(t) on trajectory times"""
        elapsed = np.asarray(times, dtype=float) - float(times[0])
        fn = WEIGHTINGS[self.weighting] if isinstance(self.weighting, str) else self.weighting
        values = np.asarray(fn(elapsed, float(elapsed[-1])), dtype=float)
        if values.shape != elapsed.shape or np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ObserverError("Weighting f(t) must return finite non-negative values per sample")
        return values


@dataclass(frozen=True)
class LegibilityScore:
    """Weighted average goal probability along a trajectory, in [0, 1]"""
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ObserverError(f"Legibility score must lie in [0, 1], got {self.value}")

    def __float__(self) -> float:
        return self.value


def _goal_index(scene: Scene, label: str) -> int:
    labels = scene.labels
    if label not in labels:
        raise ObserverError(f"Unknown goal '{label}'; scene goals are {labels}")
    return labels.index(label)


def posterior_matrix(times: np.ndarray, points: np.ndarray, query_times: np.ndarray,
                     scene: Scene, observer: ObserverModel) -> np.ndarray:
    """
    Goal posteriors of every prefix ending at the query times

    The prefix ending at t is the observed polyline up to t, including the
    linearly interpolated point at t, so its path length is exact.

    Args:
        times: (n,) sample times of the observed trajectory
        points: (n, 3) observed positions
        query_times: (m,) prefix end times
        scene: Scene providing the goals
        observer: Observer model

    Returns:
        (m, goal count) array of posteriors, each row summing to 1
    """
    goals = scene.goal_array()
    log_prior = observer.log_prior(scene.labels)
    beta = observer.temperature_beta

    query_times = np.atleast_1d(np.asarray(query_times, dtype=float))
    travelled = np.interp(query_times, times, cumulative_length(points))
    current = np.column_stack([np.interp(query_times, times, points[:, axis])
                               for axis in range(points.shape[1])])

    cost_to_go = np.linalg.norm(current[:, None, :] - goals[None, :, :], axis=2)
    cost_from_start = np.linalg.norm(points[0][None, :] - goals, axis=1)

    logits = log_prior[None, :] - beta * (travelled[:, None] + cost_to_go - cost_from_start[None, :])
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def goal_posterior(partial: Union[Trajectory, np.ndarray], scene: Scene,
                   observer: ObserverModel) -> Dict[str, float]:
    """
    Probability of each goal given the observed partial trajectory

    Args:
        partial: Trajectory, or an (m, 3) array of positions with m >= 1
        scene: Scene providing the goals
        observer: Observer model

    Returns:
        Mapping goal label -> probability (sums to 1)
    """
    if isinstance(partial, Trajectory):
        times, points = partial.times, partial.points
    else:
        points = np.atleast_2d(np.asarray(partial, dtype=float))
        if points.shape[0] < 1 or points.shape[1] != 3:
            raise TrajectoryError(f"Partial trajectory must be (m, 3) with m >= 1, got {points.shape}")
        times = np.arange(points.shape[0], dtype=float)

    row = posterior_matrix(times, points, times[-1:], scene, observer)[0]
    return {label: float(p) for label, p in zip(scene.labels, row)}


def legibility_score(traj: Trajectory, intended_goal: str, scene: Scene,
                     observer: ObserverModel) -> LegibilityScore:
    """
    Legibility of a trajectory for its intended goal

    Trapezoidal, f(t)-weighted average over the trajectory samples of the
    posterior of the intended goal given the prefix up to each sample.

    Args:
        traj: Full trajectory
        intended_goal: Label of the goal the trajectory reaches
        scene: Scene providing the goals
        observer: Observer model

    Returns:
        LegibilityScore in [0, 1]
    """
    index = _goal_index(scene, intended_goal)
    probabilities = posterior_matrix(traj.times, traj.points, traj.times, scene, observer)[:, index]
    weights = observer.weights(traj.times)
    normalizer = trapezoid(weights, traj.times)
    if not normalizer > 0:
        raise ObserverError("Weighting f(t) integrates to zero over the trajectory")
    value = trapezoid(probabilities * weights, traj.times) / normalizer
    return LegibilityScore(float(min(max(value, 0.0), 1.0)))


@dataclass(frozen=True)
class OptimizerParams:
    """Settings of the legible-trajectory optimizer (lengths in cm, times in s)"""
    waypoints: int = 8
    max_iters: int = 200
    step: float = 1.0
    tolerance: float = 1e-7
    max_deviation: float = 3.0
    dt: float = 0.1
    fd_step: float = 1e-3
    min_step: float = 1e-3

    def __post_init__(self):
        if self.waypoints < 3:
            raise TrajectoryError(f"Optimizer needs at least 3 waypoints, got {self.waypoints}")
        if self.max_iters < 0:
            raise TrajectoryError(f"max_iters must be >= 0, got {self.max_iters}")
        for name in ('step', 'max_deviation', 'dt', 'fd_step', 'min_step'):
            if not getattr(self, name) > 0:
                raise TrajectoryError(f"Optimizer {name} must be > 0, got {getattr(self, name)}")
        if self.tolerance < 0:
            raise TrajectoryError(f"Optimizer tolerance must be >= 0, got {self.tolerance}")


@dataclass(frozen=True)
class OptimizationResult:
    """Outcome of a legible-trajectory optimization"""
    trajectory: Trajectory
    score: float
    baseline_score: float
    iterations: int
    converged: bool
    offsets: Tuple[float, ...] = ()
    history: Tuple[float, ...] = field(default_factory=tuple)


def away_side(scene: Scene, intended_goal: str, lateral: np.ndarray) -> float:
    """
    Sign of the lateral offsets that bow the path away from the competing goals

    Args:
        scene: Scene with start and goals
        intended_goal: Label of the goal to reach
        lateral: Unit lateral direction of the straight path

    Returns:
        +1.0 or -1.0; +1.0 when the competitors balance out or there are none
    """
    start = scene.start.as_array()
    pull = sum(float(np.dot(pose.as_array() - start, lateral))
               for label, pose in scene.goals if label != intended_goal)
    return -1.0 if pull > 1e-12 else 1.0


def lateral_direction(start: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """
    Horizontal unit vector perpendicular to the straight path start -> goal

    Points 90 degrees counter-clockwise from the path's ground direction;
    a purely vertical path uses +x.
    """
    dx, dy = (goal - start)[:2]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return np.array([1.0, 0.0, 0.0])
    return np.array([-dy / norm, dx / norm, 0.0])


class LegibleOptimizer:
    """
    Finite-difference gradient ascent on the lateral offsets of interior waypoints

    Endpoints stay fixed at the start and the intended goal; each interior
    waypoint may move horizontally, perpendicular to the straight path, by
    at most max_deviation and only on the side away from the competing goals,
    so the path bows instead of zig-zagging. Every candidate polyline is re-timed to constant
    speed over the scene duration before it is scored.
    """

    def __init__(self, params: Optional[OptimizerParams] = None):
        """
        Initialize the optimizer

        Args:
            params: Default optimizer settings
        """
        self.logger = setup_logger(__name__)
        self.params = params or OptimizerParams()

    def set_params(self, **changes) -> None:
        """
        Update optimizer settings

        Args:
            **changes: OptimizerParams fields to replace
        """
        self.params = replace(self.params, **changes)
        for name, value in changes.items():
            self.logger.info(f"Updated optimizer {name} to {value}")

    def _build(self, base: np.ndarray, lateral: np.ndarray, offsets: np.ndarray,
               duration: float, dt: float) -> Trajectory:
        waypoints = base.copy()
        waypoints[1:-1] += offsets[:, None] * lateral[None, :]
        return resample(constant_speed(waypoints, duration), dt)

    def optimize(self, scene: Scene, intended_goal: str, observer: ObserverModel,
                 params: Optional[OptimizerParams] = None) -> OptimizationResult:
        """
        Optimize a legible trajectory toward the intended goal

        Args:
            scene: Scene with start and goals
            intended_goal: Label of the goal to reach
            observer: Observer model used for scoring
            params: Settings for this run (defaults to the optimizer's)

        Returns:
            OptimizationResult; when no iterate beats the straight line, the
            straight line itself is returned
        """
        params = params or self.params
        _goal_index(scene, intended_goal)
        goal_pose = scene.goal(intended_goal)

        start = scene.start.as_array()
        goal = goal_pose.as_array()
        fractions = np.linspace(0.0, 1.0, params.waypoints)
        base = start + fractions[:, None] * (goal - start)
        base[-1] = goal
        lateral = lateral_direction(start, goal)
        side = away_side(scene, intended_goal, lateral)
        bound = params.max_deviation

        # Magnitudes in [0, bound]; the waypoint offsets are side * magnitude
        def evaluate(magnitudes: np.ndarray) -> float:
            traj = self._build(base, lateral, side * magnitudes, scene.duration, params.dt)
            return legibility_score(traj, intended_goal, scene, observer).value

        baseline = straight_line(scene.start, goal_pose, scene.duration, params.dt)
        baseline_score = legibility_score(baseline, intended_goal, scene, observer).value

        offsets = np.zeros(params.waypoints - 2)
        current = evaluate(offsets)
        history = [current]
        step = params.step
        converged = False
        iterations = 0

        for iterations in range(1, params.max_iters + 1):
            gradient = np.empty_like(offsets)
            for i in range(offsets.size):
                shifted = offsets.copy()
                shifted[i] = offsets[i] + params.fd_step
                upper = evaluate(shifted)
                # One-sided at the zero bound
                shifted[i] = max(offsets[i] - params.fd_step, 0.0)
                lower = evaluate(shifted)
                gradient[i] = (upper - lower) / (offsets[i] + params.fd_step - shifted[i])

            # Components pushing past the deviation bound are frozen
            blocked = ((offsets >= bound) & (gradient > 0)) | ((offsets <= 0.0) & (gradient < 0))
            gradient[blocked] = 0.0
            norm = float(np.linalg.norm(gradient))
            if norm <= 1e-12:
                converged = True
                break
            direction = gradient / norm

            accepted = None
            while step >= params.min_step:
                candidate = np.clip(offsets + step * direction, 0.0, bound)
                score = evaluate(candidate)
                if score > current:
                    accepted = (candidate, score)
                    break
                step *= 0.5

            if accepted is None:
                converged = True
                break

            improvement = accepted[1] - current
            offsets, current = accepted
            history.append(current)
            step = min(step * 1.5, params.step)
            self.logger.debug(f"Iteration {iterations}: score={current:.6f}, step={step:.4g}")
            if improvement < params.tolerance:
                converged = True
                break

        if len(history) == 1 or current <= baseline_score:
            trajectory, score = baseline, baseline_score
            offsets = np.zeros_like(offsets)
        else:
            offsets = side * offsets
            trajectory = self._build(base, lateral, offsets, scene.duration, params.dt)
            score = current

        if not converged:
            self.logger.warning(f"Legible optimization toward '{intended_goal}' did not converge "
                                f"in {params.max_iters} iterations (score={score:.4f})")
        else:
            self.logger.info(f"Legible optimization toward '{intended_goal}': "
                             f"score {baseline_score:.4f} -> {score:.4f} "
                             f"in {iterations} iterations")

        return OptimizationResult(
            trajectory=trajectory,
            score=score,
            baseline_score=baseline_score,
            iterations=iterations,
            converged=converged,
            offsets=tuple(float(o) for o in offsets),
            history=tuple(history),
        )


# Global optimizer instance
_optimizer = None

def get_optimizer() -> LegibleOptimizer:
    """Get global legible optimizer instance"""
    global _optimizer
    if _optimizer is None:
        _optimizer = LegibleOptimizer()
    return _optimizer


def optimize_legible(scene: Scene, intended_goal: str, observer: ObserverModel,
                     params: Optional[OptimizerParams] = None) -> OptimizationResult:
    """
    Convenience function to optimize a legible trajectory

    Args:
        scene: Scene with start and goals
        intended_goal: Label of the goal to reach
        observer: Observer model
        params: Optimizer settings

    Returns:
        OptimizationResult
    """
    return get_optimizer().optimize(scene, intended_goal, observer, params)
