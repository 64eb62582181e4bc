"""
Observer Simulation Module for the Active Shadowing planner

Desk-scale stand-in for the human prediction studies. A simulated observer
watches one channel (the robot, its shadow or a hologram), updates its goal
posterior as the motion unfolds, and commits to a goal once a posterior
crosses the commit threshold theta.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from asd_planner import RateConstraint, get_planner
from legibility import ObserverModel, OptimizerParams, posterior_matrix
from trajectory import (Scene, ShadowTrajectory, Trajectory, deviation_cost,
                        path_length, straight_line, time_grid)
from utils import ObserverError, setup_logger


NORMALIZATION_TOLERANCE = 1e-9

REPORT_COLUMNS = ['method', 'zeta_cm2', 'path_length_cm', 'commit_time_s', 'correct']

logger = setup_logger(__name__)


@dataclass(frozen=True, eq=False)
class PredictionCurve:
    """Goal posteriors over time: times (m,), labels, posteriors (m, goal count)"""
    times: np.ndarray
    labels: Tuple[str, ...]
    posteriors: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        posteriors = np.array(self.posteriors, dtype=float)
        labels = tuple(self.labels)
        if times.ndim != 1 or posteriors.shape != (times.shape[0], len(labels)):
            raise ObserverError(
                f"Prediction curve shape mismatch: times {times.shape}, "
                f"posteriors {posteriors.shape}, {len(labels)} goals")
        if np.any(np.diff(times) <= 0):
            raise ObserverError("Prediction curve timestamps must be strictly increasing")
        if np.any(np.abs(posteriors.sum(axis=1) - 1.0) > NORMALIZATION_TOLERANCE):
            raise ObserverError("Every posterior in a prediction curve must sum to 1")
        times.flags.writeable = False
        posteriors.flags.writeable = False
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'posteriors', posteriors)

    def __len__(self) -> int:
        return self.times.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictionCurve):
            return NotImplemented
        return (self.labels == other.labels and np.array_equal(self.times, other.times)
                and np.array_equal(self.posteriors, other.posteriors))

    @property
    def points(self) -> List[Tuple[float, Dict[str, float]]]:
        return [(float(t), dict(zip(self.labels, (float(p) for p in row))))
                for t, row in zip(self.times, self.posteriors)]

    def probability_of(self, label: str) -> np.ndarray:
        if label not in self.labels:
            raise ObserverError(f"Unknown goal '{label}'; curve goals are {list(self.labels)}")
        return self.posteriors[:, self.labels.index(label)]

    def rows(self) -> List[dict]:
        """One dict per sample keyed by 't' and the goal labels"""
        return [{'t': t, **posterior} for t, posterior in self.points]


@dataclass(frozen=True)
class CommitResult:
    """When, and to which goal, the observer committed (all None if never)"""
    committed_goal: Optional[str] = None
    commit_time: Optional[float] = None
    correct: Optional[bool] = None

    def __post_init__(self):
        if (self.committed_goal is None) != (self.commit_time is None):
            raise ObserverError("committed_goal and commit_time must be set together")

    @property
    def committed(self) -> bool:
        return self.committed_goal is not None


def prediction_curve(observed: Union[Trajectory, ShadowTrajectory], scene: Scene,
                     observer: ObserverModel, dt: float = 0.1) -> PredictionCurve:
    """
    Goal posteriors of the observed motion, sampled every dt

    A shadow is watched on the ground plane: it is lifted to h = 0 and the
    goals are replaced by their ground positions.

    Args:
        observed: Robot, hologram or shadow trajectory the observer watches
        scene: Scene providing the goals
        observer: Observer model
        dt: Sampling step of the curve

    Returns:
        PredictionCurve whose last sample uses the full observed trajectory
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ObserverError(f"Prediction curve step must be > 0, got {dt}")
    if isinstance(observed, ShadowTrajectory):
        observed = observed.lift()
        scene = scene.ground_projected()

    query = time_grid(float(observed.times[0]), float(observed.times[-1]), dt)
    posteriors = posterior_matrix(observed.times, observed.points, query, scene, observer)
    return PredictionCurve(query, tuple(scene.labels), posteriors)


def overhead_view(observed: Union[Trajectory, ShadowTrajectory]) -> ShadowTrajectory:
    """
    The observed channel as seen from overhead: a robot or hologram path is
    replaced by its ground track, a shadow is returned unchanged
    """
    if isinstance(observed, ShadowTrajectory):
        return observed
    return observed.ground_track()


def time_to_commit(curve: PredictionCurve, theta: float,
                   intended: Optional[str] = None) -> CommitResult:
    """
    Earliest time any goal's posterior reaches theta

    Args:
        curve: Prediction curve
        theta: Commit threshold, 0.5 < theta <= 1
        intended: Goal the robot actually reaches, used to judge correctness

    Returns:
        CommitResult; empty when the threshold is never reached
    """
    if not 0.5 < theta <= 1.0:
        raise ObserverError(f"Commit threshold must satisfy 0.5 < theta <= 1, got {theta}")
    best = curve.posteriors.max(axis=1)
    hits = np.flatnonzero(best >= theta)
    if hits.size == 0:
        return CommitResult()
    index = int(hits[0])
    goal = curve.labels[int(np.argmax(curve.posteriors[index]))]
    correct = None if intended is None else goal == intended
    return CommitResult(goal, float(curve.times[index]), correct)


def _report_row(method: str, robot: Trajectory, reference: Trajectory,
                commit: CommitResult) -> dict:
    return {
        'method': method,
        'zeta_cm2': deviation_cost(robot, reference),
        'path_length_cm': path_length(robot),
        'commit_time_s': commit.commit_time,
        'correct': commit.correct,
    }


def compare_methods(scene: Scene, observer: ObserverModel, constraint: Optional[RateConstraint] = None,
                    params: Optional[OptimizerParams] = None,
                    intended_goal: Optional[str] = None,
                    include_hologram: bool = False,
                    planner=None) -> List[dict]:
    """
    Efficiency and prediction-time report for the communication methods

    ASD: robot on the straight path, observer watches the legible shadow.
    BIC: robot itself takes the legible path and is watched.
    NE: robot on the straight path, watched with no augmentation.
    BEC (optional): robot on the straight path, observer watches a hologram
    tracing the legible path.

    Every channel is judged in the same overhead view (see overhead_view), so
    the shadow of the legible path under overhead light and the legible robot
    itself give the same commit time.

    Args:
        scene: Scene with start and goals
        observer: Observer model (its theta is the commit threshold)
        constraint: RateConstraint for the ASD plan
        params: Legible optimizer settings
        intended_goal: Goal the robot reaches (defaults to the first goal)
        include_hologram: Add the BEC row
        planner: ActiveShadowPlanner (defaults to the global planner)

    Returns:
        List of row dicts with REPORT_COLUMNS keys, in method order
    """
    planner = planner or get_planner()
    params = params or planner.optimizer.params
    intended = intended_goal or scene.labels[0]
    plan = planner.plan_legible_illusion(scene, intended, observer, constraint, params)
    dt = params.dt

    straight = plan.robot
    legible = plan.desired
    reference = straight_line(scene.start, scene.goal(intended), scene.duration, dt)
    theta = observer.commit_threshold_theta

    def commit(watched) -> CommitResult:
        curve = prediction_curve(overhead_view(watched), scene, observer, dt)
        return time_to_commit(curve, theta, intended)

    rows = [
        _report_row('ASD', straight, reference, commit(plan.shadow)),
        _report_row('BIC', legible, reference, commit(legible)),
        _report_row('NE', straight, reference, commit(straight)),
    ]
    if include_hologram:
        rows.append(_report_row('BEC', straight, reference, commit(legible)))

    for row in rows:
        logger.info(f"{row['method']}: zeta={row['zeta_cm2']:.3f} cm^2, "
                    f"length={row['path_length_cm']:.3f} cm, commit={row['commit_time_s']}, "
                    f"correct={row['correct']}")
    return rows
