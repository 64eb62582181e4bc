"""
Scenario Module for the Active Shadowing planner

Loads the declarative `.scn` scenario files (JSON text) that configure every
experiment. The schema is strict: unknown keys are rejected with their dotted
path, and every optional field falls back to the value in DEFAULTS.
"""

import copy
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

from asd_planner import RateConstraint, light_sweep_trajectory
from geometry import OVERHEAD_LIGHT, GripperPose, LightDirection
from legibility import ObserverModel, OptimizerParams
from trajectory import Scene, Trajectory, straight_line, trajectory_from_waypoints
from utils import ActiveShadowingError, ScenarioError, setup_logger


REQUIRED = object()

FORMATS = ('csv', 'svg')

DEFAULTS: Dict[str, Any] = {
    'scene': {
        'start': REQUIRED,
        'goals': REQUIRED,
        'table_height': 0.0,
        'duration': 10.0,
        'intended_goal': None,
    },
    'observer': {
        'beta': 1.0,
        'prior': None,
        'weighting': 'linear',
        'theta': 0.8,
    },
    'constraint': {
        'epsilon': 15.0,
        'delta_t': 3.0,
    },
    'planner': {
        'dt': 0.1,
        'lookahead_k': 4.0,
        'smoothing_gain': None,
        'enforce': False,
        'nominal_light': [90.0, 0.0],
        'optimizer': {
            'waypoints': 8,
            'max_iters': 200,
            'step': 1.0,
            'tolerance': 1e-7,
            'max_deviation': 3.0,
        },
    },
    'motion': {
        'stationary': None,
        'desired_waypoints': None,
        'sweeps_deg': None,
        'sweep_period': 3.0,
        'sweep_azimuth': 0.0,
    },
    'compare': {
        'include_hologram': False,
    },
    'outputs': {
        'directory': 'out',
        'formats': ['csv'],
    },
}

GOAL_KEYS = ('label', 'position')

logger = setup_logger(__name__)


@dataclass(frozen=True)
class MotionSpec:
    """Stimulus for the illusion of motion: a still tip and what its shadow should do"""
    stationary: GripperPose
    desired: Optional[Trajectory] = None
    sweeps_deg: Tuple[float, ...] = ()
    sweep_period: float = 3.0
    sweep_azimuth: float = 0.0

    def sweep(self, amplitude: float, dt: float) -> Trajectory:
        """Desired trajectory for one sweep amplitude: down and back up once"""
        return light_sweep_trajectory(self.stationary, amplitude, self.sweep_period,
                                      2 * self.sweep_period, self.sweep_azimuth, dt)


@dataclass(frozen=True)
class ScenarioFile:
    """A validated scenario"""
    name: str
    scene: Scene
    intended_goal: str
    observer: ObserverModel
    constraint: RateConstraint
    optimizer: OptimizerParams
    lookahead_k: float = 4.0
    smoothing_gain: Optional[float] = None
    enforce: bool = False
    nominal_light: LightDirection = OVERHEAD_LIGHT
    motion: Optional[MotionSpec] = None
    include_hologram: bool = False
    output_dir: str = 'out'
    formats: Tuple[str, ...] = ('csv',)

    @property
    def dt(self) -> float:
        return self.optimizer.dt

    def robot_approach(self) -> Trajectory:
        """Straight, constant-speed approach from the start to the intended goal"""
        return straight_line(self.scene.start, self.scene.goal(self.intended_goal),
                             self.scene.duration, self.dt)

    def with_overrides(self, dt: float = None, epsilon: float = None, delta_t: float = None,
                       lookahead: float = None, theta: float = None, enforce: bool = None,
                       formats: Tuple[str, ...] = None, output_dir: str = None) -> "ScenarioFile":
        """
        Apply command-line overrides

        Returns:
            New ScenarioFile; None arguments leave the scenario value in place
        """
        try:
            changes = {}
            if dt is not None:
                changes['optimizer'] = replace(self.optimizer, dt=dt)
            if epsilon is not None or delta_t is not None:
                changes['constraint'] = RateConstraint(
                    epsilon if epsilon is not None else self.constraint.epsilon,
                    delta_t if delta_t is not None else self.constraint.delta_t)
            if lookahead is not None:
                changes['lookahead_k'] = lookahead
            if theta is not None:
                changes['observer'] = replace(self.observer, commit_threshold_theta=theta)
            if enforce:
                changes['enforce'] = True
            if formats is not None:
                changes['formats'] = _formats(list(formats), 'outputs.formats')
            if output_dir is not None:
                changes['output_dir'] = output_dir
        except ActiveShadowingError as e:
            raise ScenarioError(f"Invalid command-line override: {e}") from e
        return replace(self, **changes)


def _number(value, key: str, minimum: float = None, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{key}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(f"{key}: must be > 0, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{key}: must be >= {minimum}, got {value!r}")
    return value


def _integer(value, key: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ScenarioError(f"{key}: must be >= {minimum}, got {value!r}")
    return value


def _boolean(value, key: str) -> bool:
    if not isinstance(value, bool):
        raise ScenarioError(f"{key}: expected true or false, got {value!r}")
    return value


def _vector(value, key: str, lengths: Tuple[int, ...]) -> Tuple[float, ...]:
    if not isinstance(value, list) or len(value) not in lengths:
        raise ScenarioError(f"{key}: expected a list of {' or '.join(map(str, lengths))} numbers, "
                            f"got {value!r}")
    return tuple(_number(v, f"{key}[{i}]") for i, v in enumerate(value))


def _pose(value, key: str, default_height: float = None) -> GripperPose:
    lengths = (3,) if default_height is None else (2, 3)
    coords = _vector(value, key, lengths)
    if len(coords) == 2:
        coords = coords + (default_height,)
    try:
        return GripperPose(*coords)
    except ActiveShadowingError as e:
        raise ScenarioError(f"{key}: {e}") from e


def _formats(value, key: str) -> Tuple[str, ...]:
    if not isinstance(value, list) or not value:
        raise ScenarioError(f"{key}: expected a non-empty list of formats, got {value!r}")
    for item in value:
        if item not in FORMATS:
            raise ScenarioError(f"{key}: unknown format {item!r}, expected one of {list(FORMATS)}")
    return tuple(dict.fromkeys(value))


def _merge(defaults: Dict[str, Any], data: Any, path: str) -> Dict[str, Any]:
    """Overlay data on defaults, rejecting unknown keys and missing required ones"""
    if not isinstance(data, dict):
        raise ScenarioError(f"{path or 'scenario'}: expected an object, got {type(data).__name__}")
    for key in data:
        if key not in defaults:
            raise ScenarioError(f"Unknown key '{path + '.' if path else ''}{key}'")

    merged = {}
    for key, default in defaults.items():
        dotted = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            merged[key] = _merge(default, data.get(key, {}), dotted)
        elif key in data:
            merged[key] = data[key]
        elif default is REQUIRED:
            raise ScenarioError(f"Missing required key '{dotted}'")
        else:
            merged[key] = copy.deepcopy(default)
    return merged


def _build_scene(section: Dict[str, Any]) -> Tuple[Scene, str]:
    table_height = _number(section['table_height'], 'scene.table_height', minimum=0.0)
    duration = _number(section['duration'], 'scene.duration', positive=True)
    start = _pose(section['start'], 'scene.start')

    raw_goals = section['goals']
    if not isinstance(raw_goals, list) or not raw_goals:
        raise ScenarioError(f"scene.goals: expected a non-empty list, got {raw_goals!r}")
    goals = []
    for i, entry in enumerate(raw_goals):
        key = f"scene.goals[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{key}: expected an object with label and position")
        for name in entry:
            if name not in GOAL_KEYS:
                raise ScenarioError(f"Unknown key '{key}.{name}'")
        for name in GOAL_KEYS:
            if name not in entry:
                raise ScenarioError(f"Missing required key '{key}.{name}'")
        if not isinstance(entry['label'], str) or not entry['label']:
            raise ScenarioError(f"{key}.label: expected a non-empty string")
        goals.append((entry['label'], _pose(entry['position'], f"{key}.position", table_height)))

    try:
        scene = Scene(start, tuple(goals), table_height=table_height, duration=duration)
    except ActiveShadowingError as e:
        raise ScenarioError(f"scene: {e}") from e

    intended = section['intended_goal']
    if intended is None:
        intended = scene.labels[0]
    elif intended not in scene.labels:
        raise ScenarioError(f"scene.intended_goal: unknown goal {intended!r}, "
                            f"expected one of {scene.labels}")
    return scene, intended


def _build_observer(section: Dict[str, Any]) -> ObserverModel:
    prior = section['prior']
    if prior is not None:
        if not isinstance(prior, dict):
            raise ScenarioError("observer.prior: expected an object of goal probabilities")
        prior = tuple((label, _number(p, f"observer.prior.{label}", minimum=0.0))
                      for label, p in prior.items())
    if not isinstance(section['weighting'], str):
        raise ScenarioError(f"observer.weighting: expected a name, got {section['weighting']!r}")
    try:
        return ObserverModel(
            temperature_beta=_number(section['beta'], 'observer.beta', positive=True),
            prior=prior,
            weighting=section['weighting'],
            commit_threshold_theta=_number(section['theta'], 'observer.theta'),
        )
    except ActiveShadowingError as e:
        raise ScenarioError(f"observer: {e}") from e


def _build_motion(section: Dict[str, Any]) -> Optional[MotionSpec]:
    if section['stationary'] is None:
        for key in ('desired_waypoints', 'sweeps_deg'):
            if section[key] is not None:
                raise ScenarioError(f"motion.{key}: requires motion.stationary")
        return None

    stationary = _pose(section['stationary'], 'motion.stationary')
    waypoints = section['desired_waypoints']
    sweeps = section['sweeps_deg']
    if (waypoints is None) == (sweeps is None):
        raise ScenarioError("motion: give exactly one of desired_waypoints or sweeps_deg")

    desired = None
    if waypoints is not None:
        if not isinstance(waypoints, list):
            raise ScenarioError("motion.desired_waypoints: expected a list of [t, x, y, h] rows")
        rows = [_vector(row, f"motion.desired_waypoints[{i}]", (4,)) for i, row in enumerate(waypoints)]
        try:
            desired = trajectory_from_waypoints(rows)
        except ActiveShadowingError as e:
            raise ScenarioError(f"motion.desired_waypoints: {e}") from e
        sweeps = ()
    else:
        if not isinstance(sweeps, list) or not sweeps:
            raise ScenarioError("motion.sweeps_deg: expected a non-empty list of amplitudes")
        sweeps = tuple(_number(v, f"motion.sweeps_deg[{i}]", minimum=0.0)
                       for i, v in enumerate(sweeps))
        if any(v >= 90.0 for v in sweeps):
            raise ScenarioError(f"motion.sweeps_deg: amplitudes must be < 90, got {list(sweeps)}")

    return MotionSpec(
        stationary=stationary,
        desired=desired,
        sweeps_deg=sweeps,
        sweep_period=_number(section['sweep_period'], 'motion.sweep_period', positive=True),
        sweep_azimuth=_number(section['sweep_azimuth'], 'motion.sweep_azimuth'),
    )


def parse_scenario(data: Any, name: str = "scenario") -> ScenarioFile:
    """
    Validate parsed scenario data

    Args:
        data: Object decoded from the scenario JSON
        name: Scenario name used in output paths and messages

    Returns:
        ScenarioFile with every default applied

    Raises:
        ScenarioError: naming the offending key
    """
    merged = _merge(DEFAULTS, data, "")
    scene, intended = _build_scene(merged['scene'])
    observer = _build_observer(merged['observer'])

    constraint_section = merged['constraint']
    try:
        constraint = RateConstraint(
            _number(constraint_section['epsilon'], 'constraint.epsilon', positive=True),
            _number(constraint_section['delta_t'], 'constraint.delta_t', positive=True))
    except ActiveShadowingError as e:
        raise ScenarioError(f"constraint: {e}") from e

    planner = merged['planner']
    dt = _number(planner['dt'], 'planner.dt', positive=True)
    opt = planner['optimizer']
    try:
        optimizer = OptimizerParams(
            waypoints=_integer(opt['waypoints'], 'planner.optimizer.waypoints', 3),
            max_iters=_integer(opt['max_iters'], 'planner.optimizer.max_iters', 0),
            step=_number(opt['step'], 'planner.optimizer.step', positive=True),
            tolerance=_number(opt['tolerance'], 'planner.optimizer.tolerance', minimum=0.0),
            max_deviation=_number(opt['max_deviation'], 'planner.optimizer.max_deviation',
                                  positive=True),
            dt=dt,
        )
    except ActiveShadowingError as e:
        raise ScenarioError(f"planner.optimizer: {e}") from e

    gain = planner['smoothing_gain']
    if gain is not None:
        gain = _number(gain, 'planner.smoothing_gain', positive=True)
        if gain > 1.0:
            raise ScenarioError(f"planner.smoothing_gain: must lie in (0, 1], got {gain}")

    alpha, phi = _vector(planner['nominal_light'], 'planner.nominal_light', (2,))
    try:
        nominal_light = LightDirection.normalized(alpha, phi)
    except ActiveShadowingError as e:
        raise ScenarioError(f"planner.nominal_light: {e}") from e

    outputs = merged['outputs']
    if not isinstance(outputs['directory'], str) or not outputs['directory']:
        raise ScenarioError("outputs.directory: expected a non-empty path")

    return ScenarioFile(
        name=name,
        scene=scene,
        intended_goal=intended,
        observer=observer,
        constraint=constraint,
        optimizer=optimizer,
        lookahead_k=_number(planner['lookahead_k'], 'planner.lookahead_k', positive=True),
        smoothing_gain=gain,
        enforce=_boolean(planner['enforce'], 'planner.enforce'),
        nominal_light=nominal_light,
        motion=_build_motion(merged['motion']),
        include_hologram=_boolean(merged['compare']['include_hologram'], 'compare.include_hologram'),
        output_dir=outputs['directory'],
        formats=_formats(outputs['formats'], 'outputs.formats'),
    )


def load_scenario(path: str) -> ScenarioFile:
    """
    Load and validate a scenario file

    Args:
        path: Path to a .scn file

    Returns:
        ScenarioFile named after the file stem
    """
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"Scenario file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from e

    scenario = parse_scenario(data, name)
    logger.info(f"Loaded scenario '{name}' from {path}: goals {scenario.scene.labels}, "
                f"intended '{scenario.intended_goal}'")
    return scenario
