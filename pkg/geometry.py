"""
Shadow Geometry Module for the Active Shadowing planner

Forward projection of the gripper tip's shadow under a directional light,
the inverse solve for the light that puts the shadow on a chosen ground
point, and the great-circle metric on light directions.

Conventions: lengths in cm, angles in degrees. Elevation alpha is measured
from the ground plane (90 = overhead); azimuth phi is the ground-plane
direction in which the shadow is displaced from the tip's ground projection.
"""

import math
from dataclasses import dataclass

import numpy as np

from utils import InvalidLightError, InvalidPoseError, InfeasibleShadowError


OVERHEAD_ELEVATION = 90.0

# Offsets below this are treated as "shadow directly under the tip"
ZERO_OFFSET_TOLERANCE = 1e-12


def _check_finite(values, error_cls, what: str) -> None:
    if not all(math.isfinite(v) for v in values):
        raise error_cls(f"{what} has non-finite coordinates: {values}")


@dataclass(frozen=True)
class GroundPoint:
    """A point on the ground (table) plane, height 0"""
    x: float
    y: float

    def __post_init__(self):
        _check_finite((self.x, self.y), InvalidPoseError, "GroundPoint")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "GroundPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class GripperPose:
    """Position of the gripper tip: lateral x, depth y, height h above the ground plane"""
    x: float
    y: float
    h: float

    def __post_init__(self):
        _check_finite((self.x, self.y, self.h), InvalidPoseError, "GripperPose")
        if self.h < 0:
            raise InvalidPoseError(f"GripperPose height must be >= 0, got {self.h}")

    @classmethod
    def from_array(cls, values) -> "GripperPose":
        x, y, h = (float(v) for v in values)
        return cls(x, y, h)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h], dtype=float)

    def ground_projection(self) -> GroundPoint:
        return GroundPoint(self.x, self.y)


@dataclass(frozen=True)
class LightDirection:
    """Directional light: elevation alpha in (0, 90], azimuth phi in [0, 360)"""
    elevation_alpha: float
    azimuth_phi: float = 0.0

    def __post_init__(self):
        _check_finite((self.elevation_alpha, self.azimuth_phi), InvalidLightError, "LightDirection")
        if not 0.0 < self.elevation_alpha <= OVERHEAD_ELEVATION:
            raise InvalidLightError(
                f"Light elevation must satisfy 0 < alpha <= 90, got {self.elevation_alpha}")
        if not 0.0 <= self.azimuth_phi < 360.0:
            raise InvalidLightError(
                f"Light azimuth must satisfy 0 <= phi < 360, got {self.azimuth_phi}")

    @classmethod
    def normalized(cls, elevation_alpha: float, azimuth_phi: float) -> "LightDirection":
        """Build a light, wrapping the azimuth into [0, 360)"""
        return cls(elevation_alpha, wrap_azimuth(azimuth_phi))

    @property
    def is_overhead(self) -> bool:
        return self.elevation_alpha == OVERHEAD_ELEVATION


OVERHEAD_LIGHT = LightDirection(OVERHEAD_ELEVATION, 0.0)


def wrap_azimuth(phi: float) -> float:
    """Wrap an angle in degrees into [0, 360)"""
    wrapped = math.fmod(phi, 360.0)
    if wrapped < 0.0:
        wrapped += 360.0
    # -1e-17 % 360 rounds up to 360.0
    if wrapped >= 360.0:
        wrapped = 0.0
    return wrapped


def shadow_offset(h: float, elevation_alpha: float) -> float:
    """
    Horizontal distance between the tip's ground projection and its shadow

    Args:
        h: Tip height (cm)
        elevation_alpha: Light elevation (degrees)

    Returns:
        h / tan(alpha), exactly 0 for an overhead light
    """
    if elevation_alpha == OVERHEAD_ELEVATION or h == 0.0:
        return 0.0
    return h / math.tan(math.radians(elevation_alpha))


def project_shadow(pose: GripperPose, light: LightDirection) -> GroundPoint:
    """
    Project the gripper tip onto the ground plane along the light direction

    Args:
        pose: Gripper tip pose
        light: Directional light

    Returns:
        Shadow position (pose.x, pose.y) + (h / tan(alpha)) * (cos phi, sin phi)
    """
    offset = shadow_offset(pose.h, light.elevation_alpha)
    if offset == 0.0:
        return GroundPoint(pose.x, pose.y)
    phi = math.radians(light.azimuth_phi)
    return GroundPoint(pose.x + offset * math.cos(phi), pose.y + offset * math.sin(phi))


def solve_light(pose: GripperPose, desired_shadow: GroundPoint,
                previous: LightDirection) -> LightDirection:
    """
    Solve for the light that casts the tip's shadow onto desired_shadow

    Args:
        pose: Gripper tip pose casting the shadow
        desired_shadow: Where the shadow should fall
        previous: Light at the previous sample; its azimuth is kept when the
            shadow sits directly under the tip

    Returns:
        LightDirection with project_shadow(pose, result) == desired_shadow

    Raises:
        InfeasibleShadowError: pose.h == 0 and the shadow must move away from the tip
    """
    dx = desired_shadow.x - pose.x
    dy = desired_shadow.y - pose.y
    distance = math.hypot(dx, dy)

    if distance <= ZERO_OFFSET_TOLERANCE:
        return LightDirection(OVERHEAD_ELEVATION, previous.azimuth_phi)

    if pose.h == 0.0:
        raise InfeasibleShadowError(
            f"Tip at ({pose.x:.6g}, {pose.y:.6g}) rests on the ground plane; "
            f"cannot displace its shadow by {distance:.6g} cm")

    alpha = math.degrees(math.atan2(pose.h, distance))
    phi = wrap_azimuth(math.degrees(math.atan2(dy, dx)))
    return LightDirection(alpha, phi)


def light_vector(light: LightDirection) -> np.ndarray:
    """Unit vector of the light direction (toward the light source, z up)"""
    if light.is_overhead:
        return np.array([0.0, 0.0, 1.0])
    alpha = math.radians(light.elevation_alpha)
    phi = math.radians(light.azimuth_phi)
    return np.array([math.cos(alpha) * math.cos(phi),
                     math.cos(alpha) * math.sin(phi),
                     math.sin(alpha)])


def light_from_vector(vector: np.ndarray, fallback_phi: float = 0.0) -> LightDirection:
    """
    Convert a direction vector with positive z back to a LightDirection

    Args:
        vector: Direction with z > 0 (need not be unit length)
        fallback_phi: Azimuth used when the vector is vertical

    Returns:
        LightDirection pointing along vector
    """
    x, y, z = (float(v) for v in vector)
    horizontal = math.hypot(x, y)
    if horizontal <= ZERO_OFFSET_TOLERANCE * max(abs(z), 1.0):
        return LightDirection(OVERHEAD_ELEVATION, fallback_phi)
    alpha = min(math.degrees(math.atan2(z, horizontal)), OVERHEAD_ELEVATION)
    return LightDirection(alpha, wrap_azimuth(math.degrees(math.atan2(y, x))))


def angular_distance(a: LightDirection, b: LightDirection) -> float:
    """
    Great-circle angle between two light directions

    Args:
        a: First light
        b: Second light

    Returns:
        Angle in degrees, in [0, 180]
    """
    if a == b or (a.is_overhead and b.is_overhead):
        return 0.0
    u = light_vector(a)
    v = light_vector(b)
    # atan2 form stays accurate for nearly parallel directions
    return math.degrees(math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v))))


def rotate_toward(current: LightDirection, target: LightDirection,
                  max_angle: float) -> LightDirection:
    """
    Move current toward target along the great circle by at most max_angle

    Args:
        current: Starting light
        target: Light to move toward
        max_angle: Largest allowed rotation (degrees)

    Returns:
        target itself if within max_angle, else the point max_angle along the geodesic
    """
    total = angular_distance(current, target)
    if total <= max_angle:
        return target
    if max_angle <= 0.0:
        return current

    theta = math.radians(total)
    step = math.radians(max_angle)
    u = light_vector(current)
    v = light_vector(target)
    # slerp with sin weights; both endpoints are above the horizon, so is the arc
    moved = (math.sin(theta - step) * u + math.sin(step) * v) / math.sin(theta)
    return light_from_vector(moved, fallback_phi=current.azimuth_phi)
