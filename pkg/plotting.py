"""
Static SVG overhead plots of a plan: robot ground track, shadow path and goals.

Drawn at a fixed scale of 1 cm = 4 px with matplotlib's object-oriented API,
so no pyplot state or interactive backend is involved.
"""

import io
from typing import Optional

import matplotlib
from matplotlib.figure import Figure
import numpy as np

from asd_planner import PlanResult
from trajectory import Scene
from utils import setup_logger


PX_PER_CM = 4.0
POINTS_PER_INCH = 72.0
MARGIN_CM = 5.0

SVG_RC = {
    'svg.hashsalt': 'active-shadowing',
    'svg.fonttype': 'none',
    'font.size': 6.0,
}

logger = setup_logger(__name__)


def _extent(plan: PlanResult, scene: Optional[Scene]) -> np.ndarray:
    points = [plan.robot.points[:, :2], plan.shadow.points, plan.desired.points[:, :2]]
    if scene is not None:
        points.append(scene.goal_array()[:, :2])
        points.append(scene.start.as_array()[None, :2])
    stacked = np.vstack(points)
    low = stacked.min(axis=0) - MARGIN_CM
    high = stacked.max(axis=0) + MARGIN_CM
    return np.array([low, high])


def render_plan_svg(plan: PlanResult, scene: Optional[Scene] = None, title: str = "") -> str:
    """
    Render the overhead view of a plan as SVG text

    Args:
        plan: Plan to draw
        scene: Scene whose start and goals are marked (optional)
        title: Text drawn in the top-left corner

    Returns:
        SVG document; identical inputs give identical text
    """
    (x0, y0), (x1, y1) = _extent(plan, scene)
    width_cm, height_cm = x1 - x0, y1 - y0

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(width_cm * PX_PER_CM / POINTS_PER_INCH,
                              height_cm * PX_PER_CM / POINTS_PER_INCH),
                     dpi=POINTS_PER_INCH)
        ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_aspect('equal')
        ax.axis('off')

        robot = plan.robot.points
        ax.plot(robot[:, 0], robot[:, 1], color='#222222', linewidth=1.2, label='robot')
        ax.plot(plan.shadow.points[:, 0], plan.shadow.points[:, 1], color='#0066ff',
                linewidth=1.2, linestyle='--', label='shadow')

        flags = plan.violated_samples()
        if flags.any():
            ax.scatter(plan.shadow.points[flags, 0], plan.shadow.points[flags, 1],
                       s=2, color='#ff7b00', zorder=3, label='violated')

        if scene is not None:
            ax.scatter([scene.start.x], [scene.start.y], s=12, marker='s', color='black', zorder=4)
            for label, pose in scene.goals:
                ax.scatter([pose.x], [pose.y], s=16, color='#cc0000', zorder=4)
                ax.annotate(label, (pose.x, pose.y), xytext=(3, 3), textcoords='offset points')

        if title:
            ax.text(0.02, 0.98, title, transform=ax.transAxes, va='top', ha='left')

        buffer = io.StringIO()
        fig.savefig(buffer, format='svg',
                    metadata={'Date': None, 'Description': 'scale 1 cm = 4 px'})
    logger.debug(f"Rendered {plan.method} plot at {width_cm:.1f} x {height_cm:.1f} cm")
    return buffer.getvalue()

