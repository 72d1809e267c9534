"""Minimal SVG rendering of scenes, robot poses and end-effector paths."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .workspace import Box, Disk, Scene2D

__all__ = ["render_svg", "write_svg"]

WIDTH_PX = 600


class _Canvas:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        extent = self.hi - self.lo
        self.scale = WIDTH_PX / extent[0]
        self.height = extent[1] * self.scale
        self.items: list[str] = []

    def xy(self, p) -> tuple[float, float]:
        p = np.asarray(p, dtype=float)
        return (p[0] - self.lo[0]) * self.scale, (self.hi[1] - p[1]) * self.scale

    def polyline(self, pts, color: str, width: float = 2.0, opacity: float = 1.0) -> None:
        coords = " ".join("{:.2f},{:.2f}".format(*self.xy(p)) for p in pts)
        self.items.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
        )

    def circle(self, c, r: float, fill: str, stroke: str = "none", opacity: float = 1.0) -> None:
        x, y = self.xy(c)
        self.items.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r * self.scale:.2f}" fill="{fill}" '
            f'stroke="{stroke}" fill-opacity="{opacity}"/>'
        )

    def rect(self, center, half) -> None:
        x, y = self.xy(np.asarray(center) + np.array([-half[0], half[1]]))
        w, h = 2 * half[0] * self.scale, 2 * half[1] * self.scale
        self.items.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="black"/>')

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH_PX}" height="{self.height:.0f}" '
            f'viewBox="0 0 {WIDTH_PX} {self.height:.2f}">'
        )
        bg = f'<rect x="0" y="0" width="{WIDTH_PX}" height="{self.height:.2f}" fill="white"/>'
        return "\n".join([head, bg, *self.items, "</svg>"]) + "\n"


def _pose(canvas: _Canvas, robot, q, color: str, opacity: float = 1.0) -> None:
    joints = robot.joint_positions(q)
    if len(joints) > 1:
        canvas.polyline(joints, color, 3.0, opacity)
    else:
        canvas.circle(joints[0], max(robot.radii[0], 0.01), color, opacity=opacity)


def render_svg(scene: Scene2D, robot, support_q: np.ndarray, path_q: np.ndarray,
               extra_paths: list[tuple[np.ndarray, str]] | None = None,
               path_color: str = "blue") -> str:
    """SVG text for one trajectory.

    Obstacles are black, the start pose green, the goal pose red and the
    other support poses gray; the end-effector path over ``path_q`` is drawn
    in ``path_color``. ``extra_paths`` adds further (configurations, colour)
    end-effector paths, e.g. for comparing an original and a replanned path.
    """
    canvas = _Canvas(scene.bounds_min, scene.bounds_max)
    for ob in scene.obstacles:
        if isinstance(ob, Box):
            canvas.rect(ob.center, ob.half_extents)
        elif isinstance(ob, Disk):
            canvas.circle(ob.center, ob.radius, "black")
    support_q = np.asarray(support_q, dtype=float)
    for q in support_q[1:-1]:
        _pose(canvas, robot, q, "gray", 0.5)
    _pose(canvas, robot, support_q[0], "green")
    _pose(canvas, robot, support_q[-1], "red")
    for qs, color in extra_paths or []:
        canvas.polyline(robot.end_effector(np.asarray(qs, dtype=float)), color, 2.0)
    canvas.polyline(robot.end_effector(np.asarray(path_q, dtype=float)), path_color, 2.0)
    return canvas.render()


def write_svg(path, *args, **kwargs) -> None:
    Path(path).write_text(render_svg(*args, **kwargs))
