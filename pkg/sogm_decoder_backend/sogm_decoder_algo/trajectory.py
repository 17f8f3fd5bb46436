"""Trajectories and their rasterization onto grid cells."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InvalidParams
from .grid import GridIndex, GridSpec, Pose


def bresenham_cells(
    a: GridIndex, b: GridIndex, spec: GridSpec | None = None
) -> list[GridIndex]:
    """
    8-connected discrete line from ``a`` to ``b``, both inclusive.

    Parameters
    ----------
    a, b : GridIndex
        End cells
    spec : GridSpec, optional
        When given, both ends must lie inside this grid

    Raises
    ------
    IndexOutOfBounds
        If ``spec`` is given and an end cell lies outside it
    """
    if spec is not None:
        a = spec.check_index(a)
        b = spec.check_index(b)
    x0, y0 = int(a[0]), int(a[1])
    x1, y1 = int(b[0]), int(b[1])
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = []
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


@dataclass(frozen=True)
class Trajectory:
    """
    Polyline through world-frame waypoints.

    Parameters
    ----------
    waypoints : tuple of Pose
        At least two poses
    step : float
        Sampling distance in meters along the polyline
    """

    waypoints: tuple[Pose, ...]
    step: float

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise InvalidParams("a trajectory needs at least two waypoints")
        if not self.step > 0:
            raise InvalidParams(f"step must be positive, got {self.step}")

    @property
    def length(self) -> float:
        return sum(
            math.hypot(b.x - a.x, b.y - a.y)
            for a, b in zip(self.waypoints, self.waypoints[1:])
        )

    def cells(self, spec: GridSpec) -> list[GridIndex]:
        """Traversed cells in order, without consecutive repeats."""
        ends = [spec.world_to_cell(p.x, p.y) for p in self.waypoints]
        out: list[GridIndex] = []
        for a, b in zip(ends, ends[1:]):
            for cell in bresenham_cells(a, b, spec):
                if not out or out[-1] != cell:
                    out.append(cell)
        return out

    def sample_positions(self) -> np.ndarray:
        """World positions every ``step`` meters from the first waypoint,
        plus the last waypoint; shape (M, 2)."""
        points = np.array([(p.x, p.y) for p in self.waypoints])
        seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
        cumulative = np.concatenate([[0.0], np.cumsum(seg)])
        # a hair of slack so the last full step is not lost to rounding
        count = int(math.floor(cumulative[-1] / self.step + 1e-9))
        stations = np.arange(count + 1) * self.step
        if cumulative[-1] - stations[-1] > 1e-9:
            stations = np.append(stations, cumulative[-1])
        xs = np.interp(stations, cumulative, points[:, 0])
        ys = np.interp(stations, cumulative, points[:, 1])
        return np.stack([xs, ys], axis=1)

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "waypoints": [[p.x, p.y, p.heading] for p in self.waypoints],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(
            tuple(Pose(*w) for w in data["waypoints"]), float(data["step"])
        )


def straight(start: Sequence[float], end: Sequence[float], step: float):
    """Two-waypoint trajectory heading from ``start`` towards ``end``."""
    heading = math.atan2(end[1] - start[1], end[0] - start[0])
    return Trajectory(
        (Pose(start[0], start[1], heading), Pose(end[0], end[1], heading)),
        step,
    )
