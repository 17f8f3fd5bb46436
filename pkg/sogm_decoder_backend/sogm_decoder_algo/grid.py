"""
Semantical occupancy grids and log-odds arithmetic.

This module contains the map representation every other module consumes:

- GridSpec: geometry of a 2D grid (cells, resolution, origin)
- SemanticGrid: N named probability layers sharing one GridSpec
- LayerObservation: per-cell log-odds of one sensor frame for one layer
- Pose: observer position and heading

Cells are addressed by ``GridIndex`` tuples ``(ix, iy)``; layer arrays are
dense and row-major with shape ``(height, width)`` so a cell is stored at
``[iy, ix]``. Layers are kept in log-odds, where Bayesian fusion of
independent observations is a plain addition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .exceptions import IndexOutOfBounds, InvalidParams, UnknownLayer

logger = logging.getLogger(__name__)

EPS = 1e-6
LOGIT_MAX = float(special.logit(1.0 - EPS))

GridIndex = tuple[int, int]


def logit(p):
    """
    Log-odds ``ln(p / (1 - p))`` of a probability (scalar or array).

    Inputs are clamped to ``[EPS, 1 - EPS]`` first, so 0 and 1 map to
    finite values.
    """
    clamped = np.clip(np.asarray(p, dtype=float), EPS, 1.0 - EPS)
    out = special.logit(clamped)
    return float(out) if np.ndim(out) == 0 else out


def inverse_logit(log_odds):
    """Logistic function, the inverse of :func:`logit`, clamped to the
    valid probability range."""
    out = special.expit(np.asarray(log_odds, dtype=float))
    out = np.clip(out, EPS, 1.0 - EPS)
    return float(out) if np.ndim(out) == 0 else out


def update_cell(prior, observation):
    """
    Log-odds occupancy update of one cell (or an array of cells).

    Parameters
    ----------
    prior : float or ndarray
        Accumulated log-odds ``L(m | z_1:t-1, x_1:t-1)``
    observation : float or ndarray
        Inverse sensor model term ``L(m | z_t, x_t)``

    Returns
    -------
    float or ndarray
        ``prior + observation`` clamped to ``[-LOGIT_MAX, LOGIT_MAX]``
    """
    out = np.clip(
        np.asarray(prior, dtype=float) + np.asarray(observation, dtype=float),
        -LOGIT_MAX,
        LOGIT_MAX,
    )
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GridSpec:
    """
    Geometry of a 2D grid.

    Parameters
    ----------
    width : int
        Number of cells along x
    height : int
        Number of cells along y
    resolution : float
        Cell edge length in meters
    origin : tuple of float
        World coordinates (meters) of the lower-left corner of cell (0, 0)
    """

    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidParams(
                f"grid must be at least 1x1, got {self.width}x{self.height}"
            )
        if not self.resolution > 0:
            raise InvalidParams(
                f"resolution must be positive, got {self.resolution}"
            )
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(
            self, "origin", (float(self.origin[0]), float(self.origin[1]))
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def cell_count(self) -> int:
        return self.width * self.height

    def contains(self, index: GridIndex) -> bool:
        ix, iy = index
        return 0 <= ix < self.width and 0 <= iy < self.height

    def check_index(self, index: GridIndex) -> GridIndex:
        if not self.contains(index):
            raise IndexOutOfBounds(
                f"cell {tuple(index)} outside {self.width}x{self.height} grid"
            )
        return (int(index[0]), int(index[1]))

    def world_to_cell(self, x: float, y: float) -> GridIndex:
        """Index of the cell containing world point ``(x, y)`` (unchecked)."""
        ix = math.floor((x - self.origin[0]) / self.resolution)
        iy = math.floor((y - self.origin[1]) / self.resolution)
        return (ix, iy)

    def cell_center(self, index: GridIndex) -> tuple[float, float]:
        ix, iy = index
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each of shape ``(H, W)``."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(
            width=data["width"],
            height=data["height"],
            resolution=data["resolution"],
            origin=tuple(data.get("origin", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class Pose:
    """Observer pose in world coordinates; heading in radians, normalized
    to ``(-pi, pi]``."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


def normalize_angle(angle: float) -> float:
    wrapped = math.fmod(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class LayerObservation:
    """
    Inverse sensor model output of one sensor frame for one layer.

    Parameters
    ----------
    layer_name : str
        Target layer
    cells : ndarray of int, shape (M, 2)
        Affected cells as ``(ix, iy)`` rows
    log_odds : ndarray of float, shape (M,)
        ``L(m | z_t, x_t)`` for each affected cell
    """

    layer_name: str
    cells: np.ndarray
    log_odds: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        log_odds = np.asarray(self.log_odds, dtype=float).reshape(-1)
        if len(cells) != len(log_odds):
            raise InvalidParams(
                f"observation has {len(cells)} cells but "
                f"{len(log_odds)} log-odds values"
            )
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "log_odds", log_odds)

    @classmethod
    def single(cls, layer_name: str, index: GridIndex, log_odds: float):
        return cls(layer_name, np.array([index]), np.array([log_odds]))


@dataclass
class SemanticGrid:
    """
    A semantical occupancy grid: N named probability layers over one grid.

    The layers are held as log-odds arrays of shape ``(N, H, W)``; an
    unobserved cell has log-odds 0, i.e. probability exactly 0.5. Operations
    that integrate observations return a new grid and leave this one
    untouched.

    Parameters
    ----------
    spec : GridSpec
        Shared geometry of all layers
    layer_names : tuple of str
        Unique layer names in layer order
    log_odds : ndarray, optional
        Initial log-odds; defaults to all zeros
    """

    spec: GridSpec
    layer_names: tuple[str, ...]
    log_odds: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_names = tuple(self.layer_names)
        if not self.layer_names:
            raise InvalidParams("a semantic grid needs at least one layer")
        if len(set(self.layer_names)) != len(self.layer_names):
            raise InvalidParams(
                f"layer names must be unique, got {self.layer_names}"
            )
        shape = (len(self.layer_names),) + self.spec.shape
        if self.log_odds is None:
            self.log_odds = np.zeros(shape)
        else:
            values = np.asarray(self.log_odds, dtype=float)
            if values.shape != shape:
                raise InvalidParams(
                    f"log-odds array has shape {values.shape}, "
                    f"expected {shape}"
                )
            self.log_odds = np.clip(values, -LOGIT_MAX, LOGIT_MAX)

    @classmethod
    def from_probabilities(cls, spec, layer_names, probabilities):
        """Build a grid from an ``(N, H, W)`` probability array."""
        return cls(spec, layer_names, logit(np.asarray(probabilities)))

    @classmethod
    def from_log_odds(cls, spec, layer_names, log_odds):
        return cls(spec, layer_names, np.array(log_odds, dtype=float))

    @property
    def num_layers(self) -> int:
        return len(self.layer_names)

    @property
    def probabilities(self) -> np.ndarray:
        """Probability layers, shape ``(N, H, W)``."""
        return inverse_logit(self.log_odds)

    def layer_index(self, name: str) -> int:
        try:
            return self.layer_names.index(name)
        except ValueError:
            raise UnknownLayer(
                f"unknown layer {name!r}; grid has {list(self.layer_names)}"
            ) from None

    def layer(self, name: str) -> np.ndarray:
        """Probability array of one layer, shape ``(H, W)``."""
        return inverse_logit(self.log_odds[self.layer_index(name)])

    def copy(self) -> "SemanticGrid":
        return SemanticGrid(self.spec, self.layer_names, self.log_odds.copy())

    def integrate_observation(self, obs: LayerObservation) -> "SemanticGrid":
        """
        Fuse one observation into a copy of this grid.

        Raises
        ------
        UnknownLayer
            If ``obs.layer_name`` is not a layer of this grid
        IndexOutOfBounds
            If any affected cell lies outside the grid
        """
        return self.fuse([obs])

    def fuse(self, observations: Iterable[LayerObservation]) -> "SemanticGrid":
        """Fuse many observations into a single copy of this grid."""
        result = self.copy()
        for obs in observations:
            result._apply(obs)
        return result

    def _apply(self, obs: LayerObservation) -> None:
        layer = self.layer_index(obs.layer_name)
        if len(obs.cells) == 0:
            return
        ix, iy = obs.cells[:, 0], obs.cells[:, 1]
        outside = (ix < 0) | (ix >= self.spec.width)
        outside |= (iy < 0) | (iy >= self.spec.height)
        if outside.any():
            bad = tuple(obs.cells[np.argmax(outside)])
            raise IndexOutOfBounds(
                f"observation cell {bad} outside "
                f"{self.spec.width}x{self.spec.height} grid"
            )
        # duplicates within one frame accumulate like separate updates
        summed = np.zeros(self.spec.shape)
        np.add.at(summed, (iy, ix), obs.log_odds)
        touched = np.zeros(self.spec.shape, dtype=bool)
        touched[iy, ix] = True
        plane = self.log_odds[layer]
        plane[touched] = update_cell(plane[touched], summed[touched])

    def probability_vector(self, index: GridIndex) -> np.ndarray:
        """Probabilities of all layers at one cell, in layer order."""
        ix, iy = self.spec.check_index(index)
        return inverse_logit(self.log_odds[:, iy, ix])

    def logit_vector(self, index: GridIndex) -> np.ndarray:
        ix, iy = self.spec.check_index(index)
        return self.log_odds[:, iy, ix].copy()


def integrate_observation(
    grid: SemanticGrid, obs: LayerObservation
) -> SemanticGrid:
    """Functional form of :meth:`SemanticGrid.integrate_observation`."""
    return grid.integrate_observation(obs)


def probability_vector(grid: SemanticGrid, index: GridIndex) -> np.ndarray:
    """Functional form of :meth:`SemanticGrid.probability_vector`."""
    return grid.probability_vector(index)


def empty_grid(spec: GridSpec, layer_names: Sequence[str]) -> SemanticGrid:
    """A grid with every cell unobserved (p = 0.5)."""
    return SemanticGrid(spec, tuple(layer_names))
