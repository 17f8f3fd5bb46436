"""
Supercell segmentation of semantical occupancy grids.

A supercell is a 4-connected cluster of cells whose probability vectors do
not contradict each other. Segmentation runs a superpixel-style local
k-means in the joint space of scaled cell position and per-layer log-odds,
seeded by variance driven sampling, followed by a connectivity pass that
splits disconnected labels and absorbs small fragments.

Segmentations can be reduced to a point cloud map (one point per supercell)
which keeps the statistics and discards the shape.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .exceptions import InvalidParams
from .grid import GridIndex, GridSpec, SemanticGrid, inverse_logit

logger = logging.getLogger(__name__)

UNIFORM_FLOOR = 0.1
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SegmentationParams:
    """
    Parameters of :func:`extract_supercells`.

    Parameters
    ----------
    num_seeds : int
        Number of initial supercell centers
    compactness : float
        Weight of the spatial term against the log-odds term
    max_iters : int
        Maximum number of assignment/update iterations
    min_cell_count : int
        Fragments with fewer cells are merged into a neighbor
    rng_seed : int
        Seed of the variance driven seed sampling
    """

    num_seeds: int = 64
    compactness: float = 0.25
    max_iters: int = 10
    min_cell_count: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.num_seeds) < 1:
            raise InvalidParams(
                f"num_seeds must be >= 1, got {self.num_seeds}"
            )
        if not float(self.compactness) >= 0:
            raise InvalidParams(
                f"compactness must be >= 0, got {self.compactness}"
            )
        if int(self.max_iters) < 1:
            raise InvalidParams(
                f"max_iters must be >= 1, got {self.max_iters}"
            )
        if int(self.min_cell_count) < 1:
            raise InvalidParams(
                f"min_cell_count must be >= 1, got {self.min_cell_count}"
            )

    def check_grid(self, spec: GridSpec) -> None:
        if self.num_seeds > spec.cell_count:
            raise InvalidParams(
                f"num_seeds={self.num_seeds} exceeds the "
                f"{spec.cell_count} cells of the grid"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Supercell:
    """
    One connected cluster of cells.

    Parameters
    ----------
    id : int
        Position of the supercell in its segmentation
    members : ndarray of int
        Flat (row-major) indices of the member cells, ascending
    centroid : tuple of float
        Mean ``(x, y)`` of the members in cell coordinates
    mean_p : ndarray
        Per-layer mean of the member probabilities
    var_l : ndarray
        Per-layer variance of the member log-odds
    """

    id: int
    members: np.ndarray
    centroid: tuple[float, float]
    mean_p: np.ndarray
    var_l: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)

    def member_indices(self, spec: GridSpec) -> set[GridIndex]:
        iy, ix = np.unravel_index(self.members, spec.shape)
        return set(zip(ix.tolist(), iy.tolist()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "size": self.size,
            "centroid": list(self.centroid),
            "mean_p": self.mean_p.tolist(),
            "var_l": self.var_l.tolist(),
        }


@dataclass
class Segmentation:
    """A partition of a grid into supercells; ``labels[iy, ix]`` is the id
    of the supercell holding cell ``(ix, iy)``."""

    spec: GridSpec
    labels: np.ndarray
    supercells: list[Supercell]

    @classmethod
    def from_labels(cls, grid: SemanticGrid, labels) -> "Segmentation":
        """
        Build a segmentation from any integer label array, renumbering ids
        contiguously in order of first appearance (row-major) and computing
        the member statistics from ``grid``.
        """
        labels = np.asarray(labels)
        if labels.shape != grid.spec.shape:
            raise InvalidParams(
                f"label array has shape {labels.shape}, "
                f"expected {grid.spec.shape}"
            )
        flat = _compact(labels.ravel())
        k = int(flat.max()) + 1
        counts = np.bincount(flat, minlength=k).astype(float)

        log_odds = grid.log_odds.reshape(grid.num_layers, -1)
        probs = inverse_logit(log_odds)
        mean_p = np.stack(
            [np.bincount(flat, weights=p, minlength=k) for p in probs], axis=1
        ) / counts[:, None]
        mean_l = np.stack(
            [np.bincount(flat, weights=l, minlength=k) for l in log_odds],
            axis=1,
        ) / counts[:, None]
        deviation = log_odds.T - mean_l[flat]
        var_l = np.stack(
            [
                np.bincount(flat, weights=d * d, minlength=k)
                for d in deviation.T
            ],
            axis=1,
        ) / counts[:, None]

        iy, ix = np.divmod(np.arange(flat.size), grid.spec.width)
        cx = np.bincount(flat, weights=ix, minlength=k) / counts
        cy = np.bincount(flat, weights=iy, minlength=k) / counts

        order = np.argsort(flat, kind="stable")
        members = np.split(order, np.cumsum(counts.astype(int))[:-1])
        supercells = [
            Supercell(
                id=i,
                members=members[i],
                centroid=(float(cx[i]), float(cy[i])),
                mean_p=mean_p[i],
                var_l=var_l[i],
            )
            for i in range(k)
        ]
        return cls(grid.spec, flat.reshape(grid.spec.shape), supercells)

    @property
    def num_supercells(self) -> int:
        return len(self.supercells)

    def label_at(self, index: GridIndex) -> int:
        ix, iy = self.spec.check_index(index)
        return int(self.labels[iy, ix])

    def mean_p_at(self, index: GridIndex) -> np.ndarray:
        return self.supercells[self.label_at(index)].mean_p

    def mean_variance(self) -> float:
        """Mean log-odds variance over supercells and layers."""
        return float(np.mean([cell.var_l.mean() for cell in self.supercells]))

    def mean_p_grid(self) -> np.ndarray:
        """Per-cell supercell mean probabilities, shape ``(N, H, W)``."""
        table = np.stack([cell.mean_p for cell in self.supercells])
        return np.moveaxis(table[self.labels], -1, 0)


@dataclass
class PointCloudMap:
    """Topometric reduction of a segmentation: supercell centroids (cell
    coordinates) with their mean probability vectors."""

    centroids: np.ndarray
    mean_p: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, np.ndarray]]:
        return [
            (float(c[0]), float(c[1]), p)
            for c, p in zip(self.centroids, self.mean_p)
        ]

    def __len__(self):
        return len(self.centroids)

    def nearest(self, xy) -> np.ndarray:
        """
        Index of the nearest point for each query position.

        Parameters
        ----------
        xy : array_like, shape (M, 2)
            Query positions in cell coordinates

        Returns
        -------
        ndarray of int
            Nearest point per query; ties go to the lower point index
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        d2 = ((xy[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return np.argmin(d2, axis=1)


def local_variance(log_odds: np.ndarray) -> np.ndarray:
    """Log-odds variance in a 3x3 window, summed over layers."""
    total = np.zeros(log_odds.shape[1:])
    for layer in log_odds:
        mean = ndimage.uniform_filter(layer, size=3, mode="nearest")
        mean_sq = ndimage.uniform_filter(layer * layer, size=3, mode="nearest")
        total += np.maximum(mean_sq - mean * mean, 0.0)
    # rounding residue of constant windows
    total[total < 1e-12] = 0.0
    return total


def seed_variance_driven(
    grid: SemanticGrid, k: int, rng_seed: int
) -> list[GridIndex]:
    """
    Variance driven seed sampling.

    Cells are drawn without replacement with probability proportional to
    their local log-odds variance plus a uniform floor of 10% of the total
    mass. Draws whose probability vector repeats one already taken are
    deferred until every distinct vector had its chance, so clean
    piecewise-constant maps get one seed per region before any region gets
    a second.

    Parameters
    ----------
    grid : SemanticGrid
        Grid to seed
    k : int
        Number of seeds
    rng_seed : int
        Seed of the sampling

    Returns
    -------
    list of GridIndex
        ``k`` distinct cells, deterministic for a fixed seed

    Raises
    ------
    InvalidParams
        If ``k < 1`` or ``k`` exceeds the cell count
    """
    n = grid.spec.cell_count
    if k < 1 or k > n:
        raise InvalidParams(f"cannot draw {k} seeds from {n} cells")

    variance = local_variance(grid.log_odds).ravel()
    total = variance.sum()
    weights = np.full(n, UNIFORM_FLOOR / n)
    if total > 0:
        weights += (1.0 - UNIFORM_FLOOR) * variance / total
    else:
        weights = np.full(n, 1.0 / n)

    # weighted random order: sort by u ** (1 / w)
    rng = np.random.default_rng(rng_seed)
    with np.errstate(divide="ignore"):
        keys = np.log(rng.random(n)) / weights
    order = np.argsort(-keys, kind="stable")

    vectors = grid.log_odds.reshape(grid.num_layers, -1).T
    chosen: list[int] = []
    seen: set[bytes] = set()
    for idx in order:
        signature = vectors[idx].tobytes()
        if signature in seen:
            continue
        seen.add(signature)
        chosen.append(int(idx))
        if len(chosen) == k:
            break
    if len(chosen) < k:
        taken = set(chosen)
        for idx in order:
            if int(idx) not in taken:
                chosen.append(int(idx))
                if len(chosen) == k:
                    break

    iy, ix = np.unravel_index(np.array(chosen), grid.spec.shape)
    return list(zip(ix.tolist(), iy.tolist()))


def extract_supercells(
    grid: SemanticGrid, params: SegmentationParams
) -> Segmentation:
    """
    Partition ``grid`` into supercells.

    Each cell is described by ``(x * c / S, y * c / S, logit(P_1), ...,
    logit(P_N))`` with ``c`` the compactness and
    ``S = sqrt(width * height / num_seeds)``. Starting from variance driven
    seeds, cells are assigned to the nearest center within ``2 S`` cells and
    centers move to the mean of their members, until the assignment stops
    changing or ``max_iters`` is reached. The result is made 4-connected by
    :func:`enforce_connectivity`.

    Raises
    ------
    InvalidParams
        If ``num_seeds`` exceeds the cell count
    """
    spec = grid.spec
    params.check_grid(spec)
    height, width = spec.shape
    step = math.sqrt(spec.cell_count / params.num_seeds)
    scale = params.compactness / step
    radius = max(1, math.ceil(2 * step))

    ys, xs = np.mgrid[0:height, 0:width]
    features = np.concatenate(
        [(xs * scale)[None], (ys * scale)[None], grid.log_odds], axis=0
    )
    flat_features = features.reshape(features.shape[0], -1)

    seeds = seed_variance_driven(grid, params.num_seeds, params.rng_seed)
    seed_x = np.array([s[0] for s in seeds], dtype=float)
    seed_y = np.array([s[1] for s in seeds], dtype=float)
    centers = features[:, seed_y.astype(int), seed_x.astype(int)].T
    positions = np.stack([seed_x, seed_y], axis=1)

    labels = np.full(spec.shape, -1, dtype=np.int64)
    for iteration in range(params.max_iters):
        assigned = _assign(features, centers, positions, radius)
        converged = np.array_equal(assigned, labels)
        labels = assigned
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers)).astype(float)
        occupied = counts > 0
        for d in range(features.shape[0]):
            sums = np.bincount(
                flat, weights=flat_features[d], minlength=len(centers)
            )
            centers[occupied, d] = sums[occupied] / counts[occupied]
        for axis, coords in enumerate((xs.ravel(), ys.ravel())):
            sums = np.bincount(flat, weights=coords, minlength=len(centers))
            positions[occupied, axis] = sums[occupied] / counts[occupied]
        if converged:
            logger.debug("supercells converged after %d iterations", iteration)
            break

    raw = Segmentation.from_labels(grid, labels)
    return enforce_connectivity(raw, grid, params.min_cell_count)


def _assign(features, centers, positions, radius) -> np.ndarray:
    """Nearest-center assignment within each center's search window; ties
    keep the lower center id."""
    _, height, width = features.shape
    best = np.full((height, width), np.inf)
    labels = np.full((height, width), -1, dtype=np.int64)
    for k, (center, (cx, cy)) in enumerate(zip(centers, positions)):
        x0 = max(0, int(round(cx)) - radius)
        x1 = min(width, int(round(cx)) + radius + 1)
        y0 = max(0, int(round(cy)) - radius)
        y1 = min(height, int(round(cy)) + radius + 1)
        window = features[:, y0:y1, x0:x1]
        dist = ((window - center[:, None, None]) ** 2).sum(axis=0)
        closer = dist < best[y0:y1, x0:x1]
        best[y0:y1, x0:x1][closer] = dist[closer]
        labels[y0:y1, x0:x1][closer] = k

    # cells outside every window go to the globally nearest center
    missing = labels < 0
    if missing.any():
        cells = features[:, missing].T
        dist = ((cells[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        labels[missing] = np.argmin(dist, axis=1)
    return labels


def enforce_connectivity(
    seg: Segmentation, grid: SemanticGrid, min_cell_count: int
) -> Segmentation:
    """
    Make every supercell 4-connected.

    Disconnected labels are split into their connected components;
    components with fewer than ``min_cell_count`` cells are merged into the
    adjacent component whose mean log-odds vector is closest (Euclidean,
    ties to the lower id). Ids are renumbered contiguously.
    """
    components = np.zeros(seg.spec.shape, dtype=np.int64)
    next_id = 0
    for label in np.unique(seg.labels):
        pieces, count = ndimage.label(seg.labels == label, FOUR_CONNECTED)
        inside = pieces > 0
        components[inside] = pieces[inside] - 1 + next_id
        next_id += count

    flat = components.ravel()
    log_odds = grid.log_odds.reshape(grid.num_layers, -1)
    counts = np.bincount(flat, minlength=next_id)
    sums = np.stack(
        [np.bincount(flat, weights=l, minlength=next_id) for l in log_odds],
        axis=1,
    )

    merged = True
    while merged:
        merged = False
        for comp in range(next_id):
            if counts[comp] == 0 or counts[comp] >= min_cell_count:
                continue
            mask = components == comp
            ring = ndimage.binary_dilation(mask, FOUR_CONNECTED) & ~mask
            neighbors = np.unique(components[ring])
            if neighbors.size == 0:
                continue
            mean = sums[comp] / counts[comp]
            others = sums[neighbors] / counts[neighbors][:, None]
            distances = np.linalg.norm(others - mean, axis=1)
            target = neighbors[np.argmin(distances)]
            components[mask] = target
            counts[target] += counts[comp]
            sums[target] += sums[comp]
            counts[comp] = 0
            sums[comp] = 0.0
            merged = True

    return Segmentation.from_labels(grid, components)


def to_point_cloud(seg: Segmentation) -> PointCloudMap:
    """One point per supercell at its centroid carrying its mean_p."""
    return PointCloudMap(
        centroids=np.array([cell.centroid for cell in seg.supercells]),
        mean_p=np.stack([cell.mean_p for cell in seg.supercells]),
    )


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Cells with at least one 4-neighbor carrying a different label."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    horizontal = labels[:, 1:] != labels[:, :-1]
    vertical = labels[1:, :] != labels[:-1, :]
    mask[:, 1:] |= horizontal
    mask[:, :-1] |= horizontal
    mask[1:, :] |= vertical
    mask[:-1, :] |= vertical
    return mask


def boundary_recall(predicted, truth, tolerance: int = 1) -> float:
    """
    Fraction of ground-truth boundary cells that lie within ``tolerance``
    cells (Chebyshev distance) of a predicted boundary cell. A truth map
    without boundaries scores 1.0.
    """
    truth_edges = boundary_mask(truth)
    if not truth_edges.any():
        return 1.0
    predicted_edges = boundary_mask(predicted)
    if tolerance > 0 and predicted_edges.any():
        predicted_edges = ndimage.binary_dilation(
            predicted_edges, np.ones((3, 3), dtype=bool), iterations=tolerance
        )
    hits = np.count_nonzero(truth_edges & predicted_edges)
    return hits / np.count_nonzero(truth_edges)


def _compact(flat: np.ndarray) -> np.ndarray:
    """Renumber labels 0..k-1 in order of first appearance."""
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.ravel()]
