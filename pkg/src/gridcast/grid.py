"""Discrete bird's-eye-view grid world.

States are (row, col) cells, actions are the 8-connected moves plus STAY, and
transitions are deterministic. The row axis points along +x (ahead of the
target agent), the column axis along +y (left).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# 9 actions ordered row-major by (drow, dcol); index = (drow+1)*3 + (dcol+1).
ACTIONS: tuple[tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 0), (0, 1),
    (1, -1), (1, 0), (1, 1),
)
N_ACTIONS = len(ACTIONS)
STAY = 4

ACTION_OFFSETS = np.array(ACTIONS, dtype=np.int64)


@dataclass(frozen=True)
class CellIndex:
    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry: dimensions, cell size, and the target-anchored origin.

    ``anchor`` is the cell the target agent's current position maps to;
    ``anchor_world`` is that cell center in meters (the origin in the
    target-centric frame).
    """

    rows: int
    cols: int
    resolution: float
    anchor: CellIndex
    anchor_world: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise ValueError(f"grid must be at least 3x3, got {self.rows}x{self.cols}")
        if not (self.resolution > 0.0):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not self.contains(self.anchor.row, self.anchor.col):
            raise ValueError(f"anchor {self.anchor} outside {self.rows}x{self.cols} grid")

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols


def round_half_away(value: float) -> int:
    """Round to nearest integer, halves away from zero (platform-stable)."""
    if value >= 0.0:
        return int(math.floor(value + 0.5))
    return int(math.ceil(value - 0.5))


def world_to_cell(point, spec: GridSpec) -> CellIndex | None:
    """Map a continuous (x, y) point to its nearest cell; None when off-grid."""
    x, y = float(point[0]), float(point[1])
    row = spec.anchor.row + round_half_away((x - spec.anchor_world[0]) / spec.resolution)
    col = spec.anchor.col + round_half_away((y - spec.anchor_world[1]) / spec.resolution)
    if not spec.contains(row, col):
        return None
    return CellIndex(row, col)


def cell_to_world(cell: CellIndex, spec: GridSpec) -> tuple[float, float]:
    """Cell-center coordinates in meters; inverse of world_to_cell on the lattice."""
    if not spec.contains(cell.row, cell.col):
        raise ValueError(f"cell {cell} outside {spec.rows}x{spec.cols} grid")
    x = spec.anchor_world[0] + (cell.row - spec.anchor.row) * spec.resolution
    y = spec.anchor_world[1] + (cell.col - spec.anchor.col) * spec.resolution
    return (x, y)


def step(cell: CellIndex, action: int, spec: GridSpec) -> CellIndex | None:
    """Deterministic transition; None when the move would leave the grid."""
    dr, dc = ACTIONS[action]
    row, col = cell.row + dr, cell.col + dc
    if not spec.contains(row, col):
        return None
    return CellIndex(row, col)


def valid_action_mask(spec: GridSpec) -> np.ndarray:
    """Boolean (rows, cols, 9) mask of actions whose destination stays in-bounds."""
    mask = np.zeros((spec.rows, spec.cols, N_ACTIONS), dtype=bool)
    for a, (dr, dc) in enumerate(ACTIONS):
        lo_r, hi_r = max(0, -dr), spec.rows - max(0, dr)
        lo_c, hi_c = max(0, -dc), spec.cols - max(0, dc)
        mask[lo_r:hi_r, lo_c:hi_c, a] = True
    return mask


def eight_connected_line(a: CellIndex, b: CellIndex) -> list[CellIndex]:
    """Intermediate cells strictly between a and b on the 8-connected walk."""
    out = []
    r, c = a.row, a.col
    while (r, c) != (b.row, b.col):
        r += (b.row > r) - (b.row < r)
        c += (b.col > c) - (b.col < c)
        if (r, c) != (b.row, b.col):
            out.append(CellIndex(r, c))
    return out


def quantize_trajectory(points, spec: GridSpec):
    """Quantize a T x 2 trajectory onto the grid.

    Returns (per_step, path): ``per_step`` has one entry per timestamp
    (CellIndex or None when off-grid, repeats kept); ``path`` drops off-grid
    entries and consecutive duplicates, then inserts 8-connected intermediate
    cells so the result is a valid state sequence for the MDP.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 2:
        raise ValueError(f"expected a T x 2 trajectory with T >= 1, got shape {pts.shape}")
    per_step = [world_to_cell(p, spec) for p in pts]
    path: list[CellIndex] = []
    for cell in per_step:
        if cell is None:
            continue
        if path and cell == path[-1]:
            continue
        if path:
            path.extend(eight_connected_line(path[-1], cell))
        path.append(cell)
    return per_step, path


def cells_adjacent(a: CellIndex, b: CellIndex) -> bool:
    return abs(a.row - b.row) <= 1 and abs(a.col - b.col) <= 1
