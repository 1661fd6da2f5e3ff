"""Patch grid geometry: cell indexing, pixel blocks, and coordinate labels.

Cells are indexed (i, j), 1-based, where i is the column (x axis) and j is
the row (y axis). Cell (1, 1) sits at the top-left of the canvas and carries
coordinate (-1, -1); cell (n, n) sits at the bottom-right with (1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GridSpec:
    """n x n patch tiling of a full canvas."""

    n: int = 2
    patch_h: int = 32
    patch_w: int = 32

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"grid must have n >= 1, got n={self.n}")
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch dimensions must be positive")

    @property
    def full_h(self) -> int:
        return self.n * self.patch_h

    @property
    def full_w(self) -> int:
        return self.n * self.patch_w

    def cell_block(self, i: int, j: int) -> tuple[slice, slice]:
        """Pixel block (row_slice, col_slice) of cell (i, j)."""
        if not (1 <= i <= self.n and 1 <= j <= self.n):
            raise ValueError(f"cell ({i},{j}) outside {self.n}x{self.n} grid")
        rows = slice((j - 1) * self.patch_h, j * self.patch_h)
        cols = slice((i - 1) * self.patch_w, i * self.patch_w)
        return rows, cols

    def cells(self) -> list[tuple[int, int]]:
        """All cell indices in row-major order: (1,1), (2,1), ..., (n,n)."""
        return [(i, j) for j in range(1, self.n + 1) for i in range(1, self.n + 1)]


def axis_positions(n: int) -> list[float]:
    """Per-axis coordinate values: endpoints -1 and 1, equally spaced.

    n = 1 uses the symmetric midpoint 0.
    """
    if n < 1:
        raise ValueError(f"invalid grid size n={n}")
    if n == 1:
        return [0.0]
    return [-1.0 + 2.0 * k / (n - 1) for k in range(n)]


def coordinate_grid(grid: GridSpec) -> dict[tuple[int, int], tuple[float, float]]:
    """Coordinate label for every cell: (i, j) -> (x, y) in [-1, 1]^2."""
    pos = axis_positions(grid.n)
    return {(i, j): (pos[i - 1], pos[j - 1]) for (i, j) in grid.cells()}


def cell_coordinate(grid: GridSpec, i: int, j: int) -> tuple[float, float]:
    pos = axis_positions(grid.n)
    if not (1 <= i <= grid.n and 1 <= j <= grid.n):
        raise ValueError(f"cell ({i},{j}) outside {grid.n}x{grid.n} grid")
    return (pos[i - 1], pos[j - 1])


def halfway_coordinate(
    grid: GridSpec, cell_a: tuple[int, int], cell_b: tuple[int, int]
) -> tuple[float, float]:
    """Midpoint of two cells' coordinates, per axis. Used for seam patches."""
    xa, ya = cell_coordinate(grid, *cell_a)
    xb, yb = cell_coordinate(grid, *cell_b)
    return ((xa + xb) / 2.0, (ya + yb) / 2.0)
