"""Regular lattice geometry and symmetric neighborhood graphs.

Sites live on a ``rows x cols`` grid with configurable physical spacing per
axis and are indexed row-major: ``i = row * cols + col``. Two neighborhood
rules are supported:

* ``Rect(v_r, v_c)`` -- ``v_r`` neighbors on each side within the same row
  and ``v_c`` on each side within the same column (no diagonals), truncated
  at the boundary.
* ``Ellipse(a_r, a_c)`` -- all sites within the ellipse
  ``(dr * row_spacing / a_r)**2 + (dc * col_spacing / a_c)**2 <= 1``
  around a site, excluding the site itself. Semi-axes are in the same
  physical units as the spacings.

Graphs are symmetric, self-loop free, precomputed once, and immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridShape",
    "Rect",
    "Ellipse",
    "NeighborhoodSpec",
    "NeighborGraph",
    "build_neighbor_graph",
    "neighbor_sum",
]

# Relative slack when testing the ellipse inequality, so integer offsets that
# satisfy it exactly (e.g. a 3-4-5 triple on a circle of radius 5) are not
# dropped to rounding.
_ELLIPSE_RTOL = 1e-9


@dataclass(frozen=True)
class GridShape:
    """Rectangular lattice: row/column counts and physical spacings (meters)."""

    rows: int
    cols: int
    row_spacing: float = 1.0
    col_spacing: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must have positive extent, got {self.rows}x{self.cols}")
        if self.row_spacing <= 0 or self.col_spacing <= 0:
            raise ValueError("grid spacings must be positive")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def site_index(self, row: int, col: int) -> int:
        """Row-major index of the site at (row, col)."""
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"({row}, {col}) outside {self.rows}x{self.cols} grid")
        return row * self.cols + col

    def site_coords(self, site: int) -> tuple[int, int]:
        if not (0 <= site < self.n_sites):
            raise IndexError(f"site {site} outside grid of {self.n_sites} sites")
        return divmod(site, self.cols)


@dataclass(frozen=True)
class Rect:
    """Row/column rule: ``v_r`` same-row neighbors per side, ``v_c`` same-column."""

    v_r: int
    v_c: int

    def __post_init__(self):
        if self.v_r < 0 or self.v_c < 0:
            raise ValueError("neighbor counts must be nonnegative")

    def offsets(self, shape: GridShape) -> list[tuple[int, int]]:
        offs = [(0, dc) for k in range(1, self.v_r + 1) for dc in (-k, k)]
        offs += [(dr, 0) for k in range(1, self.v_c + 1) for dr in (-k, k)]
        return offs

    def label(self) -> str:
        return f"rect({self.v_r},{self.v_c})"


@dataclass(frozen=True)
class Ellipse:
    """Elliptical rule with semi-axes ``a_r`` (across rows) and ``a_c`` (across
    columns), both in physical units."""

    a_r: float
    a_c: float

    def __post_init__(self):
        if self.a_r < 0 or self.a_c < 0:
            raise ValueError("ellipse semi-axes must be nonnegative")

    def offsets(self, shape: GridShape) -> list[tuple[int, int]]:
        if self.a_r <= 0 or self.a_c <= 0:
            return []
        max_dr = int(np.floor(self.a_r / shape.row_spacing * (1 + _ELLIPSE_RTOL)))
        max_dc = int(np.floor(self.a_c / shape.col_spacing * (1 + _ELLIPSE_RTOL)))
        offs = []
        for dr in range(-max_dr, max_dr + 1):
            for dc in range(-max_dc, max_dc + 1):
                if dr == 0 and dc == 0:
                    continue
                d2 = (dr * shape.row_spacing / self.a_r) ** 2 + (
                    dc * shape.col_spacing / self.a_c
                ) ** 2
                if d2 <= 1.0 + _ELLIPSE_RTOL:
                    offs.append((dr, dc))
        return offs

    def label(self) -> str:
        return f"ellipse({self.a_r:g},{self.a_c:g})"


NeighborhoodSpec = Union[Rect, Ellipse]


class NeighborGraph:
    """Precomputed symmetric neighbor structure over a grid.

    Neighbor lists are sorted (row-major order) and exposed both as per-site
    index arrays and as a sparse CSR adjacency matrix for vectorized
    neighbor sums. Instances are immutable after construction and safe to
    share across workers.
    """

    def __init__(self, shape: GridShape, spec: NeighborhoodSpec):
        self.shape = shape
        self.spec = spec
        rows, cols = shape.rows, shape.cols
        n = shape.n_sites

        src_parts = []
        dst_parts = []
        r_idx = np.arange(rows)
        c_idx = np.arange(cols)
        for dr, dc in spec.offsets(shape):
            r_ok = r_idx[(r_idx + dr >= 0) & (r_idx + dr < rows)]
            c_ok = c_idx[(c_idx + dc >= 0) & (c_idx + dc < cols)]
            if r_ok.size == 0 or c_ok.size == 0:
                continue
            rr, cc = np.meshgrid(r_ok, c_ok, indexing="ij")
            src_parts.append((rr * cols + cc).ravel())
            dst_parts.append(((rr + dr) * cols + (cc + dc)).ravel())

        if src_parts:
            src = np.concatenate(src_parts)
            dst = np.concatenate(dst_parts)
        else:
            src = np.empty(0, dtype=np.intp)
            dst = np.empty(0, dtype=np.intp)

        adj = sp.csr_matrix(
            (np.ones(src.size, dtype=np.float64), (src, dst)), shape=(n, n)
        )
        adj.sort_indices()
        self.adjacency = adj
        self.indptr = adj.indptr
        self.indices = adj.indices
        self.degrees = np.diff(adj.indptr)

    @property
    def n_sites(self) -> int:
        return self.shape.n_sites

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return int(self.indices.size) // 2

    def neighbors_of(self, site: int) -> np.ndarray:
        if not (0 <= site < self.n_sites):
            raise IndexError(f"site {site} outside grid of {self.n_sites} sites")
        return self.indices[self.indptr[site] : self.indptr[site + 1]]

    def degree(self, site: int) -> int:
        return int(self.degrees[site])

    def neighbor_sums(self, values: np.ndarray) -> np.ndarray:
        """Vector of ``sum_{j in N_i} values[j]`` for every site.

        ``values`` may be 1-d of length n or 2-d ``(n_reps, n)``; the sum runs
        over the last axis.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            return self.adjacency @ values
        return (self.adjacency @ values.T).T


def build_neighbor_graph(shape: GridShape, spec: NeighborhoodSpec) -> NeighborGraph:
    """Build the symmetric neighbor graph for ``spec`` on ``shape``.

    Degenerate specs (``Rect(0, 0)``, ellipses smaller than one grid step)
    yield a graph with no edges.
    """
    return NeighborGraph(shape, spec)


def neighbor_sum(field_slice: np.ndarray, graph: NeighborGraph, site: int) -> int:
    """Count of neighbors of ``site`` with value 1 in a binary slice."""
    field_slice = np.asarray(field_slice)
    if field_slice.shape != (graph.n_sites,):
        raise ValueError(
            f"field slice has shape {field_slice.shape}, expected ({graph.n_sites},)"
        )
    return int(field_slice[graph.neighbors_of(site)].sum())
