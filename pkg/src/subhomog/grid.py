"""Dyadic fine grids, coarse partitions, subsampled measurement cubes and patches.

Nodes and cells are numbered lexicographically by their integer coordinates
with the last axis varying fastest (numpy C order).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp

DEFAULT_NODE_BUDGET = 5_000_000


class AlignmentError(ValueError):
    """A length is not representable on the dyadic fine grid."""


class GridMismatchError(ValueError):
    """An array does not live on the expected grid."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(1 << 40)


def _dyadic_exponent(x: Fraction):
    """Return L with x == 2**-L, or None."""
    if x <= 0 or x.numerator != 1:
        return None
    q = x.denominator
    if q & (q - 1):
        return None
    return q.bit_length() - 1


@dataclass(frozen=True)
class FineGrid:
    d: int
    levels: int

    @property
    def n(self) -> int:
        """Elements per side."""
        return 1 << self.levels

    @property
    def h(self) -> float:
        return 2.0 ** -self.levels

    @property
    def shape(self) -> tuple:
        return (self.n + 1,) * self.d

    @property
    def element_shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def node_count(self) -> int:
        return (self.n + 1) ** self.d

    @property
    def element_count(self) -> int:
        return self.n ** self.d

    @cached_property
    def interior_mask(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1)
        return np.all((idx > 0) & (idx < self.n), axis=0)

    @cached_property
    def free(self) -> np.ndarray:
        """Full-grid indices of interior nodes, in increasing order."""
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Map full-grid node index -> interior index (-1 on the boundary)."""
        out = np.full(self.node_count, -1, dtype=np.int64)
        out[self.free] = np.arange(self.free.size)
        return out

    @property
    def interior_count(self) -> int:
        return (self.n - 1) ** self.d

    def node_coordinates(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return idx * self.h

    def element_centers(self) -> np.ndarray:
        idx = np.indices(self.element_shape).reshape(self.d, -1).T
        return (idx + 0.5) * self.h

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """(element_count, 2**d) node indices; local corners in lexicographic order."""
        strides = np.array([(self.n + 1) ** (self.d - 1 - k) for k in range(self.d)])
        lower = np.indices(self.element_shape).reshape(self.d, -1).T @ strides
        corners = np.array(list(itertools.product((0, 1), repeat=self.d))) @ strides
        return lower[:, None] + corners[None, :]

    def check_nodal(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.node_count:
            raise GridMismatchError(
                f"expected {self.node_count} nodal values on a d={self.d}, levels={self.levels} grid, "
                f"got leading dimension {v.shape[0]}")
        return v

    def extend(self, v_free: np.ndarray) -> np.ndarray:
        """Zero-extend interior values to all nodes."""
        v_free = np.asarray(v_free)
        out = np.zeros((self.node_count,) + v_free.shape[1:], dtype=v_free.dtype)
        out[self.free] = v_free
        return out


def build_fine_grid(d: int, levels: int, node_budget: int = DEFAULT_NODE_BUDGET) -> FineGrid:
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    grid = FineGrid(int(d), int(levels))
    if grid.node_count > node_budget:
        raise ValueError(f"grid with {grid.node_count} nodes exceeds the node budget {node_budget}")
    return grid


@dataclass(frozen=True)
class CoarsePartition:
    grid: FineGrid
    coarse_levels: int

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def H(self) -> float:
        return 2.0 ** -self.coarse_levels

    @property
    def m(self) -> int:
        """Cells per side."""
        return 1 << self.coarse_levels

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.d

    @property
    def cell_count(self) -> int:
        return self.m ** self.d

    @property
    def cell_width(self) -> int:
        """Cell side in fine elements."""
        return 1 << (self.grid.levels - self.coarse_levels)

    def cell_coords(self, i) -> np.ndarray:
        return np.array(np.unravel_index(i, self.shape))

    def cell_index(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    @cached_property
    def centers(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return (idx + 0.5) * self.H

    def adjacent(self, i: int, j: int) -> bool:
        return bool(np.max(np.abs(self.cell_coords(i) - self.cell_coords(j))) <= 1)

    def center_cell(self) -> int:
        """Cell whose center is closest to the domain center (lowest index on ties)."""
        dist = np.linalg.norm(self.centers - 0.5, axis=1)
        return int(np.argmin(dist))


def build_coarse_partition(grid: FineGrid, H) -> CoarsePartition:
    Hf = as_fraction(H)
    L = _dyadic_exponent(Hf)
    if L is None:
        raise AlignmentError(f"coarse length H = {Hf} is not of the form 2^-L")
    if L > grid.levels:
        raise AlignmentError(f"coarse length H = {Hf} is finer than the grid size 2^-{grid.levels}")
    return CoarsePartition(grid, L)


@dataclass(frozen=True)
class MeasurementSet:
    partition: CoarsePartition
    h_units: int

    @property
    def grid(self) -> FineGrid:
        return self.partition.grid

    @property
    def h(self) -> float:
        return self.h_units * self.grid.h

    @property
    def H(self) -> float:
        return self.partition.H

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.h_units, self.partition.cell_width)

    @property
    def offset_units(self) -> int:
        return (self.partition.cell_width - self.h_units) // 2

    def subcube_nodes(self, i: int) -> tuple:
        """Per-axis (lo, hi) fine node indices of the closed subcube of cell i."""
        c = self.partition.cell_coords(i)
        lo = c * self.partition.cell_width + self.offset_units
        return lo, lo + self.h_units

    def _axis_weights(self, lo: int) -> np.ndarray:
        # exact integral of each 1D hat over [lo, lo + h_units] divided by h
        w = np.zeros(self.grid.n + 1)
        w[lo:lo + self.h_units + 1] = 1.0
        w[lo] = w[lo + self.h_units] = 0.5
        return w / self.h_units

    @cached_property
    def constraints(self) -> sp.csr_matrix:
        """(|I|, node_count) matrix whose rows pair nodal vectors with the measurement functionals."""
        rows, cols, vals = [], [], []
        for i in range(self.partition.cell_count):
            lo, _ = self.subcube_nodes(i)
            row = np.ones(1)
            for k in range(self.grid.d):
                row = np.kron(row, self._axis_weights(lo[k]))
            nz = np.flatnonzero(row)
            rows.append(np.full(nz.size, i))
            cols.append(nz)
            vals.append(row[nz])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.partition.cell_count, self.grid.node_count))

    @cached_property
    def interior_constraints(self) -> sp.csr_matrix:
        return self.constraints[:, self.grid.free].tocsr()


def build_measurement_set(partition: CoarsePartition, h) -> MeasurementSet:
    hf = as_fraction(h)
    Hf = Fraction(1, partition.m)
    hg = Fraction(1, partition.grid.n)
    if not 0 < hf <= Hf:
        raise AlignmentError(f"subsampled length h = {hf} must satisfy 0 < h <= H = {Hf}")
    if (hf / hg).denominator != 1:
        raise AlignmentError(f"h = {hf} is not an integer multiple of the grid size h_g = {hg}")
    offset = (Hf - hf) / 2
    if (offset / hg).denominator != 1:
        raise AlignmentError(
            f"subcube offset (H - h)/2 = {offset} is not an integer multiple of the grid size h_g = {hg}")
    return MeasurementSet(partition, int(hf / hg))


def measurement_set_from_ratio(partition: CoarsePartition, ratio) -> MeasurementSet:
    return build_measurement_set(partition, as_fraction(ratio) * Fraction(1, partition.m))


def measure(v: np.ndarray, ms: MeasurementSet) -> np.ndarray:
    """Average of v over every subsampled cube; v may carry trailing sample columns."""
    v = ms.grid.check_nodal(v)
    return ms.constraints @ v


@dataclass(frozen=True)
class PatchIndexSet:
    partition: CoarsePartition
    center: int
    layer: int
    lo: tuple
    hi: tuple

    @cached_property
    def members(self) -> np.ndarray:
        ranges = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        coords = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")])
        return np.ravel_multi_index(tuple(coords), self.partition.shape)

    def contains(self, j: int) -> bool:
        c = self.partition.cell_coords(j)
        return bool(np.all((np.array(self.lo) <= c) & (c <= np.array(self.hi))))

    @property
    def saturated(self) -> bool:
        return all(a == 0 for a in self.lo) and all(b == self.partition.m - 1 for b in self.hi)

    @property
    def node_box(self) -> tuple:
        """Per-axis inclusive fine node index range of the patch."""
        w = self.partition.cell_width
        return tuple(a * w for a in self.lo), tuple((b + 1) * w for b in self.hi)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        """Full-grid indices of nodes strictly inside the patch."""
        grid = self.partition.grid
        lo, hi = self.node_box
        ranges = [np.arange(a + 1, b) for a, b in zip(lo, hi)]
        coords = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")])
        return np.ravel_multi_index(tuple(coords), grid.shape)

    def element_mask(self) -> np.ndarray:
        """Boolean mask over fine elements whose closed cube lies in the patch."""
        grid = self.partition.grid
        lo, hi = self.node_box
        idx = np.indices(grid.element_shape).reshape(grid.d, -1)
        inside = np.ones(grid.element_count, dtype=bool)
        for k in range(grid.d):
            inside &= (idx[k] >= lo[k]) & (idx[k] < hi[k])
        return inside


def patch(partition: CoarsePartition, i: int, l: int) -> PatchIndexSet:
    """Oversampled patch N^l of cell i; closed cubes touching at corners count as neighbours."""
    if l < 0:
        raise ValueError(f"layer must be nonnegative, got {l}")
    c = partition.cell_coords(i)
    lo = tuple(int(max(x - l, 0)) for x in c)
    hi = tuple(int(min(x + l, partition.m - 1)) for x in c)
    return PatchIndexSet(partition, int(i), int(l), lo, hi)


def saturation_layer(partition: CoarsePartition, i: int) -> int:
    """Smallest l with N^l = whole domain."""
    c = partition.cell_coords(i)
    return int(np.max(np.maximum(c, partition.m - 1 - c)))
