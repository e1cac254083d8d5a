"""Multilinear finite elements on the dyadic grid with homogeneous Dirichlet conditions."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import CoefficientField
from .grid import FineGrid, GridMismatchError

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DIRECT_LIMIT = 3_000_000


class SolverError(RuntimeError):
    pass


def _local_1d(h: float):
    K = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    M = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6
    return K, M


def local_stiffness(d: int, h: float) -> np.ndarray:
    K, M = _local_1d(h)
    return sum(reduce(np.kron, [K if j == k else M for j in range(d)]) for k in range(d))


def local_mass(d: int, h: float) -> np.ndarray:
    _, M = _local_1d(h)
    return reduce(np.kron, [M] * d)


def _assemble(grid: FineGrid, local: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
    nodes = grid.element_nodes
    nloc = nodes.shape[1]
    rows = np.repeat(nodes, nloc, axis=1).ravel()
    cols = np.tile(nodes, (1, nloc)).ravel()
    data = (weights[:, None] * local.ravel()[None, :]).ravel()
    return sp.coo_matrix((data, (rows, cols)), shape=(grid.node_count,) * 2).tocsr()


@dataclass(frozen=True)
class SparseOperator:
    """Symmetric operator; `matrix` acts on interior nodes, `full` on all nodes."""

    grid: FineGrid
    matrix: sp.csr_matrix
    full: sp.csr_matrix
    kind: str
    coefficient: CoefficientField | None = None

    def quadratic(self, v: np.ndarray) -> float:
        vf = self.grid.check_nodal(v)[self.grid.free]
        return float(vf @ (self.matrix @ vf))

    def to_coo_text(self, path) -> None:
        m = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, x in zip(m.row, m.col, m.data):
                fh.write(f"{r} {c} {x!r}\n")


def assemble_stiffness(grid: FineGrid, a: CoefficientField) -> SparseOperator:
    if a.grid != grid:
        raise GridMismatchError("coefficient lives on a different grid")
    if not np.all(a.values > 0):
        raise ValueError(f"coefficient must be positive, min = {a.a_min}")
    full = _assemble(grid, local_stiffness(grid.d, grid.h), a.values)
    free = grid.free
    return SparseOperator(grid, full[free][:, free].tocsr(), full, "stiffness", a)


def assemble_mass(grid: FineGrid) -> SparseOperator:
    full = _assemble(grid, local_mass(grid.d, grid.h), np.ones(grid.element_count))
    free = grid.free
    return SparseOperator(grid, full[free][:, free].tocsr(), full, "mass")


def assemble_load(grid: FineGrid, f: np.ndarray, mass: SparseOperator | None = None) -> np.ndarray:
    f = grid.check_nodal(f)
    if mass is None:
        mass = assemble_mass(grid)
    return (mass.full @ f)[grid.free]


class Factorization:
    """Reusable SPD solve; SuperLU by default, Jacobi-preconditioned CG above DIRECT_LIMIT unknowns."""

    def __init__(self, A: sp.spmatrix, rtol: float = DEFAULT_RTOL, method: str = "auto"):
        self.A = sp.csc_matrix(A)
        self.rtol = rtol
        if method == "auto":
            method = "direct" if self.A.shape[0] <= DIRECT_LIMIT else "cg"
        self.method = method
        if method == "direct":
            self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options=dict(SymmetricMode=True))
        elif method == "cg":
            self._dinv = 1.0 / self.A.diagonal()
        else:
            raise ValueError(f"unknown factorization method {method!r}")

    def _cg(self, b: np.ndarray) -> np.ndarray:
        M = spla.LinearOperator(self.A.shape, matvec=lambda x: self._dinv * x)
        x, info = spla.cg(self.A, b, rtol=self.rtol * 1e-2, atol=0.0, M=M, maxiter=20 * self.A.shape[0])
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
        return x

    def _raw(self, b: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            return self._lu.solve(b)
        if b.ndim == 1:
            return self._cg(b)
        return np.column_stack([self._cg(col) for col in b.T])

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._raw(b)
        scale = np.linalg.norm(b, axis=0)
        r = b - self.A @ x
        if np.any(np.linalg.norm(r, axis=0) > self.rtol * scale):
            x = x + self._raw(r)
            r = b - self.A @ x
        res = np.linalg.norm(r, axis=0)
        if np.any(res > self.rtol * scale):
            # residual below rtol*||b|| is out of reach in double precision once cond(A) ~ 1/rtol;
            # accept if the normwise backward error is still below rtol
            anorm = spla.norm(self.A, 1)
            backward = res / (anorm * np.linalg.norm(x, axis=0) + scale)
            worst = float(np.max(backward))
            if worst > self.rtol:
                raise SolverError(f"backward error {worst:.3e} exceeds rtol {self.rtol:.1e}")
            log.warning("relative residual %.3e above rtol; backward error %.3e accepted",
                        float(np.max(res / np.where(scale > 0, scale, 1.0))), worst)
        return x


def solve_dirichlet(A: SparseOperator, load: np.ndarray, factorization: Factorization | None = None) -> np.ndarray:
    if A.kind != "stiffness":
        raise ValueError("solve_dirichlet needs a stiffness operator")
    if factorization is None:
        factorization = Factorization(A.matrix)
    return A.grid.extend(factorization.solve(load))


def norms(v: np.ndarray, A: SparseOperator, M: SparseOperator) -> tuple:
    """(energy norm, L2 norm) of an H^1_0 nodal function."""
    return np.sqrt(max(A.quadratic(v), 0.0)), np.sqrt(max(M.quadratic(v), 0.0))


def element_energies(grid: FineGrid, a: CoefficientField, v: np.ndarray) -> np.ndarray:
    """Per-element contributions a_e * int_e |grad v|^2."""
    V = grid.check_nodal(v)[grid.element_nodes]
    K = local_stiffness(grid.d, grid.h)
    return a.values * np.einsum("ep,pq,eq->e", V, K, V)
