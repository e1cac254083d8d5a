"""Energy-minimizing basis functions biorthogonal to the subsampled measurements."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fem import Factorization, SolverError, SparseOperator
from .grid import MeasurementSet, PatchIndexSet, patch

BIORTHOGONALITY_TOL = 1e-8
DENSE_BUDGET = 5000


@dataclass
class BasisSet:
    """Basis columns over all fine nodes (zero on the boundary), one per coarse cell.

    ``layers`` is None for the ideal (global) basis.
    """

    values: np.ndarray | sp.csc_matrix
    measurements: MeasurementSet
    layers: int | None = None
    patches: list = field(default_factory=list)
    gram: np.ndarray | None = None
    coefficient: str = ""

    @property
    def variant(self) -> str:
        return "ideal" if self.layers is None else f"localized(l={self.layers})"

    @property
    def size(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        col = self.values[:, i]
        return col.toarray().ravel() if sp.issparse(col) else np.asarray(col).ravel()

    def dense(self) -> np.ndarray:
        return self.values.toarray() if sp.issparse(self.values) else np.asarray(self.values)

    def interior(self):
        return self.values[self.measurements.grid.free]

    def biorthogonality_error(self) -> float:
        G = self.measurements.constraints @ self.values
        G = G.toarray() if sp.issparse(G) else G
        return float(np.max(np.abs(G - np.eye(self.size))))

    def to_csv(self, path) -> None:
        V = sp.csc_matrix(self.values)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "node", "value"])
            for i in range(V.shape[1]):
                lo, hi = V.indptr[i], V.indptr[i + 1]
                for node, x in zip(V.indices[lo:hi], V.data[lo:hi]):
                    w.writerow([i, int(node), repr(float(x))])


def _condition_checked_solve(S: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    S = (S + S.T) / 2
    try:
        c = la.cho_factor(S)
    except la.LinAlgError:
        raise SolverError(f"{what} is not positive definite (condition {np.linalg.cond(S):.3e})") from None
    return la.cho_solve(c, rhs)


def ideal_basis(A: SparseOperator, ms: MeasurementSet, factorization: Factorization | None = None) -> BasisSet:
    """Global minimizers via the Schur complement: Psi = Y S^-1 with Y = A^-1 B^T, S = B Y."""
    grid = ms.grid
    if A.grid != grid:
        raise ValueError("operator and measurement set live on different grids")
    if factorization is None:
        factorization = Factorization(A.matrix)
    Bt = ms.interior_constraints.T.toarray()
    Y = factorization.solve(Bt)
    Y = Y.reshape(Bt.shape)
    S = ms.interior_constraints @ Y
    Psi = _condition_checked_solve(S, Y.T, "measurement Gram matrix").T
    name = A.coefficient.name if A.coefficient is not None else ""
    return BasisSet(grid.extend(Psi), ms, None, [], (S + S.T) / 2, name)


def _local_column(A: SparseOperator, ms: MeasurementSet, P: PatchIndexSet):
    grid = ms.grid
    nodes = P.interior_nodes
    idx = grid.free_index[nodes]
    A_loc = A.matrix[idx][:, idx]
    members = P.members
    B_loc = ms.constraints[members][:, nodes].toarray()
    Y = Factorization(A_loc).solve(B_loc.T).reshape(B_loc.T.shape)
    S = B_loc @ Y
    rhs = (members == P.center).astype(float)
    lam = _condition_checked_solve(S, rhs, f"local Gram matrix of cell {P.center}")
    return nodes, Y @ lam


def localized_basis(A: SparseOperator, ms: MeasurementSet, layers: int, n_jobs: int = 1) -> BasisSet:
    """Patch-restricted minimizers on N^l with zero Dirichlet data on the patch boundary.

    Only constraints of cells inside the patch are kept; the others vanish identically
    for functions supported in the patch.
    """
    partition = ms.partition
    patches = [patch(partition, i, layers) for i in range(partition.cell_count)]
    work = lambda P: _local_column(A, ms, P)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            cols = list(pool.map(work, patches))
    else:
        cols = [work(P) for P in patches]
    rows = np.concatenate([c[0] for c in cols])
    vals = np.concatenate([c[1] for c in cols])
    idx = np.concatenate([np.full(c[0].size, i) for i, c in enumerate(cols)])
    values = sp.csc_matrix((vals, (rows, idx)), shape=(ms.grid.node_count, partition.cell_count))
    name = A.coefficient.name if A.coefficient is not None else ""
    return BasisSet(values, ms, int(layers), patches, None, name)


def dense_kkt_oracle(A: SparseOperator, ms: MeasurementSet, i: int) -> np.ndarray:
    """Solve [[A, B^T], [B, 0]] [psi; lam] = [0; e_i] densely with an LDL^T factorization."""
    grid = ms.grid
    n = grid.interior_count
    if n > DENSE_BUDGET:
        raise ValueError(f"{n} interior nodes exceed the dense budget {DENSE_BUDGET}")
    m = ms.partition.cell_count
    B = ms.constraints.toarray()[:, grid.free]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = A.matrix.toarray()
    K[:n, n:] = B.T
    K[n:, :n] = B
    rhs = np.zeros(n + m)
    rhs[n + i] = 1.0
    sol = la.solve(K, rhs, assume_a="sym")
    return grid.extend(sol[:n])
