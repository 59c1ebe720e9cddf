"""Dense eigendecomposition and initial-ensemble (Gibbs) weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import logsumexp

from .fock import SectorBasis
from .hamiltonian import SparseHamiltonian

DENSE_LIMIT = 6000
DEGENERACY_TOL = 1e-8
DEFAULT_CUTOFF = 1e-12
# below this dimension block splitting is not worth the bookkeeping
SYMMETRY_MIN_DIM = 64


class DimensionTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending eigenvalues; ``vectors[:, k]`` pairs with ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[1]

    def residual(self, H: SparseHamiltonian) -> float:
        """max_k ||H v_k - e_k v_k||_inf / max(1, |e_k|)."""
        R = H.tocsr() @ self.vectors - self.vectors * self.values
        return float(np.max(np.abs(R).max(axis=0) / np.maximum(1.0, np.abs(self.values))))

    def orthonormality_error(self) -> float:
        G = self.vectors.T @ self.vectors
        G[np.diag_indices_from(G)] -= 1.0
        return float(np.abs(G).max())


def spin_flip_blocks(basis: SectorBasis) -> list[sp.csr_matrix] | None:
    """Orthonormal bases of the even and odd spin-flip subspaces.

    Exchanging the up and down occupations maps the sector onto itself when
    n_up == n_dn and commutes with any spin-independent Hamiltonian.  The
    global reordering sign (-1)^(n_up n_dn) is common to every state, so the
    flip acts as a plain permutation up to that constant.  Returns None for
    polarised sectors.
    """
    if basis.n_up != basis.n_dn:
        return None
    m = basis.dim_dn
    k = np.arange(basis.dim)
    flipped = (k % m) * m + k // m
    sign = -1.0 if (basis.n_up * basis.n_dn) % 2 else 1.0
    fixed = np.flatnonzero(flipped == k)
    lo = np.flatnonzero(k < flipped)
    hi = flipped[lo]
    r = 1.0 / np.sqrt(2.0)
    blocks = []
    for parity in (1.0, -1.0):
        # fixed states survive only where sign * parity == +1
        keep = fixed if sign * parity > 0 else fixed[:0]
        n_cols = keep.size + lo.size
        rows = np.concatenate([keep, lo, hi])
        cols = np.concatenate([np.arange(keep.size), keep.size + np.arange(lo.size),
                               keep.size + np.arange(lo.size)])
        vals = np.concatenate([np.ones(keep.size), np.full(lo.size, r),
                               np.full(lo.size, parity * sign * r)])
        blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, n_cols)))
    return blocks


def _dense_eigh(A: np.ndarray, driver: str = "evd") -> tuple[np.ndarray, np.ndarray]:
    if A.shape[0] == 1:
        return A[0].copy(), np.ones((1, 1))
    # LinAlgError on no-convergence propagates unchanged
    return sla.eigh(A, overwrite_a=True, check_finite=False, driver=driver)


def diagonalize(H: SparseHamiltonian | np.ndarray, dense_limit: int = DENSE_LIMIT,
                basis: SectorBasis | None = None) -> EigenSystem:
    """Full dense eigendecomposition.

    Passing the ``basis`` of a balanced sector splits the problem into its
    two spin-flip blocks first, about four times cheaper than one dense
    solve.  Eigenvalues come back merged in ascending order either way.
    """
    n = H.dim if isinstance(H, SparseHamiltonian) else np.shape(H)[0]
    if n > dense_limit:
        raise DimensionTooLargeError(f"dimension {n} above dense limit {dense_limit}")
    blocks = None
    if basis is not None and isinstance(H, SparseHamiltonian) and n >= SYMMETRY_MIN_DIM:
        if basis.dim != n:
            raise ValueError("basis and Hamiltonian dimensions differ")
        blocks = spin_flip_blocks(basis)
    if blocks is None:
        A = H.todense() if isinstance(H, SparseHamiltonian) else np.array(H, dtype=float)
        return EigenSystem(*_dense_eigh(A))
    Hs = H.tocsr()
    # evr keeps a much smaller workspace than evd, which matters more than
    # its extra flops once the blocks are this small
    solved = [_dense_eigh((Q.T @ Hs @ Q).toarray(), driver="evr") for Q in blocks if Q.shape[1]]
    blocks = [Q for Q in blocks if Q.shape[1]]
    values = np.concatenate([w for w, _ in solved])
    order = np.argsort(values, kind="stable")
    position = np.empty(n, dtype=np.intp)
    position[order] = np.arange(n)
    vecs = np.empty((n, n))
    start = 0
    for Q, (w, v) in zip(blocks, solved):
        cols = position[start:start + w.size]
        start += w.size
        # each row of Q holds one entry: state k is coefficient c_k times column j_k
        for k in range(n):
            lo, hi = Q.indptr[k], Q.indptr[k + 1]
            if hi > lo:
                vecs[k, cols] = Q.data[lo] * v[Q.indices[lo]]
            else:
                vecs[k, cols] = 0.0
    return EigenSystem(values[order], vecs)


@dataclass(frozen=True, eq=False)
class ThermalWeights:
    T: float
    p: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    truncation_mass: float
    log_z: float

    def on_support(self) -> np.ndarray:
        return self.p[self.support]


def log_partition(energies: np.ndarray, T: float) -> float:
    """log Z with the ground-state energy subtracted before exponentiation.

    Returned value is log sum_n exp(-e_n / T), i.e. the shift is added back.
    """
    e = np.asarray(energies, dtype=float)
    if T == 0:
        raise ValueError("log Z undefined at T = 0")
    return float(logsumexp(-e / T))


def thermal_weights(eig: EigenSystem | np.ndarray, T: float, cutoff: float = DEFAULT_CUTOFF,
                    degeneracy_tol: float = DEGENERACY_TOL) -> ThermalWeights:
    """Boltzmann weights p_n ~ exp(-e_n / T) with k_B = 1.

    At ``T == 0`` the weight is spread uniformly over every level within
    ``degeneracy_tol`` of the ground energy.
    """
    if T < 0:
        raise ValueError("temperature must be non-negative")
    if not 0 <= cutoff <= 1e-6:
        raise ValueError("cutoff must lie in [0, 1e-6]")
    e = eig.values if isinstance(eig, EigenSystem) else np.asarray(eig, dtype=float)
    e0 = e.min()
    if T == 0:
        ground = e - e0 <= degeneracy_tol
        p = ground / ground.sum()
        log_z = -np.inf
    else:
        x = -(e - e0) / T
        log_z_shifted = logsumexp(x)
        p = np.exp(x - log_z_shifted)
        log_z = float(log_z_shifted - e0 / T)
    keep = p >= cutoff
    if not keep.any():
        keep = p == p.max()
    truncation = float(p[~keep].sum())
    return ThermalWeights(float(T), p, np.flatnonzero(keep), truncation, float(log_z))
