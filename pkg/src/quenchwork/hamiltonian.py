"""Sector-restricted Hubbard Hamiltonian with point-like impurities.

    H = -J sum_{<ij>,s} (c+_{is} c_{js} + h.c.) + U sum_i n_{i,up} n_{i,dn} + sum_i v_i n_i

Energies are in units of J throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np
import scipy.sparse as sp

from .fock import SectorBasis, popcount, rank_masks

Boundary = Literal["open", "periodic"]


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    J: float = 1.0
    U: float = -5.0
    boundary: Boundary = "open"

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be positive")
        if not self.J > 0:
            raise ValueError("hopping J must be positive")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds ``(i, i+1)``, deduplicated."""
        out = [(i, i + 1) for i in range(self.L - 1)]
        if self.boundary == "periodic" and self.L > 2:
            out.append((self.L - 1, 0))
        return out


@dataclass(frozen=True)
class ImpurityConfig:
    """Sites carrying the impurity potential ``V`` (strictly increasing)."""

    sites: tuple[int, ...]
    V: float
    L: int

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError(f"impurity sites must be strictly increasing: {sites}")
        if sites and (sites[0] < 0 or sites[-1] >= self.L):
            raise ValueError(f"impurity site out of range for L={self.L}: {sites}")
        if self.V > 0:
            warnings.warn("repulsive impurities (V > 0) are outside the attractive-disorder regime",
                          stacklevel=3)

    @property
    def n_impurities(self) -> int:
        return len(self.sites)

    @property
    def concentration(self) -> float:
        return 100.0 * len(self.sites) / self.L

    @property
    def mask(self) -> int:
        return sum(1 << s for s in self.sites)

    def potential(self) -> np.ndarray:
        v = np.zeros(self.L)
        v[list(self.sites)] = self.V
        return v


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Upper-triangle hopping entries plus the diagonal.

    ``rows < cols`` elementwise; the lower triangle is implied by symmetry.
    """

    dim: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    diagonal: np.ndarray = field(repr=False)

    def tocsr(self) -> sp.csr_matrix:
        r = np.concatenate([self.rows, self.cols, np.arange(self.dim)])
        c = np.concatenate([self.cols, self.rows, np.arange(self.dim)])
        v = np.concatenate([self.vals, self.vals, self.diagonal])
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def kinetic(self) -> sp.csr_matrix:
        """Off-diagonal part only."""
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        v = np.concatenate([self.vals, self.vals])
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def todense(self) -> np.ndarray:
        H = np.zeros((self.dim, self.dim))
        H[self.rows, self.cols] = self.vals
        H[self.cols, self.rows] = self.vals
        H[np.diag_indices(self.dim)] = self.diagonal
        return H

    def with_potential(self, basis: SectorBasis, v_old: np.ndarray, v_new: np.ndarray) -> "SparseHamiltonian":
        """Same hopping and interaction, site potential swapped from ``v_old`` to ``v_new``."""
        shift = basis.site_densities() @ (np.asarray(v_new, float) - np.asarray(v_old, float))
        return SparseHamiltonian(self.dim, self.rows, self.cols, self.vals, self.diagonal + shift)

    @property
    def nnz_offdiag(self) -> int:
        return int(self.rows.size)


def _hops(basis: SectorBasis, masks: np.ndarray, other_dim: int, spin: str,
          bonds: Iterable[tuple[int, int]], J: float):
    """Hopping entries for one spin species.

    ``masks`` holds that species' mask for every basis state (length dim).
    """
    L = basis.L
    idx = np.arange(basis.dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for a, b in bonds:
        lo, hi = min(a, b), max(a, b)
        between = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
        bit_lo, bit_hi = (masks >> lo) & 1, (masks >> hi) & 1
        movable = bit_lo != bit_hi
        src = idx[movable]
        m = masks[movable]
        new = m ^ (1 << lo) ^ (1 << hi)
        par = np.zeros(m.size, dtype=np.int64)
        between_bits = m & between
        for p in range(lo + 1, hi):
            par ^= (between_bits >> p) & 1
        sign = 1 - 2 * par
        new_rank = rank_masks(new, L)
        if spin == "up":
            dst = new_rank * other_dim + (src % other_dim)
        else:
            dst = (src // basis.dim_dn) * basis.dim_dn + new_rank
        # every hop is found from both ends; keep the upper-triangle copy
        keep = src < dst
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(-J * sign[keep].astype(float))
    return rows, cols, vals


def build_hamiltonian(spec: LatticeSpec, config: ImpurityConfig | np.ndarray | None,
                      basis: SectorBasis) -> SparseHamiltonian:
    """Assemble H for one disorder realisation.

    ``config`` may be an :class:`ImpurityConfig`, a length-L potential
    vector, or ``None`` for the clean chain.
    """
    if basis.L != spec.L:
        raise DimensionMismatchError(f"basis has L={basis.L}, lattice has L={spec.L}")
    if config is None:
        v = np.zeros(spec.L)
    elif isinstance(config, ImpurityConfig):
        if config.L != spec.L:
            raise DimensionMismatchError(f"impurity config has L={config.L}, lattice has L={spec.L}")
        v = config.potential()
    else:
        v = np.asarray(config, dtype=float)
        if v.shape != (spec.L,):
            raise DimensionMismatchError(f"potential has shape {v.shape}, expected ({spec.L},)")

    ups, dns = basis.up_array(), basis.dn_array()
    bonds = spec.bonds()
    r1, c1, v1 = _hops(basis, ups, basis.dim_dn, "up", bonds, spec.J)
    r2, c2, v2 = _hops(basis, dns, basis.dim_dn, "dn", bonds, spec.J)
    rows = np.concatenate(r1 + r2) if r1 + r2 else np.zeros(0, np.int64)
    cols = np.concatenate(c1 + c2) if c1 + c2 else np.zeros(0, np.int64)
    vals = np.concatenate(v1 + v2) if v1 + v2 else np.zeros(0)
    order = np.lexsort((cols, rows))

    docc = np.array([popcount(int(x)) for x in ups & dns], dtype=float)
    diag = spec.U * docc + basis.site_densities() @ v
    return SparseHamiltonian(basis.dim, rows[order], cols[order], vals[order], diag)


@dataclass(frozen=True, eq=False)
class PotentialDelta:
    delta_v: np.ndarray

    def operator_diagonal(self, basis: SectorBasis) -> np.ndarray:
        """Diagonal of H_f - H_0 = sum_j dv_j n_j in the occupation basis."""
        return basis.site_densities() @ self.delta_v


def potential_delta(initial: ImpurityConfig, final: ImpurityConfig, L: int | None = None) -> PotentialDelta:
    L = initial.L if L is None else L
    if initial.L != L or final.L != L:
        raise DimensionMismatchError("impurity configs live on different chains")
    return PotentialDelta(final.potential() - initial.potential())
