"""Occupation-number basis of a fixed (N_up, N_dn) sector.

A determinant is a pair of bitmasks ``(up_mask, dn_mask)``; bit ``i`` set
means site ``i`` holds a fermion of that spin.  Creation operators are
ordered as c+_{0,up} ... c+_{L-1,up} c+_{0,dn} ... c+_{L-1,dn}, so a hop of
one spin species only picks up the sign of its own string.

States are ordered lexicographically by ``(up_mask, dn_mask)`` read as
integers.  That ordering is part of the output contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple

import numpy as np

MAX_SECTOR_DIM = 10**6


class CapacityError(ValueError):
    """Requested object would exceed a configured size limit."""


class SectorError(ValueError):
    """A determinant or state does not belong to the sector at hand."""


class InvalidMoveError(ValueError):
    """Hop requested between sites whose occupations forbid it."""


class Determinant(NamedTuple):
    up_mask: int
    dn_mask: int


def popcount(x: int) -> int:
    return bin(x).count("1")


def _binomial_table(L: int) -> np.ndarray:
    table = np.zeros((L + 1, L + 2), dtype=np.int64)
    for n in range(L + 1):
        for k in range(L + 2):
            table[n, k] = comb(n, k)
    return table


def masks_with_popcount(L: int, n: int) -> np.ndarray:
    """All ``L``-bit masks with ``n`` bits set, ascending."""
    if n < 0 or n > L:
        return np.zeros(0, dtype=np.int64)
    out = np.empty(comb(L, n), dtype=np.int64)
    # Gosper's hack walks fixed-popcount masks in increasing order.
    x = (1 << n) - 1
    for k in range(out.size):
        out[k] = x
        if x == 0:
            break
        c = x & -x
        r = x + c
        x = (((r ^ x) >> 2) // c) | r
    return out


def mask_rank(mask: int, L: int) -> int:
    """Combinatorial rank of ``mask`` among masks of equal popcount."""
    r, t = 0, 0
    for p in range(L):
        if mask >> p & 1:
            t += 1
            r += comb(p, t)
    return r


def mask_unrank(rank: int, L: int, n: int) -> int:
    mask = 0
    for t in range(n, 0, -1):
        p = t - 1
        while comb(p + 1, t) <= rank:
            p += 1
        rank -= comb(p, t)
        mask |= 1 << p
    return mask


def hop_parity(mask: int, i: int, j: int) -> int:
    """Sign of c+_i c_j acting on ``mask`` (bit j set, bit i clear)."""
    if i == j:
        raise InvalidMoveError("hop needs two distinct sites")
    if not (mask >> j & 1) or (mask >> i & 1):
        raise InvalidMoveError(f"cannot hop {j}->{i} in mask {mask:b}")
    lo, hi = min(i, j), max(i, j)
    between = mask & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1 if popcount(between) % 2 else 1


def apply_hop(mask: int, i: int, j: int) -> tuple[int, int]:
    """Return ``(sign, new_mask)`` for c+_i c_j."""
    sign = hop_parity(mask, i, j)
    return sign, mask ^ (1 << i) ^ (1 << j)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    L: int
    n_up: int
    n_dn: int
    up_masks: np.ndarray = field(repr=False)
    dn_masks: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.up_masks.size * self.dn_masks.size

    @property
    def dim_dn(self) -> int:
        return self.dn_masks.size

    @property
    def n_particles(self) -> int:
        return self.n_up + self.n_dn

    @property
    def density(self) -> float:
        return self.n_particles / self.L

    @property
    def magnetization(self) -> int:
        return self.n_up - self.n_dn

    @property
    def states(self) -> list[Determinant]:
        return [self.unrank(k) for k in range(self.dim)]

    def __len__(self) -> int:
        return self.dim

    def __iter__(self):
        for u in self.up_masks:
            for d in self.dn_masks:
                yield Determinant(int(u), int(d))

    def unrank(self, k: int) -> Determinant:
        if not 0 <= k < self.dim:
            raise IndexError(k)
        iu, idn = divmod(k, self.dim_dn)
        return Determinant(int(self.up_masks[iu]), int(self.dn_masks[idn]))

    def rank(self, d: Determinant) -> int:
        up, dn = d
        if (popcount(up) != self.n_up or popcount(dn) != self.n_dn
                or up >> self.L or dn >> self.L):
            raise SectorError(f"{d} not in sector ({self.L}, {self.n_up}, {self.n_dn})")
        return mask_rank(up, self.L) * self.dim_dn + mask_rank(dn, self.L)

    def key(self) -> tuple[int, int, int]:
        return (self.L, self.n_up, self.n_dn)

    # Vectorised views used by the Hamiltonian and observables.

    def up_array(self) -> np.ndarray:
        return np.repeat(self.up_masks, self.dim_dn)

    def dn_array(self) -> np.ndarray:
        return np.tile(self.dn_masks, self.up_masks.size)

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-state occupation tables ``(n_up, n_dn)``, each ``dim x L`` int8."""
        sites = np.arange(self.L)
        up = ((self.up_array()[:, None] >> sites) & 1).astype(np.int8)
        dn = ((self.dn_array()[:, None] >> sites) & 1).astype(np.int8)
        return up, dn

    def site_densities(self) -> np.ndarray:
        """``dim x L`` table of n_j(k) in {0, 1, 2}."""
        up, dn = self.occupations()
        return (up + dn).astype(np.float64)

    def double_occupancy(self) -> np.ndarray:
        both = self.up_array() & self.dn_array()
        return np.array([popcount(int(b)) for b in both], dtype=np.float64)


def rank_masks(masks: np.ndarray, L: int) -> np.ndarray:
    """Vectorised :func:`mask_rank`."""
    table = _binomial_table(L)
    masks = np.asarray(masks, dtype=np.int64)
    r = np.zeros(masks.shape, dtype=np.int64)
    t = np.zeros(masks.shape, dtype=np.int64)
    for p in range(L):
        bit = (masks >> p) & 1
        t += bit
        r += bit * table[p, t]
    return r


def enumerate_sector(L: int, n_up: int, n_dn: int, max_dim: int = MAX_SECTOR_DIM) -> SectorBasis:
    if L < 1:
        raise ValueError("L must be positive")
    if not (0 <= n_up <= L and 0 <= n_dn <= L):
        raise SectorError(f"particle counts ({n_up}, {n_dn}) invalid for L={L}")
    dim = comb(L, n_up) * comb(L, n_dn)
    if dim > max_dim:
        raise CapacityError(f"sector dimension {dim} exceeds limit {max_dim}")
    return SectorBasis(L, n_up, n_dn, masks_with_popcount(L, n_up), masks_with_popcount(L, n_dn))
