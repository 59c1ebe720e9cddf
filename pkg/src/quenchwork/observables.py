"""Density observables and single-site entanglement.

Every quantity here is diagonal in the occupation basis, so a state (pure
or thermal) enters only through its occupation weights
``w[k] = sum_n p_n |<k|n>|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import SectorBasis
from .spectra import EigenSystem, ThermalWeights


def occupation_weights(state, weights: ThermalWeights | np.ndarray | None = None) -> np.ndarray:
    """Diagonal of the density matrix in the occupation basis.

    ``state`` is either a normalised amplitude vector or an
    :class:`EigenSystem`, in which case ``weights`` gives p_n (a
    :class:`ThermalWeights` or a plain probability vector).
    """
    if isinstance(state, EigenSystem):
        if weights is None:
            raise ValueError("an EigenSystem needs ensemble weights")
        if isinstance(weights, ThermalWeights):
            # the truncated ensemble is renormalised to its kept mass
            idx = weights.support
            p = weights.p[idx] / weights.p[idx].sum()
        else:
            p = np.asarray(weights, dtype=float)
            idx = np.flatnonzero(p)
            p = p[idx]
        return np.square(state.vectors[:, idx]) @ p
    amp = np.asarray(state)
    return np.abs(amp) ** 2


def density_profile(state, basis: SectorBasis, weights=None) -> np.ndarray:
    w = occupation_weights(state, weights)
    return w @ basis.site_densities()


def density_correlators(state, basis: SectorBasis, order: int = 3, weights=None) -> tuple[np.ndarray, ...]:
    """``(<n_j>, <n_j n_l>, <n_j n_l n_m>)`` truncated at ``order``."""
    if not 1 <= order <= 3:
        raise ValueError("density correlators supported up to order 3")
    return _correlators(occupation_weights(state, weights), basis.site_densities(), order)


def _correlators(w: np.ndarray, n: np.ndarray, order: int) -> tuple[np.ndarray, ...]:
    out = [w @ n]
    if order >= 2:
        out.append(np.einsum("k,kj,kl->jl", w, n, n, optimize=True))
    if order >= 3:
        out.append(np.einsum("k,kj,kl,km->jlm", w, n, n, n, optimize=True))
    if order >= 4:
        out.append(np.einsum("k,kj,kl,km,ko->jlmo", w, n, n, n, n, optimize=True))
    return tuple(out)


@dataclass(frozen=True)
class SiteRDM:
    p_empty: float
    p_up: float
    p_dn: float
    p_double: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_empty, self.p_up, self.p_dn, self.p_double])

    @property
    def purity(self) -> float:
        return float(np.sum(self.as_array() ** 2))

    @property
    def linear_entropy(self) -> float:
        return 1.0 - self.purity


def site_rdm_table(w: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """``L x 4`` table of (p_empty, p_up, p_dn, p_double) from occupation weights."""
    up, dn = basis.occupations()
    n_up = w @ up
    n_dn = w @ dn
    dbl = w @ (up * dn)
    p_up = n_up - dbl
    p_dn = n_dn - dbl
    return np.column_stack([1.0 - p_up - p_dn - dbl, p_up, p_dn, dbl])


def site_rdm(state, basis: SectorBasis, site: int, weights=None) -> SiteRDM:
    row = site_rdm_table(occupation_weights(state, weights), basis)[site]
    return SiteRDM(*map(float, row))


@dataclass(frozen=True)
class EntanglementResult:
    per_site: np.ndarray
    site_average: float

    @staticmethod
    def ensemble_average(results) -> float:
        return float(np.mean([r.site_average for r in results]))


def linear_entropies(rdm_table: np.ndarray) -> np.ndarray:
    return 1.0 - np.sum(rdm_table ** 2, axis=1)


def entanglement_average(state, basis: SectorBasis, weights=None) -> EntanglementResult:
    per_site = linear_entropies(site_rdm_table(occupation_weights(state, weights), basis))
    return EntanglementResult(per_site, float(per_site.mean()))


def rdm_csv(rdm_table: np.ndarray) -> str:
    lines = ["site,p_empty,p_up,p_dn,p_double,lin_entropy"]
    for i, (row, s) in enumerate(zip(rdm_table, linear_entropies(rdm_table))):
        lines.append(f"{i}," + ",".join(f"{x:.17g}" for x in row) + f",{s:.17g}")
    return "\n".join(lines) + "\n"
