"""The fully localised product state and its exact moment predictions.

With every impurity site doubly occupied and every other site empty the
state is a single determinant.  Products of site densities then factorise
at every order, so every central moment of a sudden potential quench is
exactly zero and the mean is ``2 * sum_{j in initial} dv_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fock import Determinant, SectorBasis, SectorError
from .hamiltonian import ImpurityConfig
from .observables import _correlators, occupation_weights
from .workstats import MomentSet


@dataclass(frozen=True, eq=False)
class CriticalState:
    config: ImpurityConfig
    amplitudes: np.ndarray = field(repr=False)
    index: int

    @property
    def determinant(self) -> Determinant:
        return Determinant(self.config.mask, self.config.mask)


def build_critical_state(config: ImpurityConfig, basis: SectorBasis) -> CriticalState:
    n = config.n_impurities
    if config.L != basis.L or n != basis.n_up or n != basis.n_dn:
        raise SectorError(f"{n} impurities on L={config.L} cannot host the pairs of sector "
                          f"({basis.L}, {basis.n_up}, {basis.n_dn})")
    k = basis.rank(Determinant(config.mask, config.mask))
    amp = np.zeros(basis.dim)
    amp[k] = 1.0
    return CriticalState(config, amp, k)


def verify_factorization(state: CriticalState | np.ndarray, basis: SectorBasis,
                         subset: Sequence[int]) -> float:
    """|<prod_i n_i> - prod_i <n_i>| over the sites in ``subset``."""
    subset = list(subset)
    if not subset:
        raise ValueError("subset must name at least one site")
    amp = state.amplitudes if isinstance(state, CriticalState) else state
    w = occupation_weights(amp)
    n = basis.site_densities()[:, subset]
    joint = float(w @ np.prod(n, axis=1))
    product = float(np.prod(w @ n))
    return abs(joint - product)


def critical_moment_oracle(pair) -> MomentSet:
    """Closed-form moments for a quench starting from the critical state."""
    dv = pair.delta.delta_v
    mean = 2.0 * float(sum(dv[j] for j in pair.initial.sites))
    return MomentSet(mean=mean, variance=0.0, mu3=0.0, raw2=mean ** 2, raw3=mean ** 3,
                     mu4=0.0, raw4=mean ** 4)


def state_correlators(state: CriticalState | np.ndarray, basis: SectorBasis) -> tuple[np.ndarray, ...]:
    """One- to four-point density correlators of a pure state."""
    amp = state.amplitudes if isinstance(state, CriticalState) else state
    return _correlators(occupation_weights(amp), basis.site_densities(), 4)


def state_moments(state: CriticalState | np.ndarray | None, basis: SectorBasis | None, dv: np.ndarray,
                  correlators: tuple[np.ndarray, ...] | None = None) -> MomentSet:
    """Moments of D = sum_j dv_j n_j up to order 4 from k-point density correlators.

    Pass ``correlators`` from :func:`state_correlators` to reuse them across quenches.
    """
    if correlators is None:
        correlators = state_correlators(state, basis)
    n1, n2, n3, n4 = correlators
    dv = np.asarray(dv, dtype=float)
    return MomentSet.from_raw(
        float(dv @ n1),
        float(dv @ n2 @ dv),
        float(np.einsum("jlm,j,l,m->", n3, dv, dv, dv)),
        float(np.einsum("jlmo,j,l,m,o->", n4, dv, dv, dv, dv)),
    )
