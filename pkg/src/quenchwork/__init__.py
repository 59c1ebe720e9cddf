"""Exact-diagonalisation work statistics for impurity quenches in the 1D attractive Hubbard model."""

from .critical import (CriticalState, build_critical_state, critical_moment_oracle, state_correlators,
                       state_moments, verify_factorization)
from .ensemble import (EnsembleStats, ProfileCache, ProtocolSpec, QuenchEngine, QuenchPair,
                       SweepRow, average_pairs, entanglement_curve, enumerate_configs,
                       protocol_pairs, sample_pairs, sweep_concentration, sweep_potential)
from .fock import Determinant, SectorBasis, enumerate_sector
from .hamiltonian import (ImpurityConfig, LatticeSpec, PotentialDelta, SparseHamiltonian,
                          build_hamiltonian, potential_delta)
from .observables import SiteRDM, entanglement_average, site_rdm, site_rdm_table
from .spectra import EigenSystem, ThermalWeights, diagonalize, thermal_weights
from .workstats import (MomentSet, StateCorrelators, WorkDistribution, correlator_mean,
                        correlator_mu3, correlator_variance, delta3_identity, jarzynski_residual,
                        mu3_discrepancy, spectral_moments, summarize_state, tpm_distribution)

__version__ = "0.1.0"

__all__ = [
    "CriticalState", "build_critical_state", "critical_moment_oracle", "state_correlators", "state_moments",
    "verify_factorization", "EnsembleStats", "ProfileCache", "ProtocolSpec", "QuenchEngine",
    "QuenchPair", "SweepRow", "average_pairs", "entanglement_curve", "enumerate_configs",
    "protocol_pairs", "sample_pairs", "sweep_concentration", "sweep_potential", "Determinant",
    "SectorBasis", "enumerate_sector", "ImpurityConfig", "LatticeSpec", "PotentialDelta",
    "SparseHamiltonian", "build_hamiltonian", "potential_delta", "SiteRDM",
    "entanglement_average", "site_rdm", "site_rdm_table", "EigenSystem", "ThermalWeights",
    "diagonalize", "thermal_weights", "MomentSet", "StateCorrelators", "WorkDistribution",
    "correlator_mean", "correlator_mu3", "correlator_variance", "delta3_identity",
    "jarzynski_residual", "mu3_discrepancy", "spectral_moments", "summarize_state",
    "tpm_distribution",
]
