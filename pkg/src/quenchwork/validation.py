"""Self-checks run by ``quenchwork validate``.

Each check returns a :class:`CheckResult`; all of them run on small
lattices so the whole suite takes seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .critical import build_critical_state, critical_moment_oracle, state_moments
from .ensemble import ProfileCache, ProtocolSpec, QuenchEngine, protocol_pairs, sweep_concentration
from .fock import enumerate_sector
from .hamiltonian import ImpurityConfig, LatticeSpec, build_hamiltonian, potential_delta
from .spectra import diagonalize, thermal_weights
from .workstats import (correlator_mean, correlator_mu3, correlator_variance, delta3_identity,
                        jarzynski_residual, spectral_moments, tpm_distribution)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} {self.detail}"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def check_dimer(tol: float = 1e-12) -> CheckResult:
    """Two sites, one pair: eigenvalues against the closed form."""
    J, U = 1.0, -5.0
    basis = enumerate_sector(2, 1, 1)
    eig = diagonalize(build_hamiltonian(LatticeSpec(2, J, U), None, basis))
    root = math.sqrt(U * U + 16 * J * J)
    exact = np.sort([(U - root) / 2, U, 0.0, (U + root) / 2])
    err = float(np.abs(eig.values - exact).max())
    return CheckResult("dimer spectrum", err <= tol, f"max |de| = {err:.2e}")


def _random_instance(rng: np.random.Generator):
    L = int(rng.integers(2, 5))
    n_up, n_dn = int(rng.integers(1, L + 1)), int(rng.integers(0, L + 1))
    lattice = LatticeSpec(L, 1.0, float(-rng.uniform(0.5, 8.0)),
                          boundary=str(rng.choice(["open", "periodic"])))
    basis = enumerate_sector(L, n_up, n_dn)
    sites = lambda: tuple(sorted(rng.choice(L, size=int(rng.integers(0, L + 1)), replace=False)))
    initial = ImpurityConfig(sites(), float(-rng.uniform(0.5, 10.0)), L)
    final = ImpurityConfig(sites(), float(-rng.uniform(0.5, 10.0)), L)
    return lattice, basis, initial, final


def route_agreement(n_instances: int = 50, seed: int = 7, temperatures=(0.0, 1.0, 5.0),
                    rtol: float = 1e-9, d3_tol: float = 1e-8, jarzynski_tol: float = 1e-8
                    ) -> list[CheckResult]:
    """Spectral vs correlator vs distribution moments on random small instances."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    worst = {"mean/var": 0.0, "delta3": 0.0, "distribution": 0.0, "jarzynski": 0.0,
             "jarzynski_abs": 0.0}
    for _ in range(n_instances):
        lattice, basis, initial, final = _random_instance(rng)
        H0 = build_hamiltonian(lattice, initial, basis)
        Hf = build_hamiltonian(lattice, final, basis)
        eig0, eigf = diagonalize(H0), diagonalize(Hf)
        delta = potential_delta(initial, final)
        for T in temperatures:
            w0 = thermal_weights(eig0, T)
            spec = spectral_moments(eig0, Hf, w0)
            mean = correlator_mean(w0, eig0, delta, basis)
            var = correlator_variance(w0, eig0, delta, basis)
            worst["mean/var"] = max(worst["mean/var"], _rel(spec.mean, mean), _rel(spec.variance, var))
            d3 = spec.mu3 - correlator_mu3(w0, eig0, delta, basis)
            worst["delta3"] = max(worst["delta3"], _rel(d3, delta3_identity(eig0, w0, delta, basis, H0)))
            dist = tpm_distribution(eig0, eigf, w0)
            m = dist.moments()
            worst["distribution"] = max(worst["distribution"], _rel(m.mean, spec.mean),
                                        _rel(m.variance, spec.variance))
            if T > 0:
                # the equality needs every transition, so nothing is truncated here
                full = tpm_distribution(eig0, eigf, thermal_weights(eig0, T, cutoff=0.0), pair_cutoff=0.0)
                wf = thermal_weights(eigf, T)
                worst["jarzynski"] = max(worst["jarzynski"], jarzynski_residual(
                    full, T, w0.log_z, wf.log_z, relative=True))
                if wf.log_z <= w0.log_z:
                    worst["jarzynski_abs"] = max(worst["jarzynski_abs"], jarzynski_residual(
                        full, T, w0.log_z, wf.log_z))
    return [
        CheckResult("route agreement <W>, var", worst["mean/var"] <= rtol, f"max rel = {worst['mean/var']:.2e}"),
        CheckResult("mu3 discrepancy identity", worst["delta3"] <= d3_tol, f"max rel = {worst['delta3']:.2e}"),
        CheckResult("distribution moments", worst["distribution"] <= rtol, f"max rel = {worst['distribution']:.2e}"),
        CheckResult("jarzynski equality", worst["jarzynski"] <= jarzynski_tol,
                    f"max rel = {worst['jarzynski']:.2e} (abs, Zf<=Z0: {worst['jarzynski_abs']:.2e})"),
    ]


def check_critical_state(L: int = 4, V: float = -5.0, tol: float = 1e-12) -> CheckResult:
    """Moments from the localised product state match the closed form."""
    n = L // 2
    basis = enumerate_sector(L, n, n)
    worst = 0.0
    specs = [ProtocolSpec.concentration(V, "resample"), ProtocolSpec.strength(V / 2, V * 2)]
    for spec in specs:
        for pair in protocol_pairs(spec, L, n):
            state = build_critical_state(pair.initial, basis)
            got = state_moments(state, basis, pair.delta.delta_v)
            want = critical_moment_oracle(pair)
            worst = max(worst, abs(got.mean - want.mean), abs(got.variance), abs(got.mu3), abs(got.mu4))
    return CheckResult("critical-state oracle", worst <= tol, f"max deviation = {worst:.2e}")


def check_determinism(L: int = 4) -> CheckResult:
    """Same sweep twice, cached and uncached, must give identical rows."""
    lattice = LatticeSpec(L, 1.0, -5.0)
    basis = enumerate_sector(L, L // 2, L // 2)
    spec = ProtocolSpec.concentration(-10.0)
    C = [100.0 * k / L for k in range(L)]
    runs = []
    for cache in (ProfileCache(), ProfileCache(enabled=False), ProfileCache()):
        engine = QuenchEngine(lattice, basis, (0.0, 2.0), cache=cache)
        runs.append("\n".join(r.csv() for r in sweep_concentration(engine, spec, C)))
    same = all(r == runs[0] for r in runs)
    return CheckResult("determinism", same, "byte-identical rows" if same else "rows differ")


CHECKS: list[Callable[[], CheckResult | list[CheckResult]]] = [
    check_dimer, route_agreement, check_critical_state, check_determinism,
]


def run_all() -> list[CheckResult]:
    out: list[CheckResult] = []
    for check in CHECKS:
        try:
            res = check()
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}")
        out.extend(res if isinstance(res, list) else [res])
    return out
