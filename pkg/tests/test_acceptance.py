"""Acceptance criteria for the L=8, U=-5J, half-filled chain.

Each test prints (and registers for the terminal summary) one line:
``PASS|FAIL|EXCLUDED  criterion N  <what was measured>``.  L=8 profiles are
read from the shared disk cache when present and computed otherwise.
"""

import numpy as np
import pytest

from conftest import CACHE_DIR, random_instance
from quenchwork.critical import build_critical_state, critical_moment_oracle, state_correlators, state_moments
from quenchwork.ensemble import (ProfileCache, ProtocolSpec, QuenchEngine, entanglement_curve,
                                 protocol_pairs, sweep_concentration, sweep_potential)
from quenchwork.fock import enumerate_sector
from quenchwork.hamiltonian import LatticeSpec, build_hamiltonian, potential_delta
from quenchwork.spectra import diagonalize, thermal_weights
from quenchwork.workstats import (correlator_mean, correlator_mu3, correlator_variance, delta3_identity,
                                  jarzynski_residual, spectral_moments, tpm_distribution)

L, U = 8, -5.0
TEMPS = (0.0, 2.0, 30.0)
V_GRID = (-1.0, -3.0, -5.0, -8.0, -10.0)
V0_GRID = (-0.5, -1.0, -3.0, -5.0, -7.0)
C_A = [100.0 * n / L for n in range(L)]
C_B = [100.0 * n / L for n in range(1, L)]
C_E = [100.0 * n / L for n in range(L + 1)]

RESULTS: list[str] = []


def report(n, passed, detail, label=None):
    line = f"{'PASS' if passed else 'FAIL':<8} criterion {label or n:<4} {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module", params=["open", "periodic"])
def engine(request):
    return QuenchEngine(LatticeSpec(L, 1.0, U, request.param), enumerate_sector(L, 4, 4), TEMPS,
                        cache=ProfileCache(disk=CACHE_DIR))


@pytest.fixture(scope="module")
def open_engine():
    return QuenchEngine(LatticeSpec(L, 1.0, U), enumerate_sector(L, 4, 4), TEMPS,
                        cache=ProfileCache(disk=CACHE_DIR))


def _curve(rows, T, field):
    return {r.C_initial: getattr(r, field) for r in rows if r.T == T}


def test_criterion_01_critical_state_exactness():
    basis = enumerate_sector(L, 4, 4)
    specs = [ProtocolSpec.concentration(V, pairing) for V in V_GRID for pairing in ("resample", "superset")]
    specs += [ProtocolSpec.strength(V0, 2 * U) for V0 in V0_GRID]
    corr, worst, n_pairs = {}, 0.0, 0
    for spec in specs:
        for pair in protocol_pairs(spec, L, 4):
            key = pair.initial.sites
            if key not in corr:
                corr[key] = state_correlators(build_critical_state(pair.initial, basis), basis)
            got = state_moments(None, None, pair.delta.delta_v, correlators=corr[key])
            want = critical_moment_oracle(pair)
            worst = max(worst, abs(got.variance), abs(got.mu3), abs(got.mu4), abs(got.mean - want.mean))
            n_pairs += 1
    report(1, worst <= 1e-12, f"{n_pairs} pairs at C=50%, max |mu_k| (k=2..4) = {worst:.1e} (tol 1e-12)")


def test_criterion_02_03_variance_dip_and_skewness_sign(engine):
    rows = sweep_concentration(engine, ProtocolSpec.concentration(-10.0), C_A)
    var = _curve(rows, 0.0, "var_W")
    mu3 = _curve(rows, 0.0, "mu3_W")
    tag = engine.lattice.boundary
    c_min = min(var, key=var.get)
    ratio = var[50.0] / max(var.values())
    ok2 = c_min == 50.0 and ratio <= 0.05
    below = all(mu3[c] > 0 for c in C_A if c < 50.0)
    above = all(mu3[c] < 0 for c in C_A if c > 50.0)
    lines = []
    try:
        report(2, ok2, f"[{tag}] argmin var = {c_min:g}%, var(50%)/max = {ratio:.3g} (need 50%, <= 0.05)",
               label=f"2/{tag[0]}")
    except AssertionError as exc:
        lines.append(str(exc))
    try:
        report(3, below and above,
               f"[{tag}] mu3 by C: " + ", ".join(f"{c:g}:{mu3[c]:+.3g}" for c in C_A), label=f"3/{tag[0]}")
    except AssertionError as exc:
        lines.append(str(exc))
    assert not lines, "; ".join(lines)


def test_criterion_04_work_extraction_from_clean_chain(open_engine):
    worst = -np.inf
    for V in V_GRID:
        rows = sweep_concentration(open_engine, ProtocolSpec.concentration(V), [0.0])
        for r in rows:
            if r.T in (0.0, 2.0):
                worst = max(worst, r.mean_W)
    report(4, worst < 0, f"max mean W at C=0 over V grid, T in {{0,2}} = {worst:.4g} (need < 0)")


def test_criterion_05_rescaling_collapse(open_engine):
    curves = {}
    for V in (-7.0, -10.0, -14.0):
        rows = sweep_concentration(open_engine, ProtocolSpec.concentration(V), C_A)
        curves[V] = {c: w / abs(V) for c, w in _curve(rows, 0.0, "mean_W").items()}
    worst, where = 0.0, None
    by_c = dict.fromkeys(C_A, 0.0)
    Vs = list(curves)
    for i in range(len(Vs)):
        for j in range(i + 1, len(Vs)):
            for c in C_A:
                a, b = curves[Vs[i]][c], curves[Vs[j]][c]
                rel = abs(a - b) / max(abs(a), abs(b))
                by_c[c] = max(by_c[c], rel)
                if rel > worst:
                    worst, where = rel, (Vs[i], Vs[j], c)
    bad = ", ".join(f"{c:g}%:{r:.3g} (W/|V|~{curves[-10.0][c]:+.3g})" for c, r in by_c.items() if r > 0.05)
    report(5, worst <= 0.05, f"max pairwise rel. diff of W/|V| = {worst:.3g} at V={where[:2]}, C={where[2]:g}% "
           f"(tol 0.05)" + (f"; over tol at {bad}" if bad else ""))


def test_criterion_06_protocol_b_regimes(open_engine):
    rows = sweep_potential(open_engine, 2 * U, list(V0_GRID), C_B)
    weak = [r for r in rows if r.T == 0.0 and abs(r.V0) < abs(U)]
    hot = [r for r in rows if r.T == 30.0]
    ok_a = all(r.mean_W < 0 for r in weak)
    ok_b = all(r.mean_W < 0 for r in hot)
    peaks = {}
    for V in V_GRID:
        var = _curve(sweep_concentration(open_engine, ProtocolSpec.concentration(V), C_A), 30.0, "var_W")
        peaks[V] = max(var, key=var.get)
    ok_c = all(37.5 <= c <= 62.5 for c in peaks.values())
    detail = (f"T=0 |V0|<|U|: max W = {max(r.mean_W for r in weak):.3g}; "
              f"T=30 all (V0,C): max W = {max(r.mean_W for r in hot):.3g}; "
              f"T=30 A argmax var by V: " + ", ".join(f"{V:g}:{c:g}%" for V, c in peaks.items()))
    report(6, ok_a and ok_b and ok_c, detail)


def _dual_route_instances():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        lat, basis, a, f = random_instance(rng)
        H0, Hf = build_hamiltonian(lat, a, basis), build_hamiltonian(lat, f, basis)
        yield basis, H0, Hf, diagonalize(H0), diagonalize(Hf), potential_delta(a, f)


@pytest.fixture(scope="module")
def dual_route():
    return list(_dual_route_instances())


def test_criterion_07_dual_route_identity(dual_route):
    worst_mv = worst_d3 = 0.0
    for basis, H0, Hf, eig0, eigf, delta in dual_route:
        for T in (0.0, 1.0, 5.0):
            w0 = thermal_weights(eig0, T)
            spec = spectral_moments(eig0, Hf, w0)
            for a, b in ((spec.mean, correlator_mean(w0, eig0, delta, basis)),
                         (spec.variance, correlator_variance(w0, eig0, delta, basis))):
                worst_mv = max(worst_mv, abs(a - b) / max(1.0, abs(a), abs(b)))
            d3 = spec.mu3 - correlator_mu3(w0, eig0, delta, basis)
            ident = delta3_identity(eig0, w0, delta, basis, H0)
            worst_d3 = max(worst_d3, abs(d3 - ident) / max(1.0, abs(ident)))
    report(7, worst_mv <= 1e-9 and worst_d3 <= 1e-8,
           f"150 (instance, T) cases: mean/var max rel = {worst_mv:.1e} (tol 1e-9), "
           f"delta3 identity max rel = {worst_d3:.1e} (tol 1e-8)")


def test_criterion_08_jarzynski(dual_route):
    worst_rel = worst_abs = 0.0
    n_abs = 0
    for basis, H0, Hf, eig0, eigf, delta in dual_route:
        for T in (1.0, 5.0):
            w0 = thermal_weights(eig0, T, cutoff=0.0)
            wf = thermal_weights(eigf, T, cutoff=0.0)
            dist = tpm_distribution(eig0, eigf, w0, pair_cutoff=0.0)
            worst_rel = max(worst_rel, jarzynski_residual(dist, T, w0.log_z, wf.log_z, relative=True))
            if wf.log_z <= w0.log_z:
                n_abs += 1
                worst_abs = max(worst_abs, jarzynski_residual(dist, T, w0.log_z, wf.log_z))
    report(8, worst_rel <= 1e-8 and worst_abs <= 1e-8,
           f"100 T>0 cases: |<e^-W/T> Z0/Zf - 1| max = {worst_rel:.1e}; absolute residual on the "
           f"{n_abs} cases with Zf<=Z0 max = {worst_abs:.1e} (tol 1e-8)")


def test_criterion_09_entanglement_signature(engine):
    curve = dict(entanglement_curve(engine, -20.0, C_E, T=0.0))
    at_half = {V: dict(entanglement_curve(engine, V, [50.0], T=0.0))[50.0] for V in (-5.0, -10.0, -20.0)}
    c_min = min(curve, key=curve.get)
    seq = [at_half[V] for V in (-5.0, -10.0, -20.0)]
    ok = c_min == 50.0 and seq[0] > seq[1] > seq[2]
    tag = engine.lattice.boundary
    report(9, ok, f"[{tag}] V=-20 argmin S_L = {c_min:g}%; S_L(50%) at V=-5,-10,-20 = "
           + ", ".join(f"{s:.4f}" for s in seq), label=f"9/{tag[0]}")


def test_criterion_10_long_chain_curves_excluded():
    line = ("EXCLUDED criterion 10   L=100 averaged curves need a many-body method beyond exact "
            "diagonalisation; criterion 9 is the substitute")
    RESULTS.append(line)
    print(line)
    pytest.skip("long-chain curves are out of reach of exact diagonalisation")
