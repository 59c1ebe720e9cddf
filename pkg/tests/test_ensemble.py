import numpy as np
import pytest

from quenchwork.ensemble import (SWEEP_HEADER, DiskCache, ProfileCache, ProtocolError, ProtocolSpec,
                                 QuenchEngine, average_pairs, compute_profile, entanglement_curve,
                                 enumerate_configs, impurity_count, n_protocol_pairs,
                                 overlap_histogram, protocol_pairs, sample_pairs,
                                 sweep_concentration, sweep_potential)
from quenchwork.fock import CapacityError, enumerate_sector
from quenchwork.hamiltonian import LatticeSpec, build_hamiltonian
from quenchwork.spectra import diagonalize, thermal_weights
from quenchwork.workstats import spectral_moments


def _engine(L=4, nu=2, nd=2, temps=(0.0, 2.0), boundary="open", **kw):
    return QuenchEngine(LatticeSpec(L, 1.0, -5.0, boundary), enumerate_sector(L, nu, nd), temps, **kw)


def test_configuration_counts():
    assert len(enumerate_configs(8, 2)) == 28
    assert len(enumerate_configs(8, 3)) == 56
    assert enumerate_configs(8, 0)[0].sites == ()
    assert len(protocol_pairs(ProtocolSpec.concentration(-1.0, "superset"), 8, 5)) == 168
    assert len(protocol_pairs(ProtocolSpec.concentration(-1.0), 8, 2)) == 1568
    assert len(protocol_pairs(ProtocolSpec.strength(-1.0, -10.0), 8, 1)) == 64
    for spec in (ProtocolSpec.concentration(-1.0), ProtocolSpec.concentration(-1.0, "superset"),
                 ProtocolSpec.strength(-1.0, -10.0)):
        for n in range(0, 7):
            assert n_protocol_pairs(spec, 7, n) == len(protocol_pairs(spec, 7, n))
    with pytest.raises(ProtocolError):
        protocol_pairs(ProtocolSpec.concentration(-1.0), 8, 8)
    with pytest.raises(CapacityError):
        enumerate_configs(40, 20)


def test_pairs_are_ordered_and_well_formed():
    pairs = protocol_pairs(ProtocolSpec.concentration(-3.0), 6, 2)
    keys = [p.sort_key for p in pairs]
    assert keys == sorted(keys)
    for p in pairs:
        assert p.final.n_impurities == 3 and p.initial.V == p.final.V == -3.0
        np.testing.assert_array_equal(p.delta.delta_v, p.final.potential() - p.initial.potential())
    for p in protocol_pairs(ProtocolSpec.concentration(-3.0, "superset"), 6, 2):
        assert set(p.initial.sites) < set(p.final.sites)


def test_protocol_spec_validation():
    with pytest.raises(ProtocolError):
        ProtocolSpec.strength(-10.0, -5.0)
    with pytest.raises(ProtocolError):
        ProtocolSpec.strength(-5.0, -5.0)
    assert ProtocolSpec.strength(-5.0, -5.0, allow_degenerate=True).final_V == -5.0
    with pytest.raises(ProtocolError):
        ProtocolSpec("C")
    with pytest.raises(ProtocolError):
        ProtocolSpec("A", pairing="nearest")


def test_sampling_is_deterministic_and_seeded():
    spec = ProtocolSpec.concentration(-5.0)
    a, ex_a = sample_pairs(spec, 8, 3, 20, seed=11)
    b, _ = sample_pairs(spec, 8, 3, 20, seed=11)
    c, _ = sample_pairs(spec, 8, 3, 20, seed=12)
    assert not ex_a
    assert [p.sort_key for p in a] == [p.sort_key for p in b]
    assert [p.sort_key for p in a] != [p.sort_key for p in c]
    full, exhaustive = sample_pairs(spec, 4, 1, 1000, seed=0)
    assert exhaustive and len(full) == n_protocol_pairs(spec, 4, 1)
    # long chains never enumerate
    big, _ = sample_pairs(spec, 100, 50, 3, seed=5)
    assert len(big) == 3 and all(p.final.n_impurities == 51 for p in big)
    sup, _ = sample_pairs(ProtocolSpec.concentration(-5.0, "superset"), 100, 50, 3, seed=5)
    assert all(set(p.initial.sites) < set(p.final.sites) for p in sup)
    with pytest.raises(ValueError):
        sample_pairs(spec, 8, 3, 0, seed=0)


def test_overlap_histogram():
    pairs = protocol_pairs(ProtocolSpec.concentration(-1.0), 4, 1)
    assert overlap_histogram(pairs) == {0: 12, 1: 12}
    sup = protocol_pairs(ProtocolSpec.concentration(-1.0, "superset"), 4, 2)
    assert overlap_histogram(sup) == {0: len(sup)}


def test_impurity_count():
    assert impurity_count(50.0, 8) == 4 and impurity_count(0.0, 8) == 0
    with pytest.raises(ProtocolError):
        impurity_count(30.0, 8)


def test_zero_strength_gives_zero_statistics():
    eng = _engine()
    stats = average_pairs(eng, protocol_pairs(ProtocolSpec.concentration(0.0), 4, 1))
    for s in stats.values():
        assert (s.mean_W, s.var_W, s.mu3_W, s.delta3) == (0.0, 0.0, 0.0, 0.0)


def test_averages_match_direct_spectral_route():
    eng = _engine(temps=(0.0, 2.0), cutoff=0.0)
    pairs = protocol_pairs(ProtocolSpec.strength(-1.0, -10.0), 4, 2)
    stats = average_pairs(eng, pairs, keep_records=True)
    for T in (0.0, 2.0):
        want = np.zeros(3)
        for p in pairs:
            H0 = build_hamiltonian(eng.lattice, p.initial, eng.basis)
            Hf = build_hamiltonian(eng.lattice, p.final, eng.basis)
            eig0 = diagonalize(H0)
            m = spectral_moments(eig0, Hf, thermal_weights(eig0, T, cutoff=0))
            want += (m.mean, m.variance, m.mu3)
        want /= len(pairs)
        s = stats[T]
        assert s.N_c == len(pairs) and len(s.records) == len(pairs)
        np.testing.assert_allclose([s.mean_W, s.var_W, s.mu3_W], want, rtol=1e-9, atol=1e-9)


def _stats_tuple(stats):
    return [(s.mean_W, s.var_W, s.mu3_W, s.delta3, s.lin_entropy) for _, s in sorted(stats.items())]


def test_results_independent_of_workers_cache_and_order(tmp_path):
    pairs = protocol_pairs(ProtocolSpec.concentration(-5.0), 5, 2)
    base = _stats_tuple(average_pairs(_engine(5, 3, 2, workers=1), pairs))
    par = _stats_tuple(average_pairs(_engine(5, 3, 2, workers=2), pairs))
    nocache = _stats_tuple(average_pairs(
        _engine(5, 3, 2, cache=ProfileCache(enabled=False)), list(reversed(pairs))))
    disk = ProfileCache(disk=str(tmp_path))
    first = _stats_tuple(average_pairs(_engine(5, 3, 2, cache=disk), pairs))
    reread = _stats_tuple(average_pairs(_engine(5, 3, 2, cache=ProfileCache(disk=str(tmp_path))), pairs))
    assert base == par == nocache == first == reread


def test_symmetry_reuse_matches_direct_solves():
    for boundary in ("open", "periodic"):
        pairs = protocol_pairs(ProtocolSpec.concentration(-5.0), 6, 2)
        a = _stats_tuple(average_pairs(_engine(6, 3, 3, boundary=boundary), pairs))
        b = _stats_tuple(average_pairs(_engine(6, 3, 3, boundary=boundary, use_symmetry=False), pairs))
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-11)


def test_canonical_profiles():
    eng = _engine(6)
    v = np.array([0, 0, -2.0, 0, 0, -1.0])
    c, perm = eng.canonical(v)
    assert c.tolist() == [-1.0, 0, 0, -2.0, 0, 0]
    np.testing.assert_array_equal(c[perm], v)
    assert eng.canonical(c)[1] is None
    ring = _engine(6, boundary="periodic")
    reps = {tuple(ring.canonical(cfg.potential())[0]) for cfg in enumerate_configs(6, 2, -1.0)}
    assert len(reps) == 3          # nearest, next-nearest and opposite pairs
    assert eng.canonical(v[::-1])[1] is None
    off = _engine(6, use_symmetry=False)
    assert off.canonical(v)[1] is None


def test_profile_cache_lru_and_disk(tmp_path):
    lat, b = LatticeSpec(3), enumerate_sector(3, 1, 1)
    cache = ProfileCache(max_entries=2, disk=DiskCache(tmp_path))
    keys = []
    for s in range(3):
        pot = np.zeros(3)
        pot[s] = -1.0
        key = ("k", s)
        keys.append(key)
        cache.put(key, compute_profile(lat, b, pot, (0.0, 1.0)))
    assert len(cache) == 2
    assert cache.get(keys[0], (0.0, 1.0)) is not None         # evicted from memory, found on disk
    assert cache.get(keys[0], (0.0, 5.0)) is None             # missing temperature
    assert len(list(tmp_path.glob("*.npz"))) == 3
    off = ProfileCache(enabled=False)
    off.put(keys[0], {})
    assert off.get(keys[0], (0.0,)) is None and len(off) == 0


def test_sweeps_and_entanglement_curve():
    eng = _engine(temps=(0.0,))
    rows = sweep_concentration(eng, ProtocolSpec.concentration(-3.0), [0.0, 25.0, 50.0, 75.0])
    assert [r.C_initial for r in rows] == [0.0, 25.0, 50.0, 75.0]
    assert [r.N_pairs for r in rows] == [4, 24, 24, 4]
    assert len(rows[0].csv().split(",")) == len(SWEEP_HEADER.split(","))
    with pytest.raises(ProtocolError):
        sweep_concentration(eng, ProtocolSpec.strength(-1.0, -3.0), [0.0])
    rows = sweep_potential(eng, -10.0, [-1.0, -3.0], [25.0, 50.0])
    assert [(r.V0, r.C_initial) for r in rows] == [(-1.0, 25.0), (-1.0, 50.0), (-3.0, 25.0), (-3.0, 50.0)]
    curve = entanglement_curve(eng, -20.0, [0.0, 50.0, 100.0])
    ent = dict(curve)
    assert ent[50.0] < ent[0.0] and ent[50.0] < ent[100.0]
    assert 0.0 <= eng.max_truncation_mass < 1e-12
