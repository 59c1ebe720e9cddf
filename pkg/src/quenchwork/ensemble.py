"""Impurity configurations, quench protocols and configuration averages.

Protocol A raises the impurity count by one at fixed strength V; protocol
B keeps the count and raises the strength from V0 to Vf.  Per-pair
statistics only depend on the initial Hamiltonian's eigensystem and the
site-potential change, so each distinct initial potential profile is
diagonalised once and reduced to a :class:`StateCorrelators` per
temperature; every pair is then a small tensor contraction.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Literal, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ._runtime import keep_heap_pages
from .fock import CapacityError, SectorBasis, enumerate_sector
from .hamiltonian import ImpurityConfig, LatticeSpec, PotentialDelta, build_hamiltonian, potential_delta
from .spectra import DEFAULT_CUTOFF, DEGENERACY_TOL, diagonalize, thermal_weights
from .workstats import PairMoments, StateCorrelators, summarize_state

log = logging.getLogger(__name__)

MAX_CONFIGS = 10**6
# bump when the content of StateCorrelators changes; invalidates disk caches
SUMMARY_VERSION = 2


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolSpec:
    """Quench protocol.

    ``variant="A"``: V fixed, N_i -> N_i + 1, ``pairing`` resample|superset.
    ``variant="B"``: N_i fixed, V0 -> Vf with |Vf| > |V0|.
    """

    variant: Literal["A", "B"]
    V: float = -5.0
    V0: float = -1.0
    Vf: float = -10.0
    pairing: Literal["resample", "superset"] = "resample"
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.variant not in ("A", "B"):
            raise ProtocolError(f"unknown protocol variant {self.variant!r}")
        if self.pairing not in ("resample", "superset"):
            raise ProtocolError(f"unknown pairing {self.pairing!r}")
        if self.variant == "B" and not abs(self.Vf) > abs(self.V0):
            if not (self.allow_degenerate and abs(self.Vf) == abs(self.V0)):
                raise ProtocolError(f"protocol B needs |Vf| > |V0|, got V0={self.V0}, Vf={self.Vf}")

    @classmethod
    def concentration(cls, V: float, pairing: str = "resample") -> "ProtocolSpec":
        return cls("A", V=V, V0=V, Vf=V, pairing=pairing)

    @classmethod
    def strength(cls, V0: float, Vf: float, allow_degenerate: bool = False) -> "ProtocolSpec":
        return cls("B", V=V0, V0=V0, Vf=Vf, allow_degenerate=allow_degenerate)

    @property
    def initial_V(self) -> float:
        return self.V if self.variant == "A" else self.V0

    @property
    def final_V(self) -> float:
        return self.V if self.variant == "A" else self.Vf


@dataclass(frozen=True, eq=False)
class QuenchPair:
    initial: ImpurityConfig
    final: ImpurityConfig
    delta: PotentialDelta

    @classmethod
    def of(cls, initial: ImpurityConfig, final: ImpurityConfig) -> "QuenchPair":
        return cls(initial, final, potential_delta(initial, final))

    @property
    def sort_key(self):
        return (self.initial.sites, self.final.sites)

    @property
    def n_initial_only(self) -> int:
        return len(set(self.initial.sites) - set(self.final.sites))


def enumerate_configs(L: int, n_impurities: int, V: float = 0.0,
                      limit: int = MAX_CONFIGS) -> list[ImpurityConfig]:
    """All C(L, N_i) impurity placements in lexicographic order."""
    if not 0 <= n_impurities <= L:
        raise ProtocolError(f"impurity count {n_impurities} invalid for L={L}")
    if comb(L, n_impurities) > limit:
        raise CapacityError(f"C({L},{n_impurities}) configurations exceed limit {limit}")
    return [ImpurityConfig(s, V, L) for s in combinations(range(L), n_impurities)]


def n_protocol_pairs(spec: ProtocolSpec, L: int, n_impurities: int) -> int:
    if spec.variant == "B":
        return comb(L, n_impurities) ** 2
    if spec.pairing == "superset":
        return comb(L, n_impurities) * (L - n_impurities)
    return comb(L, n_impurities) * comb(L, n_impurities + 1)


def protocol_pairs(spec: ProtocolSpec, L: int, n_impurities: int,
                   limit: int = MAX_CONFIGS) -> list[QuenchPair]:
    """Every pair of the protocol, ordered by (initial sites, final sites).

    ``n_impurities`` is the initial impurity count.
    """
    if spec.variant == "A" and n_impurities + 1 > L:
        raise ProtocolError("protocol A cannot add an impurity to a full chain")
    total = n_protocol_pairs(spec, L, n_impurities)
    if total > limit:
        raise CapacityError(f"{total} pairs exceed limit {limit}")
    inits = enumerate_configs(L, n_impurities, spec.initial_V)
    if spec.variant == "B":
        finals = enumerate_configs(L, n_impurities, spec.final_V)
        return [QuenchPair.of(a, b) for a in inits for b in finals]
    if spec.pairing == "superset":
        out = []
        for a in inits:
            for s in range(L):
                if s not in a.sites:
                    out.append(QuenchPair.of(a, ImpurityConfig(tuple(sorted(a.sites + (s,))), spec.V, L)))
        return out
    finals = enumerate_configs(L, n_impurities + 1, spec.final_V)
    return [QuenchPair.of(a, b) for a in inits for b in finals]


def sample_pairs(spec: ProtocolSpec, L: int, n_impurities: int, count: int,
                 seed: int) -> tuple[list[QuenchPair], bool]:
    """``count`` pairs drawn uniformly with a Philox (counter-based) stream.

    Returns ``(pairs, exhaustive)``; when ``count`` reaches the number of
    distinct pairs the full ordered list is returned and ``exhaustive`` is
    True.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if spec.variant == "A" and n_impurities + 1 > L:
        raise ProtocolError("protocol A cannot add an impurity to a full chain")
    if count >= n_protocol_pairs(spec, L, n_impurities):
        return protocol_pairs(spec, L, n_impurities), True
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_final = n_impurities if spec.variant == "B" else n_impurities + 1
    out = []
    for _ in range(count):
        a = tuple(sorted(int(x) for x in rng.permutation(L)[:n_impurities]))
        if spec.variant == "A" and spec.pairing == "superset":
            free = [s for s in range(L) if s not in a]
            b = tuple(sorted(a + (free[int(rng.integers(len(free)))],)))
        else:
            b = tuple(sorted(int(x) for x in rng.permutation(L)[:n_final]))
        out.append(QuenchPair.of(ImpurityConfig(a, spec.initial_V, L),
                                 ImpurityConfig(b, spec.final_V, L)))
    return out, False


# ---------------------------------------------------------------------------
# per-profile summaries and caching


def _profile_key(lattice: LatticeSpec, basis: SectorBasis, potential: np.ndarray,
                 cutoff: float, degeneracy_tol: float) -> tuple:
    return (lattice.L, lattice.J, lattice.U, lattice.boundary, basis.n_up, basis.n_dn,
            tuple(float(x) for x in potential), cutoff, degeneracy_tol)


def compute_profile(lattice: LatticeSpec, basis: SectorBasis, potential: np.ndarray,
                    temperatures: Sequence[float], cutoff: float = DEFAULT_CUTOFF,
                    degeneracy_tol: float = DEGENERACY_TOL) -> dict[float, StateCorrelators]:
    """Diagonalise H(potential) once and reduce it at every temperature."""
    H = build_hamiltonian(lattice, np.asarray(potential, dtype=float), basis)
    eig = diagonalize(H, basis=basis)
    out = {}
    for T in temperatures:
        w = thermal_weights(eig, T, cutoff=cutoff, degeneracy_tol=degeneracy_tol)
        out[float(T)] = summarize_state(eig, w, basis, H)
    return out


def _worker(args):
    lattice, basis_key, potential, temps, cutoff, dtol, blas_threads = args
    keep_heap_pages()
    with threadpool_limits(blas_threads):
        basis = enumerate_sector(*basis_key)
        res = compute_profile(lattice, basis, np.asarray(potential), temps, cutoff, dtol)
    return {T: s.to_arrays() for T, s in res.items()}


class DiskCache:
    """One ``.npz`` per potential profile; atomic rename makes the first writer win."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = os.fspath(directory)
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, key: tuple) -> str:
        blob = json.dumps([SUMMARY_VERSION, list(key)], default=str).encode()
        return os.path.join(self.directory, hashlib.sha256(blob).hexdigest()[:32] + ".npz")

    def load(self, key: tuple) -> dict[float, StateCorrelators]:
        path = self._path(key)
        if not os.path.exists(path):
            return {}
        out: dict[float, dict] = {}
        with np.load(path) as data:
            for name in data.files:
                t, f = name.split("__", 1)
                out.setdefault(float(t[1:]), {})[f] = data[name]
        return {T: StateCorrelators.from_arrays(d) for T, d in out.items()}

    def store(self, key: tuple, summaries: dict[float, StateCorrelators]) -> None:
        merged = self.load(key)
        merged.update(summaries)
        arrays = {f"T{T!r}__{k}": v for T, s in merged.items() for k, v in s.to_arrays().items()}
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp.npz")
        os.close(fd)
        np.savez(tmp, **arrays)
        os.replace(tmp, self._path(key))


class ProfileCache:
    """LRU cache of per-profile summaries, optionally backed by a :class:`DiskCache`."""

    def __init__(self, max_entries: int = 4096, disk: DiskCache | str | None = None,
                 enabled: bool = True):
        self.max_entries = max_entries
        self.enabled = enabled
        self.disk = DiskCache(disk) if isinstance(disk, (str, os.PathLike)) else disk
        self._data: OrderedDict[tuple, dict[float, StateCorrelators]] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: tuple, temperatures: Sequence[float]) -> dict[float, StateCorrelators] | None:
        if not self.enabled:
            return None
        with self._lock:
            entry = self._data.get(key)
            if entry is not None:
                self._data.move_to_end(key)
        if (entry is None or not all(float(T) in entry for T in temperatures)) and self.disk is not None:
            found = self.disk.load(key)
            if found:
                entry = {**(entry or {}), **found}
                self._put(key, entry, persist=False)
        if entry is not None and all(float(T) in entry for T in temperatures):
            self.hits += 1
            return entry
        self.misses += 1
        return None

    def put(self, key: tuple, summaries: dict[float, StateCorrelators]) -> dict[float, StateCorrelators]:
        if not self.enabled:
            return summaries
        return self._put(key, summaries, persist=True)

    def _put(self, key, summaries, persist):
        with self._lock:
            entry = self._data.setdefault(key, {})
            for T, s in summaries.items():
                entry.setdefault(T, s)
            self._data.move_to_end(key)
            while len(self._data) > self.max_entries:
                self._data.popitem(last=False)
        if persist and self.disk is not None:
            self.disk.store(key, entry)
        return entry

    def __len__(self):
        return len(self._data)


@dataclass
class QuenchEngine:
    """Computes per-profile summaries for one lattice and sector."""

    lattice: LatticeSpec
    basis: SectorBasis
    temperatures: tuple[float, ...] = (0.0,)
    cache: ProfileCache = field(default_factory=ProfileCache)
    cutoff: float = DEFAULT_CUTOFF
    degeneracy_tol: float = DEGENERACY_TOL
    workers: int = 1
    blas_threads: int = 1
    # reuse one diagonalisation for symmetry-related profiles
    use_symmetry: bool = True

    def __post_init__(self):
        if self.basis.L != self.lattice.L:
            raise ValueError("basis and lattice disagree on L")
        self.temperatures = tuple(float(T) for T in self.temperatures)
        # largest thermal mass dropped by the cutoff among profiles served so far
        self.max_truncation_mass = 0.0

    def key(self, potential: np.ndarray) -> tuple:
        return _profile_key(self.lattice, self.basis, potential, self.cutoff, self.degeneracy_tol)

    def _symmetry_maps(self) -> list[np.ndarray]:
        L = self.lattice.L
        j = np.arange(L)
        maps = [j, j[::-1].copy()]
        if self.lattice.boundary == "periodic":
            maps = [(s + sgn * j) % L for s in range(L) for sgn in (1, -1)]
        return maps

    def canonical(self, potential: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        """Representative of ``potential`` under the lattice symmetries.

        Returns ``(v_c, perm)`` with ``potential[j] == v_c[perm[j]]``;
        ``perm`` is None when ``potential`` is its own representative.
        Open chains use reflection j -> L-1-j, periodic chains the full
        set of rotations and reflections.  Related profiles share spectra
        and have site-relabelled summaries.
        """
        v = np.asarray(potential, dtype=float)
        if not self.use_symmetry:
            return v, None
        best, best_map = tuple(v), None
        for g in self._symmetry_maps():
            cand = tuple(v[g])
            if cand < best:
                best, best_map = cand, g
        if best_map is None:
            return v, None
        return np.array(best), np.argsort(best_map)

    def _compute_many(self, potentials: list[np.ndarray]) -> list[dict[float, StateCorrelators]]:
        args = [(self.lattice, self.basis.key(), tuple(map(float, v)), self.temperatures,
                 self.cutoff, self.degeneracy_tol, self.blas_threads) for v in potentials]
        if self.workers <= 1 or len(args) <= 1:
            raw = [_worker(a) for a in args]
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                raw = list(pool.map(_worker, args))
        return [{T: StateCorrelators.from_arrays(d) for T, d in r.items()} for r in raw]

    def prefetch(self, potentials: Sequence[np.ndarray], progress=None) -> None:
        """Compute (in parallel) every profile not already cached."""
        if not self.cache.enabled:
            return
        todo, seen = [], set()
        for v in potentials:
            v, _ = self.canonical(v)
            k = self.key(v)
            if k in seen or self.cache.get(k, self.temperatures) is not None:
                continue
            seen.add(k)
            todo.append(v)
        step = max(1, self.workers)
        for s in range(0, len(todo), step):
            batch = todo[s:s + step]
            for v, res in zip(batch, self._compute_many(batch)):
                self.cache.put(self.key(v), res)
            if progress is not None:
                progress(min(s + step, len(todo)), len(todo))

    def summaries(self, potential: np.ndarray) -> dict[float, StateCorrelators]:
        v, perm = self.canonical(potential)
        k = self.key(v)
        found = self.cache.get(k, self.temperatures)
        if found is None:
            (res,) = self._compute_many([v])
            found = self.cache.put(k, res)
        for st in found.values():
            self.max_truncation_mass = max(self.max_truncation_mass, float(st.truncation_mass))
        if perm is None:
            return found
        return {T: s.permuted(perm) for T, s in found.items()}


# ---------------------------------------------------------------------------
# ensemble statistics


@dataclass
class EnsembleStats:
    N_c: int
    mean_W: float
    var_W: float
    mu3_W: float
    delta3: float
    mu3_correlator: float
    lin_entropy: float
    records: list[PairMoments] | None = None


def average_pairs(engine: QuenchEngine, pairs: Sequence[QuenchPair],
                  keep_records: bool = False) -> dict[float, EnsembleStats]:
    """Arithmetic means over ``pairs`` at every engine temperature.

    Pairs are reduced in lexicographic (initial, final) order whatever
    order they arrive in.
    """
    pairs = sorted(pairs, key=lambda p: p.sort_key)
    engine.prefetch([p.initial.potential() for p in pairs])
    acc = {T: np.zeros(6) for T in engine.temperatures}
    recs: dict[float, list] = {T: [] for T in engine.temperatures}
    for pair in pairs:
        summ = engine.summaries(pair.initial.potential())
        for T in engine.temperatures:
            s = summ[T]
            m = s.pair_moments(pair.delta.delta_v)
            acc[T] += (m.mean, m.variance, m.mu3, m.delta3, m.mu3_correlator, s.linear_entropy)
            if keep_records:
                recs[T].append(m)
    n = len(pairs)
    out = {}
    for T, a in acc.items():
        a = a / n if n else a
        out[T] = EnsembleStats(n, *map(float, a), records=recs[T] if keep_records else None)
    return out


SWEEP_HEADER = ("protocol,L,n_up,n_dn,U,V0,Vf,T,C_initial,N_pairs,"
                "mean_W,var_W,mu3_W,delta3,lin_entropy_avg")


@dataclass(frozen=True)
class SweepRow:
    protocol: str
    L: int
    n_up: int
    n_dn: int
    U: float
    V0: float
    Vf: float
    T: float
    C_initial: float
    N_pairs: int
    mean_W: float
    var_W: float
    mu3_W: float
    delta3: float
    lin_entropy_avg: float

    def csv(self) -> str:
        vals = [self.protocol, self.L, self.n_up, self.n_dn, self.U, self.V0, self.Vf, self.T,
                self.C_initial, self.N_pairs, self.mean_W, self.var_W, self.mu3_W, self.delta3,
                self.lin_entropy_avg]
        return ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in vals)


def impurity_count(C: float, L: int) -> int:
    n = C * L / 100.0
    if abs(n - round(n)) > 1e-9:
        raise ProtocolError(f"concentration {C}% gives a non-integer impurity count on L={L}")
    return int(round(n))


def pairs_for(spec: ProtocolSpec, L: int, n_imp: int, sampling: tuple[int, int] | None):
    if sampling is None:
        return protocol_pairs(spec, L, n_imp)
    count, seed = sampling
    return sample_pairs(spec, L, n_imp, count, seed)[0]


def sweep_concentration(engine: QuenchEngine, spec: ProtocolSpec, C_values: Sequence[float],
                        sampling: tuple[int, int] | None = None) -> list[SweepRow]:
    """Protocol A: C_i -> C_{i+1} (one extra impurity) for each initial C."""
    if spec.variant != "A":
        raise ProtocolError("sweep_concentration needs a protocol-A spec")
    L = engine.lattice.L
    counts = [impurity_count(C, L) for C in C_values]
    everything = {n: pairs_for(spec, L, n, sampling) for n in counts}
    engine.prefetch([p.initial.potential() for n in counts for p in everything[n]])
    rows = []
    for C, n in zip(C_values, counts):
        stats = average_pairs(engine, everything[n])
        for T in engine.temperatures:
            s = stats[T]
            rows.append(SweepRow("A", L, engine.basis.n_up, engine.basis.n_dn, engine.lattice.U,
                                 spec.V, spec.V, T, float(C), s.N_c, s.mean_W, s.var_W, s.mu3_W,
                                 s.delta3, s.lin_entropy))
    return rows


def sweep_potential(engine: QuenchEngine, Vf: float, V0_values: Sequence[float],
                    C_values: Sequence[float], sampling: tuple[int, int] | None = None,
                    allow_degenerate: bool = False) -> list[SweepRow]:
    """Protocol B over a (V0, C) grid with a common final strength ``Vf``."""
    L = engine.lattice.L
    specs = [ProtocolSpec.strength(V0, Vf, allow_degenerate=allow_degenerate) for V0 in V0_values]
    counts = [impurity_count(C, L) for C in C_values]
    grid = {(i, n): pairs_for(s, L, n, sampling) for i, s in enumerate(specs) for n in counts}
    engine.prefetch([p.initial.potential() for ps in grid.values() for p in ps])
    rows = []
    for i, spec in enumerate(specs):
        for C, n in zip(C_values, counts):
            stats = average_pairs(engine, grid[i, n])
            for T in engine.temperatures:
                s = stats[T]
                rows.append(SweepRow("B", L, engine.basis.n_up, engine.basis.n_dn,
                                     engine.lattice.U, spec.V0, spec.Vf, T, float(C), s.N_c,
                                     s.mean_W, s.var_W, s.mu3_W, s.delta3, s.lin_entropy))
    return rows


def entanglement_curve(engine: QuenchEngine, V: float, C_values: Sequence[float],
                       T: float = 0.0) -> list[tuple[float, float]]:
    """Configuration-averaged site linear entropy versus concentration."""
    L = engine.lattice.L
    out = []
    confs_by_C = {C: enumerate_configs(L, impurity_count(C, L), V) for C in C_values}
    engine.prefetch([c.potential() for cs in confs_by_C.values() for c in cs])
    for C, confs in confs_by_C.items():
        vals = [engine.summaries(c.potential())[float(T)].linear_entropy for c in confs]
        out.append((float(C), float(np.mean(vals))))
    return out


def overlap_histogram(pairs: Sequence[QuenchPair]) -> dict[int, int]:
    """How many pairs have k initial-only impurity sites."""
    hist: dict[int, int] = {}
    for p in pairs:
        hist[p.n_initial_only] = hist.get(p.n_initial_only, 0) + 1
    return dict(sorted(hist.items()))
