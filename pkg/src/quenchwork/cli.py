"""Command-line entry point.

Subcommands write figure-ready CSV into the configured output directory.
Every CSV starts with ``#`` comment lines holding the package version and
the fully resolved run configuration.  The exit status is 0 only when all
computations and inline checks succeed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from importlib.metadata import PackageNotFoundError, version
from math import comb
from typing import Iterable

import numpy as np

from .config import ConfigError, RunConfig, apply_overrides
from .ensemble import (SWEEP_HEADER, DiskCache, ProfileCache, ProtocolSpec, QuenchEngine,
                       entanglement_curve, impurity_count, n_protocol_pairs, overlap_histogram,
                       pairs_for, sample_pairs, sweep_concentration, sweep_potential)
from .fock import enumerate_sector
from .hamiltonian import LatticeSpec, build_hamiltonian
from .observables import occupation_weights, rdm_csv, site_rdm_table
from .spectra import diagonalize, thermal_weights
from .validation import run_all
from .workstats import tpm_distribution

log = logging.getLogger("quenchwork")

DEFAULT_CACHE = os.path.join(".cache", "quenchwork")


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def provenance(cfg: RunConfig, command: str, extra: dict | None = None) -> str:
    lines = [f"# quenchwork {package_version()} {command}"]
    blob = json.dumps(cfg.to_dict(), sort_keys=True)
    lines.append(f"# config {blob}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {json.dumps(v, sort_keys=True)}")
    return "\n".join(lines) + "\n"


def write_csv(path: str, header_block: str, body: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(header_block)
        fh.write(body)
    os.replace(tmp, path)
    log.info("wrote %s", path)


def make_engine(cfg: RunConfig) -> QuenchEngine:
    lat = cfg.lattice
    lattice = LatticeSpec(lat.L, lat.J, lat.U, lat.boundary)
    basis = enumerate_sector(lat.L, cfg.sector.n_up, cfg.sector.n_dn)
    disk = None
    if cfg.cache.enabled:
        directory = cfg.cache.directory or os.environ.get("QUENCHWORK_CACHE") or DEFAULT_CACHE
        disk = DiskCache(directory)
    cache = ProfileCache(cfg.cache.max_entries, disk=disk, enabled=cfg.cache.enabled)
    return QuenchEngine(lattice, basis, tuple(float(T) for T in cfg.temperatures), cache=cache,
                        cutoff=cfg.tolerances.cutoff, degeneracy_tol=cfg.tolerances.degeneracy_tol,
                        workers=cfg.worker_count(), use_symmetry=cfg.cache.symmetry)


def _row_problems(rows) -> list[str]:
    bad = []
    for r in rows:
        vals = (r.mean_W, r.var_W, r.mu3_W, r.delta3, r.lin_entropy_avg)
        if not all(np.isfinite(vals)):
            bad.append(f"non-finite values at V0={r.V0} C={r.C_initial} T={r.T}")
        if r.var_W < -1e-9 * max(1.0, r.mean_W ** 2):
            bad.append(f"negative variance {r.var_W} at V0={r.V0} C={r.C_initial} T={r.T}")
        if not -1e-12 <= r.lin_entropy_avg <= 0.75 + 1e-12:
            bad.append(f"linear entropy {r.lin_entropy_avg} outside [0, 3/4]")
        if r.N_pairs < 1:
            bad.append(f"no pairs at C={r.C_initial}")
    return bad


def _report(problems: Iterable[str]) -> int:
    problems = list(problems)
    for p in problems:
        log.error("check failed: %s", p)
    return 1 if problems else 0


def _sweep_meta(cfg: RunConfig, engine: QuenchEngine, spec: ProtocolSpec, C: list[float]) -> dict:
    """Sampling mode and truncation bookkeeping recorded in sweep headers."""
    L = engine.lattice.L
    sampling = {"mode": cfg.sampling.mode}
    if cfg.sampling.mode == "sampled":
        count = int(cfg.sampling.count)
        sampling.update(count=count, seed=int(cfg.sampling.seed),
                        exhaustive_C=[c for c in C
                                      if count >= n_protocol_pairs(spec, L, impurity_count(c, L))])
    return {"sampling": sampling, "max_truncation_mass": engine.max_truncation_mass}


def cmd_sweep_concentration(cfg: RunConfig) -> int:
    engine = make_engine(cfg)
    C = cfg.concentrations("A")
    rows = []
    for V in cfg.protocol.V_values:
        spec = ProtocolSpec.concentration(float(V), cfg.protocol.pairing)
        rows += sweep_concentration(engine, spec, C, cfg.sampling_arg())
    body = SWEEP_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows)
    # pair counts and overlaps depend on the pairing rule only, not on V
    spec = ProtocolSpec.concentration(-1.0, cfg.protocol.pairing)
    write_csv(os.path.join(cfg.output, "sweep_concentration.csv"),
              provenance(cfg, "sweep-concentration", _sweep_meta(cfg, engine, spec, C)), body)
    lines = ["C_initial,n_initial_only,count"]
    for c in C:
        pairs = pairs_for(spec, engine.lattice.L, impurity_count(c, engine.lattice.L),
                          cfg.sampling_arg())
        lines += [f"{c!r},{k},{n}" for k, n in overlap_histogram(pairs).items()]
    write_csv(os.path.join(cfg.output, "pair_overlaps.csv"),
              provenance(cfg, "sweep-concentration"), "\n".join(lines) + "\n")
    return _report(_row_problems(rows))


def cmd_sweep_potential(cfg: RunConfig) -> int:
    engine = make_engine(cfg)
    C = cfg.concentrations("B")
    rows = sweep_potential(engine, cfg.final_strength(), [float(v) for v in cfg.protocol.V0_values],
                           C, cfg.sampling_arg())
    body = SWEEP_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows)
    spec = ProtocolSpec.strength(0.0, cfg.final_strength() or -1.0)
    write_csv(os.path.join(cfg.output, "sweep_potential.csv"),
              provenance(cfg, "sweep-potential", _sweep_meta(cfg, engine, spec, C)), body)
    return _report(_row_problems(rows))


def _distribution_spec(cfg: RunConfig) -> ProtocolSpec:
    d = cfg.distribution
    if d.protocol == "A":
        return ProtocolSpec.concentration(d.V, cfg.protocol.pairing)
    return ProtocolSpec.strength(d.V0, d.Vf, allow_degenerate=d.zero_quench)


def cmd_distribution(cfg: RunConfig) -> int:
    """One seeded random pair per concentration, P(W) at every temperature."""
    engine = make_engine(cfg)
    lattice, basis = engine.lattice, engine.basis
    spec = _distribution_spec(cfg)
    problems = []
    for C in cfg.concentrations(spec.variant):
        n = impurity_count(C, lattice.L)
        # the pair depends on (seed, N_i) only, so it is the same at every T
        pairs, _ = sample_pairs(spec, lattice.L, n, 1, seed=cfg.distribution.pair_seed * 1000 + n)
        pair = pairs[0]
        if cfg.distribution.zero_quench:
            pair = type(pair).of(pair.initial, pair.initial)
        eig0 = diagonalize(build_hamiltonian(lattice, pair.initial, basis), basis=basis)
        eigf = diagonalize(build_hamiltonian(lattice, pair.final, basis), basis=basis)
        for T in engine.temperatures:
            w0 = thermal_weights(eig0, T, cfg.tolerances.cutoff, cfg.tolerances.degeneracy_tol)
            dist = tpm_distribution(eig0, eigf, w0, cfg.tolerances.merge_tol)
            norm = float(dist.p.sum()) + dist.truncation_mass
            if abs(norm - 1.0) > 1e-10:
                problems.append(f"P(W) mass {norm} at C={C} T={T}")
            meta = {"pair": {"initial": list(pair.initial.sites), "final": list(pair.final.sites),
                             "V_initial": pair.initial.V, "V_final": pair.final.V},
                    "T": T, "C_initial": C, "support_points": len(dist),
                    "truncation_mass": dist.truncation_mass}
            name = f"distribution_{spec.variant}_C{C:g}_T{T:g}.csv"
            write_csv(os.path.join(cfg.output, name), provenance(cfg, "distribution", meta),
                      dist.to_csv())
    return _report(problems)


def cmd_entanglement(cfg: RunConfig, rdm_sites: list[int] | None = None) -> int:
    engine = make_engine(cfg)
    L = engine.lattice.L
    C = cfg.concentrations("E")
    problems = []
    lines = ["V,T,C,lin_entropy_avg,N_configs"]
    for V in cfg.protocol.V_values:
        for T in engine.temperatures:
            for c, s in entanglement_curve(engine, float(V), C, T):
                if not 0 <= s <= 0.75 + 1e-12:
                    problems.append(f"linear entropy {s} outside [0, 3/4]")
                lines.append(f"{float(V)!r},{T!r},{c!r},{s:.17g},{comb(L, impurity_count(c, L))}")
    write_csv(os.path.join(cfg.output, "entanglement.csv"), provenance(cfg, "entanglement"),
              "\n".join(lines) + "\n")
    if rdm_sites is not None:
        V = float(cfg.protocol.V_values[0])
        pot = np.zeros(L)
        pot[list(rdm_sites)] = V
        H = build_hamiltonian(engine.lattice, pot, engine.basis)
        eig = diagonalize(H, basis=engine.basis)
        for T in engine.temperatures:
            w = occupation_weights(eig, thermal_weights(eig, T, cfg.tolerances.cutoff,
                                                        cfg.tolerances.degeneracy_tol))
            table = site_rdm_table(w, engine.basis)
            meta = {"sites": list(rdm_sites), "V": V, "T": T}
            name = "rdm_" + "-".join(map(str, rdm_sites)) + f"_T{T:g}.csv"
            write_csv(os.path.join(cfg.output, name), provenance(cfg, "entanglement", meta),
                      rdm_csv(table))
    return _report(problems)


def cmd_validate() -> int:
    results = run_all()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quenchwork", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--L", type=int)
        p.add_argument("--J", type=float)
        p.add_argument("--U", type=float)
        p.add_argument("--boundary", choices=["open", "periodic"])
        p.add_argument("--n-up", dest="n_up", type=int)
        p.add_argument("--n-dn", dest="n_dn", type=int)
        p.add_argument("--T", type=_floats, help="comma-separated temperatures")
        p.add_argument("--C", type=_floats, help="comma-separated concentrations in percent")
        p.add_argument("--cutoff", type=float)
        p.add_argument("--degeneracy-tol", dest="degeneracy_tol", type=float)
        p.add_argument("--merge-tol", dest="merge_tol", type=float)
        p.add_argument("--workers", type=int)
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--no-cache", dest="no_cache", action="store_true")
        p.add_argument("--no-symmetry", dest="no_symmetry", action="store_true",
                       help="diagonalise every impurity profile, even mirror or rotated copies")
        return p

    p = common(sub.add_parser("sweep-concentration", help="protocol A: add one impurity"))
    p.add_argument("--V", type=_floats, help="comma-separated impurity strengths")
    p.add_argument("--pairing", choices=["resample", "superset"])
    p.add_argument("--samples", type=int, help="random pairs per concentration")
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("sweep-potential", help="protocol B: deepen the impurities"))
    p.add_argument("--V0", type=_floats, help="comma-separated initial strengths")
    p.add_argument("--Vf", type=float, help="final strength (default 2U)")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("distribution", help="P(W) for one random pair per concentration"))
    p.add_argument("--protocol", choices=["A", "B"])
    p.add_argument("--V", dest="dist_V", type=float, help="protocol A strength")
    p.add_argument("--V0", dest="dist_V0", type=float, help="protocol B initial strength")
    p.add_argument("--Vf", dest="dist_Vf", type=float, help="protocol B final strength")
    p.add_argument("--pair-seed", dest="pair_seed", type=int)
    p.add_argument("--pairing", choices=["resample", "superset"])
    p.add_argument("--zero-quench", dest="zero_quench", action="store_true",
                   help="use the initial configuration as the final one")

    p = common(sub.add_parser("entanglement", help="average site linear entropy vs concentration"))
    p.add_argument("--V", type=_floats)
    p.add_argument("--rdm-sites", dest="rdm_sites", type=lambda s: [int(x) for x in s.split(",")],
                   help="also export the site RDMs for these impurity sites")

    sub.add_parser("validate", help="run the built-in invariant checks")
    return parser


def _apply_distribution_flags(cfg: RunConfig, args) -> None:
    d = cfg.distribution
    for name in ("V", "V0", "Vf"):
        value = getattr(args, "dist_" + name, None)
        if value is not None:
            setattr(d, name, value)


_NUMBER_LIST = re.compile(r"^-[\d.]+(e-?\d+)?(,-?[\d.]+(e-?\d+)?)*$")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--V -1,-3`` into ``--V=-1,-3``; argparse reads the list as an option otherwise."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NUMBER_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "validate":
        return cmd_validate()
    try:
        cfg = apply_overrides(RunConfig.load(args.config), args)
        _apply_distribution_flags(cfg, args)
        cfg.validate(args.command)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "sweep-concentration":
            return cmd_sweep_concentration(cfg)
        if args.command == "sweep-potential":
            return cmd_sweep_potential(cfg)
        if args.command == "distribution":
            return cmd_distribution(cfg)
        return cmd_entanglement(cfg, args.rdm_sites)
    except (ValueError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
