"""Run configuration: JSON file + command-line overrides, validated up front."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any

from .ensemble import ProtocolError, impurity_count
from .spectra import DEFAULT_CUTOFF, DEGENERACY_TOL
from .workstats import DEFAULT_MERGE_TOL


class ConfigError(ValueError):
    pass


def _default_C(L: int, lo: int, hi: int) -> list[float]:
    return [100.0 * n / L for n in range(lo, hi + 1)]


@dataclass
class LatticeSection:
    L: int = 8
    J: float = 1.0
    U: float = -5.0
    boundary: str = "open"


@dataclass
class SectorSection:
    n_up: int = 4
    n_dn: int = 4


@dataclass
class ProtocolSection:
    # protocol A strengths, protocol B initial strengths, protocol B final strength
    V_values: list[float] = field(default_factory=lambda: [-1.0, -3.0, -5.0, -8.0, -10.0])
    V0_values: list[float] = field(default_factory=lambda: [-0.5, -1.0, -3.0, -5.0, -7.0])
    Vf: float | None = None
    pairing: str = "resample"


@dataclass
class GridSection:
    C_values: list[float] | None = None


@dataclass
class SamplingSection:
    mode: str = "exhaustive"
    count: int = 100
    seed: int = 0


@dataclass
class ToleranceSection:
    merge_tol: float = DEFAULT_MERGE_TOL
    cutoff: float = DEFAULT_CUTOFF
    degeneracy_tol: float = DEGENERACY_TOL


@dataclass
class CacheSection:
    enabled: bool = True
    directory: str | None = None
    max_entries: int = 4096
    # serve reflected/rotated impurity profiles from one diagonalisation
    symmetry: bool = True


@dataclass
class DistributionSection:
    protocol: str = "A"
    V: float = -5.0
    V0: float = -1.0
    Vf: float = -10.0
    pair_seed: int = 0
    zero_quench: bool = False


@dataclass
class RunConfig:
    lattice: LatticeSection = field(default_factory=LatticeSection)
    sector: SectorSection = field(default_factory=SectorSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    temperatures: list[float] = field(default_factory=lambda: [0.0, 2.0, 30.0])
    grids: GridSection = field(default_factory=GridSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    tolerances: ToleranceSection = field(default_factory=ToleranceSection)
    cache: CacheSection = field(default_factory=CacheSection)
    distribution: DistributionSection = field(default_factory=DistributionSection)
    output: str = "out"
    workers: int | None = None

    _sections = {
        "lattice": LatticeSection, "sector": SectorSection, "protocol": ProtocolSection,
        "grids": GridSection, "sampling": SamplingSection, "tolerances": ToleranceSection,
        "cache": CacheSection, "distribution": DistributionSection,
    }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        cfg = cls()
        for key, value in data.items():
            if key in cls._sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                section = getattr(cfg, key)
                for k, v in value.items():
                    if not hasattr(section, k):
                        raise ConfigError(f"unknown key {key}.{k}")
                    setattr(section, k, v)
            elif key in ("temperatures", "output", "workers"):
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cfg

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)

    # resolved values -------------------------------------------------------

    def final_strength(self) -> float:
        """Protocol-B final strength, defaulting to 2U."""
        return self.protocol.Vf if self.protocol.Vf is not None else 2.0 * self.lattice.U

    def concentrations(self, variant: str) -> list[float]:
        if self.grids.C_values is not None:
            return [float(c) for c in self.grids.C_values]
        L = self.lattice.L
        # A adds an impurity (initial N_i up to L-1), B needs at least one
        # impurity, and the entanglement curve spans the whole range
        lo, hi = {"A": (0, L - 1), "B": (1, L - 1), "E": (0, L)}[variant]
        return _default_C(L, lo, hi)

    def worker_count(self) -> int:
        env = os.environ.get("WORKERS")
        if env:
            try:
                n = int(env)
            except ValueError as exc:
                raise ConfigError(f"WORKERS={env!r} is not an integer") from exc
        elif self.workers is not None:
            n = int(self.workers)
        else:
            n = os.cpu_count() or 1
        if n < 1:
            raise ConfigError("worker count must be at least 1")
        return n

    def sampling_arg(self) -> tuple[int, int] | None:
        if self.sampling.mode == "exhaustive":
            return None
        return (int(self.sampling.count), int(self.sampling.seed))

    def validate(self, command: str) -> None:
        lat = self.lattice
        if not isinstance(lat.L, int) or lat.L < 1:
            raise ConfigError("lattice.L must be a positive integer")
        if not lat.J > 0:
            raise ConfigError("lattice.J must be positive")
        if lat.boundary not in ("open", "periodic"):
            raise ConfigError(f"lattice.boundary must be open or periodic, got {lat.boundary!r}")
        for name in ("n_up", "n_dn"):
            n = getattr(self.sector, name)
            if not isinstance(n, int) or not 0 <= n <= lat.L:
                raise ConfigError(f"sector.{name}={n!r} invalid for L={lat.L}")
        if not self.temperatures or any(float(T) < 0 for T in self.temperatures):
            raise ConfigError("temperatures must be a non-empty list of non-negative values")
        if self.protocol.pairing not in ("resample", "superset"):
            raise ConfigError(f"protocol.pairing must be resample or superset")
        if self.sampling.mode not in ("exhaustive", "sampled"):
            raise ConfigError("sampling.mode must be exhaustive or sampled")
        if self.sampling.mode == "sampled" and int(self.sampling.count) < 1:
            raise ConfigError("sampling.count must be at least 1")
        tol = self.tolerances
        if not 0 <= tol.cutoff <= 1e-6:
            raise ConfigError("tolerances.cutoff must lie in [0, 1e-6]")
        if tol.merge_tol < 0 or tol.degeneracy_tol < 0:
            raise ConfigError("tolerances must be non-negative")
        self.worker_count()

        variant = {"sweep-concentration": "A", "sweep-potential": "B"}.get(command)
        if command == "distribution":
            variant = self.distribution.protocol
            if variant not in ("A", "B"):
                raise ConfigError("distribution.protocol must be A or B")
        if command == "entanglement":
            variant = "E"
        if variant is not None:
            for C in self.concentrations(variant):
                try:
                    n = impurity_count(C, lat.L)
                except ProtocolError as exc:
                    raise ConfigError(f"concentration C={C}: {exc}") from exc
                top = lat.L - 1 if variant == "A" else lat.L
                if not 0 <= n <= top:
                    raise ConfigError(f"concentration C={C} gives {n} impurities, outside 0..{top}")
        if command == "sweep-potential":
            Vf = self.final_strength()
            bad = [V0 for V0 in self.protocol.V0_values if not abs(V0) < abs(Vf)]
            if bad:
                raise ConfigError(f"protocol B needs |V0| < |Vf|={abs(Vf)}; offending V0: {bad}")
        if command == "distribution" and self.distribution.protocol == "B" and not self.distribution.zero_quench:
            if not abs(self.distribution.V0) < abs(self.distribution.Vf):
                raise ConfigError("distribution: protocol B needs |V0| < |Vf|")


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Copy ``cfg`` with any non-None command-line values applied."""
    cfg = cfg.copy()
    mapping = {
        "L": ("lattice", "L"), "J": ("lattice", "J"), "U": ("lattice", "U"),
        "boundary": ("lattice", "boundary"), "n_up": ("sector", "n_up"), "n_dn": ("sector", "n_dn"),
        "V": ("protocol", "V_values"), "V0": ("protocol", "V0_values"), "Vf": ("protocol", "Vf"),
        "pairing": ("protocol", "pairing"), "C": ("grids", "C_values"),
        "merge_tol": ("tolerances", "merge_tol"), "cutoff": ("tolerances", "cutoff"),
        "degeneracy_tol": ("tolerances", "degeneracy_tol"),
        "cache_dir": ("cache", "directory"), "pair_seed": ("distribution", "pair_seed"),
        "protocol": ("distribution", "protocol"),
    }
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    if getattr(args, "T", None) is not None:
        cfg.temperatures = args.T
    if getattr(args, "out", None) is not None:
        cfg.output = args.out
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "no_cache", False):
        cfg.cache.enabled = False
    if getattr(args, "no_symmetry", False):
        cfg.cache.symmetry = False
    if getattr(args, "samples", None) is not None:
        cfg.sampling.mode = "sampled"
        cfg.sampling.count = args.samples
    if getattr(args, "seed", None) is not None:
        cfg.sampling.seed = args.seed
    if getattr(args, "zero_quench", False):
        cfg.distribution.zero_quench = True
    return cfg
