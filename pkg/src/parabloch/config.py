"""Run configuration: defaults, flat key=value config files, hashing.

All quantities are dimensionless: lengths in lattice periods, energies in
units of the parabola curvature times one period squared, times in the
inverse of that energy (hbar = 1).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

from .errors import ConfigError

DEFAULT_V0 = 90.0
# Midpoint of the reduced-mass window where every well in the working range
# holds exactly one symmetric/antisymmetric doublet (see calibrate_reduced_mass).
DEFAULT_REDUCED_MASS = 0.31858

DEFAULT_T_TOTAL = 40.0 * math.pi      # frequency resolution 2*pi/T = 0.05
DEFAULT_DT = 2.0 * math.pi / 512.0    # Nyquist ~256, far above the m=2 fold


@dataclass(frozen=True)
class LatticeConfig:
    """Physical and grid parameters of the lattice-plus-parabola model.

    v0 = 0 disables the lattice (pure harmonic trap), used by analytic-limit
    checks. Site index n counts lattice periods from the parabola axis.
    """

    v0: float = DEFAULT_V0
    reduced_mass: float = DEFAULT_REDUCED_MASS
    points_per_period: int = 64
    n_min: int = -39
    n_max: int = 39

    def validate(self) -> None:
        if self.v0 < 0:
            raise ConfigError(f"v0 must be >= 0, got {self.v0}")
        if self.reduced_mass <= 0:
            raise ConfigError(f"reduced_mass must be > 0, got {self.reduced_mass}")
        if self.points_per_period < 16:
            raise ConfigError(
                f"points_per_period must be >= 16, got {self.points_per_period}")
        if self.n_max < self.n_min:
            raise ConfigError(
                f"grid range empty: n_min={self.n_min} > n_max={self.n_max}")


@dataclass(frozen=True)
class PacketConfig:
    """Gaussian packet |c_n| ~ exp(-(n-n0)^2 / (2 (delta_n/2)^2)) with a
    linear phase ramp exp(i n phase_gradient), or an explicit coefficient list.
    """

    n0: int = 21
    delta_n: float = 7.0
    phase_gradient: float = math.pi / 4.0
    # Explicit coefficients override the Gaussian: tuple of (n, re, im).
    coefficients: tuple[tuple[int, float, float], ...] = ()

    def validate(self) -> None:
        if self.delta_n < 0:
            raise ConfigError(f"packet.delta_n must be >= 0, got {self.delta_n}")
        if self.coefficients:
            seen = set()
            for n, _, _ in self.coefficients:
                if n in seen:
                    raise ConfigError(f"packet.coefficients lists site {n} twice")
                seen.add(n)


@dataclass(frozen=True)
class EvolveConfig:
    t_total: float = DEFAULT_T_TOTAL
    dt: float = DEFAULT_DT
    propagator: str = "eigen"
    dt_int: float = 0.0   # 0 -> auto (half the split-step stability bound)

    def validate(self) -> None:
        if self.t_total <= 0 or self.dt <= 0:
            raise ConfigError("evolve.t_total and evolve.dt must be > 0")
        if self.propagator not in ("eigen", "splitstep"):
            raise ConfigError(
                f"evolve.propagator must be 'eigen' or 'splitstep', got "
                f"{self.propagator!r}")
        if self.dt_int < 0:
            raise ConfigError("evolve.dt_int must be >= 0 (0 = auto)")


@dataclass(frozen=True)
class ReconstructConfig:
    site_min: int = 0     # 0,0 -> derive the range from the packet envelope
    site_max: int = 0
    window: str = "hann"
    significance: float = 3.0
    refine_scale: bool = True

    def validate(self) -> None:
        if self.window not in ("hann", "rect"):
            raise ConfigError(
                f"reconstruct.window must be 'hann' or 'rect', got {self.window!r}")
        if self.significance <= 0:
            raise ConfigError("reconstruct.significance must be > 0")
        if (self.site_min, self.site_max) != (0, 0) and self.site_max < self.site_min:
            raise ConfigError("reconstruct.site_max < reconstruct.site_min")


@dataclass(frozen=True)
class RunConfig:
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    packet: PacketConfig = field(default_factory=PacketConfig)
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    reconstruct: ReconstructConfig = field(default_factory=ReconstructConfig)
    out_dir: str = "out"

    GUARD_SITES = 5

    def validate(self) -> None:
        self.lattice.validate()
        self.packet.validate()
        self.evolve.validate()
        self.reconstruct.validate()
        # The packet must fit with a guard margin of >= 5 sites on each side.
        lo, hi = self.packet_extent()
        if lo - self.GUARD_SITES < self.lattice.n_min:
            raise ConfigError(
                f"packet extent [{lo}, {hi}] needs a {self.GUARD_SITES}-site guard "
                f"below, but grid starts at n_min={self.lattice.n_min}")
        if hi + self.GUARD_SITES > self.lattice.n_max:
            raise ConfigError(
                f"packet extent [{lo}, {hi}] needs a {self.GUARD_SITES}-site guard "
                f"above, but grid ends at n_max={self.lattice.n_max}")
        # Retained fold frequencies must stay below Nyquist.
        dt_bound = math.pi / (2.0 * max(abs(self.lattice.n_max), 1))
        if self.evolve.dt >= dt_bound:
            raise ConfigError(
                f"evolve.dt={self.evolve.dt:.6g} too coarse: folds up to "
                f"2*n_max require dt < pi/(2*n_max) = {dt_bound:.6g}")

    def packet_extent(self) -> tuple[int, int]:
        """Sites where the nominal envelope exceeds 1e-3 of its peak (or the
        explicit coefficient support)."""
        p = self.packet
        if p.coefficients:
            sites = [n for n, _, _ in p.coefficients]
            return min(sites), max(sites)
        if p.delta_n == 0:
            return p.n0, p.n0
        # exp(-k^2/(2 (dn/2)^2)) > 1e-3  =>  |k| < (dn/2) sqrt(2 ln 1000)
        half = (p.delta_n / 2.0) * math.sqrt(2.0 * math.log(1e3))
        return p.n0 - int(half), p.n0 + int(half)

    def site_window(self) -> tuple[int, int]:
        """Site range handed to the coherence extraction."""
        r = self.reconstruct
        if (r.site_min, r.site_max) != (0, 0):
            return r.site_min, r.site_max
        return self.packet_extent()


# key -> (section attr, field name, type)
_SCHEMA = {
    "v0": ("lattice", "v0", float),
    "reduced_mass": ("lattice", "reduced_mass", float),
    "grid.points_per_period": ("lattice", "points_per_period", int),
    "grid.n_min": ("lattice", "n_min", int),
    "grid.n_max": ("lattice", "n_max", int),
    "packet.n0": ("packet", "n0", int),
    "packet.delta_n": ("packet", "delta_n", float),
    "packet.phase_gradient": ("packet", "phase_gradient", float),
    "packet.coefficients": ("packet", "coefficients", "coeff_list"),
    "evolve.t_total": ("evolve", "t_total", float),
    "evolve.dt": ("evolve", "dt", float),
    "evolve.propagator": ("evolve", "propagator", str),
    "evolve.dt_int": ("evolve", "dt_int", float),
    "reconstruct.site_min": ("reconstruct", "site_min", int),
    "reconstruct.site_max": ("reconstruct", "site_max", int),
    "reconstruct.window": ("reconstruct", "window", str),
    "reconstruct.significance": ("reconstruct", "significance", float),
    "reconstruct.refine_scale": ("reconstruct", "refine_scale", bool),
    "output.dir": (None, "out_dir", str),
}


def _coerce(key: str, raw: str, kind):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError("not a boolean")
        if kind == "coeff_list":
            entries = []
            for item in raw.split(","):
                item = item.strip()
                if not item:
                    continue
                parts = item.split(":")
                if len(parts) not in (2, 3):
                    raise ValueError(f"bad coefficient entry {item!r}, want n:re[:im]")
                n = int(parts[0])
                re = float(parts[1])
                im = float(parts[2]) if len(parts) == 3 else 0.0
                entries.append((n, re, im))
            return tuple(entries)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} ({exc})") from exc


def parse_config_text(text: str) -> RunConfig:
    """Parse a flat key=value config (one assignment per line, # comments)."""
    sections = {"lattice": {}, "packet": {}, "evolve": {}, "reconstruct": {}}
    top = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key = value, "
                              f"got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        section, name, kind = _SCHEMA[key]
        value = _coerce(key, raw, kind)
        if section is None:
            top[name] = value
        else:
            sections[section][name] = value
    cfg = RunConfig(
        lattice=LatticeConfig(**sections["lattice"]),
        packet=PacketConfig(**sections["packet"]),
        evolve=EvolveConfig(**sections["evolve"]),
        reconstruct=ReconstructConfig(**sections["reconstruct"]),
        **top,
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def _canonical_items(cfg: RunConfig) -> list[tuple[str, str]]:
    items = []
    for key, (section, name, _) in sorted(_SCHEMA.items()):
        obj = cfg if section is None else getattr(cfg, section)
        items.append((key, repr(getattr(obj, name))))
    return items


def config_hash(cfg: RunConfig) -> str:
    """Hash of the full effective configuration (defaults included)."""
    blob = "\n".join(f"{k}={v}" for k, v in _canonical_items(cfg))
    return hashlib.sha256(blob.encode()).hexdigest()


def lattice_hash(lattice: LatticeConfig) -> str:
    """Hash over the fields that determine the eigenbasis (cache key)."""
    blob = (f"v0={lattice.v0!r};m={lattice.reduced_mass!r};"
            f"ppp={lattice.points_per_period};"
            f"n_min={lattice.n_min};n_max={lattice.n_max}")
    return hashlib.sha256(blob.encode()).hexdigest()
