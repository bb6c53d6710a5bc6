"""File artifacts: deterministic CSV/JSON emission, checksums, the run
manifest, and the eigenbasis cache keyed on the lattice fields.

CSV and JSON bytes are reproducible for identical configurations: floats are
written with shortest round-trip repr, JSON keys are sorted, and no
timestamps enter the data files (the manifest's stage timings are the one
intentionally non-reproducible record).
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__ as package_version
from .config import LatticeConfig, RunConfig, config_hash, lattice_hash
from .eigensolver import Classification, EigenSpectrum, SiteBasis, \
    build_site_basis, parity_overlap
from .errors import ConfigError
from .lattice import build_grid


def format_value(value) -> str:
    """Shortest round-trip text for one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True)
                    + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Record of one CLI invocation: config hash, stage timings, artifact
    checksums, library versions."""

    config_hash: str
    stage_timings: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)   # file -> sha256

    def add(self, path: Path, out_dir: Path) -> None:
        self.artifacts[str(path.relative_to(out_dir))] = sha256_file(path)

    def write(self, out_dir: Path) -> Path:
        payload = {
            "config_hash": self.config_hash,
            "stage_timings": {k: round(v, 6) for k, v in
                              self.stage_timings.items()},
            "artifacts": self.artifacts,
            "versions": {
                "parabloch": package_version,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "rng": "none",
        }
        path = out_dir / "manifest.json"
        write_json(path, payload)
        return path


# ---------------------------------------------------------------- basis cache

CACHE_VERSION = 1


def basis_cache_path(out_dir: Path, lattice: LatticeConfig) -> Path:
    return out_dir / "cache" / f"basis-{lattice_hash(lattice)[:16]}.npz"


def save_basis_cache(path: Path, lattice: LatticeConfig, basis: SiteBasis,
                     spectrum: EigenSpectrum,
                     classification: Classification) -> None:
    """Persist the site basis plus the per-state spectrum summary (energies,
    labels, parities) so spectrum artifacts can be re-emitted without a
    solve. Eigenvectors of non-site states are not retained."""
    path.parent.mkdir(parents=True, exist_ok=True)
    parities = np.array([parity_overlap(spectrum.grid, spectrum.states[:, k])
                         for k in range(spectrum.n_states)])
    np.savez(
        path,
        cache_version=np.array(CACHE_VERSION),
        v0=np.array(lattice.v0),
        reduced_mass=np.array(lattice.reduced_mass),
        points_per_period=np.array(lattice.points_per_period),
        n_min=np.array(lattice.n_min),
        n_max=np.array(lattice.n_max),
        sites=basis.sites,
        states=basis.states,
        site_energies=basis.site_energies,
        energy_offset=np.array(basis.energy_offset),
        delta_s=basis.delta_s,
        delta_a=basis.delta_a,
        doublet_sites=basis.doublet_sites,
        x_diag=basis.x_diag,
        f0=basis.f0,
        energies=spectrum.energies,
        localized=classification.localized,
        wells=classification.wells,
        sigma_folded=classification.sigma_folded,
        window_mass=classification.window_mass,
        parities=parities,
        epsilon_L=np.array(np.nan if classification.epsilon_L is None
                           else classification.epsilon_L),
        oscillator_onset=np.array(np.nan if classification.oscillator_onset
                                  is None else classification.oscillator_onset),
    )


def load_basis_cache(path: Path, lattice: LatticeConfig
                     ) -> tuple[SiteBasis, dict]:
    """Load the cached basis; the caller guarantees the hash-keyed path."""
    data = np.load(path)
    if int(data["cache_version"]) != CACHE_VERSION:
        raise ConfigError(f"stale cache version in {path}")
    grid = build_grid(lattice)
    basis = SiteBasis(
        grid=grid,
        sites=data["sites"],
        states=data["states"],
        site_energies=data["site_energies"],
        energy_offset=float(data["energy_offset"]),
        delta_s=data["delta_s"],
        delta_a=data["delta_a"],
        doublet_sites=data["doublet_sites"],
        x_diag=data["x_diag"],
        f0=data["f0"],
    )
    eps = float(data["epsilon_L"])
    onset = float(data["oscillator_onset"])
    summary = {
        "energies": data["energies"],
        "localized": data["localized"],
        "wells": data["wells"],
        "sigma_folded": data["sigma_folded"],
        "window_mass": data["window_mass"],
        "parities": data["parities"],
        "epsilon_L": None if np.isnan(eps) else eps,
        "oscillator_onset": None if np.isnan(onset) else onset,
    }
    return basis, summary


def load_or_build_basis(config: RunConfig, out_dir: Path,
                        use_cache: bool = True) -> tuple[SiteBasis, dict]:
    """Reuse the cached eigenbasis when the lattice fields match, else solve
    and populate the cache."""
    cache = basis_cache_path(out_dir, config.lattice)
    if use_cache and cache.is_file():
        try:
            return load_basis_cache(cache, config.lattice)
        except (ConfigError, KeyError, OSError, ValueError):
            cache.unlink(missing_ok=True)
    basis, spectrum, classification = build_site_basis(config.lattice)
    parities = np.array([parity_overlap(spectrum.grid, spectrum.states[:, k])
                         for k in range(spectrum.n_states)])
    if use_cache:
        save_basis_cache(cache, config.lattice, basis, spectrum, classification)
    summary = {
        "energies": spectrum.energies,
        "localized": classification.localized,
        "wells": classification.wells,
        "sigma_folded": classification.sigma_folded,
        "window_mass": classification.window_mass,
        "parities": parities,
        "epsilon_L": classification.epsilon_L,
        "oscillator_onset": classification.oscillator_onset,
    }
    return basis, summary


# ---------------------------------------------------------------- signal io

def signal_key(config: RunConfig) -> str:
    """Hash over the fields that determine the recorded signal."""
    p, e = config.packet, config.evolve
    blob = (f"{lattice_hash(config.lattice)};{p.n0};{p.delta_n!r};"
            f"{p.phase_gradient!r};{p.coefficients!r};{e.t_total!r};{e.dt!r};"
            f"{e.propagator};{e.dt_int!r}")
    return hashlib.sha256(blob.encode()).hexdigest()


def write_signal(out_dir: Path, config: RunConfig, times, p0, q0,
                 reference: float, extras: dict | None = None
                 ) -> tuple[Path, Path]:
    csv_path = out_dir / "signal.csv"
    write_csv(csv_path, ["t", "P0", "Q0"], zip(times, p0, q0))
    meta = {
        "dt": config.evolve.dt,
        "t_total": config.evolve.t_total,
        "n_samples": len(times),
        "n0": config.packet.n0,
        "delta_n": config.packet.delta_n,
        "phase_gradient": config.packet.phase_gradient,
        "propagator": config.evolve.propagator,
        "reference_density": reference,
        "signal_key": signal_key(config),
        "probe_momentum": 0.0,
    }
    if extras:
        meta.update(extras)
    json_path = out_dir / "signal.json"
    write_json(json_path, meta)
    return csv_path, json_path


def read_signal(out_dir: Path, config: RunConfig):
    """Load a cached signal if it matches the current configuration."""
    csv_path = out_dir / "signal.csv"
    json_path = out_dir / "signal.json"
    if not (csv_path.is_file() and json_path.is_file()):
        return None
    meta = json.loads(json_path.read_text())
    if meta.get("signal_key") != signal_key(config):
        return None
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    return {"times": table[:, 0], "p0": table[:, 1], "q0": table[:, 2],
            "meta": meta}
