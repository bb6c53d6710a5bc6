"""Command line harness.

Four subcommands share one config file and one output directory:

  spectrum     solve the lattice, emit spectrum.csv (+ states, calibration)
  evolve       record the zero-momentum signal, emit signal.csv/.json
  reconstruct  coherences.csv + reconstruction.csv from the signal
  validate     invariant suite, emit validation.csv

Exit codes: 0 success, 2 configuration error, 3 physics-regime error,
4 invariant failure. Data artifacts are byte-stable across reruns of the
same configuration; manifest.json carries the non-reproducible timings.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import (RunManifest, basis_cache_path, load_or_build_basis,
                        read_signal, write_csv, write_json, write_signal)
from .config import RunConfig, config_hash, load_config
from .dynamics import (Signal, mean_position_model, packet_from_list,
                       record_mean_position, record_q_signal,
                       synthesize_packet)
from .eigensolver import calibrate_reduced_mass
from .errors import ConfigError, InvariantError, RegimeError, exit_code_for
from .reconstruction import (assemble_and_score, extract_coherences,
                             fold_resolution_check, recover_amplitudes,
                             reconstruct_phases)
from .validation import run_validation


def _say(stage: str, message: str) -> None:
    print(f"[{stage}] {message}")


def _packet(config: RunConfig, basis):
    p = config.packet
    if p.coefficients:
        return packet_from_list(basis, p.coefficients)
    return synthesize_packet(basis, p.n0, p.delta_n, p.phase_gradient)


def _packet_hints(config: RunConfig) -> tuple[float, float]:
    """(n0, delta_n) the fold check and scale refinement work against."""
    p = config.packet
    if p.coefficients:
        lo, hi = config.packet_extent()
        return 0.5 * (lo + hi), float(hi - lo) / 2.0
    return float(p.n0), float(p.delta_n)


def _require_fold_resolution(config: RunConfig) -> None:
    n0, dn = _packet_hints(config)
    fc = fold_resolution_check(n0, dn)
    if not fc.resolved:
        raise RegimeError(
            f"fold overlap for packet (n0={n0:g}, delta_n={dn:g}): first-fold "
            f"edge {fc.m1_edge:g} must sit strictly below second-fold edge "
            f"{fc.m2_edge:g} (gap {fc.gap:g}); shrink delta_n or raise n0")


def _basis_stage(config: RunConfig, out: Path, stage: str,
                 manifest: RunManifest):
    cached = basis_cache_path(out, config.lattice).is_file()
    t0 = time.perf_counter()
    basis, summary = load_or_build_basis(config, out)
    manifest.stage_timings["basis"] = time.perf_counter() - t0
    _say(stage, f"eigenbasis {'from cache' if cached else 'solved'}: "
                f"{len(summary['energies'])} states, "
                f"{len(basis.sites)} site states on "
                f"{basis.grid.n_points} points")
    return basis, summary


# ----------------------------------------------------------------- commands

def cmd_spectrum(config: RunConfig, out: Path, states: bool = False,
                 calibrate: bool = False) -> int:
    manifest = RunManifest(config_hash=config_hash(config))
    basis, summary = _basis_stage(config, out, "spectrum", manifest)

    energies = summary["energies"]
    localized = summary["localized"]
    wells = summary["wells"]
    parities = summary["parities"]
    rows = []
    for k in range(len(energies)):
        label = f"well:{int(wells[k])}" if localized[k] else "delocalized"
        parity = "S" if parities[k] > 0.9 else \
            ("A" if parities[k] < -0.9 else "mixed")
        rows.append((k, energies[k], label, parity))
    path = out / "spectrum.csv"
    write_csv(path, ["index", "energy", "label", "parity"], rows)
    manifest.add(path, out)

    meta = {
        "n_states": len(energies),
        "n_localized": int(np.sum(localized)),
        "n_site_states": len(basis.sites),
        "energy_offset": basis.energy_offset,
        "epsilon_L": summary["epsilon_L"],
        "oscillator_onset": summary["oscillator_onset"],
        "v0": config.lattice.v0,
        "reduced_mass": config.lattice.reduced_mass,
    }
    path = out / "spectrum.json"
    write_json(path, meta)
    manifest.add(path, out)
    eps = summary["epsilon_L"]
    onset = summary["oscillator_onset"]
    _say("spectrum", f"{int(np.sum(localized))} localized states; "
         f"epsilon_L = {'n/a' if eps is None else f'{eps:.4f}'}, "
         f"oscillator onset = "
         f"{'n/a' if onset is None else f'{onset:.4f}'}")

    if states:
        path = out / "states.npz"
        np.savez(path, x=basis.grid.x, sites=basis.sites, states=basis.states,
                 site_energies=basis.site_energies, f0=basis.f0)
        manifest.add(path, out)
        _say("spectrum", f"site states dumped to {path.name}")

    if calibrate:
        t0 = time.perf_counter()
        _say("spectrum", "scanning reduced mass (this solves many lattices)")
        best, report = calibrate_reduced_mass(config.lattice.v0,
                                              full_output=True)
        manifest.stage_timings["calibrate"] = time.perf_counter() - t0
        path = out / "calibration.json"
        write_json(path, {"recommended_reduced_mass": best, "scan": report})
        manifest.add(path, out)
        _say("spectrum", f"recommended reduced mass {best:.5f}")

    manifest.write(out)
    return 0


def cmd_evolve(config: RunConfig, out: Path, propagator: str | None = None,
               xbar: bool = False) -> int:
    if propagator:
        config = replace(config, evolve=replace(config.evolve,
                                                propagator=propagator))
    _require_fold_resolution(config)
    manifest = RunManifest(config_hash=config_hash(config))
    basis, _ = _basis_stage(config, out, "evolve", manifest)

    coeffs, _ = _packet(config, basis)
    ev = config.evolve
    _say("evolve", f"packet over sites {coeffs.sites.min()}.."
                   f"{coeffs.sites.max()} (n0={coeffs.n0}); recording "
                   f"{int(round(ev.t_total / ev.dt)) + 1} samples "
                   f"({ev.propagator})")
    t0 = time.perf_counter()
    signal, extra = record_q_signal(
        coeffs, basis, ev.t_total, ev.dt, propagator=ev.propagator,
        dt_int=ev.dt_int or None, config=config.lattice, full_output=True)
    manifest.stage_timings["record"] = time.perf_counter() - t0

    csv_path, json_path = write_signal(out, config, extra["times"],
                                       extra["p0"], signal.samples,
                                       extra["reference"])
    manifest.add(csv_path, out)
    manifest.add(json_path, out)
    _say("evolve", f"reference density {extra['reference']:.6f}; "
                   f"Q0 range [{signal.samples.min():.4f}, "
                   f"{signal.samples.max():.4f}]")

    if xbar:
        t0 = time.perf_counter()
        xs = record_mean_position(coeffs, basis, ev.t_total, ev.dt)
        model = mean_position_model(coeffs, basis, xs.times)
        manifest.stage_timings["xbar"] = time.perf_counter() - t0
        path = out / "xbar.csv"
        write_csv(path, ["t", "xbar", "xbar_model"],
                  zip(xs.times, xs.samples, model))
        manifest.add(path, out)
        _say("evolve", f"mean position recorded to {path.name}")

    manifest.write(out)
    return 0


def cmd_reconstruct(config: RunConfig, out: Path) -> int:
    _require_fold_resolution(config)
    manifest = RunManifest(config_hash=config_hash(config))
    basis, _ = _basis_stage(config, out, "reconstruct", manifest)
    coeffs, _ = _packet(config, basis)

    cached = read_signal(out, config)
    ev = config.evolve
    if cached is not None:
        _say("reconstruct", "reusing signal.csv (configuration hash matches)")
        signal = Signal(samples=cached["q0"], dt=cached["meta"]["dt"])
        manifest.add(out / "signal.csv", out)
        manifest.add(out / "signal.json", out)
    else:
        _say("reconstruct", f"no matching signal on disk; recording "
                            f"{int(round(ev.t_total / ev.dt)) + 1} samples")
        t0 = time.perf_counter()
        signal, extra = record_q_signal(
            coeffs, basis, ev.t_total, ev.dt, propagator=ev.propagator,
            dt_int=ev.dt_int or None, config=config.lattice, full_output=True)
        manifest.stage_timings["record"] = time.perf_counter() - t0
        csv_path, json_path = write_signal(out, config, extra["times"],
                                           extra["p0"], signal.samples,
                                           extra["reference"])
        manifest.add(csv_path, out)
        manifest.add(json_path, out)

    n0, dn = _packet_hints(config)
    rc = config.reconstruct
    t0 = time.perf_counter()
    table = extract_coherences(signal, config.site_window(),
                               window=rc.window, significance=rc.significance,
                               refine_scale=rc.refine_scale, n0=n0,
                               delta_n=dn)
    manifest.stage_timings["extract"] = time.perf_counter() - t0
    _say("reconstruct", f"{len(table.q1)} first-fold and {len(table.q2)} "
                        f"second-fold coherences above "
                        f"{rc.significance:g} x noise floor "
                        f"{table.noise_floor:.3e}; "
                        f"frequency scale {table.scale:.6f}")

    rows = []
    for fold in (1, 2):
        for n, q in sorted(table.fold(fold).items()):
            rows.append((n, fold, q.real, q.imag, abs(q),
                         float(np.angle(q))))
    path = out / "coherences.csv"
    write_csv(path, ["n", "fold", "re", "im", "abs", "arg"], rows)
    manifest.add(path, out)

    t0 = time.perf_counter()
    recovery = recover_amplitudes(table)
    phases = reconstruct_phases(table, recovery.amp)
    result = assemble_and_score(recovery.amp, phases, basis=basis,
                                truth=coeffs)
    manifest.stage_timings["score"] = time.perf_counter() - t0

    truth_map = coeffs.as_dict()
    rows = []
    for i, n in enumerate(result.sites):
        t_c = truth_map.get(int(n), 0.0j)
        rows.append((int(n), abs(result.c[i]), float(np.angle(result.c[i])),
                     abs(t_c), float(np.angle(t_c)) if t_c != 0 else 0.0))
    path = out / "reconstruction.csv"
    write_csv(path, ["n", "abs", "arg", "truth_abs", "truth_arg"], rows)
    manifest.add(path, out)

    summary = {
        "fidelity": result.fidelity,
        "max_amp_error": max(result.amp_error.values()),
        "max_phase_error": max(result.phase_error.values()),
        "anchor_site": result.anchor,
        "n_sites": len(result.sites),
        "frequency_scale": table.scale,
        "noise_floor": table.noise_floor,
        "amplitude_methods": {str(n): m for n, m
                              in sorted(recovery.method.items())},
        "phase_segments": len(phases.segments),
    }
    path = out / "reconstruction.json"
    write_json(path, summary)
    manifest.add(path, out)
    _say("reconstruct", f"fidelity {result.fidelity:.6f}, "
                        f"max amplitude error {summary['max_amp_error']:.3e}, "
                        f"max phase error {summary['max_phase_error']:.3e}")
    manifest.write(out)
    return 0


def cmd_validate(config: RunConfig, out: Path, deep: bool = False,
                 seedless: bool = False) -> int:
    manifest = RunManifest(config_hash=config_hash(config))
    t0 = time.perf_counter()
    checks = run_validation(config, deep=deep, rng_free=seedless,
                            out_dir=out,
                            progress=lambda m: _say("validate", m))
    manifest.stage_timings["validate"] = time.perf_counter() - t0

    for c in checks:
        _say("validate", f"{c.name:30s} {c.status:4s} "
                         f"measured={c.measured:.6e} bound={c.bound:.6e}")
    rows = [(c.name, c.status, c.measured, c.bound,
             c.detail.replace(",", ";")) for c in checks]
    path = out / "validation.csv"
    write_csv(path, ["name", "status", "measured", "bound", "detail"], rows)
    manifest.add(path, out)
    manifest.write(out)

    failed = [c for c in checks if not c.passed]
    if failed:
        _say("validate", f"{len(failed)} of {len(checks)} checks failed: "
             + ", ".join(c.name for c in failed))
        return 4
    _say("validate", f"all {len(checks)} checks passed")
    return 0


# ----------------------------------------------------------------- parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parabloch",
        description="Local Bloch oscillations in a lattice-plus-parabola "
                    "trap: spectra, zero-momentum signals, and packet "
                    "reconstruction.")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", help="output directory (default from config)")
    parser.add_argument("--seedless", action="store_true",
                        help="deterministic stand-ins for seeded random draws")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="solve the lattice spectrum")
    p.add_argument("--states", action="store_true",
                   help="also dump site states to states.npz")
    p.add_argument("--calibrate", action="store_true",
                   help="scan the reduced mass and emit calibration.json")

    p = sub.add_parser("evolve", help="record the zero-momentum signal")
    p.add_argument("--propagator", choices=["eigen", "splitstep"],
                   help="override the configured propagator")
    p.add_argument("--xbar", action="store_true",
                   help="also record the mean position")

    sub.add_parser("reconstruct",
                   help="recover site amplitudes and phases from the signal")

    p = sub.add_parser("validate", help="run the invariant suite")
    p.add_argument("--deep", action="store_true",
                   help="longer equivalence window and more identity packets")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config.validate()
        out = Path(args.out) if args.out else Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "spectrum":
            return cmd_spectrum(config, out, states=args.states,
                                calibrate=args.calibrate)
        if args.command == "evolve":
            return cmd_evolve(config, out, propagator=args.propagator,
                              xbar=args.xbar)
        if args.command == "reconstruct":
            return cmd_reconstruct(config, out)
        return cmd_validate(config, out, deep=args.deep,
                            seedless=args.seedless)
    except (ConfigError, RegimeError, InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
