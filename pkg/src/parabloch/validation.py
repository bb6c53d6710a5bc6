"""Self-checks for one configuration: every declared invariant measured
against an explicit bound.

The suite degrades instead of crashing: if the eigenbasis cannot be built
(shallow lattice, no bound doublets), every basis-dependent check reports
failure with the reason while the basis-free checks still run. The CLI maps
any failed check to exit code 4.

Randomized checks (identity and admixture packets) draw from seeded
generators; rng_free=True switches them to a fixed deterministic family so
two hosts produce byte-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dynamics import (PacketCoefficients, Signal, evolve_eigenbasis,
                       evolve_split_step, probability_at_momentum,
                       record_q_signal, synthesize_packet)
from .eigensolver import bloch_frequency, check_translation_invariance
from .errors import ConfigError, RegimeError
from .lattice import build_grid, norm, sample_potential
from .reconstruction import (assemble_and_score, coherence_table_from_packet,
                             estimate_component, recover_amplitudes,
                             reconstruct_phases)

# checks that cannot run without a usable site basis
BASIS_CHECKS = (
    "orthonormality",
    "site-energy-quadratic",
    "doublet-splitting",
    "translation-overlap-1",
    "translation-overlap-2",
    "momentum-peak-uniformity",
    "dipole-diagonal",
    "unitarity-eigen",
    "unitarity-splitstep",
    "propagator-equivalence",
    "revival",
    "signal-reality",
)


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    @property
    def status(self) -> str:
        return "pass" if self.passed else "FAIL"

    def row(self) -> tuple:
        return (self.name, self.status, self.measured, self.bound, self.detail)


def _leq(name: str, measured: float, bound: float, detail: str = ""
         ) -> ValidationCheck:
    measured = float(measured)
    return ValidationCheck(name=name, passed=bool(measured <= bound),
                           measured=measured, bound=bound, detail=detail)


def _identity_packet(index: int, rng_free: bool) -> PacketCoefficients:
    """Random (or deterministic) packet over a contiguous site block used by
    the coherence-identity, gauge, and admixture checks."""
    sites = np.arange(6, 16)
    k = sites.astype(float)
    if rng_free:
        mag = 1.0 + 0.5 * np.cos(1.7 * k + 0.9 * index)
        arg = 0.3 * k + 0.05 * (index + 1) * k * k
        c = mag * np.exp(1j * arg)
    else:
        rng = np.random.default_rng(index)
        c = rng.normal(size=sites.size) + 1j * rng.normal(size=sites.size)
        # keep every site populated so q1/q2 links never vanish
        mags = np.abs(c)
        c *= np.clip(mags, 0.1, None) / np.where(mags == 0, 1.0, mags)
    c = c / math.sqrt(float(np.sum(np.abs(c) ** 2)))
    return PacketCoefficients(sites=sites, c=c, n0=10, delta_n=5.0)


def _coherence_identity_defect(coeffs: PacketCoefficients) -> float:
    """max_n | q1(n) q1(n+1) / q2(n+1) - |c_n|^2 | on exact coherences."""
    table = coherence_table_from_packet(coeffs)
    cmap = coeffs.as_dict()
    worst = 0.0
    for n in sorted(cmap):
        if (n + 1) in table.q1 and n in table.q1 and (n + 1) in table.q2:
            lhs = table.q1[n] * table.q1[n + 1] / table.q2[n + 1]
            worst = max(worst, abs(lhs - abs(cmap[n]) ** 2))
    return worst


def run_validation(config: RunConfig, deep: bool = False,
                   rng_free: bool = False, out_dir: Path | None = None,
                   progress=None) -> list[ValidationCheck]:
    """Run the invariant suite; returns one ValidationCheck per invariant."""
    say = progress if progress is not None else (lambda msg: None)
    checks: list[ValidationCheck] = []
    lat = config.lattice
    grid = build_grid(lat)
    v = sample_potential(grid, lat)
    ppp = lat.points_per_period

    # --- lattice geometry ---------------------------------------------------
    say("potential symmetry and periodicity")
    sym = float(np.max(np.abs(v - v[::-1])))
    checks.append(_leq("potential-symmetry", sym, 1e-9 * lat.v0 + 1e-12,
                       "max |V(x) - V(-x)|"))
    v_lat = v - 0.5 * grid.x ** 2
    per = float(np.max(np.abs((v_lat - np.roll(v_lat, ppp))
                              [ppp:-ppp or None])))
    checks.append(_leq("potential-periodicity", per, 1e-9 * lat.v0 + 1e-12,
                       "max |V_lat(x+1) - V_lat(x)| away from edges"))

    # --- eigenbasis (guarded: downstream checks fail, not crash) ------------
    basis = None
    basis_reason = ""
    try:
        say("building eigenbasis")
        if out_dir is not None:
            from .artifacts import load_or_build_basis
            basis, _ = load_or_build_basis(config, out_dir)
        else:
            from .eigensolver import build_site_basis
            basis, _, _ = build_site_basis(lat)
    except (RegimeError, ConfigError) as exc:
        basis_reason = f"basis unavailable: {exc}"

    if basis is None:
        for name in BASIS_CHECKS:
            checks.append(ValidationCheck(name=name, passed=False,
                                          measured=math.nan, bound=math.nan,
                                          detail=basis_reason))
    else:
        checks.extend(_basis_checks(config, basis, deep, say))

    # --- estimator on synthetic tones ---------------------------------------
    say("estimator checks")
    checks.extend(_estimator_checks(config, deep))

    # --- coherence identity, gauge freedom, admixture robustness ------------
    say("identity and robustness checks")
    n_packets = 20 if deep else 5
    worst = max(_coherence_identity_defect(_identity_packet(k, rng_free))
                for k in range(n_packets))
    checks.append(_leq("coherence-identity", worst, 1e-10,
                       f"{n_packets} packets, exact coherences"))

    base = _identity_packet(0, rng_free)
    rotated = PacketCoefficients(sites=base.sites,
                                 c=base.c * np.exp(1j * 0.73),
                                 n0=base.n0, delta_n=base.delta_n)
    ta, tb = map(coherence_table_from_packet, (base, rotated))
    gauge = max(abs(ta.q1[n] - tb.q1[n]) for n in ta.q1)
    gauge = max(gauge, max(abs(ta.q2[n] - tb.q2[n]) for n in ta.q2))
    checks.append(_leq("gauge-invariance", gauge, 1e-14,
                       "coherences under a global phase"))

    checks.append(_admixture_check(rng_free))

    # --- artifact determinism ------------------------------------------------
    say("artifact determinism")
    checks.append(_determinism_check())
    return checks


# --------------------------------------------------------------------------

def _basis_checks(config: RunConfig, basis, deep: bool, say
                  ) -> list[ValidationCheck]:
    checks: list[ValidationCheck] = []
    lat = config.lattice
    grid = basis.grid
    lo, hi = config.site_window()
    window = [int(n) for n in basis.positive_sites() if lo <= n <= hi]
    if not window:
        window = [int(n) for n in basis.positive_sites()]
    wlo, whi = min(window), max(window)

    say("basis invariants")
    gram = (basis.states @ basis.states.T) * grid.dx
    ortho = float(np.max(np.abs(gram - np.eye(len(basis.sites)))))
    checks.append(_leq("orthonormality", ortho, 1e-8,
                       f"{len(basis.sites)} site states"))

    sites = np.array(window, dtype=float)
    resid = np.array([basis.energy(n) for n in window]) \
        - (0.5 * sites ** 2 + basis.energy_offset)
    spacing = bloch_frequency(wlo if wlo >= 1 else 1)
    checks.append(_leq("site-energy-quadratic",
                       np.max(np.abs(resid)) / spacing, 1.0,
                       f"max residual over sites {wlo}..{whi} in units of "
                       f"the smallest level spacing {spacing}"))

    split = max(basis.splitting(n) / bloch_frequency(n) for n in window
                if n >= 1)
    checks.append(_leq("doublet-splitting", split, 1e-2,
                       "max splitting relative to the local Bloch frequency"))

    t1 = min(check_translation_invariance(basis, n + 1, n)
             for n in window if basis.has(n + 1))
    checks.append(ValidationCheck("translation-overlap-1", t1 >= 0.99,
                                  t1, 0.99, "min neighbor overlap (>=)"))
    t2 = min(check_translation_invariance(basis, n + 2, n)
             for n in window if basis.has(n + 2))
    checks.append(ValidationCheck("translation-overlap-2", t2 >= 0.98,
                                  t2, 0.98, "min next-neighbor overlap (>=)"))

    rows = [basis.index(n) for n in window]
    f0 = basis.f0[rows]
    f0_dev = float(np.max(np.abs(f0 / f0[len(f0) // 2] - 1.0)))
    checks.append(_leq("momentum-peak-uniformity", f0_dev, 0.05,
                       "relative spread of phi_n(p=0) across the window"))

    _, _, x0_ns, x0_vals = basis.dipole_coupling(0, (wlo, whi))
    x0_dev = float(np.max(np.abs(x0_vals - x0_ns)))
    x1 = basis.dipole_coupling(1, (wlo, whi))
    x2 = basis.dipole_coupling(2, (wlo, whi))
    checks.append(_leq("dipole-diagonal", x0_dev, 0.05,
                       f"max |<x> - n|; X1 mean {x1[0]:.4f} spread "
                       f"{x1[1]:.2f}, X2 mean {x2[0]:.4f} spread {x2[1]:.2f}"))

    # --- dynamics ------------------------------------------------------------
    say("propagator invariants")
    coeffs, psi0 = synthesize_packet(basis, config.packet.n0,
                                     config.packet.delta_n,
                                     config.packet.phase_gradient)
    evolved = evolve_eigenbasis(coeffs, basis, 4.0 * math.pi)
    drift = abs(norm(evolved) - 1.0)
    checks.append(_leq("unitarity-eigen", drift, 1e-6,
                       "grid norm of the packet after one revival period"))

    t_eq = 2.0 * math.pi if deep else 0.25
    n_probe = 8
    ref_idx = basis.index(coeffs.n0)
    reference = float(basis.f0[ref_idx] ** 2)
    rows_c = np.array([basis.index(int(n)) for n in coeffs.sites])
    energies = basis.site_energies[rows_c] - basis.energy_offset
    f = basis.f0[rows_c]

    psi = psi0
    gap = 0.0
    for k in range(1, n_probe + 1):
        t_k = t_eq * k / n_probe
        psi = evolve_split_step(psi, lat, t_eq / n_probe)
        p0_split = probability_at_momentum(psi, 0.0)
        amp0 = np.sum(coeffs.c * f * np.exp(-1j * energies * t_k))
        q_eig = abs(amp0) ** 2 / reference - 1.0
        q_spl = p0_split / reference - 1.0
        gap = max(gap, abs(q_spl - q_eig))
    checks.append(_leq("propagator-equivalence", gap, 1e-4,
                       f"max |Q0 gap| at {n_probe} times over t <= {t_eq:.3f}"))
    drift = abs(norm(psi) - 1.0)
    checks.append(_leq("unitarity-splitstep", drift, 1e-8,
                       f"grid norm drift after t = {t_eq:.3f}"))

    # revival: site energies rewind to their quadratic part at t = 4 pi, so
    # the signal defect is controlled by the fit residuals delta_n
    say("revival check")
    sites_f = coeffs.sites.astype(float)
    delta = energies - (0.5 * sites_f ** 2
                        + np.mean(energies - 0.5 * sites_f ** 2))
    amp_init = np.sum(coeffs.c * f)
    amp_rev = np.sum(coeffs.c * f * np.exp(-1j * delta * 4.0 * math.pi))
    defect = abs(abs(amp_rev) ** 2 - abs(amp_init) ** 2) / reference
    budget = 8.0 * math.pi * float(np.max(np.abs(delta))) \
        * float(np.sum(np.abs(coeffs.c * f))) ** 2 / reference
    checks.append(_leq("revival", defect, budget + 1e-12,
                       "Q0 defect at t = 4 pi vs the phase-residual budget"))

    say("signal reality")
    sig = record_q_signal(coeffs, basis, 8.0 * math.pi, config.evolve.dt)
    w = np.hanning(len(sig.samples))
    omega = bloch_frequency(coeffs.n0)
    phase = np.exp(1j * omega * sig.times)
    zp = np.sum(sig.samples * w * phase)
    zm = np.sum(sig.samples * w * np.conj(phase))
    reality = abs(zm - np.conj(zp)) / max(abs(zp), 1e-300)
    checks.append(_leq("signal-reality", reality, 1e-12,
                       "E(-omega) = conj(E(omega)) on the recorded signal"))
    return checks


def _estimator_checks(config: RunConfig, deep: bool) -> list[ValidationCheck]:
    checks = []
    dt = config.evolve.dt
    t_total = config.evolve.t_total
    times = np.arange(int(round(t_total / dt)) + 1) * dt
    omega0 = bloch_frequency(21)

    tone = Signal(samples=np.cos(omega0 * times), dt=dt)
    est = estimate_component(tone, omega0)
    checks.append(_leq("estimator-tone", abs(est - 1.0), 1e-2,
                       f"unit cosine at omega = {omega0}"))

    omega1 = bloch_frequency(18)
    two = Signal(samples=0.7 * np.cos(omega0 * times)
                 + 0.2 * np.cos(omega1 * times + 0.4), dt=dt)
    e0 = estimate_component(two, omega0)
    e1 = estimate_component(two, omega1)
    lin = max(abs(e0 - 0.7), abs(e1 - 0.2 * np.exp(-0.4j)))
    checks.append(_leq("estimator-linearity", lin, 2e-2,
                       "two-tone amplitude/phase recovery"))

    spans = [10, 20, 40, 80] if deep else [10, 20, 40]
    leak = []
    for m in spans:
        tt = m * math.pi
        ts = np.arange(int(round(tt / dt)) + 1) * dt
        s = Signal(samples=np.cos(omega0 * ts), dt=dt)
        leak.append(abs(estimate_component(s, omega0 + 2.37)))
    drops = [leak[i + 1] / leak[i] for i in range(len(leak) - 1)]
    worst = max(drops)
    checks.append(_leq("estimator-leakage-monotone", worst, 1.0,
                       "off-peak leakage ratio under doubling windows: "
                       + ", ".join(f"{x:.2e}" for x in leak)))
    return checks


def _gaussian_packet() -> PacketCoefficients:
    sites = np.arange(6, 16)
    k = sites.astype(float)
    c = np.exp(-(k - 10.5) ** 2 / (2.0 * 2.5 ** 2)
               + 1j * (math.pi / 4.0) * k)
    c = c / math.sqrt(float(np.sum(np.abs(c) ** 2)))
    return PacketCoefficients(sites=sites, c=c, n0=10, delta_n=5.0)


def _admixture_check(rng_free: bool) -> ValidationCheck:
    """Contaminate a smooth packet at 5 percent amplitude and reconstruct:
    the recovered amplitudes must stay within 3x the admixture fraction.
    Smoothness matters: the ratio identity is conditioned on the coherence
    chain, which random-sign packets deliberately break."""
    fraction = 0.05
    clean = _gaussian_packet()
    noise = _identity_packet(4, rng_free)
    mixed = clean.c + fraction * noise.c
    mixed = mixed / math.sqrt(float(np.sum(np.abs(mixed) ** 2)))
    contaminated = PacketCoefficients(sites=clean.sites, c=mixed,
                                      n0=clean.n0, delta_n=clean.delta_n)
    table = coherence_table_from_packet(contaminated)
    rec = recover_amplitudes(table)
    phases = reconstruct_phases(table, rec.amp)
    scored = assemble_and_score(rec.amp, phases, truth=clean)
    peak = float(np.max(np.abs(clean.c)))
    worst = max(scored.amp_error.values()) / peak
    return _leq("admixture-robustness", worst, 3.0 * fraction,
                f"relative amplitude error under {fraction:.0%} admixture, "
                f"fidelity {scored.fidelity:.6f}")


def _determinism_check() -> ValidationCheck:
    """Two emissions of the same table must be byte-identical."""
    import hashlib
    from .artifacts import format_value

    rows = [(k, math.sqrt(2.0) * k, -k / 3.0) for k in range(50)]
    blobs = []
    for _ in range(2):
        text = "\n".join(",".join(format_value(v) for v in row)
                         for row in rows)
        blobs.append(hashlib.sha256(text.encode()).hexdigest())
    same = blobs[0] == blobs[1]
    return ValidationCheck(name="artifact-determinism", passed=same,
                           measured=0.0 if same else 1.0, bound=0.0,
                           detail=f"csv sha256 {blobs[0][:12]}")
