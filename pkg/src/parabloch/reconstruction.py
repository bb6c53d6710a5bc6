"""Inversion of the recorded signal: single-frequency component estimation at
the Bohr comb, fold separation, amplitude and phase recovery, scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import PacketCoefficients, Signal, packet_wavefunction
from .errors import ConfigError, RegimeError

# Off-peak sample offsets for the noise floor: away from the half-integer
# (m=1) and even-integer (m=2) combs and their low-order rationals.
FLOOR_OFFSETS = (0.271, 0.613)
IMAG_RATIO_TOLERANCE = 0.2


def bohr_frequency(n: int, m: int = 1) -> float:
    """Transition frequency between sites n and n-m: w = m (n - m/2)."""
    if m < 1:
        raise ConfigError(f"fold order must be >= 1, got {m}")
    return m * (n - 0.5 * m)


@dataclass(frozen=True)
class FoldCheck:
    resolved: bool
    gap: float
    m1_edge: float   # top of the first fold band (plus one-site margin)
    m2_edge: float   # bottom of the second fold band (minus one-site margin)


def fold_resolution_check(n0: float, delta_n: float) -> FoldCheck:
    """First and second folds are disjoint when
    n0 + delta_n/2 + 1/2 < 2 (n0 - delta_n/2 - 1), strictly."""
    m1_edge = n0 + 0.5 * delta_n + 0.5
    m2_edge = 2.0 * (n0 - 0.5 * delta_n - 1.0)
    gap = m2_edge - m1_edge
    return FoldCheck(resolved=gap > 0, gap=gap, m1_edge=m1_edge, m2_edge=m2_edge)


def _window_samples(name: str, count: int) -> np.ndarray:
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(count) / (count - 1))
    if name == "rect":
        return np.ones(count)
    raise ConfigError(f"unknown window {name!r} (choose hann or rect)")


def estimate_component(signal: Signal, omega: float, window: str = "hann",
                       min_separation: float = 1.0) -> complex:
    """Windowed single-frequency component of a real signal.

    Returns the full tone amplitude: for samples cos(w t + p) the estimate at
    w converges to e^{ip} (gain-corrected, both +-w halves folded in via the
    factor 2). Leakage control requires t_total * min_separation >= 4 pi.
    """
    if omega < 0:
        raise ConfigError(f"omega must be >= 0, got {omega}")
    nyquist = math.pi / signal.dt
    if omega >= nyquist:
        raise ConfigError(f"omega={omega:.4g} at or above Nyquist {nyquist:.4g}")
    if min_separation > 0 and signal.t_total * min_separation < 4.0 * math.pi:
        need = 4.0 * math.pi / min_separation
        raise ConfigError(
            f"t_total={signal.t_total:.4g} too short to separate components "
            f"{min_separation:.4g} apart; need t_total >= {need:.4g}")
    w = _window_samples(window, signal.samples.size)
    phase = np.exp(1j * omega * signal.times)
    return complex(2.0 * np.sum(signal.samples * w * phase) / np.sum(w))


@dataclass
class CoherenceTable:
    """Estimated coherences per site: q1[n] ~ c_n conj(c_{n-1}) at the first
    fold, q2[n] ~ c_n conj(c_{n-2}) at the second. Entries below the
    significance threshold are absent, never zero-filled. scale is the fitted
    global frequency factor applied to the nominal comb."""

    q1: dict[int, complex] = field(default_factory=dict)
    q2: dict[int, complex] = field(default_factory=dict)
    noise_floor: float = 0.0
    scale: float = 1.0
    site_range: tuple[int, int] = (0, 0)
    window: str = "hann"
    significance: float = 3.0

    def fold(self, m: int) -> dict[int, complex]:
        if m == 1:
            return self.q1
        if m == 2:
            return self.q2
        raise ConfigError(f"fold m={m} not stored (folds 1 and 2 only)")


def _synthetic_table(coeffs: PacketCoefficients) -> CoherenceTable:
    """Exact coherence table from known coefficients (no dynamics)."""
    cmap = coeffs.as_dict()
    table = CoherenceTable(site_range=(int(coeffs.sites.min()),
                                       int(coeffs.sites.max())))
    for n, c in cmap.items():
        if n - 1 in cmap:
            q = c * np.conj(cmap[n - 1])
            if q != 0:
                table.q1[n] = complex(q)
        if n - 2 in cmap:
            q = c * np.conj(cmap[n - 2])
            if q != 0:
                table.q2[n] = complex(q)
    return table


def coherence_table_from_packet(coeffs: PacketCoefficients) -> CoherenceTable:
    """Public wrapper of the exact synthetic table (identity/gauge checks)."""
    return _synthetic_table(coeffs)


def extract_coherences(signal: Signal, site_range: tuple[int, int],
                       folds: tuple[int, ...] = (1, 2), window: str = "hann",
                       significance: float = 3.0, refine_scale: bool = True,
                       n0: float | None = None, delta_n: float | None = None
                       ) -> CoherenceTable:
    """Probe the signal at the fold combs and keep significant coherences.

    The fold-disjointness condition is checked on the packet's nominal
    (n0, delta_n) when given, else on the site range read as n0 +- delta_n/2.
    A global frequency scale is fitted on the strongest first-fold peak
    before probing (the site energies carry a small quadratic
    renormalization, so the physical comb is a hair below the nominal one);
    refine_scale=False probes the nominal comb directly.
    """
    lo, hi = int(site_range[0]), int(site_range[1])
    if hi < lo:
        raise ConfigError(f"empty site range {site_range}")
    if any(m not in (1, 2) for m in folds) or not folds:
        raise ConfigError(f"folds must be a subset of (1, 2), got {folds}")
    if 2 in folds:
        check_n0 = 0.5 * (lo + hi) if n0 is None else n0
        check_dn = 0.5 * (hi - lo) if delta_n is None else delta_n
        check = fold_resolution_check(check_n0, check_dn)
        if not check.resolved:
            bad = [k for k in range(lo, hi + 1)
                   if 2.0 * (k - 1.0) <= check.m1_edge]
            raise RegimeError(
                f"frequency folds overlap (m1 band up to {check.m1_edge:.2f}, "
                f"m2 band from {check.m2_edge:.2f}, gap {check.gap:.2f}): "
                f"second-fold probes of sites {bad} sit inside the first fold")

    # global scale from the strongest first-fold peak
    scale = 1.0
    if refine_scale:
        coarse = {n: abs(estimate_component(signal, bohr_frequency(n, 1),
                                            window=window))
                  for n in range(max(lo, 1), hi + 1)}
        n_star = max(coarse, key=coarse.get)
        omega_star = bohr_frequency(n_star, 1)
        half_bin = math.pi / signal.t_total
        res = minimize_scalar(
            lambda om: -abs(estimate_component(signal, om, window=window)),
            bounds=(omega_star - 0.9 * half_bin, omega_star + 0.9 * half_bin),
            method="bounded", options={"xatol": 1e-10})
        scale = float(res.x) / omega_star

    floor_samples = []
    for k in range(lo, hi + 1):
        for off in FLOOR_OFFSETS:
            floor_samples.append(abs(estimate_component(
                signal, scale * (k + off), window=window)) / 2.0)
    noise_floor = float(np.median(floor_samples))

    table = CoherenceTable(noise_floor=noise_floor, scale=scale,
                           site_range=(lo, hi), window=window,
                           significance=significance)
    for m in sorted(folds):
        store = table.fold(m)
        for n in range(lo, hi + 1):
            omega = scale * bohr_frequency(n, m)
            if omega <= 0:
                continue
            q = estimate_component(signal, omega, window=window) / 2.0
            if abs(q) > significance * noise_floor:
                store[n] = q
    return table


def amplitudes_smooth(table: CoherenceTable) -> dict[int, float]:
    """|c_n| ~ sqrt(|q1(n)|) under the smooth-envelope assumption, normalized."""
    if not table.q1:
        raise RegimeError("no first-fold coherences above the noise floor")
    raw = {n: math.sqrt(abs(q)) for n, q in table.q1.items()}
    total = math.sqrt(sum(v * v for v in raw.values()))
    return {n: v / total for n, v in sorted(raw.items())}


@dataclass
class TwoFoldAmplitudes:
    """Per-site |c_n|^2 from the two-fold identity, with quality diagnostics.

    raw keeps the unnormalized ratios: chaining through |q1| must happen on
    that scale, since q1 magnitudes are not renormalized with the subset.
    """

    values: dict[int, float]          # normalized |c_n|^2
    raw: dict[int, float]             # unnormalized |c_n|^2 (q1 scale)
    imag_ratio: dict[int, float]      # Im/|.| of the complex ratio (0 exact)
    omitted: dict[int, str]           # site -> reason


def amplitudes_two_fold(table: CoherenceTable) -> TwoFoldAmplitudes:
    """|c_n|^2 = q1(n) q1(n+1) / q2(n+1), sites with a missing or below-floor
    denominator omitted with a diagnostic."""
    raw: dict[int, float] = {}
    imag_ratio: dict[int, float] = {}
    omitted: dict[int, str] = {}
    for n in sorted(table.q1):
        if n + 1 not in table.q1:
            omitted[n] = "q1(n+1) below floor"
            continue
        if n + 1 not in table.q2:
            omitted[n] = "q2(n+1) below floor"
            continue
        ratio = table.q1[n] * table.q1[n + 1] / table.q2[n + 1]
        if ratio == 0:
            omitted[n] = "zero ratio"
            continue
        imag_ratio[n] = float(abs(ratio.imag) / abs(ratio))
        if ratio.real <= 0:
            omitted[n] = "non-positive ratio"
            continue
        raw[n] = float(ratio.real)
    total = sum(raw.values())
    values = {n: v / total for n, v in raw.items()} if total > 0 else {}
    return TwoFoldAmplitudes(values=values, raw=raw, imag_ratio=imag_ratio,
                             omitted=omitted)


@dataclass
class AmplitudeRecovery:
    """Normalized |c_n| with the method used per site.

    two_fold sites come straight from the fold identity; chain sites extend
    them through |c_n|^2 = |q1(n)|^2 / |c_{n-1}|^2 where the identity's
    denominator is contaminated; smooth sites fall back to sqrt(|q1|).
    """

    amp: dict[int, float]
    method: dict[int, str]
    two_fold: TwoFoldAmplitudes


def recover_amplitudes(table: CoherenceTable,
                       imag_tolerance: float = IMAG_RATIO_TOLERANCE
                       ) -> AmplitudeRecovery:
    """Two-fold identity amplitudes, gated on ratio quality and extended
    along the first-fold chain."""
    two_fold = amplitudes_two_fold(table)
    if not table.q1:
        raise RegimeError("no first-fold coherences above the noise floor")
    # quality gate: keep identity sites whose complex ratio is close to real.
    # Anchor on the raw (q1-scale) values: the chain divides |q1|^2 by them,
    # so a subset-normalized anchor would skew every chained site.
    anchors = {n: v for n, v in two_fold.raw.items()
               if two_fold.imag_ratio.get(n, 1.0) <= imag_tolerance}
    amp2: dict[int, float] = dict(anchors)
    method = {n: "two_fold" for n in anchors}

    if anchors:
        q1_sites = sorted(table.q1)
        # upward: |c_n|^2 = |q1(n)|^2 / |c_{n-1}|^2
        for n in q1_sites:
            if n in amp2 or (n - 1) not in amp2:
                continue
            prev = amp2[n - 1]
            if prev > 0:
                amp2[n] = abs(table.q1[n]) ** 2 / prev
                method[n] = "chain"
        # downward: |c_{n-1}|^2 = |q1(n)|^2 / |c_n|^2
        for n in reversed(q1_sites):
            if (n - 1) in amp2 or n not in amp2:
                continue
            cur = amp2[n]
            if cur > 0:
                amp2[n - 1] = abs(table.q1[n]) ** 2 / cur
                method[n - 1] = "chain"

    # smooth fallback for anything the chain could not reach
    for n, q in table.q1.items():
        if n not in amp2:
            amp2[n] = abs(q)
            method[n] = "smooth"

    total = sum(amp2.values())
    amp = {n: math.sqrt(v / total) for n, v in sorted(amp2.items())}
    return AmplitudeRecovery(amp=amp, method=method, two_fold=two_fold)


@dataclass
class PhaseRecovery:
    """Phases from cumulative first-fold phase differences.

    arg q1(n) = arg c_n - arg c_{n-1}; the largest-amplitude site anchors its
    segment at phase zero. Sites split across a below-floor gap form separate
    segments whose relative phase is unobservable (each re-anchored at zero).
    """

    phase: dict[int, float]
    segments: list[list[int]]
    anchor: int


def reconstruct_phases(table: CoherenceTable, amplitudes: dict[int, float]
                       ) -> PhaseRecovery:
    if not amplitudes:
        raise RegimeError("no amplitudes to attach phases to")
    sites = sorted(amplitudes)
    segments: list[list[int]] = [[sites[0]]]
    for n in sites[1:]:
        if n - 1 == segments[-1][-1] and n in table.q1:
            segments[-1].append(n)
        else:
            segments.append([n])
    anchor = max(amplitudes, key=amplitudes.get)
    phase: dict[int, float] = {}
    for segment in segments:
        seg_anchor = anchor if anchor in segment \
            else max(segment, key=lambda n: amplitudes[n])
        phase[seg_anchor] = 0.0
        idx = segment.index(seg_anchor)
        for n in segment[idx + 1:]:
            phase[n] = phase[n - 1] + float(np.angle(table.q1[n]))
        for n in reversed(segment[:idx]):
            phase[n] = phase[n + 1] - float(np.angle(table.q1[n + 1]))
    return PhaseRecovery(phase=phase, segments=segments, anchor=anchor)


@dataclass
class ReconstructionResult:
    """Reconstructed packet and (when truth is supplied) its scores.

    The overall phase is unobservable; by convention the anchor site carries
    phase zero (global_phase records that convention). Errors are per-site
    maps after optimal global-phase alignment with the truth.
    """

    sites: np.ndarray
    c: np.ndarray
    anchor: int
    global_phase: float = 0.0
    fidelity: float | None = None
    amp_error: dict[int, float] = field(default_factory=dict)
    phase_error: dict[int, float] = field(default_factory=dict)
    psi: object | None = None   # GridWavefunction when a basis was supplied

    def as_dict(self) -> dict[int, complex]:
        return {int(n): complex(v) for n, v in zip(self.sites, self.c)}

    def as_packet(self) -> PacketCoefficients:
        weights = np.abs(self.c) ** 2
        n0 = int(round(float(weights @ self.sites)))
        spread = float(np.sqrt(max(
            weights @ self.sites.astype(float) ** 2
            - (weights @ self.sites) ** 2, 0.0)))
        return PacketCoefficients(sites=self.sites, c=self.c, n0=n0,
                                  delta_n=2.0 * spread)


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def assemble_and_score(amplitudes: dict[int, float], phases: PhaseRecovery,
                       basis=None, truth: PacketCoefficients | None = None
                       ) -> ReconstructionResult:
    """Combine |c_n| and phases into coefficients; score against the truth.

    When a site basis is supplied the grid wavefunction of the reconstructed
    packet is attached to the result.
    """
    sites = np.array(sorted(set(amplitudes) & set(phases.phase)), dtype=int)
    if sites.size == 0:
        raise RegimeError("amplitude and phase recoveries share no sites")
    c = np.array([amplitudes[n] * np.exp(1j * phases.phase[n]) for n in sites])
    c = c / math.sqrt(float(np.sum(np.abs(c) ** 2)))
    result = ReconstructionResult(sites=sites, c=c, anchor=phases.anchor)
    if basis is not None:
        result.psi = packet_wavefunction(result.as_packet(), basis)
    if truth is None:
        return result
    truth_map = truth.as_dict()
    t_vec = np.array([truth_map.get(int(n), 0.0j) for n in sites])
    overlap = complex(np.conj(t_vec) @ c)
    result.fidelity = abs(overlap) ** 2
    align = np.exp(-1j * np.angle(overlap)) if overlap != 0 else 1.0
    aligned = c * align
    for i, n in enumerate(sites):
        result.amp_error[int(n)] = float(abs(abs(aligned[i]) - abs(t_vec[i])))
        if abs(t_vec[i]) > 0:
            result.phase_error[int(n)] = float(abs(_wrap_angle(
                np.angle(aligned[i]) - np.angle(t_vec[i]))))
    return result
