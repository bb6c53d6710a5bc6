"""Wavepacket synthesis, two independent propagators, and recorded observables:
momentum-space probabilities, mean position, and the normalized signal Q0(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import LatticeConfig
from .errors import ConfigError, RegimeError
from .eigensolver import SiteBasis
from .lattice import GridWavefunction, SpatialGrid, sample_potential, \
    fourier_amplitudes

SUPPORT_LEVEL = 1e-3     # envelope fraction defining the packet's extent
GUARD_SITES = 5


@dataclass(frozen=True)
class PacketCoefficients:
    """Complex site amplitudes c_n with sum |c_n|^2 = 1."""

    sites: np.ndarray     # ascending site indices
    c: np.ndarray         # complex amplitudes aligned with sites
    n0: int
    delta_n: float

    def __post_init__(self):
        total = float(np.sum(np.abs(self.c) ** 2))
        if abs(total - 1.0) > 1e-10:
            raise ConfigError(f"packet coefficients not normalized: "
                              f"sum |c|^2 = {total!r}")

    def amplitude(self, n: int) -> complex:
        hits = np.where(self.sites == n)[0]
        return complex(self.c[hits[0]]) if hits.size else 0.0j

    def as_dict(self) -> dict[int, complex]:
        return {int(n): complex(v) for n, v in zip(self.sites, self.c)}

    def significant_sites(self, level: float = SUPPORT_LEVEL) -> np.ndarray:
        keep = np.abs(self.c) > level * np.max(np.abs(self.c))
        return self.sites[keep]


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled real time series (P0(t) or Q0(t))."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("signal dt must be > 0")
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ConfigError("signal needs a 1-d array of >= 2 samples")

    @property
    def t_total(self) -> float:
        return self.dt * (self.samples.size - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


def _check_support(basis: SiteBasis, sites: np.ndarray, amps: np.ndarray) -> None:
    """The significant packet support must sit a guard margin inside the grid."""
    level = SUPPORT_LEVEL * np.max(np.abs(amps))
    significant = sites[np.abs(amps) > level]
    lo_lim = basis.grid.n_min + GUARD_SITES
    hi_lim = basis.grid.n_max - GUARD_SITES
    if significant.min() < lo_lim or significant.max() > hi_lim:
        raise ConfigError(
            f"packet support [{significant.min()}, {significant.max()}] exceeds "
            f"the guarded site range [{lo_lim}, {hi_lim}]")


def synthesize_packet(basis: SiteBasis, n0: int, delta_n: float,
                      phase_gradient: float
                      ) -> tuple[PacketCoefficients, GridWavefunction]:
    """Gaussian packet c_n ~ exp(-(n-n0)^2 / (2 (delta_n/2)^2)) e^{i n phase}.

    delta_n = 0 collapses to the single site n0. All basis sites carrying
    envelope weight above 1e-14 participate; the significant support (1e-3 of
    peak) must fit a 5-site guard margin inside the grid.
    """
    sites = basis.sites.astype(int)
    if delta_n == 0:
        env = (sites == n0).astype(float)
        if env.sum() == 0:
            raise ConfigError(f"site {n0} not present in basis")
    else:
        width = 0.5 * delta_n
        env = np.exp(-((sites - n0) ** 2) / (2.0 * width ** 2))
        env[env < 1e-14] = 0.0
    if env[np.abs(sites - n0) <= max(delta_n, 1)].sum() == 0:
        raise ConfigError(f"packet at n0={n0} has no support on basis sites "
                          f"{sites.min()}..{sites.max()}")
    amps = env * np.exp(1j * phase_gradient * sites)
    amps = amps / math.sqrt(float(np.sum(np.abs(amps) ** 2)))
    keep = np.abs(amps) > 0
    sites, amps = sites[keep], amps[keep]
    _check_support(basis, sites, amps)
    coeffs = PacketCoefficients(sites=sites, c=amps, n0=n0, delta_n=float(delta_n))
    return coeffs, packet_wavefunction(coeffs, basis)


def packet_from_list(basis: SiteBasis,
                     entries: tuple[tuple[int, float, float], ...]
                     ) -> tuple[PacketCoefficients, GridWavefunction]:
    """Explicit coefficient list (n, re, im); normalized on ingestion."""
    if not entries:
        raise ConfigError("empty coefficient list")
    sites = np.array(sorted(n for n, _, _ in entries), dtype=int)
    table = {n: complex(re, im) for n, re, im in entries}
    amps = np.array([table[n] for n in sites])
    total = float(np.sum(np.abs(amps) ** 2))
    if total == 0:
        raise ConfigError("coefficient list has zero total weight")
    amps = amps / math.sqrt(total)
    for n in sites:
        if not basis.has(int(n)):
            raise ConfigError(f"coefficient site {n} not present in basis")
    _check_support(basis, sites, amps)
    weights = np.abs(amps) ** 2
    n0 = int(round(float(weights @ sites)))
    spread = float(np.sqrt(max(weights @ sites ** 2 - (weights @ sites) ** 2, 0.0)))
    coeffs = PacketCoefficients(sites=sites, c=amps, n0=n0,
                                delta_n=2.0 * spread)
    return coeffs, packet_wavefunction(coeffs, basis)


def packet_wavefunction(coeffs: PacketCoefficients, basis: SiteBasis
                        ) -> GridWavefunction:
    """Grid representation sum_n c_n phi_n(x)."""
    rows = np.array([basis.index(int(n)) for n in coeffs.sites])
    amplitudes = coeffs.c @ basis.states[rows]
    return GridWavefunction(basis.grid, amplitudes)


def evolve_eigenbasis(coeffs: PacketCoefficients, basis: SiteBasis,
                      t: float) -> GridWavefunction:
    """Psi(t) = sum_n c_n e^{-i eps_n t} phi_n, with the fitted spectral
    constant removed (only energy differences are physical)."""
    rows = np.array([basis.index(int(n)) for n in coeffs.sites])
    energies = basis.site_energies[rows] - basis.energy_offset
    phased = coeffs.c * np.exp(-1j * energies * t)
    return GridWavefunction(basis.grid, phased @ basis.states[rows])


def split_step_bound(grid: SpatialGrid, config: LatticeConfig) -> float:
    """Stability precondition for the integrator step."""
    v = sample_potential(grid, config)
    vmax = float(np.max(np.abs(v)))
    bound_v = 0.1 / vmax if vmax > 0 else math.inf
    bound_k = 0.1 * 2.0 * config.reduced_mass * grid.dx ** 2
    return min(bound_v, bound_k)


def evolve_split_step(psi0: GridWavefunction, config: LatticeConfig, t: float,
                      dt_int: float | None = None) -> GridWavefunction:
    """Strang-split integration: potential half-step in position space,
    kinetic full step in momentum space (spectral, periodic wrap).

    dt_int defaults to half the stability bound; a supplied step above the
    bound is rejected.
    """
    grid = psi0.grid
    bound = split_step_bound(grid, config)
    if dt_int is None:
        dt_int = 0.5 * bound
    if dt_int <= 0 or dt_int > bound:
        raise ConfigError(f"dt_int={dt_int:.3e} violates the stability bound "
                          f"{bound:.3e} (need 0 < dt_int <= bound)")
    if t == 0:
        return GridWavefunction(grid, psi0.amplitudes.astype(complex).copy())
    n_steps = max(1, math.ceil(abs(t) / dt_int))
    dte = t / n_steps
    v = sample_potential(grid, config)
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
    half_v = np.exp(-0.5j * v * dte)
    full_k = np.exp(-1j * (k * k) / (2.0 * config.reduced_mass) * dte)
    out = psi0.amplitudes.astype(complex)
    for _ in range(n_steps):
        out = half_v * np.fft.ifft(full_k * np.fft.fft(half_v * out))
    return GridWavefunction(grid, out)


@dataclass(frozen=True)
class MomentumWavefunction:
    """Momentum-space amplitudes on an ascending uniform p grid."""

    p: np.ndarray
    amplitudes: np.ndarray

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])


def momentum_transform(psi: GridWavefunction) -> MomentumWavefunction:
    """psi(p) = (1/sqrt(2 pi)) sum psi(x) e^{+ipx} dx; Parseval-exact."""
    p, amps = fourier_amplitudes(psi.grid, psi.amplitudes)
    return MomentumWavefunction(p=p, amplitudes=amps)


def probability_at_momentum(psi: GridWavefunction | MomentumWavefunction,
                            p: float = 0.0) -> float:
    """|psi(p)|^2, linearly interpolated between momentum grid nodes."""
    mwf = psi if isinstance(psi, MomentumWavefunction) else momentum_transform(psi)
    if not (mwf.p[0] <= p <= mwf.p[-1]):
        raise ConfigError(f"probe momentum {p} outside the resolved grid "
                          f"[{mwf.p[0]:.3f}, {mwf.p[-1]:.3f}]")
    density = np.abs(mwf.amplitudes) ** 2
    return float(np.interp(p, mwf.p, density))


def mean_position(psi: GridWavefunction) -> float:
    """<psi|x|psi> dx on the grid."""
    density = np.abs(psi.amplitudes) ** 2
    return float(np.real(psi.grid.x @ density) * psi.grid.dx)


def _nyquist_check(basis: SiteBasis, dt: float) -> None:
    n_top = int(np.max(np.abs(basis.sites)))
    bound = math.pi / (2.0 * max(n_top, 1))
    if dt >= bound:
        raise ConfigError(f"dt={dt:.4g} too coarse for folds up to 2*{n_top}: "
                          f"need dt < pi/(2*{n_top}) = {bound:.4g}")


def record_q_signal(coeffs: PacketCoefficients, basis: SiteBasis,
                    t_total: float, dt: float, propagator: str = "eigen",
                    dt_int: float | None = None,
                    config: LatticeConfig | None = None,
                    full_output: bool = False):
    """Record Q0(t) = P(0,t)/|phi_{n0}(0)|^2 - 1 on a uniform time grid.

    The eigenbasis path evaluates P(0,t) analytically from the momentum
    amplitudes; the split-step path (validation) integrates the wavefunction
    and probes p=0 per sample. full_output additionally returns the raw P0
    samples and the reference density.
    """
    if propagator not in ("eigen", "splitstep"):
        raise ConfigError(f"unknown propagator {propagator!r}")
    _nyquist_check(basis, dt)
    n_samples = int(round(t_total / dt)) + 1
    times = np.arange(n_samples) * dt

    rows = np.array([basis.index(int(n)) for n in coeffs.sites])
    f = basis.f0[rows]
    ref_index = basis.index(coeffs.n0)
    reference = float(basis.f0[ref_index] ** 2)
    _, profile = basis.momentum_profile(coeffs.n0)
    peak = float(np.max(np.abs(profile) ** 2))
    if reference <= 1e-6 * peak:
        raise RegimeError(
            f"|phi_n0(0)|^2 = {reference:.3e} vanishes against the profile "
            f"peak {peak:.3e}; probe a different momentum")

    if propagator == "eigen":
        energies = basis.site_energies[rows] - basis.energy_offset
        phases = np.exp(-1j * np.outer(times, energies))
        amp0 = phases @ (coeffs.c * f)
        p0 = np.abs(amp0) ** 2
    else:
        if config is None:
            raise ConfigError("split-step recording needs the lattice config")
        psi = packet_wavefunction(coeffs, basis)
        grid = psi.grid
        bound = split_step_bound(grid, config)
        step = 0.5 * bound if dt_int is None else dt_int
        if step <= 0 or step > bound:
            raise ConfigError(f"dt_int={step:.3e} violates the stability "
                              f"bound {bound:.3e}")
        v = sample_potential(grid, config)
        k = 2.0 * np.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
        n_sub = max(1, math.ceil(dt / step))
        dte = dt / n_sub
        half_v = np.exp(-0.5j * v * dte)
        full_k = np.exp(-1j * (k * k) / (2.0 * config.reduced_mass) * dte)
        out = psi.amplitudes.astype(complex)
        scale = grid.dx / math.sqrt(2.0 * math.pi)
        p0 = np.empty(n_samples)
        p0[0] = abs(out.sum() * scale) ** 2
        for i in range(1, n_samples):
            for _ in range(n_sub):
                out = half_v * np.fft.ifft(full_k * np.fft.fft(half_v * out))
            p0[i] = abs(out.sum() * scale) ** 2

    q0 = p0 / reference - 1.0
    signal = Signal(samples=q0, dt=dt)
    if full_output:
        return signal, {"p0": p0, "reference": reference, "times": times}
    return signal


def record_mean_position(coeffs: PacketCoefficients, basis: SiteBasis,
                         t_total: float, dt: float) -> Signal:
    """Mean position x(t) under eigenbasis evolution (cross-check observable)."""
    n_samples = int(round(t_total / dt)) + 1
    times = np.arange(n_samples) * dt
    rows = np.array([basis.index(int(n)) for n in coeffs.sites])
    energies = basis.site_energies[rows] - basis.energy_offset
    states = basis.states[rows]
    x_weighted = states * basis.grid.x
    # <x>(t) = sum_{a,b} conj(g_a) g_b M_ab with g = c e^{-i e t}
    m_ab = (x_weighted @ states.T) * basis.grid.dx
    xbar = np.empty(n_samples)
    for i, t in enumerate(times):
        g = coeffs.c * np.exp(-1j * energies * t)
        xbar[i] = float(np.real(np.conj(g) @ (m_ab @ g)))
    return Signal(samples=xbar, dt=dt)


def mean_position_model(coeffs: PacketCoefficients, basis: SiteBasis,
                        times: np.ndarray, m_max: int = 3) -> np.ndarray:
    """Truncated coherence expansion of <x>(t):

        <x>(t) ~ sum_n |c_n|^2 X_0(n)
               + sum_{m=1..m_max} X_m sum_n 2 Re[c_n conj(c_{n-m}) e^{-i w t}],

    with measured Bohr frequencies w = eps_n - eps_{n-m} and the fold-averaged
    couplings X_m. Cross-check for the exact grid evaluation.
    """
    cmap = coeffs.as_dict()
    static = 0.0
    for n, c in cmap.items():
        static += abs(c) ** 2 * float(basis.x_diag[basis.index(n)])
    out = np.full(times.shape, static, dtype=float)
    site_range = (int(coeffs.sites.min()), int(coeffs.sites.max()))
    for m in range(1, m_max + 1):
        x_m, _, _, _ = basis.dipole_coupling(m, site_range=site_range)
        for n, c in cmap.items():
            other = cmap.get(n - m)
            if other is None:
                continue
            omega = basis.energy(n) - basis.energy(n - m)
            coh = c * np.conj(other)
            out += 2.0 * x_m * np.real(coh * np.exp(-1j * omega * times))
    return out
