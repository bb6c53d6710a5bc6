"""Banded diagonalization of the lattice Hamiltonian, state classification,
parity-doublet pairing, and construction of the site-localized basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig_banded
from scipy.linalg import LinAlgError

from .config import LatticeConfig
from .errors import ConfigError, RegimeError
from .lattice import SpatialGrid, GridWavefunction, build_grid, sample_potential, \
    fourier_amplitudes

# Classification thresholds: the folded position spread must stay below one
# lattice period and the probability mass within one period of the host well
# must dominate. At the calibrated operating point the ground well band sits
# above 0.986 window mass and the first excited (partially hybridized) band
# below 0.938, so 0.96 separates them with margin on both sides.
SIGMA_MAX = 1.0
WINDOW_MASS_MIN = 0.96

DIPOLE_M_MAX = 3


def build_hamiltonian(grid: SpatialGrid, config: LatticeConfig) -> np.ndarray:
    """Discretized H = -(1/2 M*) d2/dx2 + V(x) in symmetric banded form.

    Kinetic term uses the 5-point central stencil (O(dx^4)); the returned
    array is the scipy upper-banded layout (3 rows: second diagonal, first
    diagonal, main diagonal), suitable for eig_banded(lower=False).
    Hard-wall boundaries: the stencil is simply truncated at the edges.
    """
    v = sample_potential(grid, config)
    scale = 1.0 / (24.0 * config.reduced_mass * grid.dx ** 2)
    ab = np.zeros((3, grid.n_points))
    ab[2] = v + 30.0 * scale
    ab[1, 1:] = -16.0 * scale
    ab[0, 2:] = 1.0 * scale
    return ab


@dataclass
class EigenSpectrum:
    """Lowest eigenpairs of the banded Hamiltonian.

    states columns are L2-normalized (sum |psi|^2 dx = 1), energies ascending;
    quasi-degenerate ties are ordered symmetric-parity first. epsilon_L is
    filled in by classify_states.
    """

    grid: SpatialGrid
    energies: np.ndarray
    states: np.ndarray   # (n_points, n_states)
    epsilon_L: float | None = None

    @property
    def n_states(self) -> int:
        return self.energies.size

    def state(self, k: int) -> GridWavefunction:
        return GridWavefunction(self.grid, self.states[:, k].astype(complex))


def parity_overlap(grid: SpatialGrid, amplitudes: np.ndarray) -> float:
    """<psi(x)|psi(-x)> dx; +1 symmetric, -1 antisymmetric.

    Requires a symmetric grid, where reflection is an exact index reversal.
    """
    if not grid.is_symmetric:
        raise ConfigError("parity analysis needs a symmetric grid "
                          "(n_min == -n_max)")
    return float(np.real(np.conj(amplitudes) @ amplitudes[::-1]) * grid.dx)


def solve_spectrum(hamiltonian: np.ndarray, grid: SpatialGrid,
                   k: int | None = None, e_max: float | None = None
                   ) -> EigenSpectrum:
    """Lowest eigenpairs: the k lowest, or all below e_max (exactly one of
    the two must be given). Deterministic for fixed inputs."""
    if (k is None) == (e_max is None):
        raise ConfigError("solve_spectrum needs exactly one of k / e_max")
    if k is not None and k > grid.n_points:
        raise ConfigError(f"requested {k} states from a {grid.n_points}-point grid")
    try:
        if k is not None:
            w, v = eig_banded(hamiltonian, lower=False, select="i",
                              select_range=(0, k - 1))
        else:
            # potential floor: kinetic stencil is positive semi-definite, so
            # min V bounds the spectrum from below (diag = V + 30*scale,
            # second off-diagonal = scale)
            scale = float(hamiltonian[0, 2])
            floor = float(np.min(hamiltonian[2])) - 30.0 * scale - 1.0
            w, v = eig_banded(hamiltonian, lower=False, select="v",
                              select_range=(floor, e_max))
    except LinAlgError as exc:
        raise RegimeError(f"banded eigensolver failed to converge: {exc}") from exc
    v = v / math.sqrt(grid.dx)   # unit vectors -> unit L2 norm on the grid
    spectrum = EigenSpectrum(grid=grid, energies=w, states=v)
    if grid.is_symmetric:
        _order_ties_symmetric_first(spectrum)
    return spectrum


def _order_ties_symmetric_first(spectrum: EigenSpectrum) -> None:
    """Within numerically tied pairs, put the symmetric state first."""
    w = spectrum.energies
    tol = 1e-9 * max(1.0, float(np.max(np.abs(w))))
    for i in range(len(w) - 1):
        if w[i + 1] - w[i] < tol:
            p_lo = parity_overlap(spectrum.grid, spectrum.states[:, i])
            p_hi = parity_overlap(spectrum.grid, spectrum.states[:, i + 1])
            if p_hi > p_lo + 1e-12:
                spectrum.states[:, [i, i + 1]] = spectrum.states[:, [i + 1, i]]
                spectrum.energies[[i, i + 1]] = spectrum.energies[[i + 1, i]]


@dataclass
class Classification:
    """Per-state localization labels and the threshold energies.

    epsilon_L: the highest energy below which every computed state is
    localized (None when the lowest state is already delocalized).
    oscillator_onset: lowest delocalized energy above the lattice depth,
    i.e. the start of the trap-dominated branch (None if absent).
    """

    localized: np.ndarray      # bool per state
    wells: np.ndarray          # host well |n| per state (localized states)
    sigma_folded: np.ndarray   # stddev of |x|
    window_mass: np.ndarray    # probability within one period of the host well
    epsilon_L: float | None
    oscillator_onset: float | None

    @property
    def labels(self) -> np.ndarray:
        return np.where(self.localized, "localized", "delocalized")


def classify_states(spectrum: EigenSpectrum, config: LatticeConfig,
                    sigma_max: float = SIGMA_MAX,
                    mass_min: float = WINDOW_MASS_MIN) -> Classification:
    """Label states localized/delocalized.

    A state is localized when the spread of |x| is below one lattice period
    and at least mass_min of its probability lies within one period of the
    host well w = round(<|x|>). |x| (rather than x) makes the metric
    indifferent to the parity mixing inside quasi-degenerate doublets, which
    live in wells -n and +n simultaneously. Fills spectrum.epsilon_L.
    """
    prob = np.abs(spectrum.states) ** 2
    weights = prob / prob.sum(axis=0)
    absx = np.abs(spectrum.grid.x)
    mean_absx = absx @ weights
    var = np.maximum((absx * absx) @ weights - mean_absx ** 2, 0.0)
    sigma = np.sqrt(var)
    wells = np.rint(mean_absx).astype(int)

    n_states = spectrum.n_states
    mass = np.empty(n_states)
    for k in range(n_states):
        w = wells[k]
        if w == 0:
            # the axis well has no |x| < 0 side; cover wells -1..1 fully
            sel = absx <= 1.5
        else:
            sel = (absx >= w - 1.0) & (absx <= w + 1.0)
        mass[k] = weights[sel, k].sum()

    localized = (sigma < sigma_max) & (mass >= mass_min)
    deloc_e = spectrum.energies[~localized]
    epsilon_l = float(deloc_e.min()) if deloc_e.size else None
    above = deloc_e[deloc_e > config.v0]
    onset = float(above.min()) if above.size else None
    spectrum.epsilon_L = epsilon_l
    return Classification(localized=localized, wells=wells, sigma_folded=sigma,
                          window_mass=mass, epsilon_L=epsilon_l,
                          oscillator_onset=onset)


@dataclass
class ParityDoublet:
    """Quasi-degenerate symmetric/antisymmetric pair of well pair +-n."""

    n: int
    e_s: float
    e_a: float
    phi_s: np.ndarray
    phi_a: np.ndarray

    @property
    def splitting(self) -> float:
        return abs(self.e_s - self.e_a)

    @property
    def mean_energy(self) -> float:
        return 0.5 * (self.e_s + self.e_a)


def pair_parities(spectrum: EigenSpectrum, classification: Classification,
                  well_range: tuple[int, int] | None = None
                  ) -> list[ParityDoublet]:
    """Match localized states into S/A doublets per well pair.

    The two states of a doublet can come out of the solver parity-mixed when
    their splitting is below the eigenvalue resolution; the 2x2 reflection
    operator restricted to the doublet subspace is re-diagonalized, which
    recovers clean parity states in every case. Wells holding any number of
    localized states other than two signal a lattice outside the
    one-doublet-per-well regime and raise RegimeError. The axis well n=0
    (an unpaired singlet by symmetry) is skipped.
    """
    grid = spectrum.grid
    if not grid.is_symmetric:
        raise ConfigError("parity pairing needs a symmetric grid")
    loc_idx = np.where(classification.localized)[0]
    if loc_idx.size == 0:
        raise RegimeError("no localized states found: lattice too shallow for "
                          "bound doublets (or grid too small)")
    by_well: dict[int, list[int]] = {}
    for k in loc_idx:
        by_well.setdefault(int(classification.wells[k]), []).append(int(k))

    lo, hi = well_range if well_range is not None else (1, max(by_well))
    doublets = []
    for n in range(max(lo, 1), hi + 1):
        members = by_well.get(n, [])
        if len(members) != 2:
            raise RegimeError(
                f"well pair +-{n} holds {len(members)} localized state(s), "
                f"expected one S/A doublet: single-doublet regime violated")
        i, j = members
        u = spectrum.states[:, i]
        v = spectrum.states[:, j]
        # reflection operator in the doublet subspace (index reversal)
        dxw = grid.dx
        r = np.array([[u @ u[::-1], u @ v[::-1]],
                      [v @ u[::-1], v @ v[::-1]]]) * dxw
        evals, evecs = np.linalg.eigh(r)   # ascending: [-1, +1]
        if not (evals[0] < -0.9 and evals[1] > 0.9):
            raise RegimeError(
                f"well pair +-{n}: doublet subspace is not parity-clean "
                f"(reflection eigenvalues {evals[0]:+.3f}, {evals[1]:+.3f})")
        phi_a = evecs[0, 0] * u + evecs[1, 0] * v
        phi_s = evecs[0, 1] * u + evecs[1, 1] * v
        # energies follow the states through the rotation
        e_i, e_j = spectrum.energies[i], spectrum.energies[j]
        e_a = float(evecs[0, 0] ** 2 * e_i + evecs[1, 0] ** 2 * e_j)
        e_s = float(evecs[0, 1] ** 2 * e_i + evecs[1, 1] ** 2 * e_j)
        doublets.append(ParityDoublet(n=n, e_s=e_s, e_a=e_a,
                                      phi_s=phi_s, phi_a=phi_a))
    return doublets


@dataclass
class SiteBasis:
    """Site-localized basis phi_n = (phi_n^S +- phi_n^A)/sqrt(2).

    States are rows of `states` aligned with `sites` (negative and positive
    n). Energies are doublet means; delta_s/delta_a are the doublet offsets
    from the quadratic fit e = n^2/2 + energy_offset. f0[n] is the momentum
    amplitude phi_n(p=0). Sign conventions: phi_n has positive mean position
    for n > 0, and a positive p=0 amplitude for every site, so coefficient
    phases recovered downstream are well defined.
    """

    grid: SpatialGrid
    sites: np.ndarray            # ordered, e.g. [-34..-1, 1..34]
    states: np.ndarray           # (n_sites, n_points)
    site_energies: np.ndarray    # per entry of sites (doublet mean)
    energy_offset: float         # fitted constant C in e_n = n^2/2 + C
    delta_s: np.ndarray          # per positive n (ordered as doublet_sites)
    delta_a: np.ndarray
    doublet_sites: np.ndarray    # positive n list the deltas refer to
    x_diag: np.ndarray           # <phi_n|x|phi_n> per entry of sites
    f0: np.ndarray               # phi_n(p=0), real-positive by convention

    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {int(n): i for i, n in enumerate(self.sites)}

    def has(self, n: int) -> bool:
        return int(n) in self._index

    def index(self, n: int) -> int:
        try:
            return self._index[int(n)]
        except KeyError:
            raise ConfigError(f"site {n} not in basis (sites "
                              f"{self.sites.min()}..{self.sites.max()})") from None

    def state(self, n: int) -> GridWavefunction:
        return GridWavefunction(self.grid, self.states[self.index(n)].astype(complex))

    def energy(self, n: int) -> float:
        return float(self.site_energies[self.index(n)])

    def momentum_profile(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return fourier_amplitudes(self.grid, self.states[self.index(n)])

    def splitting(self, n: int) -> float:
        i = int(np.searchsorted(self.doublet_sites, abs(int(n))))
        if i >= self.doublet_sites.size or self.doublet_sites[i] != abs(int(n)):
            raise ConfigError(f"no doublet data for site {n}")
        return abs(float(self.delta_s[i] - self.delta_a[i]))

    def positive_sites(self) -> np.ndarray:
        return self.sites[self.sites > 0]

    def dipole_coupling(self, m: int, site_range: tuple[int, int] | None = None
                        ) -> tuple[float, float, np.ndarray, np.ndarray]:
        """X_m = <phi_n|x|phi_{n+m}> over positive n.

        Returns (mean, relative spread, n values, X values); site_range
        restricts the averaging window.
        """
        if not 0 <= m <= DIPOLE_M_MAX:
            raise ConfigError(f"dipole order m={m} outside 0..{DIPOLE_M_MAX}")
        x = self.grid.x
        ns, vals = [], []
        for n in self.positive_sites():
            if not self.has(n + m):
                continue
            if site_range is not None and not (site_range[0] <= n <= site_range[1]):
                continue
            a = self.states[self.index(int(n))]
            b = self.states[self.index(int(n) + m)]
            ns.append(int(n))
            vals.append(float(a @ (x * b) * self.grid.dx))
        ns = np.array(ns)
        vals = np.array(vals)
        if vals.size == 0:
            raise ConfigError(f"no site pairs available for dipole order m={m}")
        if m == 0:
            # X_0(n) tracks n itself; the meaningful statistic is <x> - n
            rel = vals - ns
            mean = float(np.mean(rel))
            spread = float(np.max(np.abs(rel - mean))) if vals.size > 1 else 0.0
            return mean, spread, ns, vals
        mean = float(np.mean(vals))
        spread = float(np.max(np.abs(vals - mean)) / abs(mean)) if vals.size > 1 else 0.0
        return mean, spread, ns, vals


def make_site_basis(doublets: list[ParityDoublet], grid: SpatialGrid) -> SiteBasis:
    """Recombine doublets into site states phi_{+-n} with fixed signs."""
    if not doublets:
        raise RegimeError("cannot build a site basis from zero doublets")
    x = grid.x
    dxw = grid.dx
    pos_n = np.array([d.n for d in doublets])
    order = np.argsort(pos_n)
    doublets = [doublets[i] for i in order]
    pos_n = pos_n[order]

    # constant of e_n = n^2/2 + C by least squares over doublet means
    means = np.array([d.mean_energy for d in doublets])
    c_fit = float(np.mean(means - pos_n.astype(float) ** 2 / 2.0))
    delta_s = np.array([d.e_s for d in doublets]) - pos_n ** 2 / 2.0 - c_fit
    delta_a = np.array([d.e_a for d in doublets]) - pos_n ** 2 / 2.0 - c_fit

    sites = np.concatenate([-pos_n[::-1], pos_n])
    states = np.empty((sites.size, grid.n_points))
    energies = np.empty(sites.size)
    for i, d in enumerate(doublets):
        plus = (d.phi_s + d.phi_a) / math.sqrt(2.0)
        if float(plus @ (x * plus) * dxw) < 0:
            plus = (d.phi_s - d.phi_a) / math.sqrt(2.0)
        if plus.sum() < 0:
            plus = -plus
        minus = plus[::-1]          # reflection: phi_{-n}(x) = phi_n(-x)
        i_plus = sites.size // 2 + i
        i_minus = sites.size // 2 - 1 - i
        states[i_plus] = plus
        states[i_minus] = minus
        energies[i_plus] = energies[i_minus] = d.mean_energy

    f0 = states.sum(axis=1) * dxw / math.sqrt(2.0 * math.pi)
    x_diag = (states * (x * states)).sum(axis=1) * dxw
    return SiteBasis(grid=grid, sites=sites, states=states,
                     site_energies=energies, energy_offset=c_fit,
                     delta_s=delta_s, delta_a=delta_a, doublet_sites=pos_n,
                     x_diag=x_diag, f0=f0)


def check_translation_invariance(basis: SiteBasis, n: int, m: int) -> float:
    """|<phi_n(x) | phi_m(x - (n-m))>| via integer-period resampling."""
    ppp = round(1.0 / basis.grid.dx)
    shifted = np.roll(basis.states[basis.index(m)], (n - m) * ppp)
    return abs(float(shifted @ basis.states[basis.index(n)] * basis.grid.dx))


def bloch_frequency(n: int) -> float:
    """Energy drop between neighbor sites n and n-1: omega_B(n) = n - 1/2."""
    return n - 0.5


def default_energy_ceiling(config: LatticeConfig) -> float:
    """Solver ceiling covering every well in the grid plus trap margin."""
    n_top = max(abs(config.n_min), abs(config.n_max))
    curvature = (2.0 * math.pi) ** 2 * config.v0 + 1.0
    omega_well = math.sqrt(curvature / config.reduced_mass)
    return 0.5 * max(n_top - 2, 1) ** 2 - config.v0 + 3.0 * omega_well


def build_spectrum(config: LatticeConfig, e_max: float | None = None
                   ) -> tuple[EigenSpectrum, Classification]:
    """Grid + Hamiltonian + solve + classify in one call."""
    grid = build_grid(config)
    h = build_hamiltonian(grid, config)
    if e_max is None:
        e_max = default_energy_ceiling(config)
    spectrum = solve_spectrum(h, grid, e_max=e_max)
    classification = classify_states(spectrum, config)
    return spectrum, classification


def build_site_basis(config: LatticeConfig,
                     well_range: tuple[int, int] | None = None
                     ) -> tuple[SiteBasis, EigenSpectrum, Classification]:
    """Full chain from config to site basis."""
    spectrum, classification = build_spectrum(config)
    doublets = pair_parities(spectrum, classification, well_range=well_range)
    return make_site_basis(doublets, spectrum.grid), spectrum, classification


def calibrate_reduced_mass(v0: float, masses: np.ndarray | None = None,
                           site_range: tuple[int, int] = (10, 32),
                           points_per_period: int = 48,
                           splitting_tolerance: float = 1e-2,
                           full_output: bool = False):
    """Scan the reduced mass for the single-doublet-per-well regime.

    A mass passes when every well in site_range holds exactly one localized
    S/A doublet and each splitting satisfies |delta_S - delta_A| <
    splitting_tolerance * omega_B(n). Returns the geometric midpoint of the
    largest contiguous passing window (and the scan report with
    full_output=True). Raises RegimeError when nothing passes.
    """
    if v0 <= 0:
        raise RegimeError("calibration needs v0 > 0: no lattice wells to bind "
                          "doublets")
    if masses is None:
        masses = np.geomspace(0.04, 1.6, 17)
    masses = np.asarray(masses, dtype=float)
    lo, hi = site_range
    n_top = hi + 5
    rows = []
    passed = np.zeros(masses.size, dtype=bool)
    for i, m in enumerate(masses):
        config = LatticeConfig(v0=v0, reduced_mass=float(m),
                               points_per_period=points_per_period,
                               n_min=-n_top, n_max=n_top)
        try:
            spectrum, classification = build_spectrum(config)
            doublets = pair_parities(spectrum, classification,
                                     well_range=site_range)
        except RegimeError as exc:
            rows.append({"reduced_mass": float(m), "passed": False,
                         "reason": str(exc)})
            continue
        bad = [d.n for d in doublets
               if d.splitting >= splitting_tolerance * bloch_frequency(d.n)]
        if bad:
            rows.append({"reduced_mass": float(m), "passed": False,
                         "reason": f"splitting above tolerance at wells {bad}"})
            continue
        passed[i] = True
        rows.append({"reduced_mass": float(m), "passed": True, "reason": ""})

    best_len, best_start = 0, -1
    run_start = None
    for i, ok in enumerate(list(passed) + [False]):
        if ok and run_start is None:
            run_start = i
        elif not ok and run_start is not None:
            if i - run_start > best_len:
                best_len, best_start = i - run_start, run_start
            run_start = None
    if best_len == 0:
        table = "; ".join(f"M*={r['reduced_mass']:.4g}: {r['reason']}"
                          for r in rows)
        raise RegimeError(f"no reduced mass in the scan passes the "
                          f"single-doublet criterion at v0={v0}: {table}")
    window = (float(masses[best_start]), float(masses[best_start + best_len - 1]))
    chosen = float(math.sqrt(window[0] * window[1]))
    if full_output:
        report = {"v0": v0, "scan": rows, "window": window,
                  "reduced_mass": chosen, "site_range": list(site_range),
                  "splitting_tolerance": splitting_tolerance}
        return chosen, report
    return chosen
