"""Spectrum, classification, parity pairing, site basis, calibration."""

import math

import numpy as np
import pytest

import parabloch as pb
from parabloch.eigensolver import (build_hamiltonian, default_energy_ceiling,
                                   parity_overlap, solve_spectrum)
from parabloch.errors import ConfigError, RegimeError
from parabloch.lattice import build_grid


def test_bloch_frequency_values():
    assert pb.bloch_frequency(21) == 20.5
    assert pb.bloch_frequency(1) == 0.5


def test_harmonic_limit_spacing():
    # v0 = 0 leaves the pure parabola: level spacing omega = sqrt(1/M*)
    lat = pb.LatticeConfig(v0=0.0, reduced_mass=0.25, points_per_period=32,
                           n_min=-14, n_max=14)
    grid = build_grid(lat)
    h = build_hamiltonian(grid, lat)
    spec = solve_spectrum(h, grid, k=25)
    spacing = np.diff(spec.energies)
    omega = math.sqrt(1.0 / lat.reduced_mass)
    np.testing.assert_allclose(spacing, omega, rtol=1e-5)
    assert spec.energies[0] == pytest.approx(0.5 * omega, rel=1e-5)


def test_spectrum_orthonormal_and_sorted(small_bundle):
    spec = small_bundle["spectrum"]
    # ascending up to the symmetric-first tie ordering inside degenerate
    # doublets, which may swap states split below 1e-8
    assert np.all(np.diff(spec.energies) >= -1e-8)
    k = min(40, spec.n_states)
    sub = spec.states[:, :k]
    gram = (sub.T @ sub) * spec.grid.dx
    np.testing.assert_allclose(gram, np.eye(k), atol=1e-8)


def test_ground_state_energy(small_bundle):
    # deep-well oracle: harmonic zero point plus the first quartic
    # correction of the cosine well, E0 ~ -v0 + omega/2 - v0 (2 pi)^4/8 s^2
    # with s = 1/(2 M* omega) the ground-state spread
    lat = small_bundle["lattice"]
    omega = math.sqrt(((2 * math.pi) ** 2 * lat.v0 + 1.0)
                      / lat.reduced_mass)
    spread_sq = 1.0 / (2.0 * lat.reduced_mass * omega)
    quartic = lat.v0 * (2.0 * math.pi) ** 4 / 8.0 * spread_sq ** 2
    e0 = small_bundle["spectrum"].energies[0]
    assert e0 == pytest.approx(-lat.v0 + 0.5 * omega - quartic, rel=0.02)


def test_solve_spectrum_argument_check(small_bundle):
    lat = small_bundle["lattice"]
    grid = build_grid(lat)
    h = build_hamiltonian(grid, lat)
    with pytest.raises(ConfigError):
        solve_spectrum(h, grid)                 # neither k nor e_max
    with pytest.raises(ConfigError):
        solve_spectrum(h, grid, k=5, e_max=0.0)  # both


def test_classification_bands(small_bundle):
    cls = small_bundle["classification"]
    spec = small_bundle["spectrum"]
    # every state below epsilon_L is localized, by construction of epsilon_L
    assert cls.epsilon_L is not None
    below = spec.energies < cls.epsilon_L
    assert np.all(cls.localized[below])
    # both kinds coexist above it
    above = ~below
    assert np.any(cls.localized[above])
    assert np.any(~cls.localized[above])


def test_oscillator_onset_oracle(small_bundle):
    # the trap-dominated branch starts roughly one well spacing above the
    # lattice depth: onset ~ v0 + 6 within 2%
    cls = small_bundle["classification"]
    v0 = small_bundle["lattice"].v0
    assert cls.oscillator_onset == pytest.approx(v0 + 6.0, rel=0.02)


def test_parity_doublets(small_bundle):
    doublets = pb.pair_parities(small_bundle["spectrum"],
                                small_bundle["classification"])
    wells = sorted(d.n for d in doublets)
    # exactly one doublet per well, no gaps, starting at well 1
    assert wells == list(range(1, wells[-1] + 1))
    # sign of e_a - e_s is not asserted: repulsion from the axis singlet can
    # push the symmetric branch above the antisymmetric one at well 1
    for d in doublets:
        assert d.splitting == abs(d.e_s - d.e_a)
        assert parity_overlap(small_bundle["spectrum"].grid, d.phi_s) \
            == pytest.approx(1.0, abs=1e-9)
        assert parity_overlap(small_bundle["spectrum"].grid, d.phi_a) \
            == pytest.approx(-1.0, abs=1e-9)


def test_doublet_splittings_shrink(small_bundle):
    doublets = {d.n: d for d in pb.pair_parities(
        small_bundle["spectrum"], small_bundle["classification"])}
    # tunneling is suppressed by the tilt: splittings fall with n and are
    # tiny relative to the local Bloch frequency away from the axis
    for n in range(3, 14):
        assert doublets[n].splitting < 1e-2 * pb.bloch_frequency(n)
    assert doublets[5].splitting < doublets[2].splitting


def test_site_basis_conventions(small_bundle):
    basis = small_bundle["basis"]
    x = basis.grid.x
    dx = basis.grid.dx
    for n in (3, 9, 14):
        phi = basis.states[basis.index(n)]
        mean_x = float(phi @ (x * phi) * dx)
        assert mean_x == pytest.approx(n, abs=0.05)
        assert float(np.sum(phi)) > 0.0
        # mirror site is the exact reflection
        np.testing.assert_allclose(basis.states[basis.index(-n)],
                                   phi[::-1], atol=1e-12)
        assert basis.energy(n) == basis.energy(-n)


def test_site_energies_quadratic(small_bundle):
    basis = small_bundle["basis"]
    for n in range(3, 14):
        resid = basis.energy(n) - (0.5 * n * n + basis.energy_offset)
        assert abs(resid) < 0.01 * pb.bloch_frequency(n)


def test_translation_invariance(small_bundle):
    basis = small_bundle["basis"]
    for n in range(4, 13):
        assert pb.check_translation_invariance(basis, n + 1, n) > 0.99
        assert pb.check_translation_invariance(basis, n + 2, n) > 0.98


def test_zero_momentum_uniformity(small_bundle):
    basis = small_bundle["basis"]
    rows = [basis.index(n) for n in range(3, 14)]
    f0 = basis.f0[rows]
    assert np.all(f0 > 0)
    assert np.max(np.abs(f0 / f0[5] - 1.0)) < 0.05


def test_dipole_couplings(small_bundle):
    basis = small_bundle["basis"]
    _, _, ns, vals = basis.dipole_coupling(0, (3, 13))
    assert np.max(np.abs(vals - ns)) < 0.05
    mean1, _, _, _ = basis.dipole_coupling(1, (3, 13))
    assert 0.0 < mean1 < 0.2
    with pytest.raises(ConfigError):
        basis.dipole_coupling(4)


def test_default_energy_ceiling_covers_packet_sites():
    lat = pb.LatticeConfig()
    ceiling = default_energy_ceiling(lat)
    # must clear the headline packet's top site by a margin
    assert ceiling > 0.5 * 34.0 ** 2


def test_shallow_lattice_has_no_site_basis():
    lat = pb.LatticeConfig(v0=5.0, points_per_period=48, n_min=-10, n_max=10)
    with pytest.raises(RegimeError):
        pb.build_site_basis(lat)


def test_calibration_contract():
    # reduced scan around the frozen default: the midpoint of the passing
    # masses is recommended; hopeless masses are rejected with a report
    masses = np.array([0.05, pb.DEFAULT_REDUCED_MASS, 1.5])
    best, report = pb.calibrate_reduced_mass(
        90.0, masses=masses, site_range=(8, 14), points_per_period=40,
        full_output=True)
    assert best == pytest.approx(pb.DEFAULT_REDUCED_MASS, rel=1e-9)
    assert len(report["scan"]) == 3
    assert [r["passed"] for r in report["scan"]] == [False, True, False]
    with pytest.raises(RegimeError):
        pb.calibrate_reduced_mass(90.0, masses=np.array([50.0]),
                                  site_range=(8, 14), points_per_period=40)
    with pytest.raises(RegimeError):
        pb.calibrate_reduced_mass(0.0)


def test_lattice_hash_tracks_fields():
    a = pb.lattice_hash(pb.LatticeConfig())
    b = pb.lattice_hash(pb.LatticeConfig(v0=91.0))
    c = pb.lattice_hash(pb.LatticeConfig())
    assert a != b
    assert a == c
