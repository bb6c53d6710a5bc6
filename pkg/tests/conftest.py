"""Shared fixtures.

Two lattices are solved once per session: a small one (fast, most unit
tests) and the full default configuration (acceptance runs). Everything
downstream of an eigensolve hangs off these.
"""

import time

import numpy as np
import pytest

import parabloch as pb


@pytest.fixture(scope="session")
def small_lattice():
    return pb.LatticeConfig(points_per_period=48, n_min=-18, n_max=18)


@pytest.fixture(scope="session")
def small_bundle(small_lattice):
    basis, spectrum, classification = pb.build_site_basis(small_lattice)
    return {"lattice": small_lattice, "basis": basis, "spectrum": spectrum,
            "classification": classification}


@pytest.fixture(scope="session")
def small_packet(small_bundle):
    coeffs, psi0 = pb.synthesize_packet(small_bundle["basis"], 8, 3.0,
                                        np.pi / 4.0)
    return coeffs, psi0


@pytest.fixture(scope="session")
def small_signal(small_bundle, small_packet):
    coeffs, _ = small_packet
    signal, extra = pb.record_q_signal(coeffs, small_bundle["basis"],
                                       40.0 * np.pi, 2.0 * np.pi / 512.0,
                                       full_output=True)
    return signal, extra


@pytest.fixture(scope="session")
def default_bundle():
    lat = pb.LatticeConfig()
    t0 = time.perf_counter()
    basis, spectrum, classification = pb.build_site_basis(lat)
    return {"lattice": lat, "basis": basis, "spectrum": spectrum,
            "classification": classification,
            "solve_seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def reference_run(default_bundle):
    """The headline configuration: n0=21, delta_n=7, phase gradient pi/4,
    T = 40 pi at dt = 2 pi / 512 on the default lattice."""
    basis = default_bundle["basis"]
    coeffs, psi0 = pb.synthesize_packet(basis, 21, 7.0, np.pi / 4.0)
    t0 = time.perf_counter()
    signal, extra = pb.record_q_signal(coeffs, basis, 40.0 * np.pi,
                                       2.0 * np.pi / 512.0, full_output=True)
    return {"basis": basis, "coeffs": coeffs, "psi0": psi0,
            "signal": signal, "extra": extra,
            "lattice": default_bundle["lattice"],
            "solve_seconds": default_bundle["solve_seconds"],
            "record_seconds": time.perf_counter() - t0}
