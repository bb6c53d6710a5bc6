"""Spatial grid, potential, and wavefunction container.

The model is a sinusoidal lattice superposed on a parabola,

    V(x) = -v0 cos(2 pi x) + x^2 / 2,

in dimensionless units (lattice period = 1, hbar = 1). Well minima sit at
integer x = n; site n = 0 is the parabola axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import LatticeConfig
from .errors import ConfigError


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centered grid covering [n_min - 1/2, n_max + 1/2].

    Cell-centering makes reflection x -> -x an exact index reversal on
    symmetric grids, which the parity analysis relies on.
    """

    x: np.ndarray
    dx: float
    n_min: int
    n_max: int

    def __post_init__(self):
        self.x.setflags(write=False)

    @property
    def n_points(self) -> int:
        return self.x.size

    @property
    def is_symmetric(self) -> bool:
        return self.n_min == -self.n_max

    def site_index(self, n: int) -> int:
        """Grid index closest to the minimum of well n."""
        if not (self.n_min <= n <= self.n_max):
            raise ConfigError(f"site {n} outside grid range "
                              f"[{self.n_min}, {self.n_max}]")
        return int(np.argmin(np.abs(self.x - n)))


def build_grid(config: LatticeConfig) -> SpatialGrid:
    """Build the grid for the configured site range.

    points_per_period cells per lattice period, integer period count
    n_max - n_min + 1; rejects densities below 16 and empty ranges.
    """
    config.validate()
    ppp = config.points_per_period
    periods = config.n_max - config.n_min + 1
    dx = 1.0 / ppp
    n = periods * ppp
    x = (config.n_min - 0.5) + (np.arange(n) + 0.5) * dx
    return SpatialGrid(x=x, dx=dx, n_min=config.n_min, n_max=config.n_max)


def sample_potential(grid: SpatialGrid, config: LatticeConfig) -> np.ndarray:
    """Pointwise V(x) = -v0 cos(2 pi x) + x^2/2 on the grid nodes."""
    return -config.v0 * np.cos(2.0 * np.pi * grid.x) + 0.5 * grid.x * grid.x


@dataclass
class GridWavefunction:
    """Complex amplitudes on a SpatialGrid; norm convention sum |psi|^2 dx = 1."""

    grid: SpatialGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        if self.amplitudes.shape != self.grid.x.shape:
            raise ConfigError(
                f"amplitude array length {self.amplitudes.shape} does not match "
                f"grid ({self.grid.x.shape})")


def norm(psi: GridWavefunction) -> float:
    """Probability integral sum |psi|^2 dx (1.0 for a normalized state)."""
    return float(np.sum(np.abs(psi.amplitudes) ** 2) * psi.grid.dx)


def normalized(psi: GridWavefunction) -> GridWavefunction:
    total = norm(psi)
    if total == 0.0:
        raise ValueError("cannot normalize the zero wavefunction")
    return GridWavefunction(psi.grid, psi.amplitudes / np.sqrt(total))


def fourier_amplitudes(grid: SpatialGrid, amplitudes: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Continuum-convention Fourier transform on the grid.

    Returns (p, psi_p) with psi_p(p) = (1/sqrt(2 pi)) sum psi(x) e^{+ipx} dx,
    p ascending. Parseval holds: sum |psi_p|^2 dp = sum |psi|^2 dx.
    """
    n = grid.n_points
    p = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.dx)
    # e^{+ip_j x_k} = e^{+ip_j x_0} e^{+2 pi i jk/n} -> inverse FFT ordering
    psi_p = (grid.dx * n / np.sqrt(2.0 * np.pi)) \
        * np.exp(1j * p * grid.x[0]) * np.fft.ifft(amplitudes)
    order = np.fft.fftshift(np.arange(n))
    return p[order], psi_p[order]
