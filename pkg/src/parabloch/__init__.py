"""parabloch: local Bloch oscillations in a lattice-plus-parabola trap.

Forward model: eigenbasis of H = -(1/2M*) d2/dx2 - V0 cos(2 pi x) + x^2/2,
site-localized wavepackets, and the zero-momentum probability signal.
Inverse model: site amplitudes and relative phases recovered from the
Fourier components of that signal at the local Bloch frequencies.
"""

__version__ = "0.1.0"

from .config import (DEFAULT_DT, DEFAULT_REDUCED_MASS, DEFAULT_T_TOTAL,
                     DEFAULT_V0, EvolveConfig, LatticeConfig, PacketConfig,
                     ReconstructConfig, RunConfig, config_hash, lattice_hash,
                     load_config, parse_config_text)
from .errors import ConfigError, InvariantError, RegimeError, exit_code_for
from .lattice import (GridWavefunction, SpatialGrid, build_grid,
                      fourier_amplitudes, norm, normalized, sample_potential)
from .eigensolver import (Classification, EigenSpectrum, ParityDoublet,
                          SiteBasis, bloch_frequency, build_hamiltonian,
                          build_site_basis, build_spectrum,
                          calibrate_reduced_mass, check_translation_invariance,
                          classify_states, default_energy_ceiling,
                          make_site_basis, pair_parities, parity_overlap,
                          solve_spectrum)
from .dynamics import (MomentumWavefunction, PacketCoefficients, Signal,
                       evolve_eigenbasis, evolve_split_step, mean_position,
                       mean_position_model, momentum_transform,
                       packet_from_list, packet_wavefunction,
                       probability_at_momentum, record_mean_position,
                       record_q_signal, split_step_bound, synthesize_packet)
from .reconstruction import (AmplitudeRecovery, CoherenceTable, FoldCheck,
                             PhaseRecovery, ReconstructionResult,
                             TwoFoldAmplitudes, amplitudes_smooth,
                             amplitudes_two_fold, assemble_and_score,
                             bohr_frequency, coherence_table_from_packet,
                             estimate_component, extract_coherences,
                             fold_resolution_check, recover_amplitudes,
                             reconstruct_phases)

__all__ = [name for name in dir() if not name.startswith("_")]
