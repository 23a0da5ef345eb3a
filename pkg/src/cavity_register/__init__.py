"""Desk-scale simulator of a cavity-coupled, tweezer-assembled atom register.

Subpackages by capability:

* cavity: cooperativity, photon-extraction probability, position-dependent
  detection efficiency, and the one-parameter efficiency-profile fit
* assembly: stochastic loading, optimal collision-free rearrangement,
  preparation Monte-Carlo, lattice-hopping and tracking statistics
* entangle: atom-photon pair states under the calibrated error budget
* tomography: click sampling, correlation estimates, phase-scan calibration
* multiplex: register-level efficiency, in-fiber inference, link rates
* config / experiments / cli: validated configuration, seeded runs with
  bit-stable CSV outputs, command-line front end
"""

__version__ = "0.1.0"

from .cavity import (AtomPosition, CavityParams, EfficiencyFactors, cooperativity,
                     coupling_at, detection_efficiency_at, fit_xi_to_profile,
                     intrinsic_photon_probability)
from .assembly import (ImprovementResult, Move, MovePlan, PrepConfig, PrepStats,
                       TargetPattern, TweezerGrid, improvement_factor, load_stochastic,
                       plan_rearrangement, simulate_hopping, simulate_preparation,
                       stale_address_fraction, stochastic_baseline)
from .entangle import (ErrorBudget, PhotonEnvelope, TwoQubitState, apply_error_channels,
                       chirp_visibility, coherence_fidelity, fidelity_for_slots,
                       fidelity_with_bell, ideal_bell_state, single_pair_state)
from .tomography import (BasisPair, ClickRecord, MATCHED_BASES, TomographyResult,
                         basis_switch_schedule, estimate, joint_probabilities,
                         phase_scan, sample_clicks)
from .multiplex import (LinkConfig, RegisterLayout, distribution_rate,
                        expected_photon_number, infer_fiber_efficiency,
                        multiplex_efficiency, register_report, simulate_attempts)
from .config import (CalibrationMissingError, ConfigError, ExperimentConfig,
                     load_config, validate_config)
from .experiments import EXPERIMENTS, RunManifest, check_outputs, run_experiment
