import numpy as np
import pytest

from cavity_register.entangle import (ErrorBudget, PhotonEnvelope, TwoQubitState,
                                      apply_error_channels, chirp_visibility,
                                      coherence_fidelity, fidelity_for_slots,
                                      fidelity_with_bell, ideal_bell_state,
                                      single_pair_state, storage_time)
from cavity_register.tomography import MATCHED_BASES, joint_probabilities

OMEGA_L = 2 * np.pi * 100e3
UNIFORM = PhotonEnvelope.uniform()
PRESET = PhotonEnvelope.front_peaked()


def stokes_fidelity(state):
    """Independent fidelity path: correlation combination from Born probabilities."""
    s = {}
    for basis in MATCHED_BASES:
        p = joint_probabilities(state, basis)
        s[basis.axis] = p[0, 0] - p[0, 1] - p[1, 0] + p[1, 1]
    return 0.25 * (1.0 + s["X"] + s["Y"] - s["Z"])


def random_state(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = a @ a.conj().T
    return TwoQubitState(rho / np.trace(rho).real)


def test_ideal_bell_fidelity_and_purity():
    bell = ideal_bell_state()
    assert fidelity_with_bell(bell) == pytest.approx(1.0, abs=1e-12)
    assert np.trace(bell.rho).real == pytest.approx(1.0, abs=1e-12)
    eigs = np.sort(np.linalg.eigvalsh(bell.rho))
    assert eigs[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(eigs[:-1]) < 1e-12)


def test_ideal_bell_marginals_maximally_mixed():
    bell = ideal_bell_state()
    for marginal in (bell.atom_marginal(), bell.photon_marginal()):
        assert np.allclose(marginal, np.eye(2) / 2.0, atol=1e-12)


def test_chirp_visibility_no_splitting():
    assert chirp_visibility(UNIFORM, 0.0) == 1.0


def test_chirp_visibility_uniform_analytic():
    # rectangular window: V = |sinc|(w_L tau) = sin(pi/4) / (pi/4) at the defaults
    expected = np.sin(np.pi / 4) / (np.pi / 4)
    assert abs(chirp_visibility(UNIFORM, OMEGA_L) - expected) < 1e-6


def test_chirp_visibility_calibrated_preset():
    fidelity = 0.5 * (1.0 + chirp_visibility(PRESET, OMEGA_L))
    assert abs(fidelity - 0.962) <= 0.002
    assert abs(PRESET.total_acceptance - 0.85) < 0.01


def test_channels_identity_when_error_free():
    bell = ideal_bell_state()
    # all error magnitudes zero; coherence long enough that storage is negligible
    budget = ErrorBudget(larmor_frequency=0.0, spam_infidelity=0.0,
                         rotation_infidelity=0.0, polarization_infidelity=0.0,
                         coherence_time=1e6, readout_overhead=0.0)
    out = apply_error_channels(bell, budget, UNIFORM, (0, 1))
    assert np.max(np.abs(out.rho - bell.rho)) < 1e-10


def test_chirp_only_fidelity_uniform_window():
    budget = ErrorBudget(spam_infidelity=0.0, rotation_infidelity=0.0,
                         polarization_infidelity=0.0, coherence_time=1e6,
                         readout_overhead=0.0)
    out = apply_error_channels(ideal_bell_state(), budget, UNIFORM, (0, 1))
    expected = 0.5 * (1.0 + np.sin(np.pi / 4) / (np.pi / 4))
    assert abs(fidelity_with_bell(out) - expected) < 1e-6


def test_full_default_budget_single_atom():
    state = single_pair_state()
    assert abs(fidelity_with_bell(state) - 0.866) <= 0.015


def test_single_channel_reduces_fidelity_by_quoted_amount():
    for name in ("spam_infidelity", "rotation_infidelity", "polarization_infidelity"):
        kwargs = {"larmor_frequency": 0.0, "spam_infidelity": 0.0,
                  "rotation_infidelity": 0.0, "polarization_infidelity": 0.0,
                  "coherence_time": 1e9, "readout_overhead": 0.0}
        kwargs[name] = 0.021
        budget = ErrorBudget(**kwargs)
        out = apply_error_channels(ideal_bell_state(), budget, UNIFORM, (0, 1))
        assert fidelity_with_bell(out) == pytest.approx(1.0 - 0.021, abs=1e-9)


def test_channel_outputs_are_physical():
    rng = np.random.default_rng(5)
    for _ in range(60):
        budget = ErrorBudget(
            larmor_frequency=float(rng.uniform(0, 2 * np.pi * 300e3)),
            spam_infidelity=float(rng.uniform(0, 0.2)),
            rotation_infidelity=float(rng.uniform(0, 0.2)),
            polarization_infidelity=float(rng.uniform(0, 0.2)),
            coherence_time=float(rng.uniform(1e-4, 1e-2)),
            readout_overhead=float(rng.uniform(0, 3e-4)))
        n = int(rng.integers(1, 7))
        i = int(rng.integers(0, n))
        out = apply_error_channels(ideal_bell_state(), budget, PRESET, (i, n))
        rho = out.rho
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-10


def test_fidelity_matches_stokes_combination():
    rng = np.random.default_rng(8)
    states = [ideal_bell_state(), single_pair_state()]
    states += [random_state(rng) for _ in range(20)]
    for state in states:
        assert fidelity_with_bell(state) == pytest.approx(stokes_fidelity(state), abs=1e-12)


def test_sequence_ordering_and_six_atom_spread():
    fids = fidelity_for_slots(6)
    assert np.all(np.diff(fids) >= 0.0)  # earlier-addressed atoms fare worse
    spread = fids[-1] - fids[0]
    assert abs(spread - 0.030) <= 0.010


def test_invalid_slot():
    with pytest.raises(ValueError):
        apply_error_channels(ideal_bell_state(), ErrorBudget(), PRESET, (3, 3))
    with pytest.raises(ValueError):
        storage_time(ErrorBudget(), (-1, 4))


def test_storage_time_formula():
    budget = ErrorBudget()
    assert storage_time(budget, (0, 6)) == pytest.approx(
        6 * budget.time_per_atom + budget.readout_overhead)
    assert storage_time(budget, (5, 6)) == pytest.approx(
        budget.time_per_atom + budget.readout_overhead)


def test_coherence_fidelity_values():
    assert coherence_fidelity(0.0, 20e-3) == 1.0
    t = 99 * 15e-6
    # exp(-1.485/20) and exp(-1.485/100), halved and shifted
    assert coherence_fidelity(t, 20e-3) == pytest.approx(
        0.5 * (1 + np.exp(-t / 20e-3)), abs=1e-15)
    assert abs(coherence_fidelity(t, 20e-3) - 0.964) <= 0.003
    assert abs(coherence_fidelity(t, 100e-3) - 0.992) <= 0.003
    with pytest.raises(ValueError):
        coherence_fidelity(-1.0, 20e-3)
    with pytest.raises(ValueError):
        coherence_fidelity(1.0, 0.0)


def test_state_text_round_trip():
    state = single_pair_state()
    again = TwoQubitState.from_text(state.to_text())
    assert np.max(np.abs(again.rho - state.rho)) < 1e-10


def test_envelope_validation():
    with pytest.raises(ValueError):
        PhotonEnvelope(times=np.array([0.0, 1.0, 2.0]),
                       density=np.array([0.1, -0.2, 0.1]))
    with pytest.raises(ValueError):
        PhotonEnvelope.front_peaked(rise=-1e-9)


def test_budget_validation():
    with pytest.raises(ValueError):
        ErrorBudget(spam_infidelity=1.4)
    with pytest.raises(ValueError):
        ErrorBudget(coherence_time=0.0)
