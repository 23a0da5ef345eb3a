import numpy as np
import pytest

from cavity_register.entangle import (ErrorBudget, PhotonEnvelope, TwoQubitState,
                                      apply_error_channels, fidelity_with_bell,
                                      ideal_bell_state, single_pair_state)
from cavity_register.tomography import (BasisPair, MATCHED_BASES, MissingBasisError,
                                        UnmatchedBasisError, basis_switch_schedule,
                                        estimate, joint_probabilities, outcome_labels,
                                        phase_scan, rotated_conditional, sample_clicks)

BELL = ideal_bell_state()
MIXED = TwoQubitState(np.eye(4) / 4.0)
ENV = PhotonEnvelope.front_peaked()


def born_oracle(state, atom_vec, photon_vec):
    """Independent Born-rule path via einsum over the joint projector."""
    joint = np.einsum("i,j->ij", atom_vec, photon_vec).reshape(4)
    return float(np.real(np.einsum("i,ij,j->", joint.conj(), state.rho, joint)))


def sample_all_bases(state, clicks, seed, efficiency=1.0):
    records = []
    for basis in MATCHED_BASES:
        records.extend(sample_clicks(state, basis, efficiency, clicks, ENV,
                                     seed=seed))
    return records


def test_ideal_bell_zz_probabilities():
    p = joint_probabilities(BELL, BasisPair("Z", "Z"))
    # atom up pairs with photon R, i.e. the minus-labeled Z outcome
    assert p[0, 1] == pytest.approx(0.5, abs=1e-12)  # (up, R)
    assert p[1, 0] == pytest.approx(0.5, abs=1e-12)  # (down, L)
    assert p[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert p[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_ideal_bell_xx_probabilities():
    p = joint_probabilities(BELL, BasisPair("X", "X"))
    assert p[0, 0] == pytest.approx(0.5, abs=1e-12)  # (up_x, H)
    assert p[1, 1] == pytest.approx(0.5, abs=1e-12)  # (down_x, V)


def test_maximally_mixed_probabilities():
    for basis in MATCHED_BASES:
        assert np.allclose(joint_probabilities(MIXED, basis), 0.25, atol=1e-12)


def test_probabilities_normalize_and_match_oracle():
    rng = np.random.default_rng(3)
    for _ in range(25):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = a @ a.conj().T
        state = TwoQubitState(rho / np.trace(rho).real)
        for basis in MATCHED_BASES:
            p = joint_probabilities(state, basis)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p >= 0.0)


def test_unmatched_basis_rejected():
    with pytest.raises(UnmatchedBasisError):
        joint_probabilities(BELL, BasisPair("X", "Z"))


def test_outcome_labels():
    labels = outcome_labels(BasisPair("Z", "Z"))
    assert labels[(1, 1)] == ("up", "L")
    assert labels[(-1, -1)] == ("down", "R")


def test_sample_clicks_efficiency_extremes():
    assert sample_clicks(BELL, MATCHED_BASES[2], 0.0, 500, ENV, seed=1) == []
    clicks = sample_clicks(BELL, MATCHED_BASES[2], 1.0, 500, ENV, seed=1)
    assert len(clicks) == 500
    assert all(0.0 <= c.detection_time <= ENV.window for c in clicks)


def test_sample_clicks_frequencies():
    clicks = sample_clicks(BELL, BasisPair("Z", "Z"), 1.0, 100000, ENV, seed=2)
    up_r = sum(1 for c in clicks if c.readout_outcome == 1 and c.signal_outcome == -1)
    sigma = np.sqrt(0.25 * len(clicks))
    assert abs(up_r - 0.5 * len(clicks)) < 3.0 * sigma


def test_sample_clicks_deterministic():
    a = sample_clicks(BELL, BasisPair("X", "X"), 0.7, 800, ENV, seed=9)
    b = sample_clicks(BELL, BasisPair("X", "X"), 0.7, 800, ENV, seed=9)
    assert a == b


def test_estimate_ideal_bell():
    records = sample_all_bases(BELL, 100000, seed=4)
    result = estimate(records)
    assert abs(result.fidelity - 1.0) < 4.0 * result.std_error + 1e-9
    assert result.clicks_per_basis == 100000


def test_estimate_maximally_mixed():
    records = sample_all_bases(MIXED, 100000, seed=5)
    result = estimate(records)
    assert abs(result.fidelity - 0.25) < 4.0 * result.std_error


def test_estimate_default_budget_state():
    state = single_pair_state()
    records = sample_all_bases(state, 3000, seed=6)
    result = estimate(records)
    assert abs(result.fidelity - fidelity_with_bell(state)) < 4.0 * result.std_error


def test_estimate_missing_basis():
    records = sample_clicks(BELL, BasisPair("Z", "Z"), 1.0, 100, ENV, seed=7)
    with pytest.raises(MissingBasisError):
        estimate(records)


def test_estimator_consistency_random_states():
    rng = np.random.default_rng(12)
    failures = 0
    for k in range(40):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = a @ a.conj().T
        state = TwoQubitState(rho / np.trace(rho).real)
        records = sample_all_bases(state, 3000, seed=1000 + k)
        result = estimate(records)
        if abs(result.fidelity - fidelity_with_bell(state)) >= 4.0 * result.std_error:
            failures += 1
    assert failures <= 1


def test_stokes_bounds():
    rng = np.random.default_rng(13)
    for k in range(10):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = a @ a.conj().T
        state = TwoQubitState(rho / np.trace(rho).real)
        records = sample_all_bases(state, 2000, seed=2000 + k)
        result = estimate(records)
        for s in result.stokes:
            assert -1.0 - 4 * result.std_error <= s <= 1.0 + 4 * result.std_error
        exact = [float(np.sum(joint_probabilities(state, b) * np.array([[1, -1], [-1, 1]])))
                 for b in MATCHED_BASES]
        assert all(-1.0 - 1e-9 <= s <= 1.0 + 1e-9 for s in exact)


def test_zz_wrong_cells_bound_pumping_fidelity():
    # preparation channel alone: the correct anticorrelated cells keep >= 98%
    budget = ErrorBudget(larmor_frequency=0.0, rotation_infidelity=0.0,
                         polarization_infidelity=0.0, coherence_time=1e9,
                         readout_overhead=0.0)
    state = apply_error_channels(ideal_bell_state(), budget, ENV, (0, 1))
    p = joint_probabilities(state, BasisPair("Z", "Z"))
    exact_correct = p[0, 1] + p[1, 0]
    assert exact_correct == pytest.approx(1.0 - 0.5 * (4 * 0.027 / 3), abs=1e-12)
    assert exact_correct >= 0.98
    clicks = sample_clicks(state, BasisPair("Z", "Z"), 1.0, 100000, ENV, seed=3)
    sampled = np.mean([(c.readout_outcome, c.signal_outcome) in ((1, -1), (-1, 1))
                       for c in clicks])
    assert sampled >= 0.978


def test_rotated_conditional_closed_form():
    # ideal pair: p(H | up) = (1 + cos(theta)) / 2
    for theta in np.linspace(0.0, 2 * np.pi, 17):
        assert rotated_conditional(BELL, theta) == pytest.approx(
            0.5 * (1.0 + np.cos(theta)), abs=1e-12)


def test_phase_scan_period_and_optimum():
    omega = 2 * np.pi * 100e3
    state = single_pair_state()
    ts = np.arange(0.0, 12e-6, 0.25e-6)
    scan = phase_scan(state, ts, omega, clicks_per_point=3000, seed=10)
    assert abs(scan.period - np.pi / omega) <= 0.05e-6
    # the fitted optimum maximizes the curve: exact conditional there is the peak
    peak = rotated_conditional(state, 2 * omega * scan.t_opt)
    trough = rotated_conditional(state, 2 * omega * scan.t_opt + np.pi)
    assert peak > trough
    assert peak == pytest.approx(max(rotated_conditional(state, 2 * omega * t)
                                     for t in np.linspace(0, 5e-6, 2001)), abs=1e-3)


def test_phase_scan_visibility_matches_coherence():
    # dephased state: conditional-probability visibility equals the coherence factor
    budget = ErrorBudget(spam_infidelity=0.0, rotation_infidelity=0.0,
                         polarization_infidelity=0.0, coherence_time=1e9,
                         readout_overhead=0.0)
    state = apply_error_channels(ideal_bell_state(), budget, PhotonEnvelope.uniform(),
                                 (0, 1))
    v = np.sin(np.pi / 4) / (np.pi / 4)
    thetas = np.linspace(0, 2 * np.pi, 101)
    curve = [rotated_conditional(state, t) for t in thetas]
    assert max(curve) - min(curve) == pytest.approx(v, abs=1e-6)


def test_phase_scan_empty_range():
    with pytest.raises(ValueError):
        phase_scan(BELL, [], 2 * np.pi * 100e3, 100, seed=1)


def test_basis_switch_schedule():
    events = basis_switch_schedule(1)
    assert len(events) == 2
    events = basis_switch_schedule(6)
    assert len(events) == 12
    assert [kind for _, kind in events] == ["signal-selectable"] * 6 + ["readout-circular"] * 6
    times = [t for t, _ in events]
    assert np.all(np.diff(times) > 1e-6)  # switch latency honored
    with pytest.raises(ValueError):
        basis_switch_schedule(0)
