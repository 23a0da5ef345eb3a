"""Click-level state characterization in the three matched bases.

Outcome labels are +1/-1 per qubit. The photon-side +1 states are the
polarizations correlated with the atomic +1 states in the ideal pair:
H with up_x, D with up_y, and L with up (an L detection heralds the atom
in up). With these orientations the ideal state has S_xx = S_yy = +1,
S_zz = -1, and the fidelity is F = (1 + S_xx + S_yy - S_zz) / 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .entangle import PhotonEnvelope, TwoQubitState
from .seeds import derive_rng

__all__ = [
    "BasisPair",
    "ClickRecord",
    "TomographyResult",
    "PhaseScanResult",
    "UnmatchedBasisError",
    "MissingBasisError",
    "MATCHED_BASES",
    "joint_probabilities",
    "outcome_labels",
    "sample_clicks",
    "estimate",
    "rotated_conditional",
    "phase_scan",
    "basis_switch_schedule",
]

_SQ2 = np.sqrt(2.0)

# +1 / -1 eigenvectors per axis. Atom in (up, down) components, photon in (R, L).
_ATOM_VECTORS = {
    "X": (np.array([1.0, 1.0]) / _SQ2, np.array([1.0, -1.0]) / _SQ2),
    "Y": (np.array([1.0, 1.0j]) / _SQ2, np.array([1.0, -1.0j]) / _SQ2),
    "Z": (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
}
_PHOTON_VECTORS = {
    "X": (np.array([1.0, 1.0]) / _SQ2, np.array([1.0, -1.0]) / _SQ2),          # H, V
    "Y": (np.array([1.0, -1.0j]) / _SQ2, np.array([1.0, 1.0j]) / _SQ2),        # D, A
    "Z": (np.array([0.0, 1.0]), np.array([1.0, 0.0])),                         # L, R
}

# human-readable outcome names, +1 first
_PHOTON_NAMES = {"X": ("H", "V"), "Y": ("D", "A"), "Z": ("L", "R")}
_ATOM_NAMES = {"X": ("up_x", "down_x"), "Y": ("up_y", "down_y"), "Z": ("up", "down")}


class UnmatchedBasisError(ValueError):
    """Combined measurements are defined for matched basis pairs only."""


class MissingBasisError(ValueError):
    """The click record lacks one of the three matched bases."""


@dataclass(frozen=True)
class BasisPair:
    """One of the matched atom/photon measurement settings XX, YY, ZZ."""

    photon_basis: str
    atom_basis: str

    def __post_init__(self):
        if self.photon_basis not in ("X", "Y", "Z") or self.atom_basis not in ("X", "Y", "Z"):
            raise ValueError("bases must be one of X, Y, Z")

    @property
    def matched(self) -> bool:
        return self.photon_basis == self.atom_basis

    @property
    def axis(self) -> str:
        if not self.matched:
            raise UnmatchedBasisError(
                f"{self.atom_basis}{self.photon_basis} is not a matched basis pair")
        return self.atom_basis


MATCHED_BASES = (BasisPair("X", "X"), BasisPair("Y", "Y"), BasisPair("Z", "Z"))


@dataclass(frozen=True)
class ClickRecord:
    """One tomography event: outcomes are +1 or -1 in the pair's basis."""

    atom_index: int
    basis: BasisPair
    signal_outcome: int
    readout_outcome: int
    detection_time: float
    trial_id: int = 0


@dataclass(frozen=True)
class TomographyResult:
    stokes: tuple[float, float, float]
    fidelity: float
    std_error: float
    clicks_per_basis: int

    def __post_init__(self):
        sxx, syy, szz = self.stokes
        recomputed = 0.25 * (1.0 + sxx + syy - szz)
        if abs(recomputed - self.fidelity) > 1e-12:
            raise ValueError("fidelity is not consistent with the Stokes parameters")


def joint_probabilities(state: TwoQubitState, basis: BasisPair) -> np.ndarray:
    """Born-rule probabilities, shape (2, 2) indexed [atom +1/-1, photon +1/-1]."""
    axis = basis.axis
    probs = np.empty((2, 2))
    for ai, avec in enumerate(_ATOM_VECTORS[axis]):
        for pi, pvec in enumerate(_PHOTON_VECTORS[axis]):
            joint = np.kron(avec, pvec)
            probs[ai, pi] = max(float(np.real(joint.conj() @ state.rho @ joint)), 0.0)
    return probs


def outcome_labels(basis: BasisPair) -> dict:
    """Readable outcome names keyed by (atom_sign, photon_sign)."""
    axis = basis.axis
    a, p = _ATOM_NAMES[axis], _PHOTON_NAMES[axis]
    return {(1, 1): (a[0], p[0]), (1, -1): (a[0], p[1]),
            (-1, 1): (a[1], p[0]), (-1, -1): (a[1], p[1])}


def _sample_times(envelope: PhotonEnvelope, n: int, rng) -> np.ndarray:
    cdf = envelope.cumulative()
    return np.interp(rng.random(n), cdf, envelope.times)


def sample_clicks(state: TwoQubitState, basis: BasisPair, efficiency: float,
                  attempts: int, envelope: PhotonEnvelope, seed: int,
                  atom_index: int = 0) -> list[ClickRecord]:
    """Simulate attempts and return the detected clicks, deterministic in seed."""
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError("efficiency must lie in [0, 1]")
    probs = joint_probabilities(state, basis)
    rng = derive_rng(seed, "clicks", basis.axis, atom_index)
    detected = np.flatnonzero(rng.random(attempts) < efficiency)
    cells = rng.choice(4, size=detected.size, p=probs.ravel() / probs.sum())
    times = _sample_times(envelope, detected.size, rng)
    signs = (1, -1)
    return [
        ClickRecord(atom_index=atom_index, basis=basis,
                    signal_outcome=signs[c % 2], readout_outcome=signs[c // 2],
                    detection_time=float(t), trial_id=int(k))
        for c, t, k in zip(cells, times, detected)
    ]


def _basis_counts(records, axis: str) -> np.ndarray:
    counts = np.zeros((2, 2))
    for r in records:
        if r.basis.axis == axis:
            counts[(1 - r.readout_outcome) // 2, (1 - r.signal_outcome) // 2] += 1
    return counts


def estimate(records) -> TomographyResult:
    """Stokes parameters, fidelity, and binomial error from a click record.

    Each correlation is S = P(+,+) - P(+,-) - P(-,+) + P(-,-). Cell errors
    are treated as independent binomials and combined in quadrature.
    """
    stokes, variances, counts_per_basis = [], [], []
    for axis in "XYZ":
        counts = _basis_counts(records, axis)
        n = counts.sum()
        if n == 0:
            raise MissingBasisError(f"no clicks recorded in the {axis}{axis} basis")
        p = counts / n
        s = p[0, 0] - p[0, 1] - p[1, 0] + p[1, 1]
        var = float(np.sum(p * (1.0 - p)) / n)
        stokes.append(float(s))
        variances.append(var)
        counts_per_basis.append(int(n))
    sxx, syy, szz = stokes
    fidelity = 0.25 * (1.0 + sxx + syy - szz)
    std_error = float(np.sqrt(sum(variances)) / 4.0)
    return TomographyResult(stokes=(sxx, syy, szz), fidelity=float(fidelity),
                            std_error=std_error, clicks_per_basis=min(counts_per_basis))


def _rotation(theta: float) -> np.ndarray:
    """Pi/2 rotation that maps the equatorial atom basis at azimuth theta onto Z."""
    return np.array([[1.0, np.exp(-1j * theta)], [-np.exp(1j * theta), 1.0]]) / _SQ2


def rotated_conditional(state: TwoQubitState, theta: float) -> float:
    """Exact p(H | atom up) after the pre-readout rotation with phase theta."""
    u = np.kron(_rotation(theta), np.eye(2))
    rho = u @ state.rho @ u.conj().T
    h = _PHOTON_VECTORS["X"][0]
    up = _ATOM_VECTORS["Z"][0]
    joint = np.kron(up, h)
    p_joint = float(np.real(joint.conj() @ rho @ joint))
    p_up = float(np.real(np.trace((np.kron(np.outer(up, up.conj()), np.eye(2))) @ rho)))
    return p_joint / p_up if p_up > 0.0 else 0.0


@dataclass(frozen=True)
class PhaseScanResult:
    times: np.ndarray
    p_h_given_up: np.ndarray
    period: float
    t_opt: float
    amplitude: float
    offset: float


def phase_scan(state: TwoQubitState, t_range, omega_l: float,
               clicks_per_point: int, seed: int) -> PhaseScanResult:
    """Scan the rotation-phase switching time T and fit the oscillation.

    The rotation phase is theta = 2 w_L T, so the conditional probability
    p(H | up) oscillates with period pi / w_L in T. The period is fitted as a
    free parameter; T_opt maximizes the fitted curve.
    """
    t_range = np.asarray(list(t_range), dtype=float)
    if t_range.size == 0:
        raise ValueError("t_range must be nonempty")
    rng = derive_rng(seed, "phase-scan")
    ps = []
    for t in t_range:
        p_true = rotated_conditional(state, 2.0 * omega_l * t)
        ps.append(rng.binomial(clicks_per_point, p_true) / clicks_per_point)
    ps = np.array(ps)

    def model(t, offset, amp, period, phase):
        return offset + amp * np.cos(2.0 * np.pi * t / period + phase)

    guess_period = np.pi / omega_l if omega_l > 0.0 else (t_range[-1] - t_range[0])
    spread = float(np.ptp(ps))
    p0 = [ps.mean(), 0.5 * spread if spread > 0 else 0.1, guess_period, 0.0]
    popt, _ = curve_fit(model, t_range, ps, p0=p0, maxfev=20000)
    offset, amp, period, phase = popt
    if amp < 0.0:
        amp, phase = -amp, phase + np.pi
    period = abs(period)
    # earliest nonnegative maximum of the fitted cosine
    k = np.ceil(phase / (2.0 * np.pi))
    t_opt = (2.0 * np.pi * k - phase) * period / (2.0 * np.pi)
    return PhaseScanResult(times=t_range, p_h_given_up=ps, period=float(period),
                           t_opt=float(t_opt), amplitude=float(amp), offset=float(offset))


def basis_switch_schedule(n_atoms: int, slot: float = 15e-6,
                          rotation_gap: float = 94.6e-6,
                          switch_latency: float = 1e-6) -> list[tuple[float, str]]:
    """Detection-basis settings over one attempt.

    One selectable-basis setting per signal window, then one circular-basis
    setting per readout window after the rotation block. Consecutive settings
    are always separated by more than the switch latency.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be at least 1")
    if slot <= switch_latency:
        raise ValueError("slot time must exceed the switch latency")
    events = [(i * slot, "signal-selectable") for i in range(n_atoms)]
    readout_start = n_atoms * slot + rotation_gap
    events += [(readout_start + i * slot, "readout-circular") for i in range(n_atoms)]
    return events
