"""Multiplexed entanglement statistics over the register and link rates.

With per-atom detection efficiencies eta_i, addressing every atom once per
attempt gives at least one detected pair with probability
1 - prod(1 - eta_i) and an expected photon number sum(eta_i). Over a fiber
of length L the attempt rate is capped by the heralding round trip L/c, so
a register multiplies the pair rate by roughly the register size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cavity import AtomPosition, CavityParams, EfficiencyFactors, detection_efficiency_at
from .entangle import ErrorBudget, PhotonEnvelope, fidelity_for_slots
from .seeds import derive_rng

__all__ = [
    "RegisterLayout",
    "LinkConfig",
    "RegisterReport",
    "multiplex_efficiency",
    "expected_photon_number",
    "infer_fiber_efficiency",
    "distribution_rate",
    "register_report",
    "simulate_attempts",
]


@dataclass
class RegisterLayout:
    """Atoms of the register with optional per-atom efficiency/fidelity columns."""

    atoms: list  # (index, AtomPosition) pairs, addressed in list order
    per_atom_efficiency: np.ndarray | None = None
    per_atom_fidelity: np.ndarray | None = None

    def __post_init__(self):
        indices = [i for i, _ in self.atoms]
        if len(set(indices)) != len(indices):
            raise ValueError("atom indices must be unique")
        for arr_name in ("per_atom_efficiency", "per_atom_fidelity"):
            arr = getattr(self, arr_name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (len(self.atoms),):
                    raise ValueError(f"{arr_name} must have one entry per atom")
                if np.any((arr < 0.0) | (arr > 1.0)):
                    raise ValueError(f"{arr_name} entries must lie in [0, 1]")
                setattr(self, arr_name, arr)

    @classmethod
    def centered_row(cls, n: int, pitch: float = 5.5e-6) -> "RegisterLayout":
        """n atoms in a row along x, centered on the cavity mode."""
        if n < 1:
            raise ValueError("register needs at least one atom")
        xs = (np.arange(n) - (n - 1) / 2.0) * pitch
        return cls(atoms=[(i, AtomPosition(float(x), 0.0)) for i, x in enumerate(xs)])

    @classmethod
    def grid(cls, rows: int, cols: int, pitch: float = 5.5e-6) -> "RegisterLayout":
        """rows x cols block centered on the mode; y runs along the cavity axis."""
        xs = (np.arange(cols) - (cols - 1) / 2.0) * pitch
        ys = (np.arange(rows) - (rows - 1) / 2.0) * pitch
        atoms = []
        for r, y in enumerate(ys):
            for c, x in enumerate(xs):
                atoms.append((r * cols + c, AtomPosition(float(x), float(y))))
        return cls(atoms=atoms)

    def positions(self) -> list[AtomPosition]:
        return [pos for _, pos in self.atoms]


@dataclass(frozen=True)
class LinkConfig:
    """Fiber link parameters for the distribution-rate estimate."""

    distance: float = 0.0
    signal_velocity: float = 2.0e8
    attempt_slot: float = 15e-6
    propagation_detection: float = 0.70

    def __post_init__(self):
        if self.distance < 0.0:
            raise ValueError("distance must be nonnegative")
        if self.signal_velocity <= 0.0 or self.attempt_slot <= 0.0:
            raise ValueError("signal_velocity and attempt_slot must be positive")
        if not 0.0 <= self.propagation_detection <= 1.0:
            raise ValueError("propagation_detection must lie in [0, 1]")


def multiplex_efficiency(etas) -> float:
    """Probability of at least one detected pair per attempt: 1 - prod(1 - eta_i)."""
    etas = np.asarray(list(etas), dtype=float)
    if etas.size == 0:
        return 0.0
    if np.any((etas < 0.0) | (etas > 1.0)):
        raise ValueError("per-atom efficiencies must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - etas))


def expected_photon_number(etas) -> float:
    """Mean number of detected photons per attempt: sum(eta_i)."""
    etas = np.asarray(list(etas), dtype=float)
    if etas.size and np.any((etas < 0.0) | (etas > 1.0)):
        raise ValueError("per-atom efficiencies must lie in [0, 1]")
    return float(etas.sum())


def infer_fiber_efficiency(eta_overall: float, propagation_detection: float,
                           n_atoms: int = 1) -> float:
    """In-fiber at-least-one efficiency from the detected one.

    Assumes n identical emitters and a single scalar propagation/detection
    factor p per photon: solves 1 - eta_overall = (1 - p * eta_f)^n for the
    per-atom in-fiber efficiency eta_f and returns 1 - (1 - eta_f)^n.
    """
    if not 0.0 <= eta_overall <= 1.0:
        raise ValueError("eta_overall must lie in [0, 1]")
    if not 0.0 < propagation_detection <= 1.0:
        raise ValueError("propagation_detection must lie in (0, 1]")
    if n_atoms < 1:
        raise ValueError("n_atoms must be at least 1")
    eta_detected = 1.0 - (1.0 - eta_overall) ** (1.0 / n_atoms)
    eta_f = eta_detected / propagation_detection
    if eta_f > 1.0 + 1e-12:
        raise ValueError(
            f"no in-fiber efficiency in [0, 1] explains eta_overall={eta_overall} "
            f"with propagation_detection={propagation_detection}")
    eta_f = min(eta_f, 1.0)
    return float(1.0 - (1.0 - eta_f) ** n_atoms)


def distribution_rate(link: LinkConfig, etas) -> float:
    """Heralded-pair rate: expected successes per heralding round trip.

    rate = sum(eta_i) / max(L/c, n * attempt_slot); the round trip dominates
    at long distance, the addressing time at short distance.
    """
    etas = np.asarray(list(etas), dtype=float)
    if etas.size == 0:
        return 0.0
    cycle = max(link.distance / link.signal_velocity, etas.size * link.attempt_slot)
    return float(etas.sum() / cycle)


@dataclass(frozen=True)
class RegisterReport:
    """Per-atom and aggregate register figures."""

    indices: tuple
    x: tuple
    y: tuple
    efficiency: tuple
    fidelity: tuple
    eta_overall: float
    expected_photons: float
    mean_fidelity: float

    def rows(self):
        for k in range(len(self.indices)):
            yield {"atom": self.indices[k], "x_m": self.x[k], "y_m": self.y[k],
                   "efficiency": self.efficiency[k], "fidelity": self.fidelity[k]}


def register_report(layout: RegisterLayout, params: CavityParams,
                    factors: EfficiencyFactors, budget: ErrorBudget | None = None,
                    envelope: PhotonEnvelope | None = None) -> RegisterReport:
    """Fill per-atom efficiency (position model) and fidelity (slot model).

    Efficiency depends on the atom position in the mode; fidelity depends only
    on the addressing slot. The layout's columns are updated in place.
    """
    budget = budget or ErrorBudget()
    n = len(layout.atoms)
    etas = np.array([detection_efficiency_at(params, factors, pos)
                     for _, pos in layout.atoms])
    fids = fidelity_for_slots(n, budget, envelope)
    layout.per_atom_efficiency = etas
    layout.per_atom_fidelity = fids
    return RegisterReport(
        indices=tuple(i for i, _ in layout.atoms),
        x=tuple(pos.x for _, pos in layout.atoms),
        y=tuple(pos.y for _, pos in layout.atoms),
        efficiency=tuple(float(e) for e in etas),
        fidelity=tuple(float(f) for f in fids),
        eta_overall=multiplex_efficiency(etas),
        expected_photons=expected_photon_number(etas),
        mean_fidelity=float(fids.mean()),
    )


def simulate_attempts(etas, attempts: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo cross-check of the closed forms.

    Draws per-atom Bernoulli photon events for each attempt and returns the
    empirical (at-least-one frequency, mean photon number).
    """
    etas = np.asarray(list(etas), dtype=float)
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    rng = derive_rng(seed, "multiplex-mc")
    draws = rng.random((attempts, etas.size)) < etas
    return float(np.mean(draws.any(axis=1))), float(draws.sum(axis=1).mean())
