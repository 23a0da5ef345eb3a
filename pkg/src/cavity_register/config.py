"""Experiment configuration: one YAML document drives every run.

Validation is whole-document: every violation is collected and reported with
its field path, unknown keys are rejected, and missing keys fall back to the
shipped defaults. Frequencies are plain Hz in the file and converted to
angular units when the physics objects are built.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .assembly import PrepConfig, TargetPattern, TweezerGrid
from .cavity import CavityParams, EfficiencyFactors, TWO_PI
from .entangle import ErrorBudget, PhotonEnvelope
from .multiplex import LinkConfig

__all__ = [
    "ConfigError",
    "CalibrationMissingError",
    "ExperimentConfig",
    "validate_config",
    "load_config",
    "default_config_text",
]

MAX_SEED = 2 ** 64 - 1


class ConfigError(ValueError):
    """Carries the full list of validation problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(self.errors))


class CalibrationMissingError(RuntimeError):
    """A calibrated parameter was explicitly left unset."""


# schema: section -> key -> (kind, constraint)
# kinds: "prob" in [0,1]; "pos" > 0; "nonneg" >= 0; "int+" integer >= 1;
# "seed" integer in [0, 2^64); "optional-pos" > 0 or null; "choice:a|b"
_SCHEMA = {
    "cavity": {
        "g0_hz": ("pos",), "kappa_hz": ("pos",), "kappa_out_hz": ("pos",),
        "gamma_hz": ("pos",), "waist_radius_m": ("pos",), "beat_length_m": ("pos",),
        "cavity_length_m": ("pos",),
    },
    "factors": {
        "init_efficiency": ("prob",), "transmission_detection": ("prob",),
        "window_acceptance": ("prob",),
    },
    "budget": {
        "larmor_frequency_hz": ("nonneg",), "spam_infidelity": ("prob",),
        "rotation_infidelity": ("prob",), "polarization_infidelity": ("prob",),
        "coherence_time_s": ("pos",), "time_per_atom_s": ("pos",),
        "readout_overhead_s": ("optional-nonneg",),
    },
    "envelope": {
        "kind": ("choice:front_peaked|uniform",), "window_s": ("pos",),
        "rise_s": ("optional-pos",), "fall_s": ("optional-pos",),
    },
    "prep": {
        "move_speed_m_per_s": ("pos",), "per_move_survival": ("optional-prob",),
        "hop_rate_hz": ("nonneg",), "tracking_rate_hz": ("pos",),
        "tweezer_waist_m": ("pos",), "arrangement_overhead_s": ("nonneg",),
        "lattice_period_m": ("pos",),
    },
    "layout": {
        "grid_rows": ("int+",), "grid_cols": ("int+",), "grid_spacing_m": ("pos",),
        "fill_probability": ("prob",), "target_count": ("int+",),
    },
    "register": {
        "pitch_m": ("pos",), "n_max": ("int+",), "anchor_eta": ("optional-prob",),
    },
    "link": {
        "distance_m": ("nonneg",), "signal_velocity_m_per_s": ("pos",),
        "attempt_slot_s": ("pos",), "propagation_detection": ("prob",),
    },
    "run": {
        "trials": ("int+",), "clicks_per_basis": ("int+",), "master_seed": ("seed",),
    },
}


def default_config_text() -> str:
    return resources.files("cavity_register").joinpath("data/default_config.yaml") \
        .read_text(encoding="utf-8")


def _check_value(path: str, value, kind: str, errors: list):
    optional = kind.startswith("optional-")
    if value is None:
        if optional:
            return None
        errors.append(f"{path}: value may not be null")
        return None
    base = kind.removeprefix("optional-")
    if base.startswith("choice:"):
        allowed = base.split(":", 1)[1].split("|")
        if value not in allowed:
            errors.append(f"{path}: must be one of {allowed}, got {value!r}")
            return None
        return value
    if base in ("int+", "seed"):
        if not isinstance(value, int) or isinstance(value, bool):
            errors.append(f"{path}: must be an integer, got {value!r}")
            return None
        if base == "int+" and value < 1:
            errors.append(f"{path}: must be at least 1, got {value}")
            return None
        if base == "seed" and not 0 <= value <= MAX_SEED:
            errors.append(f"{path}: must be a 64-bit unsigned integer, got {value}")
            return None
        return value
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        errors.append(f"{path}: must be a number, got {value!r}")
        return None
    value = float(value)
    if base == "prob" and not 0.0 <= value <= 1.0:
        errors.append(f"{path}: must lie in [0, 1], got {value}")
        return None
    if base == "pos" and value <= 0.0:
        errors.append(f"{path}: must be strictly positive, got {value}")
        return None
    if base == "nonneg" and value < 0.0:
        errors.append(f"{path}: must be nonnegative, got {value}")
        return None
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; sections are plain dicts of primitive values."""

    sections: dict = field(repr=False)

    @property
    def trials(self) -> int:
        return self.sections["run"]["trials"]

    @property
    def clicks_per_basis(self) -> int:
        return self.sections["run"]["clicks_per_basis"]

    @property
    def master_seed(self) -> int:
        return self.sections["run"]["master_seed"]

    def replace_run(self, **kwargs) -> "ExperimentConfig":
        sections = json.loads(json.dumps(self.sections))
        for key, value in kwargs.items():
            if value is not None:
                sections["run"][key] = value
        return ExperimentConfig(sections=sections)

    def digest(self) -> str:
        canonical = json.dumps(self.sections, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # physics object factories -------------------------------------------

    def cavity(self) -> CavityParams:
        c = self.sections["cavity"]
        return CavityParams(g0=TWO_PI * c["g0_hz"], kappa=TWO_PI * c["kappa_hz"],
                            kappa_out=TWO_PI * c["kappa_out_hz"],
                            gamma=TWO_PI * c["gamma_hz"],
                            waist_radius=c["waist_radius_m"],
                            beat_length=c["beat_length_m"],
                            cavity_length=c["cavity_length_m"])

    def factors(self) -> EfficiencyFactors:
        f = self.sections["factors"]
        return EfficiencyFactors(init_efficiency=f["init_efficiency"],
                                 transmission_detection=f["transmission_detection"],
                                 window_acceptance=f["window_acceptance"])

    def anchored_factors(self) -> EfficiencyFactors:
        """Factors normalized to the measured single-atom efficiency, if set."""
        anchor = self.sections["register"]["anchor_eta"]
        if anchor is None:
            return self.factors()
        return EfficiencyFactors.single_atom_anchor(anchor, self.cavity())

    def budget(self) -> ErrorBudget:
        b = self.sections["budget"]
        if b["readout_overhead_s"] is None:
            raise CalibrationMissingError(
                "budget.readout_overhead_s is unset; run the readout-overhead calibration")
        return ErrorBudget(larmor_frequency=TWO_PI * b["larmor_frequency_hz"],
                           spam_infidelity=b["spam_infidelity"],
                           rotation_infidelity=b["rotation_infidelity"],
                           polarization_infidelity=b["polarization_infidelity"],
                           coherence_time=b["coherence_time_s"],
                           time_per_atom=b["time_per_atom_s"],
                           readout_overhead=b["readout_overhead_s"])

    def envelope(self) -> PhotonEnvelope:
        e = self.sections["envelope"]
        if e["kind"] == "uniform":
            return PhotonEnvelope.uniform(window=e["window_s"])
        if e["rise_s"] is None or e["fall_s"] is None:
            raise CalibrationMissingError(
                "envelope.rise_s/fall_s are unset; run the envelope calibration")
        return PhotonEnvelope.front_peaked(rise=e["rise_s"], fall=e["fall_s"],
                                           window=e["window_s"])

    def prep(self) -> PrepConfig:
        p = self.sections["prep"]
        return PrepConfig(move_speed=p["move_speed_m_per_s"],
                          per_move_survival=p["per_move_survival"],
                          hop_rate=p["hop_rate_hz"], tracking_rate=p["tracking_rate_hz"],
                          tweezer_waist=p["tweezer_waist_m"],
                          arrangement_overhead=p["arrangement_overhead_s"],
                          lattice_period=p["lattice_period_m"])

    def grid(self) -> TweezerGrid:
        ly = self.sections["layout"]
        return TweezerGrid.regular(rows=ly["grid_rows"], cols=ly["grid_cols"],
                                   spacing=ly["grid_spacing_m"],
                                   fill_probability=ly["fill_probability"])

    def target(self, n: int | None = None) -> TargetPattern:
        n = n if n is not None else self.sections["layout"]["target_count"]
        return TargetPattern.centered_row(self.grid(), n)

    def link(self, distance: float | None = None) -> LinkConfig:
        l = self.sections["link"]
        return LinkConfig(distance=distance if distance is not None else l["distance_m"],
                          signal_velocity=l["signal_velocity_m_per_s"],
                          attempt_slot=l["attempt_slot_s"],
                          propagation_detection=l["propagation_detection"])

    def calibration_values(self) -> dict:
        return {
            "per_move_survival": self.sections["prep"]["per_move_survival"],
            "readout_overhead_s": self.sections["budget"]["readout_overhead_s"],
            "envelope_rise_s": self.sections["envelope"]["rise_s"],
            "envelope_fall_s": self.sections["envelope"]["fall_s"],
        }


def validate_config(raw_text: str) -> ExperimentConfig:
    """Parse and validate a YAML config, reporting every violation at once."""
    try:
        doc = yaml.safe_load(raw_text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"parse error{where}: {getattr(exc, 'problem', exc)}"])
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["top level: must be a mapping of sections"])

    defaults = yaml.safe_load(default_config_text())
    errors: list[str] = []
    sections: dict = {}

    for name in doc:
        if name not in _SCHEMA:
            errors.append(f"{name}: unknown section")
    for section, keys in _SCHEMA.items():
        given = doc.get(section, {})
        if given is None:
            given = {}
        if not isinstance(given, dict):
            errors.append(f"{section}: must be a mapping")
            given = {}
        for key in given:
            if key not in keys:
                errors.append(f"{section}.{key}: unknown key")
        built = {}
        for key, (kind,) in keys.items():
            if key in given:
                built[key] = _check_value(f"{section}.{key}", given[key], kind, errors)
            else:
                built[key] = defaults[section][key]
        sections[section] = built

    # cross-field invariants, checked via the object constructors
    probe = ExperimentConfig(sections=sections)
    for label, builder in (("cavity", probe.cavity), ("factors", probe.factors),
                           ("prep", probe.prep), ("layout", probe.grid),
                           ("link", lambda: probe.link())):
        try:
            builder()
        except CalibrationMissingError:
            pass  # legal at validation time; surfaces when the value is used
        except ValueError as exc:
            errors.append(f"{label}: {exc}")
    try:
        probe.budget()
        probe.envelope()
    except CalibrationMissingError:
        pass
    except ValueError as exc:
        errors.append(f"budget/envelope: {exc}")
    try:
        if sections["layout"]["target_count"] > sections["layout"]["grid_cols"]:
            errors.append("layout.target_count: cannot exceed grid_cols "
                          "(targets are one grid row)")
    except TypeError:
        pass

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(sections=sections)


def load_config(path: str | None = None) -> ExperimentConfig:
    """Load a config file, or the shipped defaults when no path is given."""
    text = default_config_text() if path is None else open(path, encoding="utf-8").read()
    return validate_config(text)
