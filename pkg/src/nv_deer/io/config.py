"""
config.py - JSON experiment configuration.

Every physical key carries its unit in the name (``tau_us``, ``magnitude_G``); values are
converted to SI (CGS for dipolar constants) on load. Each section is a pydantic model that
rejects unknown keys; every problem found is reported at once.

Example:
    cfg = load_config(Path("deer3.json"))
    print(cfg.tau, cfg.config_hash)
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.nv_model import BiasField, EnvelopeParams, NVParams
from ..core.sequence_engine import PulseTiming
from ..core.spin_bath import (
    ALPHA_SPHERE,
    KineticsParams,
    PhysicalConstants,
    compute_k,
    ppb_to_density,
)
from ..core.spin_core import PulseParams
from ..errors import ParseError, ValidationError
from ..utils.log_utils import get_logger
from ..utils.utils import GHZ, KHZ, MHZ, NM_TO_CM, TWO_PI, US, canonical_json, sha256_text

logger = get_logger(__name__)

Experiment = Literal["odmr", "rabi", "holeburn", "echo", "deer3", "deer4", "mc_bath", "fit"]

# scan variable (with unit) and its factor to SI, per experiment
SCAN_VARIABLES: Dict[str, Tuple[str, float]] = {
    "odmr": ("frequency_MHz", MHZ),
    "holeburn": ("frequency_MHz", MHZ),
    "rabi": ("duration_us", US),
    "echo": ("tau_us", US),
    "deer3": ("pump_offset_us", US),
    "deer4": ("pump_offset_us", US),
    "mc_bath": ("time_us", US),
}

CONCENTRATION_KEYS = ("concentration_ppb", "concentration_cm3", "decay_rate_per_s")


# -- document model ---------------------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class NVSection(_Section):
    zfs_GHz: float = Field(2.7, gt=0)
    gamma_e_MHz_per_G: float = Field(2.8, gt=0)
    gamma_c13_kHz_per_G: float = Field(1.0705, gt=0)
    hyperfine_MHz: float = Field(2.16, ge=0)


class FieldSection(_Section):
    magnitude_G: float = Field(23.0, ge=0)
    direction: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("direction")
    @classmethod
    def _not_zero(cls, value):
        if all(v == 0 for v in value):
            raise ValueError("direction must not be the zero vector")
        return value


class TimingSection(_Section):
    pi_half_us: float = Field(0.4, gt=0)
    electronics_delay_us: float = Field(0.08, ge=0)
    pi_us: Optional[float] = Field(None, gt=0)
    tau_us: Optional[float] = Field(None, gt=0)
    pump_us: float = Field(0.4, gt=0)
    pump_rabi_MHz: Optional[float] = Field(None, gt=0)
    pump_frequency_offset_MHz: float = 49.0
    pump_alignment: Literal["center", "start"] = "center"


class CrosstalkSection(_Section):
    rabi_MHz: float = Field(1.5, ge=0)
    detuning_MHz: float = 49.0
    duration_us: Optional[float] = Field(None, gt=0)


class EnvelopeSection(_Section):
    t2_us: float = Field(gt=0)
    stretch_exponent: float = Field(2.0, ge=1.0, le=4.0)
    revival_width_us: float = Field(3.0, gt=0)
    n_revivals: int = Field(0, ge=0)


class EnvSection(_Section):
    detuning_a_MHz: float = 0.0
    frame_drift_kHz: float = 0.0
    initial_polarization: float = Field(1.0, ge=0, le=1)
    contrast: float = Field(0.03, ge=0, le=1)
    baseline: float = 1.0
    noise_sigma: float = Field(0.0, ge=0)
    b_fluorescence: float = 0.0
    crosstalk: Optional[CrosstalkSection] = Field(default_factory=CrosstalkSection)
    crosstalk_model: Literal["exact", "far_detuned"] = "exact"
    envelope: Optional[EnvelopeSection] = None


class _ConcentrationSection(_Section):
    """A bath given by exactly one of a concentration or the decay rate it causes."""

    concentration_ppb: Optional[float] = Field(None, ge=0)
    concentration_cm3: Optional[float] = Field(None, ge=0)
    decay_rate_per_s: Optional[float] = Field(None, ge=0)
    flip_probability: float = Field(0.68, ge=0, le=1)
    polarization: float = Field(0.0, ge=-1, le=1)

    @model_validator(mode="after")
    def _one_concentration(self):
        given = [key for key in CONCENTRATION_KEYS if getattr(self, key) is not None]
        if len(given) != 1:
            raise ValueError(
                f"needs exactly one of {', '.join(CONCENTRATION_KEYS)} (got {', '.join(given) or 'none'})"
            )
        if given[0] == "decay_rate_per_s" and self.flip_probability <= 0:
            raise ValueError("decay_rate_per_s needs flip_probability > 0")
        return self

    def density(self, k: float, c: PhysicalConstants) -> float:
        """Concentration in cm^-3; a decay rate is converted with rate constant ``k``."""
        if self.concentration_ppb is not None:
            return ppb_to_density(self.concentration_ppb, c)
        if self.concentration_cm3 is not None:
            return self.concentration_cm3
        return self.decay_rate_per_s / (self.flip_probability * k)


class KineticsSection(_ConcentrationSection):
    shape_factor: float = 1.0
    alpha: float = ALPHA_SPHERE
    k_cm3_per_s: Optional[float] = Field(None, gt=0)


class BathSection(_ConcentrationSection):
    radius_nm: Optional[float] = Field(None, gt=0)
    exclusion_nm: float = Field(2.0, gt=0)
    kernel_scale: float = 1.0
    axis_angle_deg: float = Field(0.0, ge=0, le=180)
    n_realizations: int = Field(10000, ge=100)
    realizations_per_point: int = Field(200, ge=1)
    estimator: Literal["weighted", "sampled", "expected"] = "weighted"
    chunk_size: int = Field(250, ge=1)

    @model_validator(mode="after")
    def _radius_outside_exclusion(self):
        if self.radius_nm is not None and self.radius_nm <= self.exclusion_nm:
            raise ValueError("radius_nm must exceed exclusion_nm")
        return self


class SpectroscopySection(_Section):
    odmr_rabi_MHz: float = Field(1.0, gt=0)
    odmr_us: float = Field(0.5, gt=0)
    probe_rabi_MHz: float = Field(0.3, gt=0)
    probe_us: float = Field(1.6667, gt=0)
    pump_rabi_MHz: float = Field(2.94, ge=0)
    pump_us: float = Field(0.17, gt=0)
    pump_frequency_MHz: Optional[float] = Field(None, gt=0)
    b_orientation: int = Field(0, ge=0, le=3)
    drive_frequency_MHz: Optional[float] = Field(None, gt=0)


class ConstantsSection(_Section):
    mu_B_erg_per_G: float = Field(9.274e-21, gt=0)
    g: float = Field(2.0028, gt=0)
    hbar_erg_s: float = Field(1.0546e-27, gt=0)
    carbon_density_cm3: float = Field(1.76e23, gt=0)
    empirical_k_per_ppb_s: float = Field(34.0, gt=0)


class ScanSection(_Section):
    variable: str
    start: float
    stop: float
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _non_empty(self):
        if self.start == self.stop:
            raise ValueError("start and stop must differ")
        return self


class OutputSection(_Section):
    plot_script: bool = False
    record_wall_time: bool = False


class ConfigDocument(_Section):
    """The whole config file as written, with defaults filled in."""

    experiment: Experiment
    seed: int = Field(ge=0)
    nv: NVSection = Field(default_factory=NVSection)
    field: FieldSection = Field(default_factory=FieldSection)
    timing: TimingSection = Field(default_factory=TimingSection)
    env: EnvSection = Field(default_factory=EnvSection)
    kinetics: Optional[KineticsSection] = None
    bath: Optional[BathSection] = None
    spectroscopy: SpectroscopySection = Field(default_factory=SpectroscopySection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    scan: Optional[ScanSection] = None
    output: OutputSection = Field(default_factory=OutputSection)


# -- resolved config --------------------------------------------------------------------


@dataclass(frozen=True)
class EnvSettings:
    detuning_a: float = 0.0
    frame_drift: float = 0.0
    initial_polarization: float = 1.0
    contrast: float = 0.03
    baseline: float = 1.0
    noise_sigma: float = 0.0
    b_fluorescence: float = 0.0
    crosstalk: Optional[PulseParams] = None
    crosstalk_model: str = "exact"
    envelope: Optional[EnvelopeParams] = None
    n_revivals: int = 0


@dataclass(frozen=True)
class BathSettings:
    concentration: float
    flip_probability: float
    polarization: float
    radius: Optional[float]
    exclusion: float
    kernel_scale: float
    axis_angle: float
    n_realizations: int
    realizations_per_point: int
    estimator: str
    chunk_size: int


@dataclass(frozen=True)
class SpectroscopySettings:
    odmr: PulseParams
    probe: PulseParams
    pump: PulseParams
    pump_frequency: Optional[float]
    b_orientation: int
    drive_frequency: Optional[float]


@dataclass(frozen=True)
class ScanSettings:
    variable: str
    start: float
    stop: float
    points: int

    def values(self):
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    nv: NVParams
    field: BiasField
    timing: PulseTiming
    tau: Optional[float]
    env: EnvSettings
    kinetics: Optional[KineticsParams]
    bath: Optional[BathSettings]
    spectroscopy: SpectroscopySettings
    constants: PhysicalConstants
    empirical_k_per_ppb: float
    scan: Optional[ScanSettings]
    plot_script: bool = False
    record_wall_time: bool = False
    document: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.document))


# -- validation -------------------------------------------------------------------------


def _problem(error: Dict[str, Any]) -> str:
    loc = tuple(str(part) for part in error["loc"])
    path = ".".join(loc)
    if error["type"] == "extra_forbidden":
        parent = ".".join(loc[:-1])
        return f"unknown key '{loc[-1]}' in {parent}" if parent else f"unknown top-level key '{loc[-1]}'"
    if error["type"] == "missing" and loc == ("seed",):
        return "seed is required (no wall-clock default)"
    message = str(error["ctx"]["error"]) if error["type"] == "value_error" else error["msg"]
    return f"{path}: {message}" if path else message


def _validate_document(raw: Dict[str, Any]) -> ConfigDocument:
    # strict JSON validation: no string-to-number coercion, integers stay integers
    try:
        return ConfigDocument.model_validate_json(json.dumps(raw), strict=True)
    except pydantic.ValidationError as err:
        raise ValidationError([_problem(e) for e in err.errors()]) from err


def _experiment_problems(doc: ConfigDocument) -> List[str]:
    problems = []
    experiment = doc.experiment
    if experiment in SCAN_VARIABLES:
        variable = SCAN_VARIABLES[experiment][0]
        if doc.scan is None:
            if experiment != "mc_bath":
                problems.append(f"scan section is required for experiment {experiment}")
        elif doc.scan.variable != variable:
            problems.append(f"scan.variable must be '{variable}' for experiment {experiment} "
                            f"(got {doc.scan.variable!r})")
    if experiment in ("deer3", "deer4"):
        if doc.timing.tau_us is None:
            problems.append(f"timing.tau_us is required for experiment {experiment}")
        if (doc.kinetics is None) == (doc.bath is None):
            problems.append(f"experiment {experiment} needs exactly one of the kinetics or bath sections")
    if experiment == "mc_bath" and doc.bath is None:
        problems.append("experiment mc_bath needs a bath section")
    return problems


def _resolve(doc: ConfigDocument) -> ExperimentConfig:
    problems: List[str] = []

    # constructor checks of the typed objects surface as problems too
    def build(label: str, factory):
        try:
            return factory()
        except ValueError as err:
            problems.append(f"{label}: {err}")
            return None

    n, f, t, e, sp, cn = doc.nv, doc.field, doc.timing, doc.env, doc.spectroscopy, doc.constants
    nv = build("nv", lambda: NVParams(
        zfs=n.zfs_GHz * GHZ,
        gamma_e=n.gamma_e_MHz_per_G * MHZ,
        gamma_c13=n.gamma_c13_kHz_per_G * KHZ,
        hyperfine_splitting=n.hyperfine_MHz * MHZ,
    ))
    bias = build("field", lambda: BiasField(tuple(f.direction), f.magnitude_G))
    timing = build("timing", lambda: PulseTiming(
        pi_half=t.pi_half_us * US,
        electronics_delay=t.electronics_delay_us * US,
        pi=None if t.pi_us is None else t.pi_us * US,
        pump=t.pump_us * US,
        pump_rabi=None if t.pump_rabi_MHz is None else t.pump_rabi_MHz * MHZ,
        pump_frequency_offset=t.pump_frequency_offset_MHz * MHZ,
        pump_alignment=t.pump_alignment,
    ))
    constants = PhysicalConstants(
        mu_B=cn.mu_B_erg_per_G, g=cn.g, hbar=cn.hbar_erg_s, carbon_density=cn.carbon_density_cm3,
    )

    crosstalk = None
    if e.crosstalk is not None:
        xt = e.crosstalk
        duration = xt.duration_us if xt.duration_us is not None else t.pump_us
        crosstalk = build("env.crosstalk", lambda: PulseParams(
            TWO_PI * xt.rabi_MHz * MHZ, TWO_PI * xt.detuning_MHz * MHZ, duration * US,
        ))
    envelope = None
    if e.envelope is not None:
        ev = e.envelope
        envelope = build("env.envelope", lambda: EnvelopeParams(
            ev.t2_us * US, ev.stretch_exponent, ev.revival_width_us * US,
        ))
    env = EnvSettings(
        detuning_a=e.detuning_a_MHz * MHZ,
        frame_drift=e.frame_drift_kHz * KHZ,
        initial_polarization=e.initial_polarization,
        contrast=e.contrast,
        baseline=e.baseline,
        noise_sigma=e.noise_sigma,
        b_fluorescence=e.b_fluorescence,
        crosstalk=crosstalk,
        crosstalk_model=e.crosstalk_model,
        envelope=envelope,
        n_revivals=e.envelope.n_revivals if e.envelope is not None else 0,
    )

    k_theory = compute_k(constants)
    kinetics = None
    if doc.kinetics is not None:
        kin = doc.kinetics
        k = kin.k_cm3_per_s or k_theory
        kinetics = build("kinetics", lambda: KineticsParams(
            concentration=kin.density(k, constants),
            flip_probability=kin.flip_probability,
            k=k,
            polarization=kin.polarization,
            shape_factor=kin.shape_factor,
            alpha=kin.alpha,
        ))
    bath = None
    if doc.bath is not None:
        b = doc.bath
        bath = BathSettings(
            concentration=b.density(k_theory, constants),
            flip_probability=b.flip_probability,
            polarization=b.polarization,
            radius=None if b.radius_nm is None else b.radius_nm * NM_TO_CM,
            exclusion=b.exclusion_nm * NM_TO_CM,
            kernel_scale=b.kernel_scale,
            axis_angle=math.radians(b.axis_angle_deg),
            n_realizations=b.n_realizations,
            realizations_per_point=b.realizations_per_point,
            estimator=b.estimator,
            chunk_size=b.chunk_size,
        )

    spectroscopy = SpectroscopySettings(
        odmr=PulseParams(TWO_PI * sp.odmr_rabi_MHz * MHZ, 0.0, sp.odmr_us * US),
        probe=PulseParams(TWO_PI * sp.probe_rabi_MHz * MHZ, 0.0, sp.probe_us * US),
        pump=PulseParams(TWO_PI * sp.pump_rabi_MHz * MHZ, 0.0, sp.pump_us * US),
        pump_frequency=None if sp.pump_frequency_MHz is None else sp.pump_frequency_MHz * MHZ,
        b_orientation=sp.b_orientation,
        drive_frequency=None if sp.drive_frequency_MHz is None else sp.drive_frequency_MHz * MHZ,
    )

    scan = None
    if doc.scan is not None and doc.experiment in SCAN_VARIABLES:
        factor = SCAN_VARIABLES[doc.experiment][1]
        scan = ScanSettings(doc.scan.variable, doc.scan.start * factor, doc.scan.stop * factor, doc.scan.points)

    if problems:
        raise ValidationError(problems)

    document = doc.model_dump(mode="json")
    logger.debug(f"resolved config: {canonical_json(document)}")
    return ExperimentConfig(
        experiment=doc.experiment,
        seed=doc.seed,
        nv=nv,
        field=bias,
        timing=timing,
        tau=None if t.tau_us is None else t.tau_us * US,
        env=env,
        kinetics=kinetics,
        bath=bath,
        spectroscopy=spectroscopy,
        constants=constants,
        empirical_k_per_ppb=cn.empirical_k_per_ppb_s,
        scan=scan,
        plot_script=doc.output.plot_script,
        record_wall_time=doc.output.record_wall_time,
        document=document,
    )


# -- public API ------------------------------------------------------------------------


def parse_config(text: str, seed_override: Optional[int] = None, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a JSON config document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"{source}: {err.msg}", line=err.lineno) from err
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be a JSON object", line=1)
    if seed_override is not None:
        raw["seed"] = seed_override

    doc = _validate_document(raw)
    problems = _experiment_problems(doc)
    if problems:
        raise ValidationError(problems)
    return _resolve(doc)


def load_config(path: Union[str, Path], seed_override: Optional[int] = None) -> ExperimentConfig:
    """Read, parse and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as err:
        raise ParseError(f"{path}: not UTF-8 text") from err
    cfg = parse_config(text, seed_override=seed_override, source=str(path))
    logger.info(f"Loaded {cfg.experiment} config from {path} (hash {cfg.config_hash[:12]})")
    return cfg


def default_config(experiment: str = "fit", seed: int = 0) -> ExperimentConfig:
    """Config with every default filled in, for commands that only need constants."""
    return parse_config(json.dumps({"experiment": experiment, "seed": seed}))
