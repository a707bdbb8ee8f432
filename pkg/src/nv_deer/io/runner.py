"""
runner.py - experiment orchestration behind the CLI subcommands.

Each ``run_*`` function computes every result in memory first and only then writes its
files (atomically) into the output directory, finishing with a manifest. A failure
before the write phase leaves the output directory untouched.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..analysis.fits import (
    decay_inputs,
    fit_complex_decay,
    fit_exp_decay,
    fit_lorentzian_triplet,
    holeburn_efficiency,
)
from ..analysis.solver import FitReport
from ..analysis.tomography import TraceSet, deer_tomography, echo_tomography
from ..core.nv_model import larmor_revival_times, resonance_frequencies, spectral_lines
from ..core.sequence_engine import (
    SimEnv,
    Spectrum,
    build_deer3,
    build_deer4,
    build_echo,
    build_holeburn,
    build_odmr,
    build_rabi,
    scan,
    scan_spectrum,
)
from ..core.spin_bath import (
    MonteCarloTrace,
    auto_radius,
    compute_k,
    concentration_from_rate,
    density_to_ppb,
    mc_deer_trace,
    rate_constant_from_ppb,
    sample_bath,
)
from ..core.spin_core import PulseParams
from ..errors import DivisionDegenerate, EnvMismatch, NumericError, ValidationError
from ..utils.log_utils import get_logger
from ..utils.utils import MHZ
from .config import ExperimentConfig
from .manifest import MANIFEST_NAME, RunManifest, save_manifest
from .serialization import (
    read_fit_report,
    read_spectrum,
    read_traces,
    write_fit_report,
    write_json,
    write_mc_trace,
    write_plot_script,
    write_spectrum,
    write_traces,
)

logger = get_logger(__name__)

ProgressFactory = Callable[[str], Optional[Callable[[int, int], None]]]

SIMULATIONS = ("odmr", "rabi", "holeburn", "echo", "deer3", "deer4")


@dataclass
class RunResult:
    command: str
    outputs: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    reports: Dict[str, FitReport] = field(default_factory=dict)


def _no_progress(description: str) -> None:
    return None


class _Writer:
    """Collects outputs and finishes the run with a manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.manifest = RunManifest(command, cfg.config_hash, cfg.seed, toolkit_version=__version__)
        self.result = RunResult(command)
        self.started = time.perf_counter()

    def add(self, paths) -> None:
        for path in paths if isinstance(paths, (list, tuple)) else [paths]:
            self.manifest.add_output(path)
            self.result.outputs.append(Path(path))

    def plot(self, data_name: str, kind: str) -> None:
        if self.cfg.plot_script:
            stem = Path(data_name).stem
            self.add(write_plot_script(self.out_dir / f"{stem}.gp", data_name, kind))

    def finish(self, timing: Dict[str, Any]) -> RunResult:
        self.manifest.timing = dict(timing)
        if self.cfg.record_wall_time:
            self.manifest.timing["wall_time_s"] = round(time.perf_counter() - self.started, 6)
        path = save_manifest(self.manifest, self.out_dir / MANIFEST_NAME)
        self.result.outputs.append(path)
        logger.info(f"{self.manifest.command}: wrote {len(self.result.outputs)} file(s) to {self.out_dir}")
        return self.result


# -- environment ------------------------------------------------------------------------


def build_env(cfg: ExperimentConfig, t_max: float = 0.0) -> SimEnv:
    """SimEnv for a coherent simulation; a bath section is sampled into realizations."""
    env = cfg.env
    revivals: Tuple[float, ...] = ()
    if env.envelope is not None and env.n_revivals > 0:
        revivals = tuple(larmor_revival_times(cfg.field.magnitude, cfg.nv, env.n_revivals))
    bath = None
    if cfg.bath is not None:
        b = cfg.bath
        radius = b.radius
        if radius is None:
            radius = auto_radius(b.concentration, max(t_max, 1e-9), cfg.constants, b.kernel_scale, b.exclusion)
        bath = tuple(
            sample_bath(b.concentration, radius, b.axis_angle, b.polarization, b.flip_probability,
                        cfg.constants, cfg.seed, stream=(i,), exclusion=b.exclusion, kernel_scale=b.kernel_scale)
            for i in range(b.realizations_per_point)
        )
    return SimEnv(
        bath=bath,
        analytic_kernel=cfg.kinetics,
        crosstalk=env.crosstalk,
        detuning_a=env.detuning_a,
        envelope=env.envelope,
        initial_polarization=env.initial_polarization,
        revivals=revivals,
        crosstalk_model=env.crosstalk_model,
        frame_drift_hz=env.frame_drift,
        contrast=env.contrast,
        baseline=env.baseline,
        noise_sigma=env.noise_sigma,
        b_fluorescence=env.b_fluorescence,
        bath_estimator=cfg.bath.estimator if cfg.bath is not None else "weighted",
    )


def _central_line(cfg: ExperimentConfig) -> float:
    return resonance_frequencies(cfg.field, cfg.nv)[cfg.spectroscopy.b_orientation][1]


def _require_scan(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.scan is None:
        raise ValidationError([f"scan section is required for experiment {cfg.experiment}"])
    return cfg.scan.values()


# -- simulate ---------------------------------------------------------------------------


def _simulate_coherent(cfg: ExperimentConfig, threads: int, progress: ProgressFactory):
    values = _require_scan(cfg)
    timing = cfg.timing
    if cfg.experiment == "echo":
        def builder(v, phase):
            return build_echo(v, phase, timing)
        env = build_env(cfg)
    else:
        tau = cfg.tau
        build = build_deer3 if cfg.experiment == "deer3" else build_deer4

        def builder(v, phase):
            return build(tau, v, phase, timing)
        env = build_env(cfg, t_max=tau)
    trace = scan(builder, values, env, cfg.seed, threads=threads,
                 on_progress=progress(f"simulate {cfg.experiment}"))
    tomo = echo_tomography(trace) if cfg.experiment == "echo" else deer_tomography(trace)
    return trace, tomo


def _simulate_spectrum(cfg: ExperimentConfig) -> Dict[str, Spectrum]:
    values = _require_scan(cfg)
    sp = cfg.spectroscopy
    lines = spectral_lines(cfg.field, cfg.nv)
    common = dict(contrast=cfg.env.contrast, baseline=cfg.env.baseline, noise_sigma=cfg.env.noise_sigma)
    if cfg.experiment == "odmr":
        return {"spectrum": scan_spectrum(build_odmr(values, sp.odmr), lines, seed=cfg.seed, **common)}
    if cfg.experiment == "rabi":
        frequency = sp.drive_frequency or _central_line(cfg)
        return {"rabi": scan_spectrum(build_rabi(values, sp.odmr.rabi, frequency), lines, seed=cfg.seed, **common)}
    pump_frequency = sp.pump_frequency or _central_line(cfg)
    hole = scan_spectrum(build_holeburn(sp.pump, pump_frequency, values, sp.probe), lines, seed=cfg.seed, **common)
    idle = PulseParams(0.0, 0.0, sp.pump.duration)
    reference = scan_spectrum(build_holeburn(idle, pump_frequency, values, sp.probe), lines,
                              seed=cfg.seed + 1, **common)
    hole.meta["pump_frequency_hz"] = pump_frequency
    return {"holeburn": hole, "reference": reference}


def run_simulate(cfg: ExperimentConfig, out_dir: Path, threads: int = 1,
                 progress: ProgressFactory = _no_progress) -> RunResult:
    """Simulate the configured experiment and write its data files."""
    if cfg.experiment not in SIMULATIONS:
        raise ValidationError([f"experiment {cfg.experiment} cannot be simulated"])
    logger.info(f"Simulating {cfg.experiment} (seed {cfg.seed})")
    if cfg.experiment in ("echo", "deer3", "deer4"):
        trace, tomo = _simulate_coherent(cfg, threads, progress)
        writer = _Writer(f"simulate-{cfg.experiment}", cfg, out_dir)
        writer.add(write_traces(writer.out_dir / "traces.csv", trace, tomo))
        writer.plot("traces.csv", "trace")
        writer.result.summary = {"points": len(trace), "kind": trace.meta["kind"]}
        return writer.finish({"scan_points": len(trace), "channels": 4})

    spectra = _simulate_spectrum(cfg)
    writer = _Writer(f"simulate-{cfg.experiment}", cfg, out_dir)
    for name, spectrum in spectra.items():
        writer.add(write_spectrum(writer.out_dir / f"{name}.csv", spectrum))
        writer.plot(f"{name}.csv", "spectrum")
    points = len(next(iter(spectra.values())).scan_values)
    writer.result.summary = {"points": points, "spectra": sorted(spectra)}
    return writer.finish({"scan_points": points})


# -- fit --------------------------------------------------------------------------------


def _fit_triplet(path: Path, init: Optional[FitReport] = None) -> FitReport:
    spectrum = read_spectrum(path)
    report = fit_lorentzian_triplet(spectrum.scan_values, spectrum.signal, init=init)
    logger.info(f"Triplet fit of {path.name}: converged={report.converged} after {report.iterations} iterations")
    return report


def run_fit_odmr(cfg: ExperimentConfig, data_path: Path, out_dir: Path) -> RunResult:
    report = _fit_triplet(Path(data_path))
    writer = _Writer("fit-odmr", cfg, out_dir)
    lines = {f"f{i}_MHz": report.params[f"f{i}"] / MHZ for i in (1, 2, 3)}
    writer.add(write_fit_report(writer.out_dir / "fit_odmr.json", report, cfg.config_hash, lines))
    writer.result.reports["odmr"] = report
    return writer.finish({"n_points": report.n_points})


def run_holeburn(cfg: ExperimentConfig, hole_path: Path, reference_path: Path, out_dir: Path) -> RunResult:
    """Fit both spectra (the hole fit starts from the reference fit) and report p_B."""
    ref = _fit_triplet(Path(reference_path))
    hole = _fit_triplet(Path(hole_path), init=ref)
    efficiency = holeburn_efficiency(hole, ref)
    logger.info(f"Hole-burn efficiency {efficiency.value:.4f} +/- {efficiency.uncertainty:.4f}")
    writer = _Writer("holeburn-efficiency", cfg, out_dir)
    writer.add(write_fit_report(writer.out_dir / "fit_reference.json", ref, cfg.config_hash))
    writer.add(write_fit_report(writer.out_dir / "fit_holeburn.json", hole, cfg.config_hash))
    writer.add(write_json(writer.out_dir / "holeburn_efficiency.json", {
        "config_hash": cfg.config_hash,
        "flipped_fraction_all": efficiency.value,
        "flipped_fraction_all_err": efficiency.uncertainty,
        "flipped_fraction_orientation": 4.0 * efficiency.value,
        "flipped_fraction_orientation_err": 4.0 * efficiency.uncertainty,
    }))
    writer.result.summary = {"efficiency": efficiency.value, "efficiency_err": efficiency.uncertainty}
    writer.result.reports.update(reference=ref, holeburn=hole)
    return writer.finish({"n_points": ref.n_points})


def _decay_fits(trace: TraceSet) -> Tuple[FitReport, Optional[FitReport]]:
    t_dip, normalized, tomo = decay_inputs(trace)
    exp_report = fit_exp_decay(t_dip, normalized)
    complex_report = None
    try:
        ref = int(np.argmin(t_dip))
        z = tomo.complex_signal / tomo.complex_signal[ref]
        complex_report = fit_complex_decay(t_dip, z)
    except NumericError as err:
        logger.warning(f"Complex decay fit skipped: {err}")
    return exp_report, complex_report


def run_fit_decay(cfg: ExperimentConfig, data_path: Path, out_dir: Path) -> RunResult:
    """Exponential (and joint complex) decay fit of a DEER trace file."""
    trace, _ = read_traces(Path(data_path))
    if "kind" not in trace.meta or "tau_s" not in trace.meta:
        raise EnvMismatch(f"{data_path}: trace metadata lacks kind or tau_s; keep the .meta.json sidecar")
    exp_report, complex_report = _decay_fits(trace)
    logger.info(f"Decay rate {exp_report.params['rate']:.6g} +/- {exp_report.uncertainties['rate']:.3g} 1/s")
    writer = _Writer("fit-decay", cfg, out_dir)
    writer.add(write_fit_report(writer.out_dir / "fit_decay.json", exp_report, cfg.config_hash))
    writer.result.reports["decay"] = exp_report
    if complex_report is not None:
        writer.add(write_fit_report(writer.out_dir / "fit_complex_decay.json", complex_report, cfg.config_hash))
        writer.result.reports["complex_decay"] = complex_report
    writer.result.summary = {"rate": exp_report.params["rate"], "rate_err": exp_report.uncertainties["rate"]}
    return writer.finish({"n_points": exp_report.n_points})


# -- analyze ----------------------------------------------------------------------------


def concentration_report(cfg: ExperimentConfig, rate: float, rate_err: float,
                         flip_probability: Optional[float] = None) -> Dict[str, Any]:
    """Concentration of spins B from a decay rate with the theoretical and empirical k."""
    if flip_probability is None:
        flip_probability = cfg.kinetics.flip_probability if cfg.kinetics else 0.68
    k_theory = cfg.kinetics.k if cfg.kinetics else compute_k(cfg.constants)
    k_empirical = rate_constant_from_ppb(cfg.empirical_k_per_ppb, cfg.constants)
    out: Dict[str, Any] = {
        "config_hash": cfg.config_hash,
        "rate_per_s": rate,
        "rate_err_per_s": rate_err,
        "flip_probability": flip_probability,
        "k_theory_cm3_per_s": k_theory,
        "k_empirical_cm3_per_s": k_empirical,
        "k_empirical_per_ppb_s": cfg.empirical_k_per_ppb,
    }
    if rate == 0.0:
        raise DivisionDegenerate("decay rate is zero; no concentration can be inferred")
    for label, k in (("theory", k_theory), ("empirical", k_empirical)):
        conc = concentration_from_rate(rate, flip_probability, k)
        err = abs(conc * rate_err / rate)
        out[f"concentration_{label}_cm3"] = conc
        out[f"concentration_{label}_cm3_err"] = err
        out[f"concentration_{label}_ppb"] = density_to_ppb(conc, cfg.constants)
        out[f"concentration_{label}_ppb_err"] = density_to_ppb(err, cfg.constants)
        out[f"excited_{label}_ppb"] = density_to_ppb(conc * flip_probability, cfg.constants)
    return out


def run_analyze(cfg: ExperimentConfig, out_dir: Path, rate: Optional[float] = None, rate_err: float = 0.0,
                data_path: Optional[Path] = None, report_path: Optional[Path] = None,
                flip_probability: Optional[float] = None) -> RunResult:
    """Concentration from a rate given directly, a fit report, or a DEER trace file."""
    sources = [x is not None for x in (rate, data_path, report_path)]
    if sum(sources) != 1:
        raise ValidationError(["give exactly one of a rate, a trace file or a fit report"])
    reports: Dict[str, FitReport] = {}
    if data_path is not None:
        trace, _ = read_traces(Path(data_path))
        reports["decay"], _ = _decay_fits(trace)
    elif report_path is not None:
        reports["decay"] = read_fit_report(Path(report_path))
    if reports:
        rate = reports["decay"].params["rate"]
        rate_err = reports["decay"].uncertainties["rate"]
    result = concentration_report(cfg, rate, rate_err, flip_probability)
    logger.info(
        f"Concentration (theory k): {result['concentration_theory_ppb']:.4g} ppb, "
        f"(empirical k): {result['concentration_empirical_ppb']:.4g} ppb"
    )
    writer = _Writer("analyze-concentration", cfg, out_dir)
    if "decay" in reports and data_path is not None:
        writer.add(write_fit_report(writer.out_dir / "fit_decay.json", reports["decay"], cfg.config_hash))
    writer.add(write_json(writer.out_dir / "concentration.json", result))
    writer.result.summary = result
    writer.result.reports.update(reports)
    return writer.finish({})


# -- Monte-Carlo bath -------------------------------------------------------------------


def _mc_times(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.scan is not None:
        return cfg.scan.values()
    b = cfg.bath
    rate = b.concentration * b.flip_probability * compute_k(cfg.constants)
    stop = 3.0 / rate if rate > 0 else 100e-6
    return np.linspace(0.0, stop, 31)


def run_mc_bath(cfg: ExperimentConfig, out_dir: Path, threads: int = 1,
                progress: ProgressFactory = _no_progress) -> RunResult:
    """Monte-Carlo DEER factor of the configured bath and its complex decay fit."""
    if cfg.bath is None:
        raise ValidationError(["mc-bath needs a bath section"])
    b = cfg.bath
    times = _mc_times(cfg)
    trace: MonteCarloTrace = mc_deer_trace(
        b.concentration, b.polarization, b.flip_probability, times, b.n_realizations, cfg.seed, cfg.constants,
        radius=b.radius, exclusion=b.exclusion, kernel_scale=b.kernel_scale, axis_angle=b.axis_angle,
        estimator=b.estimator, threads=threads, chunk_size=b.chunk_size, on_progress=progress("mc-bath"),
    )
    report = fit_complex_decay(times, trace.mean)
    analytic = b.concentration * b.flip_probability * compute_k(cfg.constants) * abs(b.kernel_scale)
    derived = {
        "analytic_rate_per_s": analytic,
        "rate_relative_error": (report.params["rate"] - analytic) / analytic if analytic > 0 else None,
        "slope_ratio": report.params["ratio"],
        "slope_ratio_err": report.uncertainties["ratio"],
    }
    writer = _Writer("mc-bath", cfg, out_dir)
    writer.add(write_mc_trace(writer.out_dir / "mc_trace.csv", trace))
    writer.plot("mc_trace.csv", "mc")
    writer.add(write_fit_report(writer.out_dir / "fit_mc.json", report, cfg.config_hash, derived))
    writer.result.summary = {"rate": report.params["rate"], **derived}
    writer.result.reports["mc"] = report
    return writer.finish({"n_realizations": trace.n_realizations, "time_points": len(times)})
