"""Strict TOML experiment configuration parser for squidsim."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = {
    "quartic",
    "circuit",
    "capacitance",
    "grid",
    "basis",
    "initial_state",
    "spectrum",
    "sweep",
    "trajectories",
    "output",
}

STATE_KINDS = {"gaussian", "left", "right"}
SELF_TESTS = {"none", "harmonic", "box"}
SWEEP_REFERENCES = {"kappa_crit_10", "kappa_crit_32"}
ENERGY_OFFSETS = {"ground", "none", "lowest_populated"}


@dataclass(frozen=True)
class ConfigError(Exception):
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class QuarticBlock:
    mu: float
    lam: float


@dataclass(frozen=True)
class CircuitBlock:
    inductance: float
    critical_current: float
    external_flux_quanta: float = 0.5


@dataclass(frozen=True)
class CapacitanceBlock:
    farads: float = 1.0e-16
    calibrate: bool = True
    target_ground_energy: float = -0.0440591
    scan_min: float = 0.5e-16
    scan_max: float = 2.0e-16


@dataclass(frozen=True)
class GridBlock:
    x_min: float = -0.8
    x_max: float = 0.8
    n_points: int = 4001


@dataclass(frozen=True)
class BasisBlock:
    n_levels: int = 8


@dataclass(frozen=True)
class InitialStateBlock:
    kind: str = "gaussian"
    x_m: float = -0.27
    sigma_x: float = 0.06
    renormalize: bool = True
    min_capture: float = 0.9


@dataclass(frozen=True)
class SpectrumBlock:
    temperature: float = 4.0
    export_levels: int = 4
    convergence_study: bool = True
    self_test: str = "none"


@dataclass(frozen=True)
class SweepBlock:
    reference: str = "kappa_crit_32"
    multipliers: Tuple[float, ...] = (0.0, 1e-2, 1e-1, 10.0, 1e2, 1e3)
    span_periods: float = 10.0
    samples: int = 2000
    workers: int = 4
    plot_script: bool = True
    zoom_span_periods: float = 1.0
    zoom_entries: int = 3
    zoom_samples_per_period: int = 20


@dataclass(frozen=True)
class TrajectoryBlock:
    n_trajectories: int = 10000
    seed: int = 20240229
    kappa_multiplier: float = 1.0
    steps_per_period: int = 200
    span_periods: float = 40.0
    record_every: int = 10
    batch_size: int = 1000
    workers: int = 4
    energy_offset: str = "ground"
    dump: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    quartic: Optional[QuarticBlock] = None
    circuit: Optional[CircuitBlock] = None
    capacitance: CapacitanceBlock = field(default_factory=CapacitanceBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    basis: BasisBlock = field(default_factory=BasisBlock)
    initial_state: InitialStateBlock = field(default_factory=InitialStateBlock)
    spectrum: SpectrumBlock = field(default_factory=SpectrumBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    trajectories: Optional[TrajectoryBlock] = None
    output_directory: str = "out"

    def with_overrides(
        self,
        *,
        out: Optional[str] = None,
        seed: Optional[int] = None,
        levels: Optional[int] = None,
    ) -> "ExperimentConfig":
        updated = self
        if out is not None:
            updated = replace(updated, output_directory=out)
        if levels is not None:
            if levels < 2:
                raise ConfigError(f"--levels must be at least 2, got {levels}")
            updated = replace(updated, basis=BasisBlock(n_levels=levels))
        if seed is not None:
            block = updated.trajectories or TrajectoryBlock()
            updated = replace(updated, trajectories=replace(block, seed=seed))
        return updated


def load_config(path: str | Path) -> ExperimentConfig:
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {config_path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    try:
        payload = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"Invalid TOML: {exc}") from exc

    unknown = set(payload.keys()) - SECTIONS
    if unknown:
        raise ConfigError(f"Unknown sections: {', '.join(sorted(unknown))}")
    for name, section in payload.items():
        if not isinstance(section, dict):
            raise ConfigError(f"'{name}' must be a table")

    if ("quartic" in payload) == ("circuit" in payload):
        raise ConfigError("Exactly one of [quartic] or [circuit] is required")

    config = ExperimentConfig(
        quartic=_parse_quartic(payload["quartic"]) if "quartic" in payload else None,
        circuit=_parse_circuit(payload["circuit"]) if "circuit" in payload else None,
        capacitance=_parse_capacitance(payload.get("capacitance", {})),
        grid=_parse_grid(payload.get("grid", {})),
        basis=_parse_basis(payload.get("basis", {})),
        initial_state=_parse_initial_state(payload.get("initial_state", {})),
        spectrum=_parse_spectrum(payload.get("spectrum", {})),
        sweep=_parse_sweep(payload.get("sweep", {})),
        trajectories=_parse_trajectories(payload["trajectories"]) if "trajectories" in payload else None,
        output_directory=_parse_output(payload.get("output", {})),
    )
    return config


def _number(table: Dict[str, Any], key: str, section: str, default: Any = None, *, positive: bool = False,
            non_negative: bool = False) -> float:
    value = table.get(key, default)
    if value is None:
        raise ConfigError(f"[{section}] missing '{key}'")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"[{section}] '{key}' must be a finite number")
    if positive and not value > 0:
        raise ConfigError(f"[{section}] '{key}' must be positive, got {value}")
    if non_negative and value < 0:
        raise ConfigError(f"[{section}] '{key}' must be non-negative, got {value}")
    return float(value)


def _integer(table: Dict[str, Any], key: str, section: str, default: int, *, minimum: int = 1) -> int:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"[{section}] '{key}' must be an integer")
    if value < minimum:
        raise ConfigError(f"[{section}] '{key}' must be at least {minimum}, got {value}")
    return value


def _flag(table: Dict[str, Any], key: str, section: str, default: bool) -> bool:
    value = table.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"[{section}] '{key}' must be true or false")
    return value


def _choice(table: Dict[str, Any], key: str, section: str, default: str, allowed: set) -> str:
    value = table.get(key, default)
    if value not in allowed:
        raise ConfigError(f"[{section}] '{key}' has invalid value: {value!r}")
    return value


def _reject_unknown_fields(section: str, table: Dict[str, Any], allowed: set) -> None:
    unknown = set(table.keys()) - allowed
    if unknown:
        extra = ", ".join(sorted(unknown))
        raise ConfigError(f"[{section}] has unknown fields: {extra}")


def _parse_quartic(table: Dict[str, Any]) -> QuarticBlock:
    _reject_unknown_fields("quartic", table, {"mu", "lambda"})
    return QuarticBlock(
        mu=_number(table, "mu", "quartic", positive=True),
        lam=_number(table, "lambda", "quartic", positive=True),
    )


def _parse_circuit(table: Dict[str, Any]) -> CircuitBlock:
    _reject_unknown_fields("circuit", table, {"inductance", "critical_current", "external_flux_quanta"})
    return CircuitBlock(
        inductance=_number(table, "inductance", "circuit", positive=True),
        critical_current=_number(table, "critical_current", "circuit", positive=True),
        external_flux_quanta=_number(table, "external_flux_quanta", "circuit", 0.5),
    )


def _parse_capacitance(table: Dict[str, Any]) -> CapacitanceBlock:
    fields = {"farads", "calibrate", "target_ground_energy", "scan_min", "scan_max"}
    _reject_unknown_fields("capacitance", table, fields)
    defaults = CapacitanceBlock()
    block = CapacitanceBlock(
        farads=_number(table, "farads", "capacitance", defaults.farads, positive=True),
        calibrate=_flag(table, "calibrate", "capacitance", defaults.calibrate),
        target_ground_energy=_number(table, "target_ground_energy", "capacitance", defaults.target_ground_energy),
        scan_min=_number(table, "scan_min", "capacitance", defaults.scan_min, positive=True),
        scan_max=_number(table, "scan_max", "capacitance", defaults.scan_max, positive=True),
    )
    if block.scan_min >= block.scan_max:
        raise ConfigError("[capacitance] 'scan_min' must be below 'scan_max'")
    return block


def _parse_grid(table: Dict[str, Any]) -> GridBlock:
    _reject_unknown_fields("grid", table, {"x_min", "x_max", "n_points"})
    defaults = GridBlock()
    block = GridBlock(
        x_min=_number(table, "x_min", "grid", defaults.x_min),
        x_max=_number(table, "x_max", "grid", defaults.x_max),
        n_points=_integer(table, "n_points", "grid", defaults.n_points, minimum=501),
    )
    if not block.x_min < 0.0 < block.x_max:
        raise ConfigError("[grid] requires x_min < 0 < x_max")
    return block


def _parse_basis(table: Dict[str, Any]) -> BasisBlock:
    _reject_unknown_fields("basis", table, {"n_levels"})
    return BasisBlock(n_levels=_integer(table, "n_levels", "basis", BasisBlock().n_levels, minimum=2))


def _parse_initial_state(table: Dict[str, Any]) -> InitialStateBlock:
    _reject_unknown_fields("initial_state", table, {"kind", "x_m", "sigma_x", "renormalize", "min_capture"})
    defaults = InitialStateBlock()
    block = InitialStateBlock(
        kind=_choice(table, "kind", "initial_state", defaults.kind, STATE_KINDS),
        x_m=_number(table, "x_m", "initial_state", defaults.x_m),
        sigma_x=_number(table, "sigma_x", "initial_state", defaults.sigma_x, positive=True),
        renormalize=_flag(table, "renormalize", "initial_state", defaults.renormalize),
        min_capture=_number(table, "min_capture", "initial_state", defaults.min_capture, non_negative=True),
    )
    if block.min_capture >= 1.0:
        raise ConfigError("[initial_state] 'min_capture' must be below 1")
    return block


def _parse_spectrum(table: Dict[str, Any]) -> SpectrumBlock:
    _reject_unknown_fields("spectrum", table, {"temperature", "export_levels", "convergence_study", "self_test"})
    defaults = SpectrumBlock()
    return SpectrumBlock(
        temperature=_number(table, "temperature", "spectrum", defaults.temperature, non_negative=True),
        export_levels=_integer(table, "export_levels", "spectrum", defaults.export_levels),
        convergence_study=_flag(table, "convergence_study", "spectrum", defaults.convergence_study),
        self_test=_choice(table, "self_test", "spectrum", defaults.self_test, SELF_TESTS),
    )


def _parse_sweep(table: Dict[str, Any]) -> SweepBlock:
    fields = {
        "reference",
        "multipliers",
        "span_periods",
        "samples",
        "workers",
        "plot_script",
        "zoom_span_periods",
        "zoom_entries",
        "zoom_samples_per_period",
    }
    _reject_unknown_fields("sweep", table, fields)
    defaults = SweepBlock()
    raw = table.get("multipliers", list(defaults.multipliers))
    if not isinstance(raw, list) or not raw:
        raise ConfigError("[sweep] 'multipliers' must be a non-empty list")
    multipliers = tuple(
        _number({"multiplier": value}, "multiplier", "sweep", non_negative=True) for value in raw
    )
    return SweepBlock(
        reference=_choice(table, "reference", "sweep", defaults.reference, SWEEP_REFERENCES),
        multipliers=multipliers,
        span_periods=_number(table, "span_periods", "sweep", defaults.span_periods, positive=True),
        samples=_integer(table, "samples", "sweep", defaults.samples, minimum=1),
        workers=_integer(table, "workers", "sweep", defaults.workers),
        plot_script=_flag(table, "plot_script", "sweep", defaults.plot_script),
        zoom_span_periods=_number(table, "zoom_span_periods", "sweep", defaults.zoom_span_periods, non_negative=True),
        zoom_entries=_integer(table, "zoom_entries", "sweep", defaults.zoom_entries, minimum=0),
        zoom_samples_per_period=_integer(
            table, "zoom_samples_per_period", "sweep", defaults.zoom_samples_per_period, minimum=4
        ),
    )


def _parse_trajectories(table: Dict[str, Any]) -> TrajectoryBlock:
    fields = {
        "n_trajectories",
        "seed",
        "kappa_multiplier",
        "steps_per_period",
        "span_periods",
        "record_every",
        "batch_size",
        "workers",
        "energy_offset",
        "dump",
    }
    _reject_unknown_fields("trajectories", table, fields)
    defaults = TrajectoryBlock()
    return TrajectoryBlock(
        n_trajectories=_integer(table, "n_trajectories", "trajectories", defaults.n_trajectories),
        seed=_integer(table, "seed", "trajectories", defaults.seed, minimum=0),
        kappa_multiplier=_number(
            table, "kappa_multiplier", "trajectories", defaults.kappa_multiplier, non_negative=True
        ),
        steps_per_period=_integer(table, "steps_per_period", "trajectories", defaults.steps_per_period),
        span_periods=_number(table, "span_periods", "trajectories", defaults.span_periods, positive=True),
        record_every=_integer(table, "record_every", "trajectories", defaults.record_every),
        batch_size=_integer(table, "batch_size", "trajectories", defaults.batch_size),
        workers=_integer(table, "workers", "trajectories", defaults.workers),
        energy_offset=_choice(table, "energy_offset", "trajectories", defaults.energy_offset, ENERGY_OFFSETS),
        dump=_flag(table, "dump", "trajectories", defaults.dump),
    )


def _parse_output(table: Dict[str, Any]) -> str:
    _reject_unknown_fields("output", table, {"directory"})
    value = table.get("directory", "out")
    if not isinstance(value, str) or not value:
        raise ConfigError("[output] 'directory' must be a non-empty string")
    return value
