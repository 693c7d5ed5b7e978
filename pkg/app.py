import argparse
import logging
import sys
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import List, Optional

from core.config_parser import ConfigError, ExperimentConfig, load_config
from core.errors import SimulationError
from core.experiments import cmd_damping_sweep, cmd_spectrum, cmd_validate
from core.output_sandbox import OutputSandbox, OutputViolation
from core.run_log import RunLog

DEFAULT_CONFIG = Path("configs") / "default.toml"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squidsim",
        description="Measurement-induced flux damping in an rf-SQUID double well.",
    )
    parser.add_argument("command", choices=["spectrum", "sweep", "validate"])
    parser.add_argument("--config", default=str(DEFAULT_CONFIG), help="TOML experiment description")
    parser.add_argument("--out", help="output directory (overrides [output] directory)")
    parser.add_argument("--seed", type=int, help="trajectory seed override")
    parser.add_argument("--levels", type=int, help="basis size override")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    parser.add_argument("--log-mode", choices=["none", "error", "all"], default="error")
    return parser


def _setup_logging(logs_dir: Path, log_mode: str) -> RotatingFileHandler:
    logs_dir.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(logs_dir / "squidsim.log", maxBytes=1_000_000, backupCount=3, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s - %(message)s"))
    mode = (log_mode or "error").lower()
    if mode == "none":
        handler.setLevel(logging.CRITICAL + 1)
    elif mode == "all":
        handler.setLevel(logging.DEBUG)
    else:
        handler.setLevel(logging.ERROR)
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    root.addHandler(handler)
    return handler


def _run(command: str, config: ExperimentConfig, sandbox: OutputSandbox, run_log: RunLog) -> List[str]:
    """Run one command and return its summary lines; raises on failed checks."""
    if command == "spectrum":
        outcome = cmd_spectrum(config, sandbox)
        summary = outcome.summary
        lines = [f"wrote {sandbox.root / 'spectrum'}"]
        if "self_test" in summary:
            lines.append(f"self-test {summary['self_test']}: max relative error {max(summary['relative_errors']):.3e}")
        else:
            low, high = summary["minima_x"]
            lines += [
                f"barrier dU = {summary['barrier_height_eV']:.6f} eV, minima x = {low:+.5f} / {high:+.5f}",
                f"hbar w0 = {summary['zero_point_energy_eV']:.6e} eV, WKB w = {summary['wkb_omega_rad_s']:.6e} rad/s",
                f"kT/dU at {summary['temperature_K']:g} K = {summary['thermal_ratio']:.4e}",
                f"E1-E0 = {summary['exact_splitting_eV']:.6e} eV, C = {summary['capacitance_F']:.6e} F",
            ]
        if outcome.failures:
            raise _ChecksFailed(outcome.failures)
        return lines
    if command == "sweep":
        outcome = cmd_damping_sweep(config, sandbox, run_log)
        manifest = outcome.manifest
        lines = [
            f"wrote {len(manifest['entries'])} traces and {len(manifest['zoom'])} zoom traces to {sandbox.root / 'sweep'}"
        ]
        if outcome.failed:
            raise _ChecksFailed([f"{r.entry.label}: {r.error}" for r in outcome.results if r.status != "ok"])
        return lines
    report = cmd_validate(config, sandbox)
    lines = [f"{check.name}: {check.status}" for check in report.checks]
    if not report.passed:
        raise _ChecksFailed([check.name for check in report.checks if check.status == "failed"])
    return lines


class _ChecksFailed(Exception):
    def __init__(self, failures: List[str]) -> None:
        super().__init__("; ".join(failures))
        self.failures = failures


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    config_path = Path(args.config)
    if not config_path.is_file():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(config_path).with_overrides(out=args.out, seed=args.seed, levels=args.levels)
        sandbox = OutputSandbox.create(config.output_directory)
    except (ConfigError, OutputViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logs_dir = sandbox.root / "logs"
    handler = _setup_logging(logs_dir, args.log_mode)
    logger = logging.getLogger("squidsim")
    run_log = RunLog(logs_dir)
    start = time.monotonic()
    status, error, code = "ok", None, EXIT_OK
    try:
        lines = _run(args.command, config, sandbox, run_log)
        if not args.quiet:
            for line in lines:
                print(line)
    except ConfigError as exc:
        logger.error("%s rejected its configuration: %s", args.command, exc)
        status, error, code = "failed", str(exc), EXIT_USAGE
        print(f"error: {exc}", file=sys.stderr)
    except (SimulationError, OutputViolation, _ChecksFailed) as exc:
        logger.exception("%s failed", args.command)
        status, error, code = "failed", str(exc), EXIT_FAILED
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:
        logger.exception("%s failed unexpectedly", args.command)
        status, error, code = "failed", f"{type(exc).__name__}: {exc}", EXIT_FAILED
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
    finally:
        run_log.command(
            args.command,
            status=status,
            duration_ms=int((time.monotonic() - start) * 1000),
            error=error,
            config=str(config_path),
        )
        logging.getLogger().removeHandler(handler)
        handler.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
