"""κ-sweep execution with per-entry run logging."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from core.damping_engine import FluxTrace, MeasurementCoupling, flux_trace
from core.output_sandbox import OutputSandbox
from core.run_log import RunLog
from core.spectral_solver import SpectralBasis
from core.state_prep import DensityMatrix


@dataclass(frozen=True)
class SweepEntry:
    label: str
    multiplier: float
    reference: str
    kappa_e: float
    artifact: str

    def describe(self) -> dict:
        return {
            "label": self.label,
            "multiplier": self.multiplier,
            "reference": self.reference,
            "kappa_e": self.kappa_e,
        }


@dataclass(frozen=True)
class SweepEntryResult:
    entry: SweepEntry
    status: str
    error: str | None
    trace: Optional[FluxTrace] = None


class SweepExecutor:
    def __init__(
        self,
        sandbox: OutputSandbox,
        run_log: RunLog,
        *,
        rho0: DensityMatrix,
        basis: SpectralBasis,
        times: np.ndarray,
        workers: int = 1,
    ) -> None:
        self._sandbox = sandbox
        self._run_log = run_log
        self._rho0 = rho0
        self._basis = basis
        self._times = times
        self._workers = max(1, workers)
        self._logger = logging.getLogger(__name__)

    def execute(self, entries: Iterable[SweepEntry]) -> List[SweepEntryResult]:
        entries = list(entries)
        with ThreadPoolExecutor(max_workers=self._workers) as pool:
            return list(pool.map(self._run_entry, entries))

    def _run_entry(self, entry: SweepEntry) -> SweepEntryResult:
        start = time.monotonic()
        try:
            self._sandbox.resolve(entry.artifact)
            trace = flux_trace(self._rho0, self._basis, MeasurementCoupling(entry.kappa_e), self._times)
            self._sandbox.write_text(entry.artifact, trace.to_text())
            duration = int((time.monotonic() - start) * 1000)
            self._logger.debug("sweep entry ok", extra={"entry": entry.describe()})
            self._run_log.sweep_entry(
                entry.label,
                artifact=entry.artifact,
                kappa_e=entry.kappa_e,
                status="ok",
                duration_ms=duration,
            )
            return SweepEntryResult(entry=entry, status="ok", error=None, trace=trace)
        except Exception as exc:
            duration = int((time.monotonic() - start) * 1000)
            self._logger.exception("sweep entry failed", extra={"entry": entry.describe()})
            self._run_log.sweep_entry(
                entry.label,
                artifact=entry.artifact,
                kappa_e=entry.kappa_e,
                status="failed",
                duration_ms=duration,
                error=str(exc),
            )
            return SweepEntryResult(entry=entry, status="failed", error=str(exc))
