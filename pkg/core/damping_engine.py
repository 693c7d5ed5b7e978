"""Nonselective evolution under continuous energy measurement.

With the Lindblad operator equal to the Hamiltonian the master equation is
diagonal in the energy basis, so every element evolves on its own:
ρ_nm(t) = ρ_nm(0)·exp(−iΔE·t/ħ − κΔE²t/2) with ΔE = E_n − E_m.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from core.constants import CONSTANTS
from core.errors import SimulationError
from core.spectral_solver import SpectralBasis
from core.squid_model import InvalidParameters
from core.state_prep import DensityMatrix

logger = logging.getLogger(__name__)

DEGENERATE_SPLITTING = 1e-15  # eV
IMAGINARY_RESIDUE = 1e-10
TRACE_CHUNK = 8192  # times per exp(outer) block

Pair = Tuple[int, int]


@dataclass(frozen=True)
class DegeneratePair(SimulationError):
    pass


@dataclass(frozen=True)
class NumericalInconsistency(SimulationError):
    pass


@dataclass(frozen=True)
class MeasurementCoupling:
    kappa_e: float  # 1/(eV²·s)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.kappa_e) and self.kappa_e >= 0.0):
            raise InvalidParameters(f"kappa_e must be a finite non-negative number, got {self.kappa_e}")

    @classmethod
    def relative_to(cls, multiplier: float, splitting: float) -> "MeasurementCoupling":
        """``multiplier`` × κ_crit for a pair with energy gap ``splitting``."""
        return cls(multiplier * critical_coupling(splitting))

    @property
    def is_closed(self) -> bool:
        return self.kappa_e == 0.0


def critical_coupling(splitting: float) -> float:
    """κ_crit = 1/(h·ΔE)."""
    if abs(splitting) < DEGENERATE_SPLITTING:
        raise DegeneratePair(f"splitting {splitting:.3e} eV is below {DEGENERATE_SPLITTING:.0e} eV")
    return 1.0 / (CONSTANTS.planck_h * abs(splitting))


def kappa_crit(basis: SpectralBasis, n: int, m: int) -> float:
    return critical_coupling(basis.splitting(n, m))


@dataclass(frozen=True, eq=False)
class FluxTrace:
    times: np.ndarray
    mean_x: np.ndarray
    kappa_e: float
    basis_size: int
    initial_state: str
    captured_norm: float = 1.0
    tunneling_period: Optional[float] = None
    kappa_crit_10: Optional[float] = None

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.mean_x)):
            raise NumericalInconsistency("flux trace contains non-finite values")

    def to_text(self) -> str:
        ratio = self.kappa_e / self.kappa_crit_10 if self.kappa_crit_10 else float("nan")
        header = "\n".join(
            [
                f"kappa_e={self.kappa_e:.12e}",
                f"kappa_over_kappa_crit_10={ratio:.12e}",
                f"basis_size={self.basis_size}",
                f"initial_state={self.initial_state}",
                f"captured_norm={self.captured_norm:.12e}",
                "t_s,t_over_T10,mean_x",
            ]
        )
        period = self.tunneling_period or float("nan")
        table = np.column_stack([self.times, self.times / period, self.mean_x])
        buffer = io.StringIO()
        np.savetxt(buffer, table, fmt="%.12e", delimiter=",", header=header, comments="# ")
        return buffer.getvalue()


@dataclass(frozen=True)
class DecayEntry:
    pair: Pair
    splitting: float  # eV, E_n − E_m
    omega: float  # rad/s
    period: float  # s
    tau: float  # s, inf for κ = 0
    kappa_crit: float  # 1/(eV²·s)


@dataclass(frozen=True)
class DecayTable:
    kappa_e: float
    entries: Tuple[DecayEntry, ...]

    def entry(self, n: int, m: int) -> DecayEntry:
        key = (max(n, m), min(n, m))
        for item in self.entries:
            if item.pair == key:
                return item
        raise KeyError(key)

    def max_tau(self, pairs: Optional[Sequence[Pair]] = None) -> float:
        chosen = self.entries if pairs is None else [self.entry(n, m) for n, m in pairs]
        return max(item.tau for item in chosen)

    def as_rows(self) -> List[Dict[str, float]]:
        return [
            {
                "n": item.pair[0],
                "m": item.pair[1],
                "splitting_eV": item.splitting,
                "omega_rad_s": item.omega,
                "period_s": item.period,
                "tau_s": item.tau if math.isfinite(item.tau) else None,
                "kappa_crit": item.kappa_crit,
            }
            for item in self.entries
        ]


def _energies_for(rho: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    size = rho.shape[0]
    if size > basis.n_levels:
        raise InvalidParameters(f"state has {size} levels but the basis only {basis.n_levels}")
    return basis.energies[:size]


def _gaps(energies: np.ndarray) -> np.ndarray:
    return energies[:, None] - energies[None, :]


def _evolution_factors(energies: np.ndarray, kappa: MeasurementCoupling, t: float) -> np.ndarray:
    gaps = _gaps(energies)
    return np.exp(-1j * gaps * t / CONSTANTS.hbar - 0.5 * kappa.kappa_e * gaps**2 * t)


def _check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0.0) or np.any(np.diff(times) < 0.0):
        raise InvalidParameters("times must be non-negative and sorted ascending")
    return times


def evolve_density(
    rho0: DensityMatrix,
    basis: SpectralBasis,
    kappa: MeasurementCoupling,
    t: float,
) -> DensityMatrix:
    if t < 0.0:
        raise InvalidParameters(f"t must be non-negative, got {t}")
    energies = _energies_for(rho0.elements, basis)
    elements = rho0.elements * _evolution_factors(energies, kappa, t)
    np.fill_diagonal(elements, np.diag(rho0.elements))
    return DensityMatrix(elements=elements, captured_norm=rho0.captured_norm, label=rho0.label)


def flux_trace(
    rho0: DensityMatrix,
    basis: SpectralBasis,
    kappa: MeasurementCoupling,
    times,
) -> FluxTrace:
    """⟨x̂(t)⟩ = Σ_nm ρ_nm(t)⟨m|x̂|n⟩ at every requested time."""
    times = _check_times(times)
    energies = _energies_for(rho0.elements, basis)
    size = energies.size
    weights = rho0.elements * basis.x_matrix[:size, :size].T
    gaps = _gaps(energies)
    rows, cols = np.nonzero(weights)
    rates = -1j * gaps[rows, cols] / CONSTANTS.hbar - 0.5 * kappa.kappa_e * gaps[rows, cols] ** 2
    coefficients = weights[rows, cols]
    values = np.zeros(times.size, complex)
    for start in range(0, times.size if rows.size else 0, TRACE_CHUNK):
        block = times[start : start + TRACE_CHUNK]
        values[start : start + block.size] = np.exp(np.outer(block, rates)) @ coefficients

    scale = max(1.0, float(np.sum(np.abs(weights))))
    residue = float(np.max(np.abs(values.imag), initial=0.0))
    if residue > IMAGINARY_RESIDUE * scale:
        raise NumericalInconsistency(f"flux expectation has imaginary residue {residue:.3e}")
    period, crit = _doublet_metadata(basis)
    return FluxTrace(
        times=times,
        mean_x=np.real(values),
        kappa_e=kappa.kappa_e,
        basis_size=size,
        initial_state=rho0.label,
        captured_norm=rho0.captured_norm,
        tunneling_period=period,
        kappa_crit_10=crit,
    )


def _doublet_metadata(basis: SpectralBasis) -> Tuple[Optional[float], Optional[float]]:
    if basis.n_levels < 2 or abs(basis.splitting(1, 0)) < DEGENERATE_SPLITTING:
        return None, None
    return basis.tunneling_period, kappa_crit(basis, 1, 0)


def asymptotic_flux(rho0: DensityMatrix, basis: SpectralBasis) -> float:
    """Long-time limit Σ_n ρ_nn⟨n|x̂|n⟩ for κ > 0."""
    size = rho0.size
    return float(np.sum(rho0.populations * np.diag(basis.x_matrix)[:size]))


def _two_level_envelope(basis: SpectralBasis, kappa: MeasurementCoupling, times: np.ndarray):
    splitting = basis.splitting(1, 0)
    omega = splitting / CONSTANTS.hbar
    return omega, np.exp(-0.5 * kappa.kappa_e * splitting**2 * times)


def two_level_flux(basis: SpectralBasis, kappa: MeasurementCoupling, times) -> FluxTrace:
    """Closed-form damped cosine for the |L⟩ state of the ground doublet."""
    if basis.n_levels < 2:
        raise InvalidParameters("two-level dynamics need at least two levels")
    times = _check_times(times)
    omega, envelope = _two_level_envelope(basis, kappa, times)
    x = basis.x_matrix
    diagonal = 0.5 * (x[0, 0] + x[1, 1])
    values = diagonal + x[0, 1] * np.cos(omega * times) * envelope
    return FluxTrace(
        times=times,
        mean_x=values,
        kappa_e=kappa.kappa_e,
        basis_size=2,
        initial_state="left",
        tunneling_period=basis.tunneling_period,
        kappa_crit_10=kappa_crit(basis, 1, 0),
    )


def two_level_density(basis: SpectralBasis, kappa: MeasurementCoupling, t: float) -> DensityMatrix:
    """ρ(t) for an initial |L⟩ written in the {|L⟩, |R⟩} basis."""
    if basis.n_levels < 2:
        raise InvalidParameters("two-level dynamics need at least two levels")
    omega, envelope = _two_level_envelope(basis, kappa, np.asarray(t, dtype=float))
    d = float(envelope)
    c, s = math.cos(omega * t), math.sin(omega * t)
    elements = 0.5 * np.array(
        [[1.0 + d * c, -1j * d * s], [1j * d * s, 1.0 - d * c]],
        dtype=complex,
    )
    return DensityMatrix(elements=elements, label="left (LR basis)")


def to_lr_representation(rho: DensityMatrix) -> DensityMatrix:
    """Rotate a ground-doublet density matrix from {|0⟩, |1⟩} to {|L⟩, |R⟩}."""
    if rho.size < 2:
        raise InvalidParameters("LR representation needs the ground doublet")
    u = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    block = rho.elements[:2, :2]
    return DensityMatrix(elements=u @ block @ u, captured_norm=rho.captured_norm, label=f"{rho.label} (LR basis)")


def lr_flux(basis: SpectralBasis, kappa: MeasurementCoupling, times) -> FluxTrace:
    """⟨x̂(t)⟩ for |L⟩ through LR populations and coherences."""
    times = _check_times(times)
    x = basis.x_matrix
    mid = 0.5 * (x[0, 0] + x[1, 1])
    x_lr = np.array([[mid + x[0, 1], 0.5 * (x[0, 0] - x[1, 1])], [0.5 * (x[0, 0] - x[1, 1]), mid - x[0, 1]]])
    values = np.empty(times.size)
    for index, t in enumerate(times):
        rho = two_level_density(basis, kappa, float(t)).elements
        values[index] = float(np.real(np.sum(rho * x_lr.T)))
    return FluxTrace(
        times=times,
        mean_x=values,
        kappa_e=kappa.kappa_e,
        basis_size=2,
        initial_state="left",
        tunneling_period=basis.tunneling_period,
        kappa_crit_10=kappa_crit(basis, 1, 0),
    )


def decay_table(
    basis: SpectralBasis,
    kappa: MeasurementCoupling,
    pairs: Optional[Sequence[Pair]] = None,
) -> DecayTable:
    if pairs is None:
        pairs = [(n, m) for n in range(basis.n_levels) for m in range(n)]
    entries = []
    for n, m in pairs:
        n, m = max(n, m), min(n, m)
        splitting = basis.splitting(n, m)
        crit = critical_coupling(splitting)
        tau = math.inf if kappa.is_closed else 2.0 / (kappa.kappa_e * splitting**2)
        entries.append(
            DecayEntry(
                pair=(n, m),
                splitting=splitting,
                omega=splitting / CONSTANTS.hbar,
                period=CONSTANTS.planck_h / splitting,
                tau=tau,
                kappa_crit=crit,
            )
        )
    return DecayTable(kappa_e=kappa.kappa_e, entries=tuple(entries))


def surviving_pairs(table: DecayTable, elapsed: float) -> List[Pair]:
    """Pairs whose oscillation outlives ``elapsed``: |ΔE| < √(2/(κ·elapsed))."""
    if table.kappa_e == 0.0 or elapsed <= 0.0:
        return [item.pair for item in table.entries]
    bound = math.sqrt(2.0 / (table.kappa_e * elapsed))
    return [item.pair for item in table.entries if abs(item.splitting) < bound]


def populated_pairs(rho0: DensityMatrix, basis: SpectralBasis, tolerance: float = 1e-14) -> List[Pair]:
    """Pairs contributing to ⟨x̂(t)⟩, i.e. with ρ_nm(0)⟨m|x̂|n⟩ ≠ 0."""
    size = rho0.size
    weights = np.abs(rho0.elements * basis.x_matrix[:size, :size].T)
    return [(n, m) for n in range(size) for m in range(n) if weights[n, m] > tolerance]


def bohr_amplitudes(
    rho0: DensityMatrix,
    basis: SpectralBasis,
    kappa: MeasurementCoupling,
    t: float,
) -> Dict[Pair, float]:
    """Amplitude 2|ρ_nm(t)⟨m|x̂|n⟩| of each ω_nm component of ⟨x̂(t)⟩."""
    rho = evolve_density(rho0, basis, kappa, t).elements
    size = rho.shape[0]
    x = basis.x_matrix[:size, :size]
    return {(n, m): 2.0 * abs(rho[n, m] * x[m, n]) for n in range(size) for m in range(n)}


def resolving_samples(rho0: DensityMatrix, basis: SpectralBasis, window: float, per_period: int = 4) -> int:
    """Uniform samples over ``window`` keeping every populated ω_nm below Nyquist."""
    pairs = populated_pairs(rho0, basis)
    fastest = max((abs(basis.splitting(n, m)) for n, m in pairs), default=0.0)
    return max(per_period, int(math.ceil(per_period * window * fastest / CONSTANTS.planck_h)))


def window_times(start: float, window: float, samples: int) -> np.ndarray:
    """t_k = start + k·window/samples for k < samples (the end point is excluded)."""
    if window <= 0.0 or samples < 4:
        raise InvalidParameters(f"demodulation window needs window > 0 and >= 4 samples, got {window}, {samples}")
    return start + np.arange(samples) * (window / samples)


def _hann(samples: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(samples) / samples)


def demodulate(trace: FluxTrace, omega: float) -> float:
    """Amplitude of the ω component of a trace sampled by ``window_times``.

    Periodic Hann weighting; when the window spans whole periods of ω the
    constant and −ω parts cancel exactly.
    """
    times = trace.times
    if times.size < 4:
        raise InvalidParameters("demodulation needs at least four samples")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise InvalidParameters("demodulation needs uniformly sampled times")
    weights = _hann(times.size)
    projection = np.dot(weights * trace.mean_x, np.exp(-1j * omega * times))
    return float(2.0 * abs(projection) / np.sum(weights))


def window_envelope(times: np.ndarray, rate: float) -> float:
    """Hann-weighted mean of exp(−rate·t) over the demodulation window."""
    weights = _hann(times.size)
    return float(np.sum(weights * np.exp(-rate * times)) / np.sum(weights))


def demodulated_amplitudes(
    rho0: DensityMatrix,
    basis: SpectralBasis,
    kappa: MeasurementCoupling,
    start: float,
    window: float,
    pairs: Sequence[Pair],
) -> Dict[Pair, Tuple[float, float]]:
    """Per pair, the amplitude read off the emitted trace and the closed-form expectation.

    The expectation is 2|ρ_nm(0)⟨m|x̂|n⟩| times the window-averaged decay
    exp(−κΔE²t/2).
    """
    times = window_times(start, window, resolving_samples(rho0, basis, window))
    trace = flux_trace(rho0, basis, kappa, times)
    initial = bohr_amplitudes(rho0, basis, MeasurementCoupling(0.0), 0.0)
    result: Dict[Pair, Tuple[float, float]] = {}
    for pair in pairs:
        gap = basis.splitting(*pair)
        measured = demodulate(trace, abs(gap) / CONSTANTS.hbar)
        expected = initial[pair] * window_envelope(times, 0.5 * kappa.kappa_e * gap**2)
        result[pair] = (measured, expected)
    return result


def _damped_cosine(t, offset, a, b, rate, omega):
    return offset + np.exp(-rate * t) * (a * np.cos(omega * t) + b * np.sin(omega * t))


def fit_envelope_rate(times, values, omega: float) -> float:
    """Decay rate of a single damped oscillation at the known angular frequency.

    The signal is demodulated at ``omega`` and averaged over one period, a
    straight line is fitted to the log magnitude, and the estimate is then
    polished by a least-squares fit of the damped-cosine model.
    """
    times = _check_times(times)
    values = np.asarray(values, dtype=float)
    step = float(times[1] - times[0])
    period = 2.0 * math.pi / omega
    per_period = period / step
    window = int(round(per_period))
    if window < 4 or abs(per_period - window) > 1e-6 * per_period or times.size <= 2 * window:
        raise InvalidParameters("samples must divide one period evenly and cover at least two periods")

    demodulated = values * np.exp(1j * omega * times)
    cumulative = np.concatenate([[0.0], np.cumsum(demodulated)])
    sums = cumulative[window + 1 :] - cumulative[: -window - 1]
    averaged = (sums - 0.5 * (demodulated[:-window] + demodulated[window:])) / window
    centres = times[: averaged.size] + 0.5 * period
    slope = np.polyfit(centres, np.log(np.abs(averaged)), 1)[0]
    rate = max(-slope, 0.0)

    guess = [0.0, float(values[0]), 0.0, rate * period]
    try:
        params, _ = curve_fit(
            lambda s, offset, a, b, r: _damped_cosine(s, offset, a, b, r, 2.0 * math.pi),
            times / period,
            values,
            p0=guess,
            maxfev=10000,
        )
    except RuntimeError as exc:
        logger.warning("damped-cosine refinement failed (%s); using the regression estimate", exc)
        return rate
    logger.debug("envelope rate regression=%.9e refined=%.9e", rate, params[3] / period)
    return float(params[3] / period)


def _superoperator(energies: np.ndarray, kappa: float, include_hamiltonian: bool) -> np.ndarray:
    size = energies.size
    h = np.diag(energies)
    identity = np.eye(size)
    commutator = np.kron(h, identity) - np.kron(identity, h.T)
    generator = -0.5 * kappa * (commutator @ commutator)
    if include_hamiltonian:
        generator = generator - 1j * commutator / CONSTANTS.hbar
    real, imag = generator.real, generator.imag
    return np.block([[real, -imag], [imag, real]])


def integrate_master_equation(
    rho0: DensityMatrix,
    energies,
    kappa: MeasurementCoupling,
    times,
    *,
    frame: str = "interaction",
    method: Optional[str] = None,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> np.ndarray:
    """Integrate dρ/dt = −(i/ħ)[H, ρ] − (κ/2)[H, [H, ρ]] numerically.

    ``frame='interaction'`` integrates only the measurement term and restores
    the coherent phases analytically; ``frame='lab'`` integrates both and is
    meant for small synthetic spectra. Returns an array of shape
    (len(times), n, n).
    """
    if frame not in ("interaction", "lab"):
        raise InvalidParameters(f"frame must be 'interaction' or 'lab', got {frame!r}")
    times = _check_times(times)
    energies = np.asarray(energies, dtype=float)[: rho0.size]
    size = energies.size
    matrix = _superoperator(energies, kappa.kappa_e, include_hamiltonian=(frame == "lab"))
    flat = rho0.elements.reshape(-1)
    y0 = np.concatenate([flat.real, flat.imag])

    def rhs(_t, y):
        return matrix @ y

    chosen = method or ("Radau" if frame == "interaction" else "DOP853")
    if times[-1] == 0.0:
        return np.repeat(rho0.elements[None, :, :], times.size, axis=0)
    kwargs = {"jac": matrix} if chosen in ("Radau", "BDF", "LSODA") else {}
    solution = solve_ivp(rhs, (0.0, float(times[-1])), y0, method=chosen, t_eval=times, rtol=rtol, atol=atol, **kwargs)
    if not solution.success:
        raise NumericalInconsistency(f"master-equation integration failed: {solution.message}")
    logger.debug("master equation (%s, %s): %d rhs evaluations", frame, chosen, solution.nfev)

    half = size * size
    states = (solution.y[:half] + 1j * solution.y[half:]).T.reshape(times.size, size, size)
    if frame == "interaction":
        gaps = _gaps(energies)
        states = states * np.exp(-1j * gaps[None, :, :] * times[:, None, None] / CONSTANTS.hbar)
    return states


__all__ = [
    "DecayEntry",
    "DecayTable",
    "DegeneratePair",
    "FluxTrace",
    "MeasurementCoupling",
    "NumericalInconsistency",
    "asymptotic_flux",
    "bohr_amplitudes",
    "critical_coupling",
    "decay_table",
    "evolve_density",
    "fit_envelope_rate",
    "flux_trace",
    "integrate_master_equation",
    "kappa_crit",
    "lr_flux",
    "populated_pairs",
    "surviving_pairs",
    "to_lr_representation",
    "two_level_density",
    "two_level_flux",
]
