"""Finite-difference eigensolver for H = −K d²/dx² + V(x) on a hard-walled grid."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from core.constants import CONSTANTS
from core.errors import SimulationError
from core.squid_model import InvalidParameters, QuarticPotential, kinetic_coefficient, potential_quartic

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 501
ORTHONORMALITY_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-8
PARITY_TOLERANCE = 1e-6
EVEN_POTENTIAL_TOLERANCE = 1e-12

Potential = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConvergenceFailure(SimulationError):
    pass


@dataclass(frozen=True)
class GridTooCoarse(SimulationError):
    pass


@dataclass(frozen=True)
class IndexOutOfRange(SimulationError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid; the two end nodes are hard walls where φ = 0."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self) -> None:
        if not (self.x_min < 0.0 < self.x_max):
            raise InvalidParameters(f"grid must straddle 0, got [{self.x_min}, {self.x_max}]")
        if self.n_points < MIN_GRID_POINTS:
            raise InvalidParameters(
                f"n_points must be at least {MIN_GRID_POINTS}, got {self.n_points}"
            )

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def span(self) -> float:
        return self.x_max - self.x_min

    @property
    def is_symmetric(self) -> bool:
        return abs(self.x_min + self.x_max) <= 1e-12 * self.span

    def refined(self, factor: int) -> "Grid":
        return Grid(self.x_min, self.x_max, factor * (self.n_points - 1) + 1)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    energies: np.ndarray
    x_matrix: np.ndarray
    eigenfunctions: Optional[np.ndarray] = None
    parities: Tuple[str, ...] = ()
    kinetic_coefficient: Optional[float] = None
    grid: Optional[Grid] = None

    @classmethod
    def synthetic(
        cls,
        energies: Sequence[float],
        x_matrix: Sequence[Sequence[float]],
        parities: Sequence[str] = (),
    ) -> "SpectralBasis":
        """Basis from a known spectrum, with no grid behind it."""
        e = np.asarray(energies, dtype=float)
        x = np.asarray(x_matrix, dtype=float)
        if x.shape != (e.size, e.size):
            raise InvalidParameters(f"x_matrix shape {x.shape} does not match {e.size} levels")
        if not np.allclose(x, x.T, rtol=0.0, atol=1e-14):
            raise InvalidParameters("x_matrix must be symmetric")
        return cls(energies=e, x_matrix=x, parities=tuple(parities))

    @property
    def n_levels(self) -> int:
        return int(self.energies.size)

    def splitting(self, n: int, m: int) -> float:
        self._check_index(n)
        self._check_index(m)
        return float(self.energies[n] - self.energies[m])

    @property
    def tunneling_period(self) -> float:
        """T₁₀ = h/(E₁ − E₀) in seconds."""
        return CONSTANTS.planck_h / self.splitting(1, 0)

    def truncated(self, n_levels: int) -> "SpectralBasis":
        if not 1 <= n_levels <= self.n_levels:
            raise IndexOutOfRange(f"cannot truncate {self.n_levels} levels to {n_levels}")
        return SpectralBasis(
            energies=self.energies[:n_levels].copy(),
            x_matrix=self.x_matrix[:n_levels, :n_levels].copy(),
            eigenfunctions=None if self.eigenfunctions is None else self.eigenfunctions[:n_levels].copy(),
            parities=self.parities[:n_levels],
            kinetic_coefficient=self.kinetic_coefficient,
            grid=self.grid,
        )

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.n_levels:
            raise IndexOutOfRange(f"level {index} outside basis of {self.n_levels} levels")


@dataclass(frozen=True)
class ConvergenceReport:
    n_points: List[int]
    energies: List[np.ndarray]
    level_drifts: List[np.ndarray]
    splitting_drifts: List[float] = field(default_factory=list)
    upper_splitting_drifts: List[float] = field(default_factory=list)
    richardson: Optional[np.ndarray] = None
    splitting_tolerance: float = 0.01

    @property
    def final_splitting_drift(self) -> float:
        return self.splitting_drifts[-1] if self.splitting_drifts else 0.0

    @property
    def grid_too_coarse(self) -> bool:
        return self.final_splitting_drift > self.splitting_tolerance

    def raise_if_coarse(self) -> None:
        if self.grid_too_coarse:
            raise GridTooCoarse(
                f"ground splitting drifts {self.final_splitting_drift:.3%} between the two "
                f"finest grids (limit {self.splitting_tolerance:.3%})"
            )


def trapezoid_weights(grid: Grid) -> np.ndarray:
    weights = np.full(grid.n_points, grid.dx)
    weights[0] = weights[-1] = 0.5 * grid.dx
    return weights


def _sample_potential(grid: Grid, potential: Potential) -> np.ndarray:
    values = np.asarray(potential(grid.points), dtype=float)
    if values.shape != (grid.n_points,):
        values = np.broadcast_to(values, (grid.n_points,)).astype(float)
    if not np.all(np.isfinite(values)):
        raise InvalidParameters("potential is not finite on the grid")
    return values


def _is_even(values: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(values))))
    return bool(np.max(np.abs(values - values[::-1])) <= EVEN_POTENTIAL_TOLERANCE * scale)


def _tridiagonal_lowest(diag: np.ndarray, off: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
    count = min(count, diag.size)
    try:
        return eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"tridiagonal eigensolver failed: {exc}") from exc


def _solve_full(values: np.ndarray, stiffness: float, n_levels: int) -> Tuple[np.ndarray, np.ndarray]:
    interior = values[1:-1]
    diag = 2.0 * stiffness + interior
    off = np.full(interior.size - 1, -stiffness)
    energies, vectors = _tridiagonal_lowest(diag, off, n_levels)
    states = np.zeros((energies.size, values.size))
    states[:, 1:-1] = vectors.T
    return energies, states


def _solve_by_parity(values: np.ndarray, stiffness: float, n_levels: int) -> Tuple[np.ndarray, np.ndarray]:
    n = values.size
    c = (n - 1) // 2

    # Odd block: φ_c = 0, nodes c+1 .. n-2.
    odd_values = values[c + 1 : n - 1]
    odd_e, odd_v = _tridiagonal_lowest(
        2.0 * stiffness + odd_values, np.full(odd_values.size - 1, -stiffness), n_levels
    )
    # Even block: nodes c .. n-2 with φ_c = √2·u_c to keep the block symmetric.
    even_values = values[c : n - 1]
    even_off = np.full(even_values.size - 1, -stiffness)
    even_off[0] *= np.sqrt(2.0)
    even_e, even_v = _tridiagonal_lowest(2.0 * stiffness + even_values, even_off, n_levels)

    states = []
    for j in range(even_e.size):
        u = even_v[:, j]
        phi = np.zeros(n)
        phi[c] = np.sqrt(2.0) * u[0]
        phi[c + 1 : n - 1] = u[1:]
        phi[1:c] = u[1:][::-1]
        states.append(phi)
    for j in range(odd_e.size):
        u = odd_v[:, j]
        phi = np.zeros(n)
        phi[c + 1 : n - 1] = u
        phi[1:c] = -u[::-1]
        states.append(phi)

    energies = np.concatenate([even_e, odd_e])
    order = np.argsort(energies, kind="stable")[:n_levels]
    return energies[order], np.asarray(states)[order]


def _residual_norms(
    states: np.ndarray, energies: np.ndarray, values: np.ndarray, stiffness: float, dx: float
) -> np.ndarray:
    laplace = states[:, :-2] - 2.0 * states[:, 1:-1] + states[:, 2:]
    applied = -stiffness * laplace + values[1:-1] * states[:, 1:-1]
    residual = applied - energies[:, None] * states[:, 1:-1]
    return np.sqrt(np.sum(residual**2, axis=1) * dx)


def _fix_gauge(states: np.ndarray, x: np.ndarray, weights: np.ndarray) -> None:
    for phi in states:
        # argmax returns the leftmost of equal maxima.
        if phi[int(np.argmax(np.abs(phi)))] < 0.0:
            phi *= -1.0
    if states.shape[0] >= 2 and np.sum(weights * states[0] * x * states[1]) > 0.0:
        states[1] *= -1.0


def _classify_parities(grid: Grid, states: np.ndarray, weights: np.ndarray) -> Tuple[str, ...]:
    if not grid.is_symmetric:
        return tuple("mixed" for _ in states)
    labels = []
    for phi in states:
        overlap = float(np.sum(weights * phi * phi[::-1]))
        if abs(overlap - 1.0) <= PARITY_TOLERANCE:
            labels.append("even")
        elif abs(overlap + 1.0) <= PARITY_TOLERANCE:
            labels.append("odd")
        else:
            labels.append("mixed")
    return tuple(labels)


def solve_spectrum(
    grid: Grid,
    kinetic_coefficient: float,
    potential: Potential,
    n_levels: int,
) -> SpectralBasis:
    if not kinetic_coefficient > 0:
        raise InvalidParameters(f"kinetic coefficient must be positive, got {kinetic_coefficient}")
    if not 1 <= n_levels < (grid.n_points - 2) // 4:
        raise InvalidParameters(f"n_levels={n_levels} is not small against the grid size")

    values = _sample_potential(grid, potential)
    stiffness = kinetic_coefficient / grid.dx**2
    symmetric = grid.is_symmetric and grid.n_points % 2 == 1 and _is_even(values)
    if symmetric:
        energies, states = _solve_by_parity(values, stiffness, n_levels)
    else:
        energies, states = _solve_full(values, stiffness, n_levels)
    logger.debug(
        "solved %d levels on %d points (parity blocks=%s)", energies.size, grid.n_points, symmetric
    )

    x = grid.points
    weights = trapezoid_weights(grid)
    norms = np.sqrt(np.sum(weights * states**2, axis=1))
    states = states / norms[:, None]

    residuals = _residual_norms(states, energies, values, stiffness, grid.dx)
    residual_limit = max(RESIDUAL_TOLERANCE, 1e3 * np.finfo(float).eps * 4.0 * stiffness)
    if np.max(residuals) > residual_limit:
        raise ConvergenceFailure(
            f"eigenpair residual {np.max(residuals):.3e} exceeds {residual_limit:.1e}"
        )
    gram = (states * weights) @ states.T
    deviation = float(np.max(np.abs(gram - np.eye(energies.size))))
    if deviation > ORTHONORMALITY_TOLERANCE:
        raise ConvergenceFailure(f"eigenfunctions not orthonormal (deviation {deviation:.3e})")

    _fix_gauge(states, x, weights)
    x_matrix = (states * (weights * x)) @ states.T
    x_matrix = 0.5 * (x_matrix + x_matrix.T)
    return SpectralBasis(
        energies=np.asarray(energies, dtype=float),
        x_matrix=x_matrix,
        eigenfunctions=states,
        parities=_classify_parities(grid, states, weights),
        kinetic_coefficient=kinetic_coefficient,
        grid=grid,
    )


def x_matrix_element(basis: SpectralBasis, m: int, n: int) -> float:
    """⟨m|x̂|n⟩; recomputed by trapezoid quadrature when eigenfunctions are held."""
    basis._check_index(m)
    basis._check_index(n)
    if basis.eigenfunctions is None or basis.grid is None:
        return float(basis.x_matrix[m, n])
    lo, hi = min(m, n), max(m, n)
    x = basis.grid.points
    return float(trapezoid(basis.eigenfunctions[lo] * x * basis.eigenfunctions[hi], x))


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / abs(new) if new != 0.0 else abs(new - old)


def convergence_study(
    base_grid: Grid,
    kinetic_coefficient: float,
    potential: Potential,
    n_levels: int,
    *,
    factors: Sequence[int] = (1, 2, 4),
    splitting_tolerance: float = 0.01,
) -> ConvergenceReport:
    """Re-solve at increasing grid densities and report energy and splitting drift."""
    if len(factors) < 2:
        raise InvalidParameters("convergence study needs at least two grid densities")
    grids = [base_grid.refined(f) for f in factors]
    spectra = [solve_spectrum(g, kinetic_coefficient, potential, n_levels).energies for g in grids]

    level_drifts = [np.abs(b - a) for a, b in zip(spectra, spectra[1:])]
    splitting_drifts: List[float] = []
    upper_drifts: List[float] = []
    if n_levels >= 2:
        splittings = [e[1] - e[0] for e in spectra]
        splitting_drifts = [_relative_change(b, a) for a, b in zip(splittings, splittings[1:])]
    if n_levels >= 4:
        upper = [e[3] - e[2] for e in spectra]
        upper_drifts = [_relative_change(b, a) for a, b in zip(upper, upper[1:])]

    richardson = None
    if factors[-1] == 2 * factors[-2]:
        richardson = (4.0 * spectra[-1] - spectra[-2]) / 3.0

    report = ConvergenceReport(
        n_points=[g.n_points for g in grids],
        energies=spectra,
        level_drifts=level_drifts,
        splitting_drifts=splitting_drifts,
        upper_splitting_drifts=upper_drifts,
        richardson=richardson,
        splitting_tolerance=splitting_tolerance,
    )
    logger.info(
        "convergence study on %s points: splitting drift %.3e", report.n_points, report.final_splitting_drift
    )
    return report


def calibrate_capacitance(
    q: QuarticPotential,
    target_ground_energy: float,
    grid: Grid,
    *,
    scan: Tuple[float, float] = (0.5e-16, 2.0e-16),
    flux_quantum: float = CONSTANTS.flux_quantum,
) -> float:
    """Capacitance whose ground level (relative to V₀) equals ``target_ground_energy``."""

    def potential(x: np.ndarray) -> np.ndarray:
        return potential_quartic(x, q, include_offset=False)

    def mismatch(capacitance: float) -> float:
        k = kinetic_coefficient(capacitance, flux_quantum)
        ground = solve_spectrum(grid, k, potential, 2).energies[0]
        logger.debug("calibration C=%.9e F E0=%.10f eV", capacitance, ground)
        return ground - target_ground_energy

    lo, hi = scan
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo * f_hi > 0.0:
        raise ConvergenceFailure(
            f"target E0={target_ground_energy} eV not bracketed by C in [{lo:.3e}, {hi:.3e}] F"
        )
    capacitance, result = brentq(mismatch, lo, hi, xtol=1e-30, rtol=1e-12, full_output=True)
    if not result.converged:
        raise ConvergenceFailure(f"capacitance calibration did not converge: {result.flag}")
    logger.info("calibrated C=%.9e F in %d iterations", capacitance, result.iterations)
    return float(capacitance)


def export_energies(basis: SpectralBasis) -> str:
    buffer = io.StringIO()
    buffer.write("# level,energy_eV,parity\n")
    for index, energy in enumerate(basis.energies):
        parity = basis.parities[index] if index < len(basis.parities) else "unknown"
        buffer.write(f"{index},{energy:.12e},{parity}\n")
    return buffer.getvalue()


def export_table(basis: SpectralBasis, potential: Potential, n_export: Optional[int] = None) -> str:
    """Columns x, V(x), φ_0 … φ_{k-1}; ``potential`` should exclude the V₀ offset."""
    if basis.eigenfunctions is None or basis.grid is None:
        raise InvalidParameters("basis has no grid eigenfunctions to export")
    count = basis.n_levels if n_export is None else min(n_export, basis.n_levels)
    x = basis.grid.points
    columns = [x, _sample_potential(basis.grid, potential)] + [basis.eigenfunctions[i] for i in range(count)]
    header = "x,V_minus_V0_eV," + ",".join(f"phi_{i}" for i in range(count))
    buffer = io.StringIO()
    np.savetxt(buffer, np.column_stack(columns), fmt="%.12e", delimiter=",", header=header, comments="# ")
    return buffer.getvalue()


__all__ = [
    "ConvergenceFailure",
    "ConvergenceReport",
    "Grid",
    "GridTooCoarse",
    "IndexOutOfRange",
    "SpectralBasis",
    "calibrate_capacitance",
    "convergence_study",
    "export_energies",
    "export_table",
    "solve_spectrum",
    "trapezoid_weights",
    "x_matrix_element",
]
