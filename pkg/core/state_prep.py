"""Initial states: Gaussian flux wavepackets, |L⟩/|R⟩ superpositions and ρ(0)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.errors import SimulationError
from core.spectral_solver import Grid, SpectralBasis, trapezoid_weights
from core.squid_model import CircuitParams, InvalidParameters, QuarticPotential, potential_quartic

logger = logging.getLogger(__name__)

SUPPORT_WIDTHS = 5.0
CAPTURE_WARNING = 0.99
HERMITIAN_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SupportOverflow(SimulationError):
    pass


@dataclass(frozen=True)
class GridMismatch(SimulationError):
    pass


@dataclass(frozen=True)
class InsufficientCapture(SimulationError):
    pass


@dataclass(frozen=True)
class InvalidState(SimulationError):
    pass


@dataclass(frozen=True)
class GaussianSpec:
    x_m: float
    sigma_x: float

    def __post_init__(self) -> None:
        if not self.sigma_x > 0:
            raise InvalidParameters(f"sigma_x must be positive, got {self.sigma_x}")

    def physical_center(self, params: CircuitParams) -> float:
        return float(params.flux_to_physical(self.x_m))

    def physical_width(self, params: CircuitParams) -> float:
        return self.sigma_x * params.flux_quantum

    @property
    def label(self) -> str:
        return f"gaussian(x_m={self.x_m:g}, sigma_x={self.sigma_x:g})"


@dataclass(frozen=True, eq=False)
class GridWavefunction:
    grid: Grid
    amplitudes: np.ndarray
    label: str = "wavefunction"

    def norm(self) -> float:
        return float(np.sum(trapezoid_weights(self.grid) * np.abs(self.amplitudes) ** 2))

    def mean_x(self) -> float:
        density = np.abs(self.amplitudes) ** 2
        return float(np.sum(trapezoid_weights(self.grid) * self.grid.points * density))


@dataclass(frozen=True, eq=False)
class ProjectedState:
    coefficients: np.ndarray
    captured_norm: float
    basis_size: int
    label: str = "state"

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.coefficients)):
            raise InvalidState("projection coefficients are not finite")
        if self.captured_norm > 1.0 + 1e-9:
            raise InvalidState(f"captured norm {self.captured_norm} exceeds 1")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """ρ_nm = ⟨n|ρ̂|m⟩ in the energy eigenbasis."""

    elements: np.ndarray
    captured_norm: float = 1.0
    label: str = "state"

    def __post_init__(self) -> None:
        rho = np.asarray(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidState(f"density matrix must be square, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > HERMITIAN_TOLERANCE:
            raise InvalidState("density matrix is not Hermitian")
        object.__setattr__(self, "elements", rho)

    @property
    def size(self) -> int:
        return int(self.elements.shape[0])

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.elements)).copy()

    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def purity(self) -> float:
        return float(np.real(np.sum(self.elements * self.elements.T)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.elements)))

    def is_positive_semidefinite(self, tolerance: float = PSD_TOLERANCE) -> bool:
        return self.min_eigenvalue() >= -tolerance

    def expectation(self, operator: np.ndarray) -> complex:
        """Tr(ρ A) for an operator given in the same basis."""
        op = np.asarray(operator)[: self.size, : self.size]
        return complex(np.sum(self.elements * op.T))

    def mean_x(self, basis: SpectralBasis) -> float:
        return float(np.real(self.expectation(basis.x_matrix)))


def make_gaussian(spec: GaussianSpec, grid: Grid) -> GridWavefunction:
    reach = SUPPORT_WIDTHS * spec.sigma_x
    if spec.x_m - reach < grid.x_min or spec.x_m + reach > grid.x_max:
        raise SupportOverflow(
            f"{spec.label} support [{spec.x_m - reach:g}, {spec.x_m + reach:g}] leaves the grid"
        )
    x = grid.points
    psi = (math.pi * spec.sigma_x**2) ** -0.25 * np.exp(-((x - spec.x_m) ** 2) / (2.0 * spec.sigma_x**2))
    psi = psi / math.sqrt(float(np.sum(trapezoid_weights(grid) * psi**2)))
    return GridWavefunction(grid=grid, amplitudes=psi.astype(complex), label=spec.label)


def project(wavefunction: GridWavefunction, basis: SpectralBasis) -> ProjectedState:
    if basis.eigenfunctions is None or basis.grid is None:
        raise GridMismatch("basis carries no grid eigenfunctions")
    if basis.grid != wavefunction.grid:
        raise GridMismatch(
            f"wavefunction grid {wavefunction.grid} differs from basis grid {basis.grid}"
        )
    weights = trapezoid_weights(basis.grid)
    coefficients = (basis.eigenfunctions * weights) @ wavefunction.amplitudes
    captured = float(np.sum(np.abs(coefficients) ** 2))
    if captured < CAPTURE_WARNING:
        logger.warning(
            "%s: %d levels capture only %.4f of the norm", wavefunction.label, basis.n_levels, captured
        )
    return ProjectedState(
        coefficients=np.asarray(coefficients, dtype=complex),
        captured_norm=captured,
        basis_size=basis.n_levels,
        label=wavefunction.label,
    )


def density_from_projection(
    state: ProjectedState,
    *,
    renormalize: bool = True,
    min_capture: float = 0.9,
) -> DensityMatrix:
    if state.captured_norm <= min_capture:
        raise InsufficientCapture(
            f"{state.label}: captured norm {state.captured_norm:.4f} <= {min_capture}"
        )
    c = state.coefficients
    rho = np.outer(c, c.conj())
    if renormalize:
        rho = rho / state.captured_norm
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(elements=rho, captured_norm=state.captured_norm, label=state.label)


def lr_coefficients(which: str, size: int = 2) -> np.ndarray:
    if which not in ("left", "right"):
        raise InvalidState(f"state must be 'left' or 'right', got {which!r}")
    if size < 2:
        raise InvalidState("an |L⟩/|R⟩ state needs at least two levels")
    c = np.zeros(size, dtype=complex)
    c[0] = 1.0 / math.sqrt(2.0)
    c[1] = c[0] if which == "left" else -c[0]
    return c


def make_lr_state(which: str, basis: SpectralBasis) -> DensityMatrix:
    """(|0⟩ ± |1⟩)/√2 as a rank-1 density matrix over the whole basis."""
    if basis.n_levels < 2:
        raise InvalidState("an |L⟩/|R⟩ state needs at least two levels")
    if not basis.x_matrix[0, 1] < 0.0:
        raise InvalidState("basis gauge must have ⟨0|x|1⟩ < 0")
    c = lr_coefficients(which, basis.n_levels)
    return DensityMatrix(elements=np.outer(c, c.conj()), label=which)


def wavepacket_energy(
    wavefunction: GridWavefunction,
    kinetic_coefficient: float,
    potential,
) -> float:
    """⟨ψ|Ĥ|ψ⟩ with the same hard-walled stencil as the eigensolver."""
    grid = wavefunction.grid
    psi = wavefunction.amplitudes
    interior = psi[1:-1]
    laplace = (psi[:-2] - 2.0 * interior + psi[2:]) / grid.dx**2
    values = np.asarray(potential(grid.points), dtype=float)[1:-1]
    applied = -kinetic_coefficient * laplace + values * interior
    return float(np.real(np.sum(np.conj(interior) * applied) * grid.dx))


def is_below_barrier(energy: float, q: QuarticPotential, *, include_offset: bool = False) -> bool:
    """True when ``energy`` lies under the barrier top at x = 0."""
    top = float(potential_quartic(0.0, q, include_offset=include_offset))
    return energy < top


def captured_profile(wavefunction: GridWavefunction, basis: SpectralBasis) -> np.ndarray:
    """Cumulative captured norm against basis size."""
    full = project(wavefunction, basis)
    return np.cumsum(np.abs(full.coefficients) ** 2)

