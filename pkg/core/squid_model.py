"""rf-SQUID circuit parameters, the quartic double-well reduction and its geometry.

The symmetric-bias frame is used throughout: x = (Φ − Φ^ext)/Φ₀ with
Φ^ext/Φ₀ = n + 1/2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.constants import CONSTANTS
from core.errors import SimulationError

logger = logging.getLogger(__name__)

BISTABLE_UPPER = 5.0 * math.pi / 2.0
# Fraction of the physicality pole 3λ/2π² that μ may approach.
PHYSICAL_GUARD = 1.0 - 1e-6
V0_RELATIVE_TOLERANCE = 1e-9
BIAS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class InvalidParameters(SimulationError):
    pass


@dataclass(frozen=True)
class NotBistable(SimulationError):
    pass


@dataclass(frozen=True)
class NotPhysical(SimulationError):
    pass


@dataclass(frozen=True)
class AsymmetricBias(SimulationError):
    pass


@dataclass(frozen=True)
class CircuitParams:
    """Physical rf-SQUID description in SI units.

    ``capacitance`` may be None when the parameters were recovered from a
    quartic potential, which does not fix C.
    """

    capacitance: Optional[float]
    inductance: float
    critical_current: float
    external_flux: float = 0.5 * CONSTANTS.flux_quantum
    flux_quantum: float = CONSTANTS.flux_quantum

    def __post_init__(self) -> None:
        if self.capacitance is not None and not self.capacitance > 0:
            raise InvalidParameters(f"capacitance must be positive, got {self.capacitance}")
        if not self.inductance > 0:
            raise InvalidParameters(f"inductance must be positive, got {self.inductance}")
        if not self.critical_current > 0:
            raise InvalidParameters(f"critical_current must be positive, got {self.critical_current}")
        if not self.flux_quantum > 0:
            raise InvalidParameters(f"flux_quantum must be positive, got {self.flux_quantum}")

    @property
    def bias_quanta(self) -> float:
        return self.external_flux / self.flux_quantum

    def is_symmetric_bias(self) -> bool:
        offset = self.bias_quanta - 0.5
        return abs(offset - round(offset)) <= BIAS_TOLERANCE

    def require_symmetric_bias(self) -> None:
        if not self.is_symmetric_bias():
            raise AsymmetricBias(
                f"external flux {self.bias_quanta:.9g} Φ₀ is not of the form n + 1/2"
            )

    def require_capacitance(self) -> float:
        if self.capacitance is None:
            raise InvalidParameters("capacitance is not set")
        return self.capacitance

    def flux_to_physical(self, x):
        return np.asarray(x) * self.flux_quantum + self.external_flux

    def physical_to_x(self, flux):
        return (np.asarray(flux) - self.external_flux) / self.flux_quantum


@dataclass(frozen=True)
class QuarticPotential:
    """V(x) = V₀ − (μ/2)x² + (λ/4)x⁴ with all coefficients in eV."""

    mu: float
    lam: float
    v0: float

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise InvalidParameters(f"mu must be positive, got {self.mu}")
        if not self.lam > 0:
            raise InvalidParameters(f"lambda must be positive, got {self.lam}")
        expected = 3.0 * self.lam / (8.0 * math.pi**4)
        if abs(self.v0 - expected) > V0_RELATIVE_TOLERANCE * expected:
            raise InvalidParameters(
                f"v0={self.v0!r} inconsistent with 3λ/8π⁴={expected!r}"
            )

    @classmethod
    def from_mu_lambda(cls, mu: float, lam: float) -> "QuarticPotential":
        return cls(mu=mu, lam=lam, v0=3.0 * lam / (8.0 * math.pi**4))

    @property
    def physical_limit(self) -> float:
        return 3.0 * self.lam / (2.0 * math.pi**2)

    @property
    def is_physical(self) -> bool:
        return self.mu < PHYSICAL_GUARD * self.physical_limit

    def require_physical(self) -> None:
        if not self.is_physical:
            raise NotPhysical(
                f"mu={self.mu:.6g} eV is not below the SQUID bound 3λ/2π²={self.physical_limit:.6g} eV"
            )

    @property
    def minimum(self) -> float:
        return math.sqrt(self.mu / self.lam)

    @property
    def barrier_height(self) -> float:
        return self.mu**2 / (4.0 * self.lam)


@dataclass(frozen=True)
class WellGeometry:
    minima_x: Tuple[float, float]
    barrier_height: float  # eV
    curvature_at_minimum: float  # eV
    zero_point_energy: float  # eV, ħω₀
    effective_mass: float  # J·s², C·Φ₀²
    kinetic_coefficient: float  # eV, ħ²/(2CΦ₀²)

    @property
    def omega0(self) -> float:
        return self.zero_point_energy / CONSTANTS.hbar


@dataclass(frozen=True)
class WkbEstimate:
    angular_frequency: float  # rad/s
    energy: float  # eV
    exponent: float  # ΔU/ħω₀


@dataclass(frozen=True)
class BistabilityReport:
    beta: float
    bistable: bool
    reason: str


def beta(params: CircuitParams) -> float:
    return 2.0 * math.pi * params.inductance * params.critical_current / params.flux_quantum


def validate_bistable(params: CircuitParams) -> BistabilityReport:
    value = beta(params)
    if value <= 1.0:
        return BistabilityReport(value, False, f"beta={value:.6g} <= 1 (monostable)")
    if value >= BISTABLE_UPPER:
        return BistabilityReport(value, False, f"beta={value:.6g} >= 5π/2 (multistable)")
    return BistabilityReport(value, True, f"beta={value:.6g} inside (1, 5π/2)")


def quartic_coefficients(params: CircuitParams) -> Tuple[float, float, float]:
    """Raw (μ, λ, V₀) in eV, without bistability or physicality checks."""
    phi0 = params.flux_quantum
    ic = params.critical_current
    ev = CONSTANTS.electronvolt
    mu = (2.0 * math.pi * ic * phi0 - phi0**2 / params.inductance) / ev
    lam = 4.0 * math.pi**3 * ic * phi0 / 3.0 / ev
    v0 = ic * phi0 / (2.0 * math.pi) / ev
    return mu, lam, v0


def to_quartic(params: CircuitParams) -> QuarticPotential:
    report = validate_bistable(params)
    if not report.bistable:
        raise NotBistable(report.reason)
    mu, lam, v0 = quartic_coefficients(params)
    potential = QuarticPotential(mu=mu, lam=lam, v0=v0)
    potential.require_physical()
    logger.debug("quartic map beta=%.6g mu=%.9g lambda=%.9g", report.beta, mu, lam)
    return potential


def from_quartic(
    q: QuarticPotential,
    *,
    external_flux_quanta: float = 0.5,
    flux_quantum: float = CONSTANTS.flux_quantum,
) -> CircuitParams:
    q.require_physical()
    ev = CONSTANTS.electronvolt
    ic = 3.0 * q.lam * ev / (4.0 * math.pi**3 * flux_quantum)
    denominator = 2.0 * math.pi * ic * flux_quantum - q.mu * ev
    inductance = flux_quantum**2 / denominator
    return CircuitParams(
        capacitance=None,
        inductance=inductance,
        critical_current=ic,
        external_flux=external_flux_quanta * flux_quantum,
        flux_quantum=flux_quantum,
    )


def potential_full(x, params: CircuitParams):
    """Full cosine-plus-parabola potential in eV, symmetric-bias frame."""
    params.require_symmetric_bias()
    x = np.asarray(x, dtype=float)
    ev = CONSTANTS.electronvolt
    phi0 = params.flux_quantum
    parabola = phi0**2 / (2.0 * params.inductance) / ev
    amplitude = params.critical_current * phi0 / (2.0 * math.pi) / ev
    return parabola * x**2 + amplitude * np.cos(2.0 * math.pi * x)


def potential_quartic(x, q: QuarticPotential, *, include_offset: bool = True):
    x = np.asarray(x, dtype=float)
    shape = -0.5 * q.mu * x**2 + 0.25 * q.lam * x**4
    return shape + q.v0 if include_offset else shape


def kinetic_coefficient(capacitance: float, flux_quantum: float = CONSTANTS.flux_quantum) -> float:
    """K = ħ²/(2CΦ₀²) in eV, the prefactor of −d²/dx²."""
    if not capacitance > 0:
        raise InvalidParameters(f"capacitance must be positive, got {capacitance}")
    return CONSTANTS.hbar_si**2 / (2.0 * capacitance * flux_quantum**2) / CONSTANTS.electronvolt


def well_geometry(
    q: QuarticPotential,
    capacitance: float,
    flux_quantum: float = CONSTANTS.flux_quantum,
) -> WellGeometry:
    q.require_physical()
    k = kinetic_coefficient(capacitance, flux_quantum)
    curvature = 2.0 * q.mu
    xmin = q.minimum
    return WellGeometry(
        minima_x=(-xmin, xmin),
        barrier_height=q.barrier_height,
        curvature_at_minimum=curvature,
        zero_point_energy=math.sqrt(2.0 * k * curvature),
        effective_mass=capacitance * flux_quantum**2,
        kinetic_coefficient=k,
    )


def wkb_frequency(geom: WellGeometry) -> WkbEstimate:
    """ω = ω₀ √(ΔU/ħω₀) exp(−ΔU/ħω₀), taken verbatim.

    Known to overestimate the exact ground-doublet splitting by orders of
    magnitude for the reference well; the diagonalization is authoritative.
    """
    if not (geom.barrier_height > 0 and geom.zero_point_energy > 0):
        raise InvalidParameters("WKB estimate needs a positive barrier and zero-point energy")
    ratio = geom.barrier_height / geom.zero_point_energy
    omega = geom.omega0 * math.sqrt(ratio) * math.exp(-ratio)
    return WkbEstimate(angular_frequency=omega, energy=CONSTANTS.hbar * omega, exponent=ratio)


def wkb_discrepancy(geom: WellGeometry, exact_splitting: float) -> float:
    """Ratio ħω_WKB / (E₁ − E₀)."""
    if not exact_splitting > 0:
        raise InvalidParameters(f"exact splitting must be positive, got {exact_splitting}")
    return wkb_frequency(geom).energy / exact_splitting


def thermal_ratio(geom: WellGeometry, temperature: float) -> float:
    if temperature < 0:
        raise InvalidParameters(f"temperature must be non-negative, got {temperature}")
    return CONSTANTS.boltzmann * temperature / geom.barrier_height


__all__ = [
    "AsymmetricBias",
    "BistabilityReport",
    "CircuitParams",
    "InvalidParameters",
    "NotBistable",
    "NotPhysical",
    "QuarticPotential",
    "WellGeometry",
    "WkbEstimate",
    "beta",
    "from_quartic",
    "kinetic_coefficient",
    "potential_full",
    "potential_quartic",
    "quartic_coefficients",
    "thermal_ratio",
    "to_quartic",
    "validate_bistable",
    "well_geometry",
    "wkb_discrepancy",
    "wkb_frequency",
]
