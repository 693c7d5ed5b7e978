"""Shared reference well, calibrated once per test run."""

from functools import lru_cache

from core.spectral_solver import Grid, SpectralBasis, calibrate_capacitance, solve_spectrum
from core.squid_model import QuarticPotential, potential_quartic, well_geometry

MU = 1.80487
LAM = 14.73360
TARGET_E0 = -0.0440591


def reference_quartic() -> QuarticPotential:
    return QuarticPotential.from_mu_lambda(MU, LAM)


def reference_grid() -> Grid:
    return Grid(-0.8, 0.8, 4001)


def reference_potential(x):
    return potential_quartic(x, reference_quartic(), include_offset=False)


@lru_cache(maxsize=None)
def reference_capacitance() -> float:
    return calibrate_capacitance(reference_quartic(), TARGET_E0, reference_grid())


@lru_cache(maxsize=None)
def reference_basis(n_levels: int = 8) -> SpectralBasis:
    geometry = well_geometry(reference_quartic(), reference_capacitance())
    return solve_spectrum(reference_grid(), geometry.kinetic_coefficient, reference_potential, n_levels)
