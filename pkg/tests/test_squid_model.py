import math
import unittest

import numpy as np

from core.constants import CONSTANTS
from core.squid_model import (
    AsymmetricBias,
    CircuitParams,
    InvalidParameters,
    NotBistable,
    NotPhysical,
    QuarticPotential,
    beta,
    from_quartic,
    kinetic_coefficient,
    potential_full,
    potential_quartic,
    thermal_ratio,
    to_quartic,
    quartic_coefficients,
    validate_bistable,
    well_geometry,
    wkb_discrepancy,
    wkb_frequency,
)
from tests.fixtures import LAM, MU, reference_quartic


class QuarticMapTests(unittest.TestCase):
    def test_reference_geometry(self) -> None:
        q = reference_quartic()
        self.assertAlmostEqual(q.minimum / 0.35, 1.0, delta=1e-5)
        self.assertAlmostEqual(q.barrier_height / 0.055274, 1.0, delta=1e-5)
        self.assertAlmostEqual(q.v0, 3.0 * LAM / (8.0 * math.pi**4), places=15)

    def test_circuit_recovered_from_quartic(self) -> None:
        params = from_quartic(reference_quartic())
        self.assertIsNone(params.capacitance)
        self.assertAlmostEqual(params.critical_current / 27.61e-6, 1.0, delta=1e-3)
        self.assertAlmostEqual(params.inductance / 6.144e-11, 1.0, delta=2e-3)
        self.assertAlmostEqual(beta(params), 5.155, delta=0.01)
        self.assertTrue(validate_bistable(params).bistable)

    def test_quartic_map_inverts_circuit_map(self) -> None:
        q = to_quartic(from_quartic(reference_quartic()))
        self.assertAlmostEqual(q.mu / MU, 1.0, delta=1e-9)
        self.assertAlmostEqual(q.lam / LAM, 1.0, delta=1e-9)

    def test_raw_coefficients_at_bistability_edge(self) -> None:
        ic = 2.761e-5
        params = CircuitParams(
            capacitance=None,
            inductance=CONSTANTS.flux_quantum / (2.0 * math.pi * ic),
            critical_current=ic,
        )
        mu, lam, v0 = quartic_coefficients(params)
        self.assertAlmostEqual(mu, 0.0, delta=1e-9 * lam)
        self.assertAlmostEqual(v0, 3.0 * lam / (8.0 * math.pi**4), delta=1e-12 * lam)
        self.assertAlmostEqual(beta(params), 1.0, places=12)

    def test_monostable_circuit_rejected(self) -> None:
        params = CircuitParams(capacitance=1e-16, inductance=1e-12, critical_current=1e-6)
        report = validate_bistable(params)
        self.assertFalse(report.bistable)
        self.assertLess(report.beta, 1.0)
        with self.assertRaises(NotBistable):
            to_quartic(params)

    def test_unphysical_quartic_rejected(self) -> None:
        q = QuarticPotential.from_mu_lambda(1.0, 1.0)
        self.assertFalse(q.is_physical)
        with self.assertRaises(NotPhysical):
            from_quartic(q)

    def test_inconsistent_offset_rejected(self) -> None:
        with self.assertRaises(InvalidParameters):
            QuarticPotential(mu=MU, lam=LAM, v0=1.0)

    def test_non_positive_parameters_rejected(self) -> None:
        with self.assertRaises(InvalidParameters):
            CircuitParams(capacitance=-1.0, inductance=1e-10, critical_current=1e-5)
        with self.assertRaises(InvalidParameters):
            QuarticPotential.from_mu_lambda(0.0, LAM)

    def test_asymmetric_bias_rejected(self) -> None:
        params = from_quartic(reference_quartic(), external_flux_quanta=0.3)
        self.assertFalse(params.is_symmetric_bias())
        with self.assertRaises(AsymmetricBias):
            potential_full(0.1, params)

    def test_flux_conversion(self) -> None:
        params = from_quartic(reference_quartic())
        flux = params.flux_to_physical(np.array([-0.35, 0.0, 0.35]))
        np.testing.assert_allclose(params.physical_to_x(flux), [-0.35, 0.0, 0.35], atol=1e-12)
        self.assertAlmostEqual(flux[1] / params.flux_quantum, 0.5, places=12)


class PotentialTests(unittest.TestCase):
    def test_quartic_truncation_remainder_is_exact(self) -> None:
        q = reference_quartic()
        params = from_quartic(q)
        x = np.linspace(-0.8, 0.8, 321)
        y = 2.0 * math.pi * x
        remainder = q.v0 * (np.cos(y) - 1.0 + y**2 / 2.0 - y**4 / 24.0)
        difference = potential_full(x, params) - potential_quartic(x, q)
        np.testing.assert_allclose(difference, remainder, atol=1e-12)

    def test_quartic_tracks_cosine_near_the_wells(self) -> None:
        q = reference_quartic()
        params = from_quartic(q)
        x = np.linspace(-0.25, 0.25, 201)
        worst = np.max(np.abs(potential_full(x, params) - potential_quartic(x, q)))
        self.assertLess(worst, 2e-3)

    def test_offset_is_optional(self) -> None:
        q = reference_quartic()
        self.assertAlmostEqual(float(potential_quartic(0.0, q)), q.v0, places=15)
        self.assertEqual(float(potential_quartic(0.0, q, include_offset=False)), 0.0)
        self.assertAlmostEqual(float(potential_quartic(q.minimum, q, include_offset=False)), -q.barrier_height, places=12)


class WellGeometryTests(unittest.TestCase):
    def test_kinetic_coefficient(self) -> None:
        self.assertAlmostEqual(kinetic_coefficient(1e-16) / 8.1167e-5, 1.0, delta=1e-4)
        with self.assertRaises(InvalidParameters):
            kinetic_coefficient(0.0)

    def test_zero_point_and_thermal_scales(self) -> None:
        geometry = well_geometry(reference_quartic(), 1e-16)
        self.assertEqual(geometry.minima_x[0], -geometry.minima_x[1])
        self.assertAlmostEqual(geometry.zero_point_energy / 0.024207, 1.0, delta=1e-3)
        self.assertAlmostEqual(thermal_ratio(geometry, 4.0) / 6.2e-3, 1.0, delta=0.1)
        self.assertEqual(thermal_ratio(geometry, 0.0), 0.0)
        with self.assertRaises(InvalidParameters):
            thermal_ratio(geometry, -1.0)

    def test_wkb_estimate(self) -> None:
        geometry = well_geometry(reference_quartic(), 1e-16)
        estimate = wkb_frequency(geometry)
        self.assertAlmostEqual(estimate.exponent, 0.055274 / 0.024207, delta=1e-3)
        self.assertAlmostEqual(estimate.energy / 3.73e-3, 1.0, delta=0.01)
        expected = geometry.omega0 * math.sqrt(estimate.exponent) * math.exp(-estimate.exponent)
        self.assertAlmostEqual(estimate.angular_frequency / expected, 1.0, places=12)

    def test_wkb_discrepancy(self) -> None:
        geometry = well_geometry(reference_quartic(), 1e-16)
        energy = wkb_frequency(geometry).energy
        self.assertAlmostEqual(wkb_discrepancy(geometry, energy / 2.0), 2.0, places=12)
        with self.assertRaises(InvalidParameters):
            wkb_discrepancy(geometry, 0.0)


if __name__ == "__main__":
    unittest.main()
