import math
import unittest

import numpy as np

from core.spectral_solver import (
    ConvergenceFailure,
    Grid,
    GridTooCoarse,
    IndexOutOfRange,
    SpectralBasis,
    calibrate_capacitance,
    convergence_study,
    export_energies,
    export_table,
    solve_spectrum,
    trapezoid_weights,
    x_matrix_element,
)
from core.squid_model import InvalidParameters, kinetic_coefficient
from tests.fixtures import (
    MU,
    TARGET_E0,
    reference_basis,
    reference_capacitance,
    reference_grid,
    reference_potential,
    reference_quartic,
)


class GridTests(unittest.TestCase):
    def test_rejects_coarse_or_one_sided_grids(self) -> None:
        with self.assertRaises(InvalidParameters):
            Grid(-0.8, 0.8, 500)
        with self.assertRaises(InvalidParameters):
            Grid(0.1, 0.8, 1001)

    def test_refinement_keeps_nodes(self) -> None:
        grid = Grid(-0.8, 0.8, 4001)
        fine = grid.refined(2)
        self.assertEqual(fine.n_points, 8001)
        np.testing.assert_allclose(fine.points[::2], grid.points, atol=1e-15)
        self.assertTrue(grid.is_symmetric)
        self.assertFalse(Grid(-0.8, 0.7, 4001).is_symmetric)

    def test_trapezoid_weights_sum_to_span(self) -> None:
        grid = Grid(-0.8, 0.8, 1001)
        self.assertAlmostEqual(float(np.sum(trapezoid_weights(grid))), grid.span, places=12)


class AnalyticSpectraTests(unittest.TestCase):
    def test_harmonic_levels(self) -> None:
        k = kinetic_coefficient(1e-16)
        stiffness = 2.0 * MU
        basis = solve_spectrum(reference_grid(), k, lambda x: 0.5 * stiffness * x**2, 4)
        quantum = math.sqrt(2.0 * k * stiffness)
        for n, energy in enumerate(basis.energies):
            self.assertAlmostEqual(energy / (quantum * (n + 0.5)), 1.0, delta=1e-3)
        self.assertEqual(basis.parities, ("even", "odd", "even", "odd"))

    def test_box_levels_match_discrete_laplacian(self) -> None:
        grid = Grid(-0.8, 0.8, 2001)
        k = kinetic_coefficient(1e-16)
        basis = solve_spectrum(grid, k, lambda x: np.zeros_like(x), 4)
        for j, energy in enumerate(basis.energies):
            wave_number = (j + 1) * math.pi / grid.span
            continuum = k * wave_number**2
            discrete = 4.0 * k / grid.dx**2 * math.sin(0.5 * wave_number * grid.dx) ** 2
            self.assertAlmostEqual(energy / discrete, 1.0, delta=1e-8)
            self.assertLess(energy, continuum)
            self.assertAlmostEqual(energy / continuum, 1.0, delta=5e-3)

    def test_richardson_improves_box_levels(self) -> None:
        grid = Grid(-0.8, 0.8, 1001)
        k = kinetic_coefficient(1e-16)
        report = convergence_study(grid, k, lambda x: np.zeros_like(x), 2, factors=(1, 2))
        exact = k * (np.arange(1, 3) * math.pi / grid.span) ** 2
        self.assertIsNotNone(report.richardson)
        self.assertTrue(np.all(np.abs(report.richardson - exact) < np.abs(report.energies[-1] - exact)))

    def test_asymmetric_grid_uses_full_solve(self) -> None:
        k = kinetic_coefficient(1e-16)
        symmetric = solve_spectrum(reference_grid(), k, reference_potential, 2)
        shifted = solve_spectrum(Grid(-0.8, 0.7, 4001), k, reference_potential, 2)
        self.assertEqual(shifted.parities, ("mixed", "mixed"))
        self.assertAlmostEqual(shifted.energies[0], symmetric.energies[0], delta=1e-6)

    def test_rejects_too_many_levels(self) -> None:
        with self.assertRaises(InvalidParameters):
            solve_spectrum(Grid(-0.8, 0.8, 501), 1e-4, reference_potential, 200)
        with self.assertRaises(InvalidParameters):
            solve_spectrum(Grid(-0.8, 0.8, 501), 0.0, reference_potential, 2)


class ReferenceSpectrumTests(unittest.TestCase):
    def setUp(self) -> None:
        self.basis = reference_basis()

    def test_calibrated_ground_level(self) -> None:
        capacitance = reference_capacitance()
        self.assertTrue(0.5e-16 < capacitance < 2.0e-16)
        self.assertAlmostEqual(self.basis.energies[0], TARGET_E0, delta=1e-9)

    def test_doublet_structure(self) -> None:
        e = self.basis.energies
        splitting = e[1] - e[0]
        self.assertAlmostEqual(e[2] / -0.02316, 1.0, delta=0.02)
        self.assertTrue(2e-7 <= splitting <= 2e-6)
        self.assertTrue(50.0 <= (e[3] - e[2]) / splitting <= 200.0)
        self.assertTrue(np.all(np.diff(e) > 0.0))

    def test_parity_and_gauge(self) -> None:
        self.assertEqual(self.basis.parities[:4], ("even", "odd", "even", "odd"))
        self.assertLess(self.basis.x_matrix[0, 1], 0.0)
        self.assertAlmostEqual(abs(self.basis.x_matrix[0, 1]) / 0.35, 1.0, delta=0.15)
        for phi in self.basis.eigenfunctions:
            self.assertGreater(phi[int(np.argmax(np.abs(phi)))], 0.0)

    def test_position_matrix(self) -> None:
        x = self.basis.x_matrix
        np.testing.assert_array_equal(x, x.T)
        for m in range(self.basis.n_levels):
            for n in range(self.basis.n_levels):
                if self.basis.parities[m] == self.basis.parities[n]:
                    self.assertLess(abs(x[m, n]), 1e-8)
        self.assertAlmostEqual(x_matrix_element(self.basis, 0, 1), x[0, 1], delta=1e-12)
        self.assertEqual(x_matrix_element(self.basis, 1, 0), x_matrix_element(self.basis, 0, 1))

    def test_orthonormal_eigenfunctions(self) -> None:
        weights = trapezoid_weights(self.basis.grid)
        gram = (self.basis.eigenfunctions * weights) @ self.basis.eigenfunctions.T
        np.testing.assert_allclose(gram, np.eye(self.basis.n_levels), atol=1e-8)

    def test_splitting_converged(self) -> None:
        report = convergence_study(
            reference_grid(), self.basis.kinetic_coefficient, reference_potential, 2, factors=(1, 2)
        )
        self.assertLess(report.final_splitting_drift, 0.01)
        report.raise_if_coarse()

    def test_index_checks(self) -> None:
        with self.assertRaises(IndexOutOfRange):
            self.basis.splitting(0, 8)
        with self.assertRaises(IndexOutOfRange):
            self.basis.truncated(9)
        doublet = self.basis.truncated(2)
        self.assertEqual(doublet.n_levels, 2)
        self.assertEqual(doublet.tunneling_period, self.basis.tunneling_period)


class ConvergenceTests(unittest.TestCase):
    def test_coarse_grid_flagged(self) -> None:
        coarse = Grid(-0.8, 0.8, 501)
        k = reference_basis().kinetic_coefficient
        measured = convergence_study(coarse, k, reference_potential, 2, factors=(1, 2))
        drift = measured.final_splitting_drift
        self.assertGreater(drift, 0.0)

        strict = convergence_study(coarse, k, reference_potential, 2, factors=(1, 2), splitting_tolerance=drift / 2)
        self.assertTrue(strict.grid_too_coarse)
        with self.assertRaises(GridTooCoarse):
            strict.raise_if_coarse()

    def test_needs_two_grids(self) -> None:
        with self.assertRaises(InvalidParameters):
            convergence_study(reference_grid(), 1e-4, reference_potential, 2, factors=(1,))

    def test_calibration_needs_bracket(self) -> None:
        with self.assertRaises(ConvergenceFailure):
            calibrate_capacitance(reference_quartic(), 1.0, Grid(-0.8, 0.8, 1001))


class SyntheticBasisTests(unittest.TestCase):
    def test_validates_shapes(self) -> None:
        basis = SpectralBasis.synthetic([0.0, 1e-6], [[0.0, -0.3], [-0.3, 0.0]])
        self.assertEqual(basis.n_levels, 2)
        self.assertIsNone(basis.eigenfunctions)
        with self.assertRaises(InvalidParameters):
            SpectralBasis.synthetic([0.0, 1e-6], [[0.0]])
        with self.assertRaises(InvalidParameters):
            SpectralBasis.synthetic([0.0, 1e-6], [[0.0, -0.3], [0.3, 0.0]])


class ExportTests(unittest.TestCase):
    def test_energy_table(self) -> None:
        text = export_energies(reference_basis())
        lines = text.splitlines()
        self.assertEqual(lines[0], "# level,energy_eV,parity")
        self.assertEqual(len(lines), 9)
        self.assertTrue(lines[1].startswith("0,"))
        self.assertTrue(lines[1].endswith(",even"))

    def test_eigenfunction_table(self) -> None:
        text = export_table(reference_basis(), reference_potential, 2)
        self.assertTrue(text.startswith("# x,V_minus_V0_eV,phi_0,phi_1\n"))
        data = np.loadtxt(text.splitlines(), delimiter=",", comments="#")
        self.assertEqual(data.shape, (4001, 4))
        self.assertEqual(data[0, 2], 0.0)

    def test_export_needs_eigenfunctions(self) -> None:
        basis = SpectralBasis.synthetic([0.0, 1e-6], [[0.0, -0.3], [-0.3, 0.0]])
        with self.assertRaises(InvalidParameters):
            export_table(basis, reference_potential)


if __name__ == "__main__":
    unittest.main()
