import math
import unittest

import numpy as np

from core.spectral_solver import Grid, SpectralBasis
from core.squid_model import InvalidParameters, from_quartic
from core.state_prep import (
    DensityMatrix,
    GaussianSpec,
    GridMismatch,
    InsufficientCapture,
    InvalidState,
    ProjectedState,
    SupportOverflow,
    captured_profile,
    density_from_projection,
    is_below_barrier,
    lr_coefficients,
    make_gaussian,
    make_lr_state,
    project,
    wavepacket_energy,
)
from tests.fixtures import reference_basis, reference_grid, reference_potential, reference_quartic

WAVEPACKET = GaussianSpec(x_m=-0.27, sigma_x=0.06)


class GaussianTests(unittest.TestCase):
    def test_normalized_on_grid(self) -> None:
        psi = make_gaussian(WAVEPACKET, reference_grid())
        self.assertAlmostEqual(psi.norm(), 1.0, places=12)
        self.assertAlmostEqual(psi.mean_x(), -0.27, places=8)

    def test_support_must_fit(self) -> None:
        with self.assertRaises(SupportOverflow):
            make_gaussian(GaussianSpec(x_m=-0.7, sigma_x=0.06), reference_grid())

    def test_width_must_be_positive(self) -> None:
        with self.assertRaises(InvalidParameters):
            GaussianSpec(x_m=0.0, sigma_x=0.0)

    def test_physical_units(self) -> None:
        params = from_quartic(reference_quartic())
        self.assertAlmostEqual(WAVEPACKET.physical_center(params) / params.flux_quantum, 0.23, places=12)
        self.assertAlmostEqual(WAVEPACKET.physical_width(params) / params.flux_quantum, 0.06, places=12)

    def test_energy_below_barrier(self) -> None:
        basis = reference_basis()
        psi = make_gaussian(WAVEPACKET, reference_grid())
        energy = wavepacket_energy(psi, basis.kinetic_coefficient, reference_potential)
        self.assertGreater(energy, basis.energies[0])
        self.assertTrue(is_below_barrier(energy, reference_quartic()))
        self.assertFalse(is_below_barrier(0.01, reference_quartic()))


class ProjectionTests(unittest.TestCase):
    def setUp(self) -> None:
        self.basis = reference_basis()
        self.psi = make_gaussian(WAVEPACKET, reference_grid())

    def test_capture_onto_lowest_four_levels(self) -> None:
        profile = captured_profile(self.psi, self.basis)
        self.assertTrue(0.95 <= profile[3] <= 0.99)
        self.assertTrue(np.all(np.diff(profile) >= 0.0))
        self.assertLessEqual(profile[-1], 1.0 + 1e-9)

    def test_eigenfunction_projects_onto_itself(self) -> None:
        phi = self.basis.eigenfunctions[2].astype(complex)
        state = project(type(self.psi)(grid=self.psi.grid, amplitudes=phi), self.basis)
        self.assertAlmostEqual(state.captured_norm, 1.0, places=7)
        self.assertAlmostEqual(abs(state.coefficients[2]), 1.0, places=7)

    def test_grid_mismatch(self) -> None:
        other = make_gaussian(WAVEPACKET, Grid(-0.8, 0.8, 2001))
        with self.assertRaises(GridMismatch):
            project(other, self.basis)
        synthetic = SpectralBasis.synthetic([0.0, 1e-6], [[0.0, -0.3], [-0.3, 0.0]])
        with self.assertRaises(GridMismatch):
            project(self.psi, synthetic)

    def test_density_is_a_valid_state(self) -> None:
        rho = density_from_projection(project(self.psi, self.basis.truncated(4)))
        self.assertAlmostEqual(rho.trace(), 1.0, places=12)
        self.assertAlmostEqual(rho.purity(), 1.0, places=10)
        self.assertTrue(rho.is_positive_semidefinite())
        self.assertTrue(0.95 <= rho.captured_norm <= 0.99)
        self.assertLess(rho.mean_x(self.basis), 0.0)

    def test_unrenormalized_density_keeps_captured_trace(self) -> None:
        state = project(self.psi, self.basis.truncated(4))
        rho = density_from_projection(state, renormalize=False)
        self.assertAlmostEqual(rho.trace(), state.captured_norm, places=12)

    def test_insufficient_capture(self) -> None:
        state = project(self.psi, self.basis.truncated(2))
        with self.assertRaises(InsufficientCapture):
            density_from_projection(state, min_capture=0.99)

    def test_centred_packet_populates_only_even_levels(self) -> None:
        centred = project(make_gaussian(GaussianSpec(x_m=0.0, sigma_x=0.06), reference_grid()), self.basis)
        even = np.abs(centred.coefficients[0::2])
        odd = np.abs(centred.coefficients[1::2])
        self.assertGreater(float(np.max(even)), 0.0)
        self.assertLessEqual(float(np.max(odd)), 1e-9 * float(np.max(even)))

    def test_mirrored_packets_share_level_weights(self) -> None:
        left = project(self.psi, self.basis)
        right = project(make_gaussian(GaussianSpec(x_m=0.27, sigma_x=0.06), reference_grid()), self.basis)
        np.testing.assert_allclose(np.abs(right.coefficients), np.abs(left.coefficients), atol=1e-10)
        self.assertAlmostEqual(right.captured_norm, left.captured_norm, places=10)

    def test_full_basis_density_is_pure_and_positive(self) -> None:
        rho = density_from_projection(project(self.psi, self.basis))
        self.assertEqual(rho.size, 8)
        self.assertTrue(rho.is_positive_semidefinite())
        self.assertGreaterEqual(rho.purity(), 0.99)
        self.assertAlmostEqual(rho.trace(), 1.0, places=12)

    def test_projected_state_bounds(self) -> None:
        with self.assertRaises(InvalidState):
            ProjectedState(coefficients=np.array([1.0, 1.0]), captured_norm=2.0, basis_size=2)
        with self.assertRaises(InvalidState):
            ProjectedState(coefficients=np.array([np.nan]), captured_norm=0.5, basis_size=1)


class LeftRightTests(unittest.TestCase):
    def test_left_state_sits_in_left_well(self) -> None:
        basis = reference_basis()
        left = make_lr_state("left", basis)
        right = make_lr_state("right", basis)
        self.assertAlmostEqual(left.mean_x(basis), basis.x_matrix[0, 1], places=12)
        self.assertLess(left.mean_x(basis), 0.0)
        self.assertAlmostEqual(right.mean_x(basis), -left.mean_x(basis), places=12)
        self.assertEqual(left.label, "left")

    def test_left_and_right_are_orthogonal(self) -> None:
        basis = reference_basis()
        left = make_lr_state("left", basis)
        right = make_lr_state("right", basis)
        self.assertAlmostEqual(abs(np.trace(left.elements @ right.elements)), 0.0, places=15)
        self.assertAlmostEqual(float(np.real(np.trace(left.elements @ left.elements))), 1.0, places=12)

    def test_coefficients(self) -> None:
        c = lr_coefficients("right", 3)
        np.testing.assert_allclose(c, [1 / math.sqrt(2), -1 / math.sqrt(2), 0.0])
        with self.assertRaises(InvalidState):
            lr_coefficients("up")
        with self.assertRaises(InvalidState):
            lr_coefficients("left", 1)

    def test_requires_negative_gauge(self) -> None:
        flipped = SpectralBasis.synthetic([0.0, 1e-6], [[0.0, 0.3], [0.3, 0.0]])
        with self.assertRaises(InvalidState):
            make_lr_state("left", flipped)


class DensityMatrixTests(unittest.TestCase):
    def test_rejects_non_hermitian(self) -> None:
        with self.assertRaises(InvalidState):
            DensityMatrix(elements=np.array([[0.5, 0.1], [0.2, 0.5]]))
        with self.assertRaises(InvalidState):
            DensityMatrix(elements=np.ones(3))

    def test_mixed_state_properties(self) -> None:
        rho = DensityMatrix(elements=np.diag([0.5, 0.5]))
        self.assertAlmostEqual(rho.purity(), 0.5)
        np.testing.assert_array_equal(rho.populations, [0.5, 0.5])
        self.assertEqual(rho.elements.dtype, np.complex128)


if __name__ == "__main__":
    unittest.main()
