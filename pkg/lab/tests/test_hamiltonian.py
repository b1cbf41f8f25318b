import math
from unittest.mock import patch

import numpy as np
from django.test import SimpleTestCase

from lab.fockspace import FockBasis, build_mode_grid
from lab.hamiltonian import (
    BLOCK_SIZE,
    ResourceLimitError,
    SolverConvergenceError,
    SolverSettings,
    annihilate,
    apriori_bound_check,
    assemble,
    ground_state,
    phi_decomposition,
    pull_through_residual,
    resolvent_bound_check,
)
from lab.kernels import PolarizationConvention, profile


def _symmetric_basis(n_cap=2, convention=None):
    grid = build_mode_grid(0.05, 0.05, 1, 6, **({"convention": convention} if convention else {}))
    return FockBasis(grid, n_max=2, n_cap=n_cap)


class AssembleTests(SimpleTestCase):
    def setUp(self):
        self.basis = _symmetric_basis()
        self.p = np.array([0.1, 0.02, -0.05])

    def test_free_theory_is_diagonal(self):
        hamiltonian = assemble(self.p, 0.05, 0.0, self.basis)
        occupations = self.basis.occupations
        momenta = occupations @ self.basis.grid.momenta
        energies = 0.5 * np.sum((self.p - momenta) ** 2, axis=1) + occupations @ self.basis.grid.radii

        matrix = hamiltonian.matrix
        off_diagonal = matrix - np.diag(matrix.diagonal())

        np.testing.assert_allclose(matrix.diagonal().real, np.repeat(energies, 2), atol=1e-14)
        self.assertEqual(np.count_nonzero(off_diagonal), 0)

    def test_vacuum_expectation_matches_mode_sum(self):
        alpha = 1e-3
        grid = self.basis.grid
        field_sum = np.sum(grid.weights * profile(grid.radii, 0.05) ** 2 / grid.radii)

        hamiltonian = assemble(self.p, 0.05, alpha, self.basis)

        expected = 0.5 * self.p @ self.p + 0.5 * alpha * field_sum
        self.assertAlmostEqual(hamiltonian.matrix[0, 0].real, expected, places=13)
        self.assertAlmostEqual(hamiltonian.matrix[1, 1].real, expected, places=13)

    def test_hermitian(self):
        for alpha in (0.0, 1e-4, 1e-2):
            matrix = assemble(self.p, 0.05, alpha, self.basis).matrix
            defect = abs(matrix - matrix.conj().T)
            self.assertLessEqual(defect.max() if defect.nnz else 0.0, 1e-13)

    def test_momentum_substitution_reuses_fields(self):
        hamiltonian = assemble(self.p, 0.05, 1e-3, self.basis)
        q = np.array([-0.02, 0.0, 0.1])

        shifted = hamiltonian.at(q)
        direct = assemble(q, 0.05, 1e-3, self.basis)

        self.assertIs(shifted.components, hamiltonian.components)
        self.assertLess(abs(shifted.matrix - direct.matrix).max(), 1e-14)

    def test_dimension_cap(self):
        with self.assertRaisesMessage(ResourceLimitError, "exceeds the cap 10"):
            assemble(self.p, 0.05, 1e-3, self.basis, dimension_cap=10)

    def test_momentum_outside_ball_is_flagged(self):
        with self.assertLogs("lab.hamiltonian", level="WARNING"):
            hamiltonian = assemble((0.4, 0.0, 0.0), 0.05, 1e-3, self.basis)

        self.assertTrue(hamiltonian.outside_momentum_ball)


class GroundStateTests(SimpleTestCase):
    def setUp(self):
        self.basis = _symmetric_basis()

    def test_free_ground_state(self):
        gs = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 0.0, self.basis), u=(0, 0, 1))

        self.assertAlmostEqual(gs.energy, 0.005, delta=1e-15)
        self.assertAlmostEqual(gs.vector[0], 1.0, delta=1e-14)
        self.assertAlmostEqual(np.linalg.norm(gs.vector[1:]), 0.0, delta=1e-14)

    def test_energy_below_vacuum_expectation(self):
        hamiltonian = assemble((0.1, 0.0, 0.0), 0.05, 1e-4, self.basis)

        gs = ground_state(hamiltonian)

        self.assertLess(gs.energy, hamiltonian.matrix[0, 0].real)
        self.assertLess(gs.residual, 1e-8 * hamiltonian.one_norm())

    def test_parity_symmetric_grid(self):
        plus = ground_state(assemble((0.1, 0.05, 0.0), 0.05, 1e-3, self.basis))
        minus = ground_state(assemble((-0.1, -0.05, 0.0), 0.05, 1e-3, self.basis))

        self.assertAlmostEqual(plus.energy, minus.energy, delta=1e-12)

    def test_enlarging_photon_cap_never_raises_energy(self):
        small = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 1e-2, _symmetric_basis(n_cap=1)))
        large = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 1e-2, _symmetric_basis(n_cap=2)))

        self.assertLessEqual(large.energy, small.energy + 1e-12)

    def test_kramers_doublet_and_spin_alignment(self):
        alpha = 1e-3
        for u in ((0, 0, 1), (1, 0, 0), (0, 1, 1)):
            gs = ground_state(assemble((0.1, 0.0, 0.05), 0.05, alpha, self.basis), u=u)
            self.assertLess(gs.splitting, 1e-10)
            self.assertGreater(gs.gap, 0.0)
            self.assertGreaterEqual(gs.alignment, 1 - 100 * alpha)

    def test_invariant_under_polarization_convention(self):
        rotated = PolarizationConvention(reference_axis=(1, 0, 0), fallback_axis=(0, 1, 0))
        standard = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-3, self.basis))
        other = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-3, _symmetric_basis(convention=rotated)))

        self.assertAlmostEqual(standard.energy, other.energy, delta=1e-12)

    def test_block_solver_matches_dense(self):
        hamiltonian = assemble((0.1, 0.0, 0.05), 0.05, 1e-3, self.basis)

        dense = ground_state(hamiltonian, settings=SolverSettings(method="dense"))
        block = ground_state(hamiltonian, settings=SolverSettings(method="lobpcg"))

        self.assertEqual(block.solver, "lobpcg")
        self.assertAlmostEqual(block.energy, dense.energy, delta=1e-9)
        self.assertGreater(abs(np.vdot(dense.vector, block.vector)), 1 - 1e-6)

    def test_non_convergence_carries_history(self):
        hamiltonian = assemble((0.1, 0.0, 0.05), 0.05, 1e-2, self.basis)
        settings = SolverSettings(method="lobpcg", max_iter=1, tolerance=1e-15)

        with self.assertRaises(SolverConvergenceError) as caught:
            ground_state(hamiltonian, settings=settings)

        self.assertIn("residual", str(caught.exception))
        self.assertIsInstance(caught.exception.residual_history, list)

    def test_auto_prefers_block_solver(self):
        hamiltonian = assemble((0.1, 0.0, 0.05), 0.05, 1e-3, self.basis)

        gs = ground_state(hamiltonian)

        self.assertEqual(gs.solver, "lobpcg")

    def test_auto_uses_dense_below_block_size(self):
        basis = FockBasis(build_mode_grid(0.05, 0.05, 1, 1), n_max=2, n_cap=2)

        gs = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-3, basis))

        self.assertEqual(gs.solver, "dense")

    def test_auto_falls_back_to_dense_when_block_solver_stalls(self):
        hamiltonian = assemble((0.1, 0.0, 0.05), 0.05, 1e-2, self.basis)
        reference = ground_state(hamiltonian, settings=SolverSettings(method="dense"))

        def stalled(hamiltonian, settings, tolerance):
            return np.zeros(BLOCK_SIZE), np.eye(hamiltonian.dimension, BLOCK_SIZE, dtype=complex), 1, [[1.0] * BLOCK_SIZE]

        with patch("lab.hamiltonian._solve_lobpcg", side_effect=stalled):
            with self.assertLogs("lab.hamiltonian", level="WARNING") as logs:
                gs = ground_state(hamiltonian)

        self.assertEqual(gs.solver, "dense")
        self.assertAlmostEqual(gs.energy, reference.energy, delta=1e-12)
        self.assertIn("falling back to dense", logs.output[0])

    def test_auto_above_dense_limit_raises_when_block_solver_stalls(self):
        hamiltonian = assemble((0.1, 0.0, 0.05), 0.05, 1e-2, self.basis)

        def stalled(hamiltonian, settings, tolerance):
            return np.zeros(BLOCK_SIZE), np.eye(hamiltonian.dimension, BLOCK_SIZE, dtype=complex), 1, []

        with patch("lab.hamiltonian._solve_lobpcg", side_effect=stalled):
            with self.assertRaises(SolverConvergenceError):
                ground_state(hamiltonian, settings=SolverSettings(dense_limit=10))


class PullThroughTests(SimpleTestCase):
    def setUp(self):
        self.basis = FockBasis(build_mode_grid(0.05, 0.05, 3, 1), n_max=2, n_cap=2)

    def test_free_theory_is_exact(self):
        gs = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 0.0, self.basis))

        for j in range(self.basis.modes):
            self.assertLessEqual(pull_through_residual(gs, j).residual, 1e-14)

    def test_residual_controlled_by_edge_mass(self):
        gs = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-4, self.basis))

        for j in range(self.basis.modes):
            result = pull_through_residual(gs, j)
            self.assertLessEqual(result.residual, 1e-10 + 1e3 * result.edge_mass)

    def test_identity_exact_with_room_below_caps(self):
        dense = SolverSettings(method="dense")
        gs = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-4, self.basis), settings=dense)
        wide = FockBasis(self.basis.grid, n_max=4, n_cap=4)
        wide_gs = ground_state(assemble((0.1, 0.0, 0.05), 0.05, 1e-4, wide), settings=dense)

        narrow = max(pull_through_residual(gs, j).residual for j in range(self.basis.modes))
        roomy = max(pull_through_residual(wide_gs, j).residual for j in range(wide.modes))

        self.assertLess(roomy, narrow)


class PhiDecompositionTests(SimpleTestCase):
    def setUp(self):
        self.basis = FockBasis(build_mode_grid(0.05, 0.1, 3, 1), n_max=2, n_cap=2)
        self.p = (0.1, 0.0, 0.0)

    def test_free_theory_components_vanish(self):
        gs = ground_state(assemble(self.p, 0.05, 0.0, self.basis))

        for j in range(self.basis.modes):
            result = phi_decomposition(gs, j, self.p)
            self.assertEqual(result.phi1_coeff, 0.0)
            self.assertLessEqual(result.phi2_norm, 1e-14)
            self.assertEqual(result.bound_ratio, 0.0)

    def test_rest_frame_has_no_coherent_part(self):
        gs = ground_state(assemble((0.0, 0.0, 0.0), 0.05, 1e-4, self.basis))

        for j in range(self.basis.modes):
            self.assertEqual(phi_decomposition(gs, j, (0.0, 0.0, 0.0)).phi1_coeff, 0.0)

    def test_remainder_ratio_uniform_over_modes(self):
        gs = ground_state(assemble(self.p, 0.05, 1e-4, self.basis))
        radii = self.basis.grid.radii
        selected = [j for j in range(self.basis.modes) if 0.1 <= radii[j] <= 0.5]

        ratios = [phi_decomposition(gs, j, self.p).bound_ratio for j in selected]

        self.assertGreaterEqual(len(ratios), 4)
        self.assertLessEqual(max(ratios) / min(ratios), 3.0)
        self.assertLessEqual(max(ratios), 2.0)

    def test_coherent_part_carries_the_transverse_velocity(self):
        gs = ground_state(assemble(self.p, 0.05, 1e-4, self.basis))
        helicities = self.basis.grid.helicities
        radii = self.basis.grid.radii

        parallel = [j for j in range(self.basis.modes) if helicities[j] == 1 and radii[j] <= 0.5]
        self.assertTrue(parallel)
        for j in parallel:
            lowered = np.vdot(gs.vector, annihilate(gs, j))
            result = phi_decomposition(gs, j, self.p)
            self.assertNotEqual(result.phi1_coeff, 0.0)
            self.assertLess(abs(lowered - result.phi1_coeff) / abs(result.phi1_coeff), 0.2)


class AprioriBoundTests(SimpleTestCase):
    def setUp(self):
        self.basis = FockBasis(build_mode_grid(0.05, 0.05, 3, 1), n_max=2, n_cap=2)

    def test_zero_coupling(self):
        gs = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 0.0, self.basis))

        self.assertEqual(apriori_bound_check(gs, 0), 0.0)

    def test_ratios_finite_and_order_one(self):
        gs = ground_state(assemble((0.1, 0.0, 0.0), 0.05, 1e-4, self.basis))

        ratios = [apriori_bound_check(gs, j) for j in range(self.basis.modes)]

        self.assertTrue(all(math.isfinite(r) for r in ratios))
        self.assertLess(max(ratios), 10.0)


class ResolventBoundTests(SimpleTestCase):
    def setUp(self):
        self.basis = FockBasis(build_mode_grid(0.05, 0.05, 3, 1), n_max=2, n_cap=2)
        self.p = np.array([0.1, 0.0, 0.0])

    def test_free_theory_matches_diagonal_ratio(self):
        gs = ground_state(assemble(self.p, 0.05, 0.0, self.basis))
        grid = self.basis.grid
        occupations = self.basis.occupations
        photon_momenta = occupations @ grid.momenta
        photon_energy = occupations @ grid.radii

        for j in range(self.basis.modes):
            k = grid.momenta[j]
            excess = 0.5 * np.sum((self.p - photon_momenta) ** 2, axis=1) + photon_energy - gs.energy
            shifted = 0.5 * np.sum((self.p - k - photon_momenta) ** 2, axis=1) + photon_energy + grid.radii[j] - gs.energy

            result = resolvent_bound_check(gs, j)

            self.assertAlmostEqual(result.norm, float(np.max(np.abs(excess) / shifted)), places=10)
            self.assertTrue(result.holds)

    def test_bound_holds_for_every_mode(self):
        gs = ground_state(assemble(self.p, 0.05, 1e-3, self.basis))

        results = [resolvent_bound_check(gs, j) for j in range(self.basis.modes)]

        for result in results:
            self.assertTrue(result.in_domain)
            self.assertTrue(math.isfinite(result.norm))
            self.assertLessEqual(result.ratio, 1.0)

    def test_sparse_norm_matches_dense(self):
        gs = ground_state(assemble(self.p, 0.05, 1e-3, self.basis))
        dense = resolvent_bound_check(gs, 2).norm

        with patch("lab.hamiltonian.RESOLVENT_DENSE_LIMIT", 0):
            sparse_norm = resolvent_bound_check(gs, 2).norm

        self.assertAlmostEqual(sparse_norm, dense, delta=1e-8)

    def test_outside_momentum_ball_is_out_of_domain(self):
        with self.assertLogs("lab.hamiltonian", level="WARNING"):
            hamiltonian = assemble((0.4, 0.0, 0.0), 0.05, 1e-3, self.basis)

        result = resolvent_bound_check(ground_state(hamiltonian), 0)

        self.assertFalse(result.in_domain)

    def test_mode_outside_the_grid(self):
        gs = ground_state(assemble(self.p, 0.05, 1e-3, self.basis))

        with self.assertRaises(IndexError):
            resolvent_bound_check(gs, self.basis.modes)
