import math

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import quad

from lab.fockspace import build_mode_grid, coherent_overlap_gram, discretize_kernel
from lab.kernels import MOMENTUM_BALL_RADIUS, KernelParams, ParameterDomainError
from lab.scattering import (
    DEFAULT_BUMP_WIDTH,
    BumpProfile,
    cloud_overlap,
    decompose,
    evolve_cloud,
    level_boundary,
    overlap_matrix,
    renormalized_velocity,
    resolution_level,
    scattering_trend,
    schedule,
)


class ResolutionLevelTests(SimpleTestCase):
    def test_cell_count_at_level_boundaries(self):
        for level in (1, 2, 3):
            t = level_boundary(level, 0.05)
            cells = decompose(t, 0.05, schedule(t, 2.0))

            self.assertEqual(cells.level, level)
            self.assertEqual(cells.total_cells, 8**level)
            self.assertEqual(cells.per_axis, 2**level)

    def test_level_changes_exactly_at_the_boundary(self):
        t = level_boundary(1, 0.05)

        self.assertEqual(t, 2.0**20)
        self.assertEqual(resolution_level(t, 0.05), 1)
        self.assertEqual(resolution_level(math.nextafter(t, 0.0), 0.05), 0)

    def test_irrational_boundary_is_the_first_float_of_the_level(self):
        t = level_boundary(1, 0.3)

        self.assertAlmostEqual(t, 2.0 ** (10 / 3), delta=1e-12)
        self.assertEqual(resolution_level(t, 0.3), 1)
        self.assertEqual(resolution_level(math.nextafter(t, 0.0), 0.3), 0)

    def test_exponent_domain(self):
        for epsilon in (0.0, 1.0, -0.2):
            with self.assertRaises(ParameterDomainError):
                resolution_level(10.0, epsilon)

    def test_time_starts_at_one(self):
        with self.assertRaises(ParameterDomainError):
            resolution_level(0.5, 0.05)


class ScheduleTests(SimpleTestCase):
    def test_strictly_decreasing_along_levels(self):
        sigmas = [schedule(level_boundary(n, 0.5), 2.0) for n in (1, 2, 3, 4)]

        self.assertTrue(all(a > b for a, b in zip(sigmas, sigmas[1:])))
        self.assertEqual(sigmas[0], 1 / 16)

    def test_clamped_at_half(self):
        self.assertEqual(schedule(1.0, 2.0), 0.5)

    def test_beta_must_exceed_one(self):
        with self.assertRaisesMessage(ParameterDomainError, "beta > 1"):
            schedule(10.0, 1.0)


class BumpProfileTests(SimpleTestCase):
    def test_peak_normalized(self):
        bump = BumpProfile()

        self.assertEqual(bump([(0.0, 0.0, 0.15)])[0], 1.0)

    def test_vanishes_outside_support(self):
        bump = BumpProfile()

        np.testing.assert_array_equal(bump([(0.0, 0.0, 0.26), (0.1, 0.0, 0.15)]), [0.0, 0.0])

    def test_vanishes_outside_the_ball(self):
        bump = BumpProfile(center=(0.0, 0.0, 0.3), width=0.1)

        self.assertEqual(bump([(0.0, 0.0, 0.34)])[0], 0.0)
        self.assertGreater(bump([(0.0, 0.0, 0.32)])[0], 0.0)

    def test_width_must_be_positive(self):
        with self.assertRaises(ParameterDomainError):
            BumpProfile(width=0.0)


class DecomposeTests(SimpleTestCase):
    def test_coarse_levels_keep_every_cell(self):
        for level in (1, 2):
            cells = decompose(level_boundary(level, 0.5), 0.5, 0.1)
            self.assertEqual(cells.kept_cells, cells.total_cells)

    def test_cells_outside_the_ball_are_dropped(self):
        cells = decompose(level_boundary(3, 0.5), 0.5, 0.1)
        half_diagonal = cells.side * math.sqrt(3) / 2

        self.assertLess(cells.kept_cells, cells.total_cells)
        self.assertTrue(np.all(np.linalg.norm(cells.centers, axis=1) < MOMENTUM_BALL_RADIUS + half_diagonal))
        self.assertAlmostEqual(cells.side, 1 / 12)

    def test_free_and_renormalized_velocities(self):
        t = level_boundary(2, 0.5)
        free = decompose(t, 0.5, 0.1)
        dressed = decompose(t, 0.5, 0.1, velocity=renormalized_velocity(0.9))

        np.testing.assert_array_equal(free.velocities, free.centers)
        np.testing.assert_allclose(dressed.velocities, 0.9 * dressed.centers)

    def test_center_sampling_misses_unresolved_profile(self):
        active = [len(decompose(level_boundary(level, 0.5), 0.5, 0.1, sampling="center").active) for level in (1, 2, 3)]

        self.assertEqual(active, [0, 0, 8])

    def test_cell_integrals_reach_coarse_levels(self):
        coarse = decompose(level_boundary(1, 0.5), 0.5, 0.1)
        finer = decompose(level_boundary(2, 0.5), 0.5, 0.1)

        amplitudes = coarse.amplitudes[coarse.active]
        self.assertEqual(len(amplitudes), 4)
        self.assertEqual(len(finer.active), 8)
        self.assertTrue(np.all(amplitudes > 0))
        np.testing.assert_allclose(amplitudes, amplitudes[0], rtol=1e-12)

    def test_cell_integrals_partition_the_profile(self):
        width = DEFAULT_BUMP_WIDTH
        radial, _ = quad(lambda x: x**2 * math.exp(1.0 - 1.0 / (1.0 - x**2)), 0.0, 1.0, epsabs=1e-14)
        expected = 4 * math.pi * width**3 * radial

        for level in (1, 2, 3):
            cells = decompose(level_boundary(level, 0.5), 0.5, 0.1)
            self.assertAlmostEqual(cells.amplitudes.sum() / expected, 1.0, delta=1e-2)

    def test_integrated_diagonal_mass_grows_towards_the_norm(self):
        width = DEFAULT_BUMP_WIDTH
        radial, _ = quad(lambda x: x**2 * math.exp(2.0 - 2.0 / (1.0 - x**2)), 0.0, 1.0, epsabs=1e-14)
        norm_sq = 4 * math.pi * width**3 * radial

        masses = [decompose(level_boundary(level, 0.5), 0.5, 0.1).diagonal_mass for level in (1, 2, 3)]

        self.assertTrue(all(a < b for a, b in zip(masses, masses[1:])))
        self.assertLessEqual(masses[-1], norm_sq * (1 + 1e-2))
        self.assertGreater(masses[-1], 0.3 * norm_sq)

    def test_unknown_sampling(self):
        with self.assertRaisesMessage(ParameterDomainError, "Unknown amplitude sampling"):
            decompose(level_boundary(1, 0.5), 0.5, 0.1, sampling="midpoint")


class EvolveCloudTests(SimpleTestCase):
    def setUp(self):
        self.grid = build_mode_grid(0.05, 0.01, 4, 6)
        self.kernels = [
            discretize_kernel(KernelParams.free(p, 0.01, 0.05), self.grid) for p in ((0.1, 0.0, 0.0), (0.0, 0.0, -0.1))
        ]

    def test_moduli_preserved(self):
        evolved = evolve_cloud(self.kernels[0], 10.0)

        np.testing.assert_allclose(np.abs(evolved.amplitudes), np.abs(self.kernels[0].amplitudes), rtol=1e-14)
        self.assertEqual(evolved.time, 10.0)
        self.assertAlmostEqual(evolved.norm_sq, self.kernels[0].norm_sq, places=14)

    def test_common_evolution_leaves_overlaps_unchanged(self):
        before = coherent_overlap_gram([kernel.amplitudes for kernel in self.kernels])
        after = coherent_overlap_gram([evolve_cloud(kernel, 10.0).amplitudes for kernel in self.kernels])

        np.testing.assert_allclose(after, before, atol=1e-12)


class OverlapMatrixTests(SimpleTestCase):
    def setUp(self):
        t = level_boundary(3, 0.5)
        self.cells = decompose(t, 0.5, schedule(t, 2.0))

    def test_hermitian_with_reported_statistic(self):
        result = overlap_matrix(self.cells, 0.01)

        np.testing.assert_array_equal(result.matrix, result.matrix.conj().T)
        self.assertEqual(result.matrix.shape, (len(self.cells.active),) * 2)
        self.assertEqual(result.statistic, result.c * 512**2)
        self.assertGreater(result.c, 0.0)
        self.assertLessEqual(result.max_cloud_overlap, 1.0)

    def test_diagonal_mass(self):
        result = overlap_matrix(self.cells, 0.01)

        expected = np.sum(self.cells.amplitudes**2) / (1 / 12) ** 3

        self.assertAlmostEqual(result.diagonal_mass / expected, 1.0, delta=1e-12)

    def test_center_sampled_diagonal_mass(self):
        t = level_boundary(3, 0.5)
        cells = decompose(t, 0.5, schedule(t, 2.0), sampling="center")

        result = overlap_matrix(cells, 0.01)

        expected = np.sum(cells.amplitudes**2) * (1 / 12) ** 3
        self.assertAlmostEqual(result.diagonal_mass, expected, delta=1e-15)

    def test_free_theory_overlaps_are_profile_products(self):
        amplitudes = self.cells.amplitudes[self.cells.active]
        products = np.outer(amplitudes, amplitudes)
        np.fill_diagonal(products, 0.0)

        result = overlap_matrix(self.cells, 0.0)

        self.assertAlmostEqual(result.c, products.max(), delta=1e-15)
        self.assertEqual(result.max_cloud_overlap, 1.0)

    def test_coupling_lowers_overlaps(self):
        free = overlap_matrix(self.cells, 0.0)
        coupled = overlap_matrix(self.cells, 0.01)

        self.assertLessEqual(coupled.c, free.c)
        self.assertLess(coupled.max_cloud_overlap, 1.0)

    def test_no_active_cells(self):
        outside = BumpProfile(center=(0.0, 0.0, 0.5), width=0.1)
        cells = decompose(level_boundary(1, 0.5), 0.5, 0.1, profile=outside)

        result = overlap_matrix(cells, 0.01)

        self.assertEqual(result.c, 0.0)
        self.assertEqual(result.statistic, 0.0)
        self.assertEqual(result.diagonal_mass, 0.0)


class CloudOverlapTests(SimpleTestCase):
    def test_decreases_along_the_schedule(self):
        overlaps = []
        for level in (1, 2, 3, 4):
            t = level_boundary(level, 0.5)
            overlaps.append(cloud_overlap((0.2, 0.0, 0.0), (-0.2, 0.0, 0.0), schedule(t, 2.0), 0.01, t))

        self.assertTrue(all(a > b for a, b in zip(overlaps, overlaps[1:])))
        self.assertLess(overlaps[-1], 1.0)

    def test_equal_velocities_overlap_fully(self):
        self.assertAlmostEqual(cloud_overlap((0.1, 0.0, 0.0), (0.1, 0.0, 0.0), 1e-3, 0.01, 100.0), 1.0, places=12)


class ScatteringTrendTests(SimpleTestCase):
    def test_rows_per_level(self):
        rows = scattering_trend((1, 2, 3), 0.5, 2.0, 0.01)

        self.assertEqual([row.level for row in rows], [1, 2, 3])
        self.assertEqual([row.cells for row in rows], [8, 64, 512])
        self.assertTrue(all(a.sigma_t > b.sigma_t for a, b in zip(rows, rows[1:])))
        self.assertTrue(all(row.active_cells > 0 for row in rows))
        for row in rows:
            self.assertTrue(math.isfinite(row.statistic))
            self.assertEqual(row.statistic, row.c * row.cells**2)

    def test_default_schedule_trend(self):
        rows = scattering_trend((1, 2, 3), 0.05, 2.0, 0.01)

        statistics = [row.statistic for row in rows]
        # |H_j| <= vol for a peak-normalized h and N vol = (2/3)^3, so c(t) N(t)^2 <= (2/3)^6.
        self.assertTrue(all(row.active_cells > 0 and row.c > 0 for row in rows))
        self.assertTrue(all(a < b for a, b in zip(statistics, statistics[1:])))
        self.assertLessEqual(max(statistics), (2 / 3) ** 6)

    def test_default_schedule_trend_with_center_sampling(self):
        rows = scattering_trend((1, 2, 3), 0.05, 2.0, 0.01, sampling="center")

        self.assertEqual([row.active_cells for row in rows], [0, 0, 8])
        self.assertEqual([row.statistic for row in rows[:2]], [0.0, 0.0])
        self.assertAlmostEqual(rows[2].statistic, 63808.9, delta=0.5)
