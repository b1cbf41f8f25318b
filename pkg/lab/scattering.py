"""
Time-refined cell decompositions of the momentum ball, the infrared cutoff
schedule sigma_t and coherent-cloud overlaps between cells, evaluated in the
coherent approximation with analytic overlaps.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fockspace import CoherentKernel, GridPolicy, coherent_overlap_gram, discretize_kernel
from .kernels import ALPHA_MAX, MOMENTUM_BALL_RADIUS, KernelParams, ParameterDomainError, as_vector

logger = logging.getLogger(__name__)

SCHEDULE_CLAMP = 0.5
EXPONENT_DENOMINATOR_LIMIT = 10_000
DEFAULT_BUMP_CENTER = (0.0, 0.0, 0.15)
DEFAULT_BUMP_WIDTH = 0.1
DEFAULT_OVERLAP_POLICY = GridPolicy(nodes_per_decade=2, n_angular=26, floor_ratio=0.25)
SAMPLING_MODES = ("integrated", "center")
# Gauss-Legendre nodes per axis across the whole cube, spread over the cells of a level.
CELL_NODES_PER_AXIS = 48
MIN_CELL_ORDER = 3


@dataclass(frozen=True)
class BumpProfile:
    """Peak-normalized bump exp(1 - 1/(1 - x^2)), x = |p - center| / width, cut to the ball."""

    center: tuple = DEFAULT_BUMP_CENTER
    width: float = DEFAULT_BUMP_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(as_vector(self.center, "center").tolist()))
        if not self.width > 0:
            raise ParameterDomainError(f"The bump width must be positive, got {self.width!r}.")

    def __call__(self, momenta) -> np.ndarray:
        momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
        x = np.linalg.norm(momenta - np.asarray(self.center), axis=1) / self.width
        inside = (x < 1.0) & (np.linalg.norm(momenta, axis=1) < MOMENTUM_BALL_RADIUS)
        safe = np.where(inside, x, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe**2)), 0.0)


def _exponent(epsilon) -> Fraction:
    value = Fraction(epsilon).limit_denominator(EXPONENT_DENOMINATOR_LIMIT)
    if not (0 < value < 1):
        raise ParameterDomainError(f"The resolution exponent must lie in (0, 1), got {epsilon!r}.")
    return value


def resolution_level(t, epsilon) -> int:
    """
    Largest n with 2^(n/epsilon) <= t, decided in integers: with epsilon = a/b this is
    2^(n b) <= t^a.
    """
    exponent = _exponent(epsilon)
    time = Fraction(t)
    if time < 1:
        raise ParameterDomainError(f"Cell decompositions start at t = 1, got {t!r}.")
    bound = time**exponent.numerator
    level = 0
    while Fraction(2 ** ((level + 1) * exponent.denominator)) <= bound:
        level += 1
    return level


def level_boundary(level: int, epsilon) -> float:
    """Smallest float t with resolution_level(t, epsilon) == level, i.e. 2^(n/epsilon) rounded up."""
    exponent = _exponent(epsilon)
    power = Fraction(level) / exponent
    if power.denominator == 1:
        return math.ldexp(1.0, int(power))
    value = 2.0 ** float(power)
    while resolution_level(value, exponent) < level:
        value = math.nextafter(value, math.inf)
    while resolution_level(math.nextafter(value, 0.0), exponent) >= level:
        value = math.nextafter(value, 0.0)
    return value


def schedule(t: float, beta: float) -> float:
    if not beta > 1:
        raise ParameterDomainError(f"The cutoff schedule needs beta > 1, got {beta!r}.")
    if not t >= 1:
        raise ParameterDomainError(f"The cutoff schedule starts at t = 1, got {t!r}.")
    return min(float(t) ** -float(beta), SCHEDULE_CLAMP)


@dataclass(frozen=True, eq=False)
class CellDecomposition:
    t: float
    epsilon: float
    sigma: float
    level: int
    centers: np.ndarray
    velocities: np.ndarray
    amplitudes: np.ndarray
    side: float
    sampling: str = "integrated"

    @property
    def per_axis(self) -> int:
        return 2**self.level

    @property
    def total_cells(self) -> int:
        return 8**self.level

    @property
    def kept_cells(self) -> int:
        return len(self.centers)

    @property
    def volume(self) -> float:
        return self.side**3

    @property
    def active(self) -> np.ndarray:
        return np.nonzero(self.amplitudes)[0]

    @property
    def diagonal_mass(self) -> float:
        """Approximation of ||h||^2: sum |h_j|^2 vol for sampled, sum |H_j|^2 / vol for integrated amplitudes."""
        squares = float(np.sum(np.abs(self.amplitudes) ** 2))
        if self.sampling == "center":
            return squares * self.volume
        return squares / self.volume


def _cell_integrals(lower: np.ndarray, side: float, profile, per_axis: int) -> np.ndarray:
    """H_j = integral of h over cell j intersected with the ball, by a tensor Gauss-Legendre rule."""
    order = max(MIN_CELL_ORDER, math.ceil(CELL_NODES_PER_AXIS / per_axis))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    offsets = np.array(list(itertools.product(0.5 * side * (nodes + 1.0), repeat=3)))
    tensor = np.prod(np.array(list(itertools.product(weights, repeat=3))), axis=1) * (0.5 * side) ** 3
    points = lower[:, None, :] + offsets[None, :, :]
    values = profile(points.reshape(-1, 3)).reshape(len(lower), -1)
    values = np.where(np.linalg.norm(points, axis=2) < MOMENTUM_BALL_RADIUS, values, 0.0)
    return values @ tensor


def decompose(t, epsilon, sigma: float, profile=None, velocity=None, sampling: str = "integrated") -> CellDecomposition:
    """
    Split the cube [-1/3, 1/3]^3 into 2^n cells per axis and keep those meeting the
    open ball |p| < 1/3. velocity maps centers to cell velocities (free: V = p).
    Amplitudes are the cell integrals of h, or h at the cell centers with sampling="center".
    """
    if sampling not in SAMPLING_MODES:
        raise ParameterDomainError(f"Unknown amplitude sampling {sampling!r}; use one of {SAMPLING_MODES}.")
    level = resolution_level(t, epsilon)
    profile = profile or BumpProfile()
    per_axis = 2**level
    side = 2 * MOMENTUM_BALL_RADIUS / per_axis
    edges = -MOMENTUM_BALL_RADIUS + side * np.arange(per_axis)
    lower = np.array(list(itertools.product(edges, repeat=3)))
    upper = lower + side
    closest = np.clip(0.0, lower, upper)
    kept = np.linalg.norm(closest, axis=1) < MOMENTUM_BALL_RADIUS
    centers = (lower[kept] + upper[kept]) / 2
    velocities = centers.copy() if velocity is None else np.asarray(velocity(centers), dtype=float)
    if sampling == "center":
        amplitudes = profile(centers)
    else:
        amplitudes = _cell_integrals(lower[kept], side, profile, per_axis)
    logger.debug("Level %s: %s of %s cells meet the ball, %s active", level, len(centers), 8**level, np.count_nonzero(amplitudes))
    return CellDecomposition(
        t=float(t),
        epsilon=float(epsilon),
        sigma=float(sigma),
        level=level,
        centers=centers,
        velocities=velocities,
        amplitudes=amplitudes,
        side=side,
        sampling=sampling,
    )


def renormalized_velocity(d2E: float):
    """Cell velocity d2E * p, the linear response of grad_E to p near the origin."""
    return lambda centers: d2E * np.asarray(centers, dtype=float)


def evolve_cloud(kernel: CoherentKernel, t: float) -> CoherentKernel:
    phases = np.exp(-1j * kernel.grid.radii * float(t))
    return CoherentKernel(grid=kernel.grid, params=kernel.params, amplitudes=kernel.amplitudes * phases, time=kernel.time + float(t))


def _clouds(velocities, sigma: float, alpha: float, t: float, policy: GridPolicy, alpha_max: float):
    grid = policy.grid_for(sigma)
    clouds = []
    for velocity in np.atleast_2d(velocities):
        params = KernelParams(p=velocity, grad_E=velocity, alpha=alpha, sigma=sigma, alpha_max=alpha_max)
        clouds.append(evolve_cloud(discretize_kernel(params, grid), t).amplitudes)
    return np.array(clouds)


def cloud_overlap(
    velocity, other, sigma: float, alpha: float, t: float = 0.0,
    policy: GridPolicy = DEFAULT_OVERLAP_POLICY, alpha_max: float = ALPHA_MAX,
) -> float:
    clouds = _clouds([as_vector(velocity, "velocity"), as_vector(other, "velocity")], sigma, alpha, t, policy, alpha_max)
    return float(abs(coherent_overlap_gram(clouds)[0, 1]))


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    matrix: np.ndarray
    active: np.ndarray
    c: float
    statistic: float
    diagonal_mass: float
    max_cloud_overlap: float


def overlap_matrix(
    cells: CellDecomposition, alpha: float, t: float | None = None,
    policy: GridPolicy = DEFAULT_OVERLAP_POLICY, alpha_max: float = ALPHA_MAX,
) -> OverlapMatrix:
    """
    M_ij = conj(h_i) h_j <coh(v_i), coh(v_j)> over the active cells, with clouds
    discretized down to sigma/4 and evolved freely to t.
    """
    t = cells.t if t is None else float(t)
    active = cells.active
    amplitudes = cells.amplitudes[active]
    diagonal_mass = cells.diagonal_mass
    if len(active) == 0:
        return OverlapMatrix(np.zeros((0, 0), dtype=complex), active, 0.0, 0.0, diagonal_mass, 0.0)

    clouds = _clouds(cells.velocities[active], cells.sigma, alpha, t, policy, alpha_max)
    gram = coherent_overlap_gram(clouds)
    gram = 0.5 * (gram + gram.conj().T)
    matrix = np.conj(amplitudes)[:, None] * amplitudes[None, :] * gram
    off_diagonal = ~np.eye(len(active), dtype=bool)
    c = float(np.abs(matrix[off_diagonal]).max()) if len(active) > 1 else 0.0
    cloud = float(np.abs(gram[off_diagonal]).max()) if len(active) > 1 else 0.0
    return OverlapMatrix(
        matrix=matrix,
        active=active,
        c=c,
        statistic=c * cells.total_cells**2,
        diagonal_mass=diagonal_mass,
        max_cloud_overlap=cloud,
    )


@dataclass(frozen=True)
class TrendRow:
    t: float
    level: int
    cells: int
    sigma_t: float
    c: float
    statistic: float
    diagonal_mass: float
    active_cells: int
    max_cloud_overlap: float


def scattering_trend(
    levels, epsilon, beta: float, alpha: float, profile=None, velocity=None,
    policy: GridPolicy = DEFAULT_OVERLAP_POLICY, alpha_max: float = ALPHA_MAX, sampling: str = "integrated",
) -> list[TrendRow]:
    rows = []
    for level in levels:
        t = level_boundary(level, epsilon)
        sigma = schedule(t, beta)
        cells = decompose(t, epsilon, sigma, profile, velocity, sampling)
        overlaps = overlap_matrix(cells, alpha, t, policy, alpha_max)
        rows.append(
            TrendRow(
                t=t,
                level=cells.level,
                cells=cells.total_cells,
                sigma_t=sigma,
                c=overlaps.c,
                statistic=overlaps.statistic,
                diagonal_mass=overlaps.diagonal_mass,
                active_cells=len(overlaps.active),
                max_cloud_overlap=overlaps.max_cloud_overlap,
            )
        )
        logger.info("t = %.6g: n = %s, sigma_t = %.3e, c(t) N(t)^2 = %.6g", t, cells.level, sigma, overlaps.statistic)
    return rows
