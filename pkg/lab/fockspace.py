"""
Finite-mode photon grids and the occupation-truncated Fock space built over them.

Photon-space operators are kept separate from the spin factor; full-space
operators are Kronecker products with the 2x2 spin identity, spin index last.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import factorial

from .kernels import (
    DEFAULT_CONVENTION,
    UV_EDGE,
    KernelParams,
    ParameterDomainError,
    PolarizationConvention,
    kernel_values,
    polarization_vectors,
    validate_sigma,
)

logger = logging.getLogger(__name__)

SPIN_DIM = 2
DEFAULT_TRUNCATION_TOLERANCE = 1e-8

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class GridError(ParameterDomainError):
    """Raised for empty or unsupported mode grids."""


class TruncationError(Exception):
    """Raised when a truncated coherent state loses more mass than allowed."""


# Octahedral orbit generators paired with their weights; the weights of every
# rule are renormalized to 4 pi.
_ORBIT_RULES = {
    6: ((0, None, 0.1666666666666667),),
    14: ((0, None, 0.6666666666666667e-1), (2, None, 0.7500000000000000e-1)),
    26: (
        (0, None, 0.4761904761904762e-1),
        (1, None, 0.3809523809523810e-1),
        (2, None, 0.3214285714285714e-1),
    ),
    38: (
        (0, None, 0.9523809523809524e-2),
        (2, None, 0.3214285714285714e-1),
        (4, 0.4597008433809831, 0.2857142857142857e-1),
    ),
    50: (
        (0, None, 0.1269841269841270e-1),
        (1, None, 0.2257495590828924e-1),
        (2, None, 0.2109375000000000e-1),
        (3, 0.3015113445777636, 0.2017333553791887e-1),
    ),
}
SUPPORTED_ANGULAR_ORDERS = (1, 2, *sorted(_ORBIT_RULES))


def _orbit_seed(code: int, a: float | None) -> tuple[float, float, float]:
    if code == 0:
        return (1.0, 0.0, 0.0)
    if code == 1:
        s = math.sqrt(0.5)
        return (0.0, s, s)
    if code == 2:
        s = math.sqrt(1.0 / 3.0)
        return (s, s, s)
    if code == 3:
        return (a, a, math.sqrt(1.0 - 2.0 * a * a))
    return (a, math.sqrt(1.0 - a * a), 0.0)


def _octahedral_orbit(seed) -> list[tuple[float, float, float]]:
    points = set()
    for perm in itertools.permutations(seed):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            points.add(tuple(s * c + 0.0 for s, c in zip(signs, perm)))
    return sorted(points, reverse=True)


def angular_rule(n_angular: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and weights summing to 4 pi for a supported rule size."""
    if n_angular == 1:
        return np.array([[0.0, 0.0, 1.0]]), np.array([4.0 * math.pi])
    if n_angular == 2:
        return np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]), np.array([2.0 * math.pi, 2.0 * math.pi])
    if n_angular not in _ORBIT_RULES:
        raise GridError(f"Unsupported angular rule with {n_angular} points; use one of {SUPPORTED_ANGULAR_ORDERS}.")
    directions, weights = [], []
    for code, a, weight in _ORBIT_RULES[n_angular]:
        orbit = _octahedral_orbit(_orbit_seed(code, a))
        directions.extend(orbit)
        weights.extend([weight] * len(orbit))
    weights = np.array(weights)
    return np.array(directions), 4.0 * math.pi * weights / weights.sum()


@dataclass(frozen=True, eq=False)
class ModeGrid:
    momenta: np.ndarray
    helicities: np.ndarray
    polarizations: np.ndarray
    weights: np.ndarray
    sigma: float
    ir_floor: float
    n_radial: int
    n_angular: int
    radial_nodes: np.ndarray
    log_step: float
    convention: PolarizationConvention = DEFAULT_CONVENTION

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    @property
    def uv_ceiling(self) -> float:
        return float(self.radial_nodes.max())

    @property
    def shell_volume(self) -> float:
        return 4.0 * math.pi / 3.0 * (1.0 - self.ir_floor**3)

    @property
    def volume_tolerance(self) -> float:
        """Relative bound on |sum(w) - shell_volume| / shell_volume for the log-midpoint rule."""
        return 3.0 * self.log_step**2 / 8.0

    def describe(self, j: int) -> dict:
        return {
            "mode": j,
            "k": self.momenta[j].tolist(),
            "helicity": "+" if self.helicities[j] == 0 else "-",
            "weight": float(self.weights[j]),
        }


def build_mode_grid(
    sigma: float,
    ir_floor: float,
    n_radial: int,
    n_angular: int,
    convention: PolarizationConvention = DEFAULT_CONVENTION,
) -> ModeGrid:
    validate_sigma(sigma)
    if not (0.0 < ir_floor < UV_EDGE):
        raise GridError(f"The infrared floor must lie in (0, 1), got {ir_floor!r}.")
    if n_radial < 1 or n_angular < 1:
        raise GridError("A mode grid needs at least one radial and one angular node.")
    directions, angular_weights = angular_rule(n_angular)

    log_step = math.log(UV_EDGE / ir_floor) / n_radial
    radial_nodes = np.exp(math.log(ir_floor) + (np.arange(n_radial) + 0.5) * log_step)
    radial_weights = radial_nodes**3 * log_step

    points = (radial_nodes[:, None, None] * directions[None, :, :]).reshape(-1, 3)
    point_weights = (radial_weights[:, None] * angular_weights[None, :]).reshape(-1)
    pairs = polarization_vectors(points, convention)

    momenta = np.repeat(points, 2, axis=0)
    weights = np.repeat(point_weights, 2)
    helicities = np.tile(np.array([0, 1]), len(points))
    polarizations = pairs.reshape(-1, 3)

    logger.debug("Built mode grid: %s radial x %s angular nodes, floor %.3e", n_radial, n_angular, ir_floor)
    return ModeGrid(
        momenta=momenta,
        helicities=helicities,
        polarizations=polarizations,
        weights=weights,
        sigma=float(sigma),
        ir_floor=float(ir_floor),
        n_radial=n_radial,
        n_angular=n_angular,
        radial_nodes=radial_nodes,
        log_step=log_step,
        convention=convention,
    )


@dataclass(frozen=True)
class GridPolicy:
    """
    Derives a grid and basis per sigma on a fixed logarithmic lattice, so every
    sigma of a scan shares the same ultraviolet nodes and only gains infrared shells.
    """

    nodes_per_decade: int = 2
    n_angular: int = 6
    floor_ratio: float = 0.25
    n_max: int = 2
    n_cap: int = 2
    convention: PolarizationConvention = DEFAULT_CONVENTION

    def __post_init__(self):
        if self.nodes_per_decade < 1:
            raise GridError("nodes_per_decade must be at least 1.")
        if not (0.0 < self.floor_ratio <= 1.0):
            raise GridError("floor_ratio must lie in (0, 1].")

    @property
    def log_step(self) -> float:
        return math.log(10.0) / self.nodes_per_decade

    def radial_count(self, sigma: float) -> int:
        target = math.log(1.0 / (self.floor_ratio * validate_sigma(sigma)))
        return max(1, math.ceil(target / self.log_step - 1e-9))

    def grid_for(self, sigma: float) -> ModeGrid:
        n_radial = self.radial_count(sigma)
        return build_mode_grid(sigma, math.exp(-n_radial * self.log_step), n_radial, self.n_angular, self.convention)

    def basis_for(self, sigma: float) -> "FockBasis":
        return FockBasis(self.grid_for(sigma), n_max=self.n_max, n_cap=self.n_cap)

    def dimension_for(self, sigma: float) -> int:
        modes = 2 * self.radial_count(sigma) * len(angular_rule(self.n_angular)[1])
        return SPIN_DIM * count_photon_states(modes, self.n_max, self.n_cap)


def count_photon_states(modes: int, n_max: int, n_cap: int) -> int:
    """Number of occupation tuples with every n_j <= n_max and total <= n_cap."""
    counts = [1] + [0] * n_cap
    for _ in range(modes):
        counts = [sum(counts[total - n] for n in range(min(n_max, total) + 1)) for total in range(n_cap + 1)]
    return sum(counts)


class FockBasis:
    def __init__(self, grid: ModeGrid, n_max: int = 2, n_cap: int = 2):
        if n_max < 1:
            raise ParameterDomainError("n_max must be at least 1.")
        if n_cap < 0:
            raise ParameterDomainError("n_cap must be non-negative.")
        self.grid = grid
        self.n_max = int(n_max)
        self.n_cap = int(n_cap)
        self.spin_dim = SPIN_DIM

        states = []
        modes = grid.size
        for total in range(self.n_cap + 1):
            block = set()
            for combo in itertools.combinations_with_replacement(range(modes), total):
                occupation = [0] * modes
                for j in combo:
                    occupation[j] += 1
                if max(occupation, default=0) <= self.n_max:
                    block.add(tuple(occupation))
            states.extend(sorted(block))
        self.states = states
        self.find_index = {state: idx for idx, state in enumerate(states)}
        self.occupations = np.array(states, dtype=np.int64).reshape(len(states), modes)
        self.totals = self.occupations.sum(axis=1)
        self._lowering = {}
        logger.debug("Fock basis: %s modes, n_max=%s, n_cap=%s, dimension %s", modes, n_max, n_cap, self.dimension)

    @property
    def modes(self) -> int:
        return self.grid.size

    @property
    def photon_dimension(self) -> int:
        return len(self.states)

    @property
    def dimension(self) -> int:
        return self.spin_dim * self.photon_dimension

    def index(self, occupation, spin: int = 0) -> int:
        return self.spin_dim * self.find_index[tuple(occupation)] + int(spin)

    def vacuum(self, spin=0) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=complex)
        vector[:2] = _spinor(spin)
        return vector

    def lowering_squared(self, j: int) -> sparse.csr_matrix:
        """Integer matrix holding n_j at (occupation - e_j, occupation)."""
        if j not in self._lowering:
            if not (0 <= j < self.modes):
                raise ParameterDomainError(f"Mode index {j} outside 0..{self.modes - 1}.")
            sources = np.nonzero(self.occupations[:, j])[0]
            targets = []
            for source in sources:
                lowered = list(self.states[source])
                lowered[j] -= 1
                targets.append(self.find_index[tuple(lowered)])
            data = self.occupations[sources, j]
            shape = (self.photon_dimension, self.photon_dimension)
            self._lowering[j] = sparse.coo_matrix((data, (targets, sources)), shape=shape, dtype=np.int64).tocsr()
        return self._lowering[j]

    def photon_lowering(self, j: int) -> sparse.csr_matrix:
        lowering = self.lowering_squared(j).astype(float)
        lowering.data = np.sqrt(lowering.data)
        return lowering

    def photon_identity(self) -> sparse.csr_matrix:
        return sparse.identity(self.photon_dimension, format="csr")

    def lift(self, photon_operator) -> sparse.csr_matrix:
        return sparse.kron(photon_operator, sparse.identity(self.spin_dim), format="csr")

    def safe_mask(self) -> np.ndarray:
        """States where one more creation stays inside both occupation caps."""
        return (self.occupations.max(axis=1, initial=0) <= self.n_max - 1) & (self.totals < self.n_cap)

    def edge_mask(self) -> np.ndarray:
        """Photon states within one quantum of an occupation cap."""
        return (self.totals >= self.n_cap - 1) | (self.occupations.max(axis=1, initial=0) >= self.n_max - 1)


def _spinor(spin) -> np.ndarray:
    if np.ndim(spin) == 0:
        if int(spin) not in (0, 1):
            raise ParameterDomainError(f"Spin index must be 0 or 1, got {spin!r}.")
        spinor = np.zeros(SPIN_DIM, dtype=complex)
        spinor[int(spin)] = 1.0
        return spinor
    spinor = np.asarray(spin, dtype=complex).reshape(SPIN_DIM)
    return spinor / np.linalg.norm(spinor)


def ladder(basis: FockBasis, j: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    annihilator = basis.lift(basis.photon_lowering(j))
    return annihilator, annihilator.conj().T.tocsr()


def _root(matrix) -> sparse.csr_matrix:
    matrix = sparse.csr_matrix(matrix, dtype=float)
    matrix.data = np.sqrt(matrix.data)
    return matrix


def ccr_defect(basis: FockBasis, i: int, j: int, region: str = "safe", kind: str = "creation") -> float:
    """
    Max entry of [a_i, a_j^dagger] - delta_ij (kind="creation") or [a_i, a_j]
    (kind="annihilation") acting on the chosen region of photon states.

    Both products carry a single intermediate state, so every entry is the square
    root of an integer product of squared amplitudes and cancellations are exact.
    """
    s_i, s_j = basis.lowering_squared(i), basis.lowering_squared(j)
    if kind == "creation":
        commutator = _root(s_i @ s_j.T) - _root(s_j.T @ s_i)
        if i == j:
            commutator = commutator - basis.photon_identity()
    elif kind == "annihilation":
        commutator = _root(s_i @ s_j) - _root(s_j @ s_i)
    else:
        raise ValueError(f"Unknown commutator kind {kind!r}.")

    if region == "safe":
        commutator = commutator.tocsc()[:, np.nonzero(basis.safe_mask())[0]]
    elif region != "full":
        raise ValueError(f"Unknown region {region!r}.")
    if commutator.nnz == 0:
        return 0.0
    return float(abs(commutator).max())


@dataclass(frozen=True, eq=False)
class CoherentVector:
    vector: np.ndarray
    amplitudes: np.ndarray
    mass_defect: float


def _mode_coefficients(amplitudes: np.ndarray, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    norms = np.exp(-0.5 * np.abs(amplitudes) ** 2)
    return norms[:, None] * amplitudes[:, None] ** n[None, :] / np.sqrt(factorial(n))[None, :]


def coherent_state(
    basis: FockBasis, amplitudes, spin=0, tolerance: float = DEFAULT_TRUNCATION_TOLERANCE
) -> CoherentVector:
    amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if amplitudes.shape != (basis.modes,):
        raise ParameterDomainError(f"Expected {basis.modes} amplitudes, got {amplitudes.size}.")
    table = _mode_coefficients(amplitudes, basis.n_max)
    coefficients = np.prod(table[np.arange(basis.modes)[None, :], basis.occupations], axis=1)
    kept = float(np.vdot(coefficients, coefficients).real)
    mass_defect = max(0.0, 1.0 - kept)
    if mass_defect > tolerance:
        raise TruncationError(
            f"Coherent state truncation loses mass {mass_defect:.3e} (tolerance {tolerance:.1e}); "
            "raise n_max or n_cap."
        )
    if mass_defect > 0:
        logger.debug("Coherent state truncation defect %.3e", mass_defect)
    vector = np.kron(coefficients / math.sqrt(kept), _spinor(spin))
    return CoherentVector(vector=vector, amplitudes=amplitudes, mass_defect=mass_defect)


def coherent_overlap_analytic(f, g) -> complex:
    f = np.asarray(f, dtype=complex).reshape(-1)
    g = np.asarray(g, dtype=complex).reshape(-1)
    return complex(np.exp(-0.5 * np.vdot(f, f).real - 0.5 * np.vdot(g, g).real + np.vdot(f, g)))


def coherent_overlap_gram(rows, columns=None) -> np.ndarray:
    """Pairwise coherent overlaps between amplitude rows, |overlap| clipped to at most 1."""
    rows = np.atleast_2d(np.asarray(rows, dtype=complex))
    columns = rows if columns is None else np.atleast_2d(np.asarray(columns, dtype=complex))
    row_norms = np.sum(np.abs(rows) ** 2, axis=1)
    column_norms = np.sum(np.abs(columns) ** 2, axis=1)
    exponent = rows.conj() @ columns.T - 0.5 * row_norms[:, None] - 0.5 * column_norms[None, :]
    exponent = np.minimum(exponent.real, 0.0) + 1j * exponent.imag
    return np.exp(exponent)


def photon_number_diagonal(basis: FockBasis, rho: float = 0.0) -> np.ndarray:
    if rho < 0:
        raise ParameterDomainError(f"rho must be non-negative, got {rho!r}.")
    selected = basis.grid.radii >= rho
    return basis.occupations[:, selected].sum(axis=1).astype(float)


def number_operator(basis: FockBasis, rho: float = 0.0) -> sparse.csr_matrix:
    return basis.lift(sparse.diags(photon_number_diagonal(basis, rho), format="csr"))


def spin_operator(basis: FockBasis, m: int) -> sparse.csr_matrix:
    return sparse.kron(basis.photon_identity(), sparse.csr_matrix(PAULI[m]), format="csr")


@dataclass(frozen=True, eq=False)
class CoherentKernel:
    grid: ModeGrid
    params: KernelParams
    amplitudes: np.ndarray
    time: float = 0.0

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


def discretize_kernel(params: KernelParams, grid: ModeGrid) -> CoherentKernel:
    """Mode amplitudes f_j = sqrt(w_j) v(k_j, lambda_j)."""
    values = kernel_values(params, grid.momenta, grid.polarizations)
    return CoherentKernel(grid=grid, params=params, amplitudes=np.sqrt(grid.weights) * values.astype(complex))


def export_operator(operator) -> list[list]:
    """Canonical (row, col, re, im) listing of the nonzero entries."""
    coo = sparse.coo_matrix(operator)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    return [
        [int(coo.row[n]), int(coo.col[n]), float(np.real(coo.data[n])), float(np.imag(coo.data[n]))]
        for n in order
        if coo.data[n] != 0
    ]


def basis_manifest(basis: FockBasis) -> dict:
    return {
        "modes": basis.modes,
        "n_max": basis.n_max,
        "n_cap": basis.n_cap,
        "spin_dim": basis.spin_dim,
        "dimension": basis.dimension,
        "states": [[int(total), list(state)] for total, state in zip(basis.totals, basis.states)],
    }
