"""
Discretized fiber Hamiltonian H(p, sigma) on photon Fock space x spin, its ground
doublet, and the algebraic identities checked against it (pull-through and the
coherent/remainder split of a_j Psi).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import LinearOperator, lobpcg, splu, svds

from .fockspace import PAULI, FockBasis, spin_operator
from .kernels import (
    ALPHA_MAX,
    MOMENTUM_BALL_RADIUS,
    UV_EDGE,
    KernelParams,
    ParameterDomainError,
    as_vector,
    kernel_values,
    profile,
    validate_sigma,
)

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION_CAP = 20000
DEFAULT_DENSE_LIMIT = 2000
SOLVER_METHODS = ("auto", "dense", "lobpcg")
BLOCK_SIZE = 4
# Below this dimension a block iteration has nothing to iterate on.
MIN_BLOCK_DIMENSION = 5 * BLOCK_SIZE
RESOLVENT_BOUND = 3.0
RESOLVENT_DENSE_LIMIT = DEFAULT_DENSE_LIMIT


class ResourceLimitError(Exception):
    """Raised when a Hilbert space would exceed the configured dimension cap."""


class SolverConvergenceError(Exception):
    """Raised when the eigensolver misses its residual tolerance."""

    def __init__(self, message: str, residual_history=()):
        super().__init__(message)
        self.residual_history = [list(map(float, row)) for row in residual_history]


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-8
    max_iter: int = 10_000
    method: str = "auto"
    dense_limit: int = DEFAULT_DENSE_LIMIT

    def __post_init__(self):
        if self.method not in SOLVER_METHODS:
            raise ValueError(f"Unknown solver method {self.method!r}; use one of {SOLVER_METHODS}.")
        if self.tolerance <= 0 or self.max_iter < 1:
            raise ValueError("Solver tolerance must be positive and max_iter at least 1.")


def ensure_within_cap(dimension: int, cap: int = DEFAULT_DIMENSION_CAP) -> None:
    if dimension > cap:
        raise ResourceLimitError(f"Hilbert-space dimension {dimension} exceeds the cap {cap}.")


@dataclass(frozen=True, eq=False)
class PhotonComponents:
    """p-independent pieces of H, shared by every momentum substitution."""

    basis: FockBasis
    sigma: float
    alpha: float
    couplings: np.ndarray
    momentum_diagonals: np.ndarray
    energy_diagonal: np.ndarray
    vector_potential: tuple
    magnetic_field: tuple
    kinetic: tuple
    base: sparse.csr_matrix
    zeeman: sparse.csr_matrix


def _lowering_entries(basis: FockBasis):
    rows, cols, amplitudes, modes = [], [], [], []
    for j in range(basis.modes):
        squared = basis.lowering_squared(j).tocoo()
        rows.append(squared.row)
        cols.append(squared.col)
        amplitudes.append(np.sqrt(squared.data.astype(float)))
        modes.append(np.full(squared.nnz, j))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(amplitudes), np.concatenate(modes)


def build_components(basis: FockBasis, sigma: float, alpha: float) -> PhotonComponents:
    grid = basis.grid
    radii = grid.radii
    couplings = np.sqrt(grid.weights) * profile(radii, sigma) / np.sqrt(radii)
    occupations = basis.occupations.astype(float)
    momentum_diagonals = occupations @ grid.momenta
    energy_diagonal = occupations @ radii

    shape = (basis.photon_dimension, basis.photon_dimension)
    rows, cols, amplitudes, modes = _lowering_entries(basis)
    curls = np.cross(grid.momenta, grid.polarizations)
    root_alpha = math.sqrt(alpha)

    field_parts, magnetic_parts, kinetic_parts = [], [], []
    for m in range(3):
        lowering = sparse.coo_matrix(
            (couplings[modes] * grid.polarizations[modes, m] * amplitudes, (rows, cols)), shape=shape
        ).tocsr()
        vector_potential = (lowering + lowering.T).tocsr()
        magnetic_lowering = sparse.coo_matrix(
            (-1j * couplings[modes] * curls[modes, m] * amplitudes, (rows, cols)), shape=shape
        ).tocsr()
        magnetic = (magnetic_lowering + magnetic_lowering.conj().T).tocsr()
        kinetic = (sparse.diags(momentum_diagonals[:, m]) + root_alpha * vector_potential).tocsr()
        field_parts.append(vector_potential)
        magnetic_parts.append(magnetic)
        kinetic_parts.append(kinetic)

    base = 0.5 * sum(x @ x for x in kinetic_parts) + sparse.diags(energy_diagonal)
    base = (0.5 * (base + base.T)).tocsr()
    zeeman = root_alpha * sum(sparse.kron(b, sparse.csr_matrix(t)) for b, t in zip(magnetic_parts, PAULI))
    zeeman = (0.5 * (zeeman + zeeman.conj().T)).tocsr()

    return PhotonComponents(
        basis=basis,
        sigma=float(sigma),
        alpha=float(alpha),
        couplings=couplings,
        momentum_diagonals=momentum_diagonals,
        energy_diagonal=energy_diagonal,
        vector_potential=tuple(field_parts),
        magnetic_field=tuple(magnetic_parts),
        kinetic=tuple(kinetic_parts),
        base=base,
        zeeman=zeeman,
    )


@dataclass(frozen=True, eq=False)
class FiberHamiltonian:
    p: np.ndarray
    components: PhotonComponents
    matrix: sparse.csr_matrix
    outside_momentum_ball: bool

    @property
    def basis(self) -> FockBasis:
        return self.components.basis

    @property
    def sigma(self) -> float:
        return self.components.sigma

    @property
    def alpha(self) -> float:
        return self.components.alpha

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def at(self, q) -> "FiberHamiltonian":
        """H at momentum q from the same field operators."""
        return _fiber(as_vector(q, "p"), self.components)

    def velocity_operator(self, direction) -> sparse.csr_matrix:
        """Photon-space direction . (p - P_f - sqrt(alpha) A), i.e. direction . grad_p H."""
        direction = np.asarray(direction, dtype=float)
        identity = self.basis.photon_identity()
        velocity = float(direction @ self.p) * identity
        for m in range(3):
            if direction[m] != 0.0:
                velocity = velocity - direction[m] * self.components.kinetic[m]
        return velocity.tocsr()

    def one_norm(self) -> float:
        return float(abs(self.matrix).sum(axis=0).max())


def _fiber(p: np.ndarray, components: PhotonComponents) -> FiberHamiltonian:
    photon = components.base + 0.5 * float(p @ p) * components.basis.photon_identity()
    for m in range(3):
        if p[m] != 0.0:
            photon = photon - p[m] * components.kinetic[m]
    matrix = sparse.kron(photon, sparse.identity(2), format="csr").astype(complex) + components.zeeman
    matrix = (0.5 * (matrix + matrix.conj().T)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    outside = bool(np.linalg.norm(p) >= MOMENTUM_BALL_RADIUS)
    if outside:
        logger.debug("H evaluated at |p| = %.4f outside the momentum ball", np.linalg.norm(p))
    return FiberHamiltonian(p=p, components=components, matrix=matrix, outside_momentum_ball=outside)


def assemble(p, sigma: float, alpha: float, basis: FockBasis, dimension_cap: int = DEFAULT_DIMENSION_CAP) -> FiberHamiltonian:
    p = as_vector(p, "p")
    sigma = validate_sigma(sigma)
    alpha = float(alpha)
    if not (alpha >= 0.0 and math.isfinite(alpha)):
        raise ParameterDomainError(f"alpha must be a finite non-negative number, got {alpha!r}.")
    ensure_within_cap(basis.dimension, dimension_cap)
    hamiltonian = _fiber(p, build_components(basis, sigma, alpha))
    if hamiltonian.outside_momentum_ball:
        logger.warning("Assembling H at |p| = %.4f, outside the admissible ball |p| < 1/3", np.linalg.norm(p))
    logger.debug("Assembled H: dimension %s, %s nonzeros", hamiltonian.dimension, hamiltonian.matrix.nnz)
    return hamiltonian


@dataclass(frozen=True, eq=False)
class GroundState:
    energy: float
    vector: np.ndarray
    doublet: np.ndarray
    spin_direction: np.ndarray
    spin_expectation: np.ndarray
    residual: float
    splitting: float
    gap: float
    solver: str
    iterations: int
    hamiltonian: FiberHamiltonian
    residual_history: list = field(default_factory=list)

    @property
    def alignment(self) -> float:
        return float(self.spin_expectation @ self.spin_direction)

    @property
    def edge_mass(self) -> float:
        """Probability on photon states within one quantum of an occupation cap."""
        weights = np.abs(self.vector.reshape(-1, 2)) ** 2
        return float(weights[self.hamiltonian.basis.edge_mask()].sum())

    def expectation(self, operator) -> float:
        return float(np.vdot(self.vector, operator @ self.vector).real)

    def photon_number(self, diagonal) -> float:
        """Expectation of a diagonal photon-space observable given by its entries."""
        weights = np.abs(self.vector.reshape(-1, 2)) ** 2
        return float(weights.sum(axis=1) @ diagonal)


def _unit(u) -> np.ndarray:
    u = as_vector(u, "u")
    norm = np.linalg.norm(u)
    if norm == 0:
        raise ParameterDomainError("The spin direction must be nonzero.")
    return u / norm


def _starting_block(hamiltonian: FiberHamiltonian) -> np.ndarray:
    basis = hamiltonian.basis
    diagonal = hamiltonian.matrix.diagonal().real
    one_photon = np.nonzero(np.repeat(basis.totals == 1, 2))[0]
    seeds = [0, 1]
    if len(one_photon):
        ranked = one_photon[np.argsort(diagonal[one_photon], kind="stable")]
        seeds.extend(ranked[: BLOCK_SIZE - 2].tolist())
    seeds.extend(index for index in range(hamiltonian.dimension) if index not in seeds)
    block = np.zeros((hamiltonian.dimension, BLOCK_SIZE), dtype=complex)
    for column, index in enumerate(seeds[:BLOCK_SIZE]):
        block[index, column] = 1.0
    return block


def _solve_dense(hamiltonian: FiberHamiltonian):
    count = min(3, hamiltonian.dimension)
    values, vectors = linalg.eigh(hamiltonian.matrix.toarray(), subset_by_index=[0, count - 1])
    return values, vectors, 0, []


def _solve(hamiltonian: FiberHamiltonian, method: str, settings: SolverSettings, tolerance: float):
    if method == "dense":
        values, vectors, iterations, history = _solve_dense(hamiltonian)
    else:
        values, vectors, iterations, history = _solve_lobpcg(hamiltonian, settings, tolerance)
    doublet = vectors[:, :2]
    residuals = np.linalg.norm(hamiltonian.matrix @ doublet - doublet * values[None, :2], axis=0)
    return values, vectors, iterations, history, residuals


def _solve_lobpcg(hamiltonian: FiberHamiltonian, settings: SolverSettings, tolerance: float):
    diagonal = hamiltonian.matrix.diagonal().real
    spread = max(float(diagonal.max() - diagonal.min()), 1.0)
    preconditioner = sparse.diags(1.0 / (diagonal - diagonal.min() + 1e-2 * spread))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        values, vectors, history = lobpcg(
            hamiltonian.matrix,
            _starting_block(hamiltonian),
            M=preconditioner,
            tol=tolerance,
            maxiter=settings.max_iter,
            largest=False,
            retResidualNormsHistory=True,
        )
    order = np.argsort(values)
    history = [np.asarray(row, dtype=float).tolist() for row in history]
    return values[order], vectors[:, order], len(history), history


def ground_state(hamiltonian: FiberHamiltonian, u=(0.0, 0.0, 1.0), settings: SolverSettings | None = None) -> GroundState:
    """
    Lowest doublet of H and the state inside it with <tau.u> maximal.

    Every tau-odd coupling in H is purely imaginary, so the doublet is a Kramers
    pair and a single eigenvector would be an arbitrary mixture.
    """
    settings = settings or SolverSettings()
    direction = _unit(u)
    tolerance = settings.tolerance * hamiltonian.one_norm()
    method = settings.method
    if method == "auto":
        method = "lobpcg" if hamiltonian.dimension >= MIN_BLOCK_DIMENSION else "dense"

    values, vectors, iterations, history, residuals = _solve(hamiltonian, method, settings, tolerance)
    if residuals.max() > tolerance and settings.method == "auto" and hamiltonian.dimension <= settings.dense_limit:
        logger.warning(
            "Block solver stalled at residual %.3e after %s iterations; falling back to dense for dimension %s.",
            residuals.max(), iterations, hamiltonian.dimension,
        )
        method = "dense"
        values, vectors, iterations, history, residuals = _solve(hamiltonian, method, settings, tolerance)
    doublet = vectors[:, :2]
    if residuals.max() > tolerance:
        raise SolverConvergenceError(
            f"Ground doublet residual {residuals.max():.3e} above tolerance {tolerance:.3e} "
            f"after {iterations} iterations ({method}).",
            history,
        )

    basis = hamiltonian.basis
    spin = [spin_operator(basis, m) for m in range(3)]
    projected = sum(direction[m] * spin[m] for m in range(3))
    inner = doublet.conj().T @ (projected @ doublet)
    _, rotation = linalg.eigh(0.5 * (inner + inner.conj().T))
    psi = doublet @ rotation[:, -1]
    psi = psi / np.linalg.norm(psi)
    anchor = psi[np.argmax(np.abs(psi))]
    psi = psi * (abs(anchor) / anchor)

    energy = float(np.vdot(psi, hamiltonian.matrix @ psi).real)
    residual = float(np.linalg.norm(hamiltonian.matrix @ psi - energy * psi))
    spin_expectation = np.array([np.vdot(psi, spin[m] @ psi).real for m in range(3)])
    gap = float(values[2] - values[1]) if len(values) > 2 else math.inf

    logger.debug(
        "Ground state via %s: E=%.12g residual=%.2e splitting=%.2e iterations=%s",
        method, energy, residual, values[1] - values[0], iterations,
    )
    return GroundState(
        energy=energy,
        vector=psi,
        doublet=doublet,
        spin_direction=direction,
        spin_expectation=spin_expectation,
        residual=residual,
        splitting=float(values[1] - values[0]),
        gap=gap,
        solver=method,
        iterations=iterations,
        hamiltonian=hamiltonian,
        residual_history=history,
    )


def _mode(gs: GroundState, j: int):
    grid = gs.hamiltonian.basis.grid
    if not (0 <= j < grid.size):
        raise IndexError(f"Mode index {j} outside 0..{grid.size - 1}.")
    return grid.momenta[j], grid.polarizations[j], float(grid.radii[j]), float(grid.weights[j])


def annihilate(gs: GroundState, j: int) -> np.ndarray:
    basis = gs.hamiltonian.basis
    return basis.lift(basis.photon_lowering(j)) @ gs.vector


@dataclass(frozen=True)
class PullThroughResult:
    mode: int
    residual: float
    edge_mass: float


def pull_through_residual(gs: GroundState, j: int) -> PullThroughResult:
    """
    Norm of (H(p - k_j) + |k_j| - E) a_j Psi - sqrt(alpha) g_j (eps_j . (p - P_f - sqrt(alpha) A)
    - i tau . (k_j x eps_j)) Psi, which vanishes identically away from the occupation caps.
    """
    hamiltonian = gs.hamiltonian
    basis = hamiltonian.basis
    k, polarization, radius, _ = _mode(gs, j)
    lowered = annihilate(gs, j)

    shifted = hamiltonian.at(hamiltonian.p - k).matrix
    left = shifted @ lowered + (radius - gs.energy) * lowered

    velocity = basis.lift(hamiltonian.velocity_operator(polarization)) @ gs.vector
    curl = np.cross(k, polarization)
    spin_part = sum(curl[m] * (spin_operator(basis, m) @ gs.vector) for m in range(3))
    source = math.sqrt(hamiltonian.alpha) * hamiltonian.components.couplings[j] * (velocity - 1j * spin_part)

    return PullThroughResult(mode=j, residual=float(np.linalg.norm(left - source)), edge_mass=gs.edge_mass)


@dataclass(frozen=True)
class PhiDecomposition:
    mode: int
    phi1_coeff: float
    phi2_norm: float
    bound_ratio: float


def _ratio(numerator: float, denominator: float) -> float:
    if denominator > 0:
        return numerator / denominator
    return 0.0 if numerator == 0 else math.inf


def phi_decomposition(gs: GroundState, j: int, grad_E) -> PhiDecomposition:
    """
    Split a_j Psi into its coherent part phi1_coeff * Psi and the remainder.

    phi1_coeff = -sqrt(w_j) v(k_j, lambda_j) for H = (p - P_f - sqrt(alpha) A)^2 / 2.
    """
    hamiltonian = gs.hamiltonian
    k, polarization, radius, weight = _mode(gs, j)
    params = KernelParams(
        p=hamiltonian.p,
        grad_E=grad_E,
        alpha=hamiltonian.alpha,
        sigma=hamiltonian.sigma,
        alpha_max=max(ALPHA_MAX, hamiltonian.alpha),
    )
    kernel = float(kernel_values(params, k.reshape(1, 3), polarization.reshape(1, 3))[0])
    phi1 = -math.sqrt(weight) * kernel
    phi2 = float(np.linalg.norm(annihilate(gs, j) - phi1 * gs.vector))
    if hamiltonian.alpha == 0.0:
        return PhiDecomposition(mode=j, phi1_coeff=phi1, phi2_norm=phi2, bound_ratio=0.0)
    scale = math.sqrt(weight) * math.sqrt(hamiltonian.alpha) * float(profile(radius, hamiltonian.sigma)) / radius
    return PhiDecomposition(mode=j, phi1_coeff=phi1, phi2_norm=phi2, bound_ratio=_ratio(phi2, scale))


def apriori_bound_check(gs: GroundState, j: int, c_prime: float = 1.0) -> float:
    hamiltonian = gs.hamiltonian
    if hamiltonian.alpha == 0.0:
        return 0.0
    _, _, radius, weight = _mode(gs, j)
    numerator = float(np.linalg.norm(annihilate(gs, j)))
    kappa = float(profile(radius, hamiltonian.sigma))
    momentum = math.sqrt(float(hamiltonian.p @ hamiltonian.p) + c_prime * hamiltonian.alpha)
    denominator = math.sqrt(weight) * math.sqrt(hamiltonian.alpha) * kappa / radius**1.5 * (momentum + radius)
    return _ratio(numerator, denominator)


@dataclass(frozen=True)
class ResolventBound:
    mode: int
    norm: float
    bound: float
    in_domain: bool

    @property
    def ratio(self) -> float:
        return self.norm / self.bound

    @property
    def holds(self) -> bool:
        return self.norm <= self.bound


def _operator_norm_dense(excess, shifted) -> float:
    try:
        # (H - E) S^-1 and S^-1 (H - E) are adjoint, so they share the norm.
        return float(linalg.norm(linalg.solve(shifted.toarray(), excess.toarray()), 2))
    except linalg.LinAlgError:
        return math.inf


def _operator_norm_sparse(excess, shifted) -> float:
    try:
        factor = splu(shifted.tocsc())
    except RuntimeError:
        return math.inf
    dimension = excess.shape[0]
    operator = LinearOperator(
        (dimension, dimension),
        matvec=lambda x: excess @ factor.solve(np.asarray(x, dtype=complex)),
        rmatvec=lambda x: factor.solve(excess @ np.asarray(x, dtype=complex)),
        dtype=complex,
    )
    start = np.full(dimension, 1.0 / math.sqrt(dimension), dtype=complex)
    return float(svds(operator, k=1, v0=start, return_singular_vectors=False)[0])


def resolvent_bound_check(gs: GroundState, j: int) -> ResolventBound:
    """
    Operator norm of (H(p) - E)(H(p - k_j) + |k_j| - E)^-1, bounded by 3 for
    0 < |k_j| < 1 and |p| < 1/3. A singular shifted operator gives an infinite norm.
    """
    hamiltonian = gs.hamiltonian
    k, _, radius, _ = _mode(gs, j)
    identity = sparse.identity(hamiltonian.dimension, dtype=complex, format="csc")
    excess = (hamiltonian.matrix - gs.energy * identity).tocsc()
    shifted = (hamiltonian.at(hamiltonian.p - k).matrix + (radius - gs.energy) * identity).tocsc()
    if hamiltonian.dimension <= RESOLVENT_DENSE_LIMIT:
        norm = _operator_norm_dense(excess, shifted)
    else:
        norm = _operator_norm_sparse(excess, shifted)
    in_domain = 0.0 < radius < UV_EDGE and not hamiltonian.outside_momentum_ball
    if in_domain and norm > RESOLVENT_BOUND:
        logger.warning("Resolvent norm %.4g for mode %s exceeds %s", norm, j, RESOLVENT_BOUND)
    return ResolventBound(mode=j, norm=norm, bound=RESOLVENT_BOUND, in_domain=in_domain)
