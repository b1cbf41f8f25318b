"""
Quantities derived from the ground-state energy surface E(p, sigma): gradient,
radial curvature and renormalized mass, photon-number scans and a second-order
perturbative oracle for the solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse, stats
from scipy.sparse.linalg import LinearOperator, cg

from .fockspace import FockBasis, GridPolicy, ModeGrid, photon_number_diagonal
from .hamiltonian import (
    DEFAULT_DIMENSION_CAP,
    FiberHamiltonian,
    GroundState,
    SolverConvergenceError,
    SolverSettings,
    assemble,
    ensure_within_cap,
    ground_state,
)
from .kernels import (
    MOMENTUM_BALL_RADIUS,
    ParameterDomainError,
    angular_constant,
    as_vector,
    polarization_pair,
    vacuum_field_energy,
    validate_sigma,
)
from .representation import InsufficientDataError
from .workers import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
RICHARDSON_STEPS = 1
MASS_WINDOW_MARGIN = 1.05
PERTURBATIVE_N_MAX = 2
PERTURBATIVE_N_CAP = 2


def _finite_or_none(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def momentum_frame(p) -> np.ndarray:
    """Rows (p_hat, e2, e3); the z axis stands in for p_hat at p = 0."""
    p = as_vector(p, "p")
    norm = np.linalg.norm(p)
    direction = p / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
    e2, e3 = polarization_pair(direction)
    return np.stack([direction, e2, e3])


def _richardson(coarse: float, fine: float) -> float:
    return (4.0 * fine - coarse) / 3.0


def variational_curvature(gs: GroundState, direction, settings: SolverSettings | None = None) -> float:
    """
    1 - 2 <b, (H - E)^-1 b> with b = Q (d . grad_p H) Psi and Q the projector off the
    ground doublet. The doublet is shifted up by one so the solve stays definite.
    """
    settings = settings or SolverSettings()
    hamiltonian = gs.hamiltonian
    basis = hamiltonian.basis
    doublet = gs.doublet
    source = basis.lift(hamiltonian.velocity_operator(direction)) @ gs.vector
    source = source - doublet @ (doublet.conj().T @ source)
    if not np.any(source):
        return 1.0

    dimension = hamiltonian.dimension
    shifted = hamiltonian.matrix - gs.energy * sparse.identity(dimension, format="csr")
    if dimension <= settings.dense_limit:
        system = shifted.toarray() + doublet @ doublet.conj().T
        solution = linalg.solve(system, source, assume_a="her")
    else:
        operator = LinearOperator(
            (dimension, dimension),
            matvec=lambda y: shifted @ y + doublet @ (doublet.conj().T @ y),
            dtype=complex,
        )
        solution, info = cg(operator, source, rtol=settings.tolerance, maxiter=settings.max_iter)
        if info != 0:
            raise SolverConvergenceError(f"Conjugate gradients stopped with info={info} in the curvature solve.")
    return 1.0 - 2.0 * float(np.vdot(source, solution).real)


@dataclass(frozen=True, eq=False)
class GradientResult:
    grad_E: np.ndarray
    d2E: float
    m_ren: float
    d2E_variational: float
    step: float
    frame: np.ndarray
    ground_state: GroundState
    solves: int

    @property
    def d2E_nonpositive(self) -> bool:
        return self.d2E <= 0.0


def gradient_and_mass(
    p,
    sigma: float,
    alpha: float,
    basis: FockBasis,
    h: float = DEFAULT_STEP,
    u=(0.0, 0.0, 1.0),
    settings: SolverSettings | None = None,
    dimension_cap: int = DEFAULT_DIMENSION_CAP,
) -> GradientResult:
    """
    Central differences of E along the frame (p_hat, e2, e3) at steps h and h/2,
    combined by one Richardson step. The curvature is taken along p_hat only.
    """
    p = as_vector(p, "p")
    if not (h > 0 and math.isfinite(h)):
        raise ParameterDomainError(f"The finite-difference step must be positive, got {h!r}.")
    if np.linalg.norm(p) + 2 * h >= MOMENTUM_BALL_RADIUS:
        raise ParameterDomainError(
            f"|p| + 2h = {np.linalg.norm(p) + 2 * h:.6g} leaves the momentum ball |p| < 1/3."
        )
    settings = settings or SolverSettings()
    frame = momentum_frame(p)
    centre = ground_state(assemble(p, sigma, alpha, basis, dimension_cap), u, settings)
    hamiltonian = centre.hamiltonian

    def energy(q) -> float:
        return ground_state(hamiltonian.at(q), u, settings).energy

    gradient = np.zeros(3)
    curvature = 0.0
    for axis, direction in enumerate(frame):
        slopes, second = [], []
        for step in (h, h / 2):
            plus = energy(p + step * direction)
            minus = energy(p - step * direction)
            slopes.append((plus - minus) / (2 * step))
            second.append((plus - 2 * centre.energy + minus) / step**2)
        gradient += _richardson(*slopes) * direction
        if axis == 0:
            curvature = _richardson(*second)

    variational = variational_curvature(centre, frame[0], settings)
    if curvature <= 0.0:
        logger.warning("Non-positive curvature d2E = %.6g at p = %s, sigma = %g", curvature, p.tolist(), sigma)
    deviation = abs(curvature - variational)
    logger.debug("d2E finite-difference %.12g, variational %.12g (difference %.2e)", curvature, variational, deviation)
    return GradientResult(
        grad_E=gradient,
        d2E=curvature,
        m_ren=1.0 / curvature if curvature != 0.0 else math.inf,
        d2E_variational=variational,
        step=float(h),
        frame=frame,
        ground_state=centre,
        solves=1 + 4 * len(frame),
    )


def perturbative_energy(p, sigma: float, alpha: float, grid: ModeGrid) -> float:
    """
    Second-order energy of the vacuum doublet from explicit sums over the one- and
    two-photon states of a (n_max, N_cap) = (2, 2) basis on the given grid.
    """
    p = as_vector(p, "p")
    free_energy = 0.5 * float(p @ p)
    if alpha == 0.0:
        return free_energy
    basis = FockBasis(grid, n_max=PERTURBATIVE_N_MAX, n_cap=PERTURBATIVE_N_CAP)
    full = assemble(p, sigma, alpha, basis).matrix
    unperturbed = assemble(p, sigma, 0.0, basis).matrix
    perturbation = (full - unperturbed).tocsc()

    first_order = float(perturbation[0, 0].real)
    couplings = perturbation[2:, :2].toarray()
    excitations = unperturbed.diagonal().real[2:] - free_energy
    effective = -(couplings.conj().T / excitations[None, :]) @ couplings
    second_order = float(linalg.eigvalsh(0.5 * (effective + effective.conj().T))[0])
    return free_energy + first_order + second_order


@dataclass(frozen=True)
class SpectralReport:
    p: tuple
    sigma: float
    alpha: float
    energy: float
    grad_E: tuple
    d2E: float
    m_ren: float
    d2E_variational: float
    N_f: float
    residual: float
    splitting: float
    step: float
    richardson_steps: int
    solver: str
    iterations: int
    outside_momentum_ball: bool
    flags: dict = field(default_factory=dict)


def spectral_report(
    p,
    sigma: float,
    alpha: float,
    basis: FockBasis,
    h: float = DEFAULT_STEP,
    u=(0.0, 0.0, 1.0),
    settings: SolverSettings | None = None,
    dimension_cap: int = DEFAULT_DIMENSION_CAP,
) -> SpectralReport:
    p = as_vector(p, "p")
    result = gradient_and_mass(p, sigma, alpha, basis, h, u, settings, dimension_cap)
    gs = result.ground_state
    hamiltonian: FiberHamiltonian = gs.hamiltonian
    speed = float(np.linalg.norm(p))
    discrete_field = float(np.sum(hamiltonian.components.couplings**2))
    kinetic = 0.5 * speed**2

    flags = {
        "d2E_nonpositive": result.d2E_nonpositive,
        "mass_excess": _finite_or_none((1.0 - result.d2E) / alpha) if alpha > 0 else None,
        "velocity_deviation": (
            float(np.linalg.norm(result.grad_E - p)) / (alpha * speed) if alpha > 0 and speed > 0 else None
        ),
        "energy_shift_discrete": gs.energy - kinetic - 0.5 * alpha * discrete_field,
        "energy_shift_continuum": gs.energy - kinetic - 0.5 * alpha * vacuum_field_energy(sigma),
        "curvature_mismatch": abs(result.d2E - result.d2E_variational),
    }
    return SpectralReport(
        p=tuple(p.tolist()),
        sigma=float(sigma),
        alpha=float(alpha),
        energy=gs.energy,
        grad_E=tuple(result.grad_E.tolist()),
        d2E=result.d2E,
        m_ren=result.m_ren,
        d2E_variational=result.d2E_variational,
        N_f=gs.photon_number(photon_number_diagonal(basis)),
        residual=gs.residual,
        splitting=gs.splitting,
        step=result.step,
        richardson_steps=RICHARDSON_STEPS,
        solver=gs.solver,
        iterations=gs.iterations,
        outside_momentum_ball=hamiltonian.outside_momentum_ball,
        flags=flags,
    )


@dataclass(frozen=True)
class MassWindow:
    c0: float
    holds: bool
    excesses: tuple


def mass_window_constant(reports, margin: float = MASS_WINDOW_MARGIN) -> MassWindow:
    """Single c0 with d2E in (1 - c0 alpha, 1) for every report at alpha > 0."""
    coupled = [report for report in reports if report.alpha > 0]
    if not coupled:
        raise InsufficientDataError("The mass window needs at least one report with alpha > 0.")
    excesses = tuple((1.0 - report.d2E) / report.alpha for report in coupled)
    c0 = margin * max(excesses)
    holds = all(0.0 < excess < c0 for excess in excesses) and all(r.m_ren > 1.0 for r in coupled)
    return MassWindow(c0=c0, holds=holds, excesses=excesses)


@dataclass(frozen=True)
class EnergyScan:
    direction: tuple
    magnitudes: tuple
    energies: tuple

    @property
    def monotone(self) -> bool:
        return all(b >= a - 1e-12 for a, b in zip(self.energies, self.energies[1:]))


def energy_scan(direction, magnitudes, sigma: float, alpha: float, basis: FockBasis, u=(0.0, 0.0, 1.0), settings=None) -> EnergyScan:
    direction = as_vector(direction, "direction")
    direction = direction / np.linalg.norm(direction)
    magnitudes = sorted(float(m) for m in magnitudes)
    hamiltonian = assemble(magnitudes[0] * direction, sigma, alpha, basis)
    energies = [ground_state(hamiltonian.at(m * direction), u, settings).energy for m in magnitudes]
    scan = EnergyScan(direction=tuple(direction.tolist()), magnitudes=tuple(magnitudes), energies=tuple(energies))
    if not scan.monotone:
        logger.warning("E(|p|) is not monotone along %s", scan.direction)
    return scan


@dataclass(frozen=True)
class PhotonNumberPoint:
    sigma: float
    ir_floor: float
    modes: int
    dimension: int
    N_f: float
    energy: float
    converged: bool


@dataclass(frozen=True)
class PhotonNumberScan:
    p: tuple
    alpha: float
    points: tuple
    grad_E: tuple
    prediction: float
    intercept: float | None
    slope: float | None
    slope_stderr: float | None
    rvalue: float | None

    @property
    def converged(self) -> tuple:
        return tuple(point for point in self.points if point.converged)

    @property
    def relative_spread(self) -> float:
        values = np.array([point.N_f for point in self.converged])
        mean = values.mean()
        return float((values.max() - values.min()) / mean) if mean > 0 else 0.0


def _photon_number_point(task) -> PhotonNumberPoint:
    p, sigma, alpha, policy, u, settings, dimension_cap = task
    basis = policy.basis_for(sigma)
    hamiltonian = assemble(p, sigma, alpha, basis, dimension_cap)
    try:
        gs = ground_state(hamiltonian, u, settings)
    except SolverConvergenceError as exc:
        logger.warning("Excluding sigma = %g from the photon-number fit: %s", sigma, exc)
        return PhotonNumberPoint(
            sigma=sigma, ir_floor=basis.grid.ir_floor, modes=basis.modes,
            dimension=basis.dimension, N_f=math.nan, energy=math.nan, converged=False,
        )
    return PhotonNumberPoint(
        sigma=sigma,
        ir_floor=basis.grid.ir_floor,
        modes=basis.modes,
        dimension=basis.dimension,
        N_f=gs.photon_number(photon_number_diagonal(basis)),
        energy=gs.energy,
        converged=True,
    )


def photon_number_scan(
    p,
    alpha: float,
    sigma_list,
    policy: GridPolicy | None = None,
    grad_E=None,
    u=(0.0, 0.0, 1.0),
    settings: SolverSettings | None = None,
    workers: int = 1,
    dimension_cap: int = DEFAULT_DIMENSION_CAP,
) -> PhotonNumberScan:
    """
    <N_f>(sigma) on grids derived from the policy, fitted as a + b ln(1/sigma) and
    compared with the kernel-level slope alpha A(|grad_E|).

    grad_E defaults to the measured gradient on the first (coarsest) grid.
    """
    p = as_vector(p, "p")
    policy = policy or GridPolicy()
    settings = settings or SolverSettings()
    sigmas = [validate_sigma(s) for s in sigma_list]
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ParameterDomainError("The sigma list of a photon-number scan must be strictly decreasing.")
    for sigma in sigmas:
        ensure_within_cap(policy.dimension_for(sigma), dimension_cap)

    if grad_E is None:
        if np.any(p) and alpha > 0:
            grad_E = gradient_and_mass(p, sigmas[0], alpha, policy.basis_for(sigmas[0]), u=u, settings=settings).grad_E
        else:
            grad_E = p
    grad_E = as_vector(grad_E, "grad_E")
    prediction = alpha * angular_constant(float(np.linalg.norm(grad_E)))

    tasks = [(p, sigma, alpha, policy, u, settings, dimension_cap) for sigma in sigmas]
    points = tuple(ordered_map(_photon_number_point, tasks, workers))
    converged = [point for point in points if point.converged]
    if len(converged) < 2:
        raise InsufficientDataError(
            f"Only {len(converged)} of {len(points)} sigma points converged; the fit needs at least 2."
        )

    fit = stats.linregress([math.log(1.0 / point.sigma) for point in converged], [point.N_f for point in converged])
    logger.info("Photon-number slope %.6g against kernel prediction %.6g", fit.slope, prediction)
    return PhotonNumberScan(
        p=tuple(p.tolist()),
        alpha=float(alpha),
        points=points,
        grad_E=tuple(grad_E.tolist()),
        prediction=prediction,
        intercept=_finite_or_none(fit.intercept),
        slope=_finite_or_none(fit.slope),
        slope_stderr=_finite_or_none(fit.stderr),
        rvalue=_finite_or_none(fit.rvalue),
    )
