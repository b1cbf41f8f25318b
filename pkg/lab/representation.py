"""
Fock versus coherent representation diagnostics built on the closed-form cloud
kernel: the slope criterion for square-integrability, the local number above an
energy rho, the C_rho expectation, the two-point deviation of a state from a
coherent one and overlaps between clouds at two infrared cutoffs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from .fockspace import CoherentKernel
from .hamiltonian import GroundState, annihilate
from .kernels import (
    ALPHA_MAX,
    KernelParams,
    ParameterDomainError,
    angular_constant,
    as_vector,
    kernel_l2_norm_sq,
    kernel_vector_field,
    kernel_vector_gradient,
    polarization_pair,
    profile,
    radial_quad,
    validate_sigma,
)

logger = logging.getLogger(__name__)

DEFAULT_SLOPE_THRESHOLD = 1e-3
MIN_SIGMA_POINTS = 3
MIN_SIGMA_DECADES = 3.0
ANGULAR_NODES = 64


class InsufficientDataError(ValueError):
    """Raised when a fit is asked for with too few usable sigma points."""


class Verdict(str, Enum):
    FOCK_EQUIVALENT = "fock_equivalent"
    INEQUIVALENT_COHERENT = "inequivalent_coherent"


def _kernel_params(p, alpha, sigma, grad_E=None, alpha_max=ALPHA_MAX, limit: bool = False) -> KernelParams:
    validate_sigma(sigma, allow_limit=limit)
    p = as_vector(p, "p")
    grad_E = p if grad_E is None else grad_E
    return KernelParams(p=p, grad_E=grad_E, alpha=alpha, sigma=sigma, alpha_max=alpha_max)


def _log_fit(sigmas, values):
    return stats.linregress([math.log(1.0 / s) for s in sigmas], values)


@dataclass(frozen=True)
class EquivalenceVerdict:
    p: tuple
    alpha: float
    grad_E: tuple
    sigmas: tuple
    norms_sq: tuple
    slope: float
    intercept: float
    threshold: float
    prediction: float
    verdict: Verdict

    @property
    def is_fock_equivalent(self) -> bool:
        return self.verdict is Verdict.FOCK_EQUIVALENT


def equivalence_diagnostic(
    p, alpha: float, sigma_list, grad_E=None, threshold: float = DEFAULT_SLOPE_THRESHOLD, alpha_max: float = ALPHA_MAX
) -> EquivalenceVerdict:
    """
    Fits ||v_{p,sigma}||^2 against ln(1/sigma). A slope within threshold * alpha of zero
    means the kernel stays square-integrable as sigma -> 0 (Fock-normal displacement).
    """
    sigmas = sorted((validate_sigma(s) for s in sigma_list), reverse=True)
    if len(sigmas) < MIN_SIGMA_POINTS:
        raise InsufficientDataError(f"The equivalence fit needs at least {MIN_SIGMA_POINTS} sigma values, got {len(sigmas)}.")
    span = math.log10(sigmas[0] / sigmas[-1])
    if span < MIN_SIGMA_DECADES:
        logger.warning("sigma list spans only %.2f decades; the slope may be unreliable", span)

    params = [_kernel_params(p, alpha, sigma, grad_E, alpha_max) for sigma in sigmas]
    norms = [kernel_l2_norm_sq(param) for param in params]
    fit = _log_fit(sigmas, norms)
    slope = float(fit.slope)
    verdict = Verdict.FOCK_EQUIVALENT if abs(slope) <= threshold * alpha else Verdict.INEQUIVALENT_COHERENT
    logger.debug("Equivalence slope %.6g (threshold %.3g): %s", slope, threshold * alpha, verdict.value)
    return EquivalenceVerdict(
        p=params[0].p,
        alpha=float(alpha),
        grad_E=params[0].grad_E,
        sigmas=tuple(sigmas),
        norms_sq=tuple(norms),
        slope=slope,
        intercept=float(fit.intercept),
        threshold=float(threshold),
        prediction=float(alpha) * angular_constant(params[0].speed),
        verdict=verdict,
    )


@dataclass(frozen=True)
class TwoPointDeviation:
    mode: int
    deviation: float
    bound: float
    ratio: float


def two_point_deviation(source: GroundState | CoherentKernel, j: int, c: float = 1.0) -> TwoPointDeviation:
    """
    |<a_j^* a_j> - |<a_j>|^2| per unit mode weight against c alpha kappa^2 / |k|^(5/2).
    A coherent kernel is an eigenvector of every a_j, so its deviation is exactly zero.
    """
    coherent = isinstance(source, CoherentKernel)
    if coherent:
        grid, alpha, sigma = source.grid, source.params.alpha, source.params.sigma
    else:
        hamiltonian = source.hamiltonian
        grid, alpha, sigma = hamiltonian.basis.grid, hamiltonian.alpha, hamiltonian.sigma
    if not (0 <= j < grid.size):
        raise IndexError(f"Mode index {j} outside 0..{grid.size - 1}.")

    if coherent:
        occupation = mean = abs(source.amplitudes[j]) ** 2
    else:
        lowered = annihilate(source, j)
        occupation = float(np.vdot(lowered, lowered).real)
        mean = abs(np.vdot(source.vector, lowered)) ** 2

    radius = float(grid.radii[j])
    deviation = abs(occupation - mean) / float(grid.weights[j])
    bound = c * alpha * float(profile(radius, sigma)) ** 2 / radius**2.5
    if bound > 0:
        ratio = deviation / bound
    else:
        ratio = 0.0 if deviation == 0 else math.inf
    return TwoPointDeviation(mode=j, deviation=deviation, bound=bound, ratio=ratio)


def local_number(p, sigma: float, rho: float, alpha: float, grad_E=None, alpha_max: float = ALPHA_MAX) -> float:
    """
    Photon number of the coherent cloud above energy rho. sigma == 0 selects the
    sigma -> 0 profile, finite for every rho > 0.
    """
    rho = float(rho)
    if rho < 0 or not math.isfinite(rho):
        raise ParameterDomainError(f"rho must be a finite number >= 0, got {rho!r}.")
    return kernel_l2_norm_sq(_kernel_params(p, alpha, sigma, grad_E, alpha_max, limit=True), ir_floor=rho)


def _angular_directions(axis: np.ndarray, nodes: int):
    cosines, weights = np.polynomial.legendre.leggauss(nodes)
    transverse = polarization_pair(axis)[0]
    sines = np.sqrt(1.0 - cosines**2)
    directions = sines[:, None] * transverse[None, :] + cosines[:, None] * axis[None, :]
    return directions, 2.0 * math.pi * weights


def c_rho_expectation(
    p, sigma: float, rho: float, alpha: float, grad_E=None, alpha_max: float = ALPHA_MAX, nodes: int = ANGULAR_NODES
) -> float:
    """
    sum_lambda of the integral over |k| >= rho of |grad_k v|^2 + |k|^2 |v|^2, evaluated on
    the Cartesian field V = sum_lambda v_lambda eps_lambda so that no polarization
    convention enters. The integrand is symmetric about grad_E, so the azimuth is exact.
    """
    rho = float(rho)
    if rho <= 0 or not math.isfinite(rho):
        raise ParameterDomainError(f"C_rho needs rho > 0, got {rho!r}.")
    params = _kernel_params(p, alpha, sigma, grad_E, alpha_max, limit=True)
    if params.speed == 0.0 or params.alpha == 0.0:
        return 0.0
    directions, weights = _angular_directions(params.velocity / params.speed, nodes)

    def integrand(r: float) -> float:
        momenta = r * directions
        field = kernel_vector_field(params, momenta)
        jacobian = kernel_vector_gradient(params, momenta)
        density = np.sum(np.abs(jacobian) ** 2, axis=(1, 2)) + r**2 * np.sum(np.abs(field) ** 2, axis=1)
        return float(r**2 * (weights @ density))

    return radial_quad(integrand, rho, params.sigma)


def sigma_pair_overlap(p, sigma: float, sigma_prime: float, alpha: float, grad_E=None, alpha_max: float = ALPHA_MAX) -> float:
    """|<coh(v_sigma), coh(v_sigma')>| = exp(-||v_sigma - v_sigma'||^2 / 2) for sigma' <= sigma."""
    if sigma_prime > sigma:
        raise ParameterDomainError(f"sigma' = {sigma_prime!r} must not exceed sigma = {sigma!r}.")
    params = _kernel_params(p, alpha, sigma, grad_E, alpha_max)
    _kernel_params(p, alpha, sigma_prime, grad_E, alpha_max)
    if sigma_prime == sigma or params.speed == 0.0 or params.alpha == 0.0:
        return 1.0
    difference = radial_quad(
        lambda r: float(profile(r, sigma) - profile(r, sigma_prime)) ** 2 / r,
        0.0,
        sigma,
        anchors=(sigma_prime,),
    )
    return math.exp(-0.5 * params.alpha * angular_constant(params.speed) * difference)


@dataclass(frozen=True)
class OverlapDecay:
    sigma: float
    sigma_primes: tuple
    overlaps: tuple
    exponent: float
    intercept: float
    prediction: float


def sigma_overlap_decay(p, sigma: float, sigma_primes, alpha: float, grad_E=None, alpha_max: float = ALPHA_MAX) -> OverlapDecay:
    """Slope of ln overlap against ln(sigma / sigma'), predicted as -alpha A(|grad_E|) / 2."""
    primes = sorted((float(s) for s in sigma_primes), reverse=True)
    if len(primes) < 2:
        raise InsufficientDataError("The overlap decay fit needs at least 2 values of sigma'.")
    overlaps = [sigma_pair_overlap(p, sigma, s, alpha, grad_E, alpha_max) for s in primes]
    fit = stats.linregress([math.log(sigma / s) for s in primes], [math.log(value) for value in overlaps])
    params = _kernel_params(p, alpha, sigma, grad_E, alpha_max)
    return OverlapDecay(
        sigma=float(sigma),
        sigma_primes=tuple(primes),
        overlaps=tuple(overlaps),
        exponent=float(fit.slope),
        intercept=float(fit.intercept),
        prediction=-0.5 * params.alpha * angular_constant(params.speed),
    )
