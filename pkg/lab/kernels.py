"""
Closed-form photon-cloud kernel and the scalar infrared integrals built on it.

Everything here is a pure function of its arguments; the Fock-space side of the
laboratory (grids, bases, Hamiltonians) consumes these values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

UV_EDGE = 1.0
PLATEAU_EDGE = 0.5
MOMENTUM_BALL_RADIUS = 1.0 / 3.0
ALPHA_MAX = 0.01
PARALLEL_TOLERANCE = 1e-12
QUAD_TOLERANCE = 1e-12
QUAD_LIMIT = 200
ANGULAR_SERIES_CUTOFF = 0.1
ANGULAR_SERIES_TERMS = 14


class ParameterDomainError(ValueError):
    """Raised when a physical parameter lies outside its admitted domain."""


class KernelDivergenceError(ArithmeticError):
    """Raised when an infrared integral is requested where it diverges."""


class Helicity(str, Enum):
    PLUS = "+"
    MINUS = "-"

    @property
    def index(self) -> int:
        return 0 if self is Helicity.PLUS else 1

    @classmethod
    def from_index(cls, index: int) -> "Helicity":
        return cls.PLUS if int(index) == 0 else cls.MINUS


def helicity_index(helicity) -> int:
    if isinstance(helicity, Helicity):
        return helicity.index
    if helicity in (0, 1):
        return int(helicity)
    try:
        return Helicity(helicity).index
    except ValueError as exc:
        raise ParameterDomainError(f"Unknown helicity {helicity!r}; use '+' or '-'.") from exc


def as_vector(value, name: str) -> np.ndarray:
    vector = np.asarray(value, dtype=float).reshape(-1)
    if vector.shape != (3,) or not np.all(np.isfinite(vector)):
        raise ParameterDomainError(f"{name} must be a finite 3-vector, got {value!r}.")
    return vector


def _unit(vector: np.ndarray, name: str) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ParameterDomainError(f"{name} must be nonzero.")
    return vector / norm


def validate_sigma(sigma: float, allow_limit: bool = False) -> float:
    """sigma in (0, 1/2]; with allow_limit, sigma == 0 names the sigma -> 0 profile."""
    sigma = float(sigma)
    if allow_limit and sigma == 0.0:
        return sigma
    if not (0.0 < sigma <= PLATEAU_EDGE):
        raise ParameterDomainError(f"sigma must lie in (0, 1/2], got {sigma!r}.")
    return sigma


@dataclass(frozen=True)
class CutoffParams:
    sigma: float
    uv_edge: float = UV_EDGE

    def __post_init__(self):
        object.__setattr__(self, "sigma", validate_sigma(self.sigma))
        if self.uv_edge != UV_EDGE:
            raise ParameterDomainError("The ultraviolet edge of the cutoff is fixed at 1.")

    def __call__(self, x):
        return cutoff(x, self.sigma)


@dataclass(frozen=True)
class KernelParams:
    p: tuple
    grad_E: tuple
    alpha: float
    sigma: float
    alpha_max: float = ALPHA_MAX

    def __post_init__(self):
        p = as_vector(self.p, "p")
        grad_E = as_vector(self.grad_E, "grad_E")
        if np.linalg.norm(p) >= MOMENTUM_BALL_RADIUS:
            raise ParameterDomainError(f"|p| = {np.linalg.norm(p):.6g} lies outside the momentum ball |p| < 1/3.")
        if np.linalg.norm(grad_E) >= 1.0:
            raise ParameterDomainError(f"|grad_E| = {np.linalg.norm(grad_E):.6g} must stay below 1.")
        alpha = float(self.alpha)
        if not (0.0 <= alpha <= self.alpha_max):
            raise ParameterDomainError(f"alpha must lie in [0, {self.alpha_max:g}], got {alpha!r}.")
        object.__setattr__(self, "p", tuple(p.tolist()))
        object.__setattr__(self, "grad_E", tuple(grad_E.tolist()))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", validate_sigma(self.sigma, allow_limit=True))

    @classmethod
    def free(cls, p, alpha: float, sigma: float, **kwargs) -> "KernelParams":
        """Parameters with the free-electron velocity grad_E = p."""
        return cls(p=p, grad_E=p, alpha=alpha, sigma=sigma, **kwargs)

    @property
    def velocity(self) -> np.ndarray:
        return np.array(self.grad_E)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.grad_E))


@dataclass(frozen=True)
class PolarizationConvention:
    reference_axis: tuple = (0.0, 0.0, 1.0)
    fallback_axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        reference = _unit(as_vector(self.reference_axis, "reference_axis"), "reference_axis")
        fallback = _unit(as_vector(self.fallback_axis, "fallback_axis"), "fallback_axis")
        if np.linalg.norm(np.cross(reference, fallback)) < PARALLEL_TOLERANCE:
            raise ParameterDomainError("The fallback axis must not be parallel to the reference axis.")
        object.__setattr__(self, "reference_axis", tuple(reference.tolist()))
        object.__setattr__(self, "fallback_axis", tuple(fallback.tolist()))


DEFAULT_CONVENTION = PolarizationConvention()


def _smooth_step(y):
    y = np.asarray(y, dtype=float)
    positive = y > 0
    safe = np.where(positive, y, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def _smooth_step_derivative(y):
    y = np.asarray(y, dtype=float)
    positive = y > 0
    safe = np.where(positive, y, 1.0)
    return np.where(positive, np.exp(-1.0 / safe) / safe**2, 0.0)


def _bump(x):
    rising = _smooth_step(1.0 - x)
    falling = _smooth_step(x - PLATEAU_EDGE)
    total = rising + falling
    return np.divide(rising, total, out=np.zeros_like(total), where=total > 0)


def _bump_derivative(x):
    a = 1.0 - x
    b = x - PLATEAU_EDGE
    sa, sb = _smooth_step(a), _smooth_step(b)
    total = sa + sb
    numerator = -(_smooth_step_derivative(a) * sb + sa * _smooth_step_derivative(b))
    return np.divide(numerator, total**2, out=np.zeros_like(total), where=total > 0)


def profile(x, sigma: float):
    """
    kappa_sigma without domain checks. sigma == 0 selects the sigma -> 0 profile,
    which is 1 on (0, 1/2] and follows the same bump above.
    """
    x = np.asarray(x, dtype=float)
    ramp = x / sigma if sigma > 0 else np.ones_like(x)
    return np.select(
        [x <= sigma, x <= PLATEAU_EDGE, x < UV_EDGE],
        [ramp, np.ones_like(x), _bump(x)],
        default=0.0,
    )


def profile_derivative(x, sigma: float):
    x = np.asarray(x, dtype=float)
    ramp_slope = np.full_like(x, 1.0 / sigma) if sigma > 0 else np.zeros_like(x)
    return np.select(
        [x < sigma, x <= PLATEAU_EDGE, x < UV_EDGE],
        [ramp_slope, np.zeros_like(x), _bump_derivative(x)],
        default=0.0,
    )


def cutoff(x, sigma: float):
    sigma = validate_sigma(sigma)
    values = np.asarray(x, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ParameterDomainError("The cutoff is defined for finite x >= 0 only.")
    result = profile(values, sigma)
    if np.ndim(x) == 0:
        return float(result)
    return result


def polarization_vectors(momenta, convention: PolarizationConvention = DEFAULT_CONVENTION) -> np.ndarray:
    """Array of shape (N, 2, 3) holding (eps_plus, eps_minus) for every row of momenta."""
    momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
    norms = np.linalg.norm(momenta, axis=1)
    if np.any(norms == 0):
        raise ParameterDomainError("Polarization vectors are undefined at k = 0.")
    reference = np.asarray(convention.reference_axis)
    cross = np.cross(momenta, reference)
    cross_norm = np.linalg.norm(cross, axis=1)
    parallel = cross_norm < PARALLEL_TOLERANCE * norms
    if np.any(parallel):
        cross[parallel] = np.cross(momenta[parallel], np.asarray(convention.fallback_axis))
        cross_norm[parallel] = np.linalg.norm(cross[parallel], axis=1)
    eps_plus = cross / cross_norm[:, None]
    directions = momenta / norms[:, None]
    eps_minus = np.cross(directions, eps_plus)
    return np.stack([eps_plus, eps_minus], axis=1)


def polarization_pair(k, convention: PolarizationConvention = DEFAULT_CONVENTION) -> tuple[np.ndarray, np.ndarray]:
    k = as_vector(k, "k")
    pair = polarization_vectors(k.reshape(1, 3), convention)[0]
    return pair[0], pair[1]


def kernel_values(params: KernelParams, momenta, polarizations) -> np.ndarray:
    """Vectorized coherent kernel for rows of momenta with matching polarization rows."""
    momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
    polarizations = np.atleast_2d(np.asarray(polarizations, dtype=float))
    radii = np.linalg.norm(momenta, axis=1)
    if np.any(radii == 0):
        raise ParameterDomainError("The coherent kernel is never evaluated at k = 0.")
    velocity = params.velocity
    kappa = profile(radii, params.sigma)
    denominator = radii - momenta @ velocity
    return -math.sqrt(params.alpha) * (polarizations @ velocity) * kappa / np.sqrt(radii) / denominator


def coherent_kernel(params: KernelParams, k, helicity, convention: PolarizationConvention = DEFAULT_CONVENTION) -> float:
    k = as_vector(k, "k")
    if not np.any(k):
        raise ParameterDomainError("The coherent kernel is never evaluated at k = 0.")
    if float(profile(np.linalg.norm(k), params.sigma)) == 0.0:
        return 0.0
    polarization = polarization_pair(k, convention)[helicity_index(helicity)]
    return float(kernel_values(params, k.reshape(1, 3), polarization.reshape(1, 3))[0])


def kernel_vector_field(params: KernelParams, momenta) -> np.ndarray:
    """
    Polarization-summed kernel V(k) = sum_lambda v_lambda(k) eps_lambda(k), which equals
    -sqrt(alpha) kappa / (|k|^(1/2) (|k| - k.gradE)) times the transverse part of gradE.
    """
    momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
    radii = np.linalg.norm(momenta, axis=1)
    directions = momenta / radii[:, None]
    velocity = params.velocity
    scale = profile(radii, params.sigma) / np.sqrt(radii) / (radii - momenta @ velocity)
    transverse = velocity[None, :] - directions * (directions @ velocity)[:, None]
    return -math.sqrt(params.alpha) * scale[:, None] * transverse


def kernel_vector_gradient(params: KernelParams, momenta) -> np.ndarray:
    """Analytic Jacobian J[n, i, m] = d V_m / d k_i for every row n of momenta."""
    momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
    radii = np.linalg.norm(momenta, axis=1)
    directions = momenta / radii[:, None]
    velocity = params.velocity
    projection = directions @ velocity
    denominator = radii - momenta @ velocity
    kappa = profile(radii, params.sigma)
    kappa_prime = profile_derivative(radii, params.sigma)

    scale = kappa / np.sqrt(radii) / denominator
    radial_part = (kappa_prime / np.sqrt(radii) - 0.5 * kappa / radii**1.5) / denominator
    scale_gradient = (
        radial_part[:, None] * directions
        - (kappa / np.sqrt(radii) / denominator**2)[:, None] * (directions - velocity[None, :])
    )

    transverse = velocity[None, :] - directions * projection[:, None]
    identity = np.eye(3)[None, :, :]
    outer = directions[:, :, None] * directions[:, None, :]
    transverse_gradient = -(
        (identity - outer) * (projection / radii)[:, None, None]
        + (velocity[None, :] - directions * projection[:, None])[:, :, None] * directions[:, None, :] / radii[:, None, None]
    )
    jacobian = scale_gradient[:, :, None] * transverse[:, None, :] + scale[:, None, None] * transverse_gradient
    return -math.sqrt(params.alpha) * jacobian


def angular_constant(v_mag: float) -> float:
    v = float(v_mag)
    if not np.isfinite(v) or v < 0.0 or v >= 1.0:
        raise ParameterDomainError(f"The angular constant needs 0 <= v < 1, got {v_mag!r}.")
    if v == 0.0:
        return 0.0
    if v < ANGULAR_SERIES_CUTOFF:
        v2 = v * v
        series = sum(v2**n / (2 * n + 1) for n in range(ANGULAR_SERIES_TERMS, 0, -1))
        return 8.0 * math.pi * series
    return 8.0 * math.pi * (math.atanh(v) / v - 1.0)


def _panel_edges(lower: float, anchors) -> list[float]:
    edges = sorted({lower, UV_EDGE, *(a for a in anchors if lower < a < UV_EDGE)})
    refined = [edges[0]]
    for a, b in zip(edges, edges[1:]):
        if a > 0 and b / a > 10.0:
            decades = math.ceil(math.log10(b / a))
            refined.extend(np.geomspace(a, b, decades + 1)[1:-1].tolist())
        refined.append(b)
    return refined


def radial_quad(integrand, lower: float, sigma: float, anchors=()) -> float:
    """Adaptive quadrature on [lower, 1] with log-spaced panels anchored at sigma, 1/2 and any extra anchors."""
    edges = _panel_edges(lower, (sigma, PLATEAU_EDGE, *anchors))
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        value, abserr = integrate.quad(
            integrand, a, b, epsabs=QUAD_TOLERANCE * 1e-2, epsrel=QUAD_TOLERANCE, limit=QUAD_LIMIT
        )
        total += value
    return total


def radial_log_integral(sigma: float, ir_floor: float = 0.0) -> float:
    """R(sigma, rho) = integral of kappa_sigma(r)^2 / r over [rho, 1]; sigma == 0 is the sigma -> 0 profile."""
    sigma = validate_sigma(sigma, allow_limit=True)
    ir_floor = float(ir_floor)
    if ir_floor < 0 or not np.isfinite(ir_floor):
        raise ParameterDomainError(f"The infrared floor must be >= 0, got {ir_floor!r}.")
    if ir_floor >= UV_EDGE:
        return 0.0
    if sigma == 0.0 and ir_floor == 0.0:
        raise KernelDivergenceError("The radial integral diverges logarithmically for sigma -> 0 without an infrared floor.")
    return radial_quad(lambda r: float(profile(r, sigma)) ** 2 / r, ir_floor, sigma)


def kernel_l2_norm_sq(params: KernelParams, ir_floor: float = 0.0) -> float:
    if params.speed == 0.0 or params.alpha == 0.0:
        return 0.0
    return params.alpha * radial_log_integral(params.sigma, ir_floor) * angular_constant(params.speed)


def vacuum_field_energy(sigma: float) -> float:
    """<Omega, A_sigma^2 Omega> = 8 pi times the integral of r kappa_sigma(r)^2; finite at sigma == 0."""
    sigma = validate_sigma(sigma, allow_limit=True)
    return 8.0 * math.pi * radial_quad(lambda r: r * float(profile(r, sigma)) ** 2, 0.0, sigma)
