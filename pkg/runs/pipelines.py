"""
One pipeline per command: RunConfig in, table rows and JSON documents out. Lab
errors leave here tagged with the config key that produced them.
"""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field

from lab.fockspace import FockBasis, GridPolicy, TruncationError, build_mode_grid
from lab.hamiltonian import (
    RESOLVENT_BOUND,
    ResourceLimitError,
    SolverConvergenceError,
    SolverSettings,
    apriori_bound_check,
    assemble,
    ground_state,
    phi_decomposition,
    pull_through_residual,
    resolvent_bound_check,
)
from lab.kernels import KernelParams, angular_constant, kernel_l2_norm_sq, radial_log_integral, vacuum_field_energy
from lab.representation import (
    c_rho_expectation,
    equivalence_diagnostic,
    local_number,
    sigma_overlap_decay,
    two_point_deviation,
)
from lab.scattering import BumpProfile, renormalized_velocity, scattering_trend
from lab.spectral import gradient_and_mass, mass_window_constant, photon_number_scan, spectral_report
from lab.workers import ordered_map

from .config import ConfigError, RunConfig
from .serializers import (
    EquivalenceVerdictSerializer,
    LocalDiagnosticsSerializer,
    MassWindowSerializer,
    OverlapDecaySerializer,
    PhotonNumberFitSerializer,
    SpectralReportSerializer,
)

logger = logging.getLogger(__name__)

SPECTRUM_COLUMNS = (
    "px", "py", "pz", "sigma", "alpha", "E", "gEx", "gEy", "gEz", "d2E", "m_ren",
    "residual", "d2E_variational", "N_f", "splitting",
)
PHOTON_NUMBER_COLUMNS = ("sigma", "ir_floor", "modes", "dimension", "N_f", "E", "converged")
KERNEL_NORM_COLUMNS = (
    "sigma", "ir_floor", "grad_norm", "angular_constant", "radial_integral", "norm_sq", "vacuum_field_energy",
)
PULL_THROUGH_COLUMNS = (
    "mode", "kx", "ky", "kz", "helicity", "weight", "residual", "edge_mass", "phi1_coeff",
    "phi2_norm", "phi2_ratio", "apriori_ratio", "deviation", "deviation_ratio", "resolvent_norm",
)
SCATTERING_COLUMNS = ("t", "n", "N", "sigma_t", "c_t", "statistic", "diagonal_mass", "active_cells")

# Errors whose cause is a resource or solver setting rather than the physics input.
ERROR_KEYS = {
    ResourceLimitError: "solver.dimension_cap",
    SolverConvergenceError: "solver.max_iter",
    TruncationError: "grid.n_max",
}


@contextmanager
def blame(key: str):
    """Tag lab errors raised inside the block with the config key they trace back to."""
    try:
        yield
    except ConfigError:
        raise
    except Exception as exc:
        if getattr(exc, "config_key", None) is None:
            exc.config_key = next((k for kind, k in ERROR_KEYS.items() if isinstance(exc, kind)), key)
            logger.debug("%s traced to %s", type(exc).__name__, exc.config_key)
        raise


@dataclass
class RunResult:
    columns: tuple = ()
    rows: list = field(default_factory=list)
    documents: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)


def _solver_settings(config: RunConfig) -> SolverSettings:
    solver = config.solver
    return SolverSettings(
        tolerance=solver["tolerance"],
        max_iter=solver["max_iter"],
        method=solver["method"],
        dense_limit=solver["dense_limit"],
    )


def _basis(config: RunConfig, sigma: float) -> FockBasis:
    grid = config.grid
    ir_floor = grid["ir_floor"] if grid["ir_floor"] is not None else sigma
    with blame("grid.ir_floor"):
        modes = build_mode_grid(sigma, ir_floor, grid["n_radial"], grid["n_angular"])
    return FockBasis(modes, n_max=grid["n_max"], n_cap=grid["n_cap"])


def _policy(config: RunConfig, n_angular: int | None = None) -> GridPolicy:
    grid = config.grid
    return GridPolicy(
        nodes_per_decade=grid["nodes_per_decade"],
        n_angular=n_angular or grid["n_angular"],
        floor_ratio=grid["floor_ratio"],
        n_max=grid["n_max"],
        n_cap=grid["n_cap"],
    )


def _spectrum_point(task):
    p, sigma, alpha, basis, step, u, settings, dimension_cap = task
    return spectral_report(p, sigma, alpha, basis, step, u, settings, dimension_cap)


def spectrum(config: RunConfig, workers: int = 1) -> RunResult:
    physics, solver = config.physics, config.solver
    momenta = physics["momenta"] or (physics["p"],)
    alphas = physics["alpha_list"] or (physics["alpha"],)
    basis = _basis(config, physics["sigma"])
    settings = _solver_settings(config)
    tasks = [
        (p, physics["sigma"], alpha, basis, solver["step"], physics["spin"], settings, solver["dimension_cap"])
        for alpha in alphas
        for p in momenta
    ]
    with blame("physics.momenta" if physics["momenta"] else "physics.p"):
        reports = ordered_map(_spectrum_point, tasks, workers)

    rows = [
        [
            *report.p, report.sigma, report.alpha, report.energy, *report.grad_E, report.d2E, report.m_ren,
            report.residual, report.d2E_variational, report.N_f, report.splitting,
        ]
        for report in reports
    ]
    summary = [
        f"p = {report.p}, alpha = {report.alpha:g}: E = {report.energy:.12g}, m_ren = {report.m_ren:.9g}, N_f = {report.N_f:.6g}"
        for report in reports
    ]
    window = None
    if any(report.alpha > 0 for report in reports):
        window = mass_window_constant(reports)
        summary.append(f"Mass window constant c0 = {window.c0:.6g} ({'holds' if window.holds else 'violated'})")
    documents = {
        "report": {
            "reports": SpectralReportSerializer(reports, many=True).data,
            "mass_window": MassWindowSerializer(window).data if window else None,
        }
    }
    return RunResult(columns=SPECTRUM_COLUMNS, rows=rows, documents=documents, summary=summary)


def photon_number(config: RunConfig, workers: int = 1) -> RunResult:
    physics, solver = config.physics, config.solver
    with blame("physics.sigma_list"):
        scan = photon_number_scan(
            physics["p"],
            physics["alpha"],
            physics["sigma_list"],
            _policy(config),
            grad_E=physics["grad_E"],
            u=physics["spin"],
            settings=_solver_settings(config),
            workers=workers,
            dimension_cap=solver["dimension_cap"],
        )
    rows = [
        [point.sigma, point.ir_floor, point.modes, point.dimension, point.N_f, point.energy, point.converged]
        for point in scan.points
    ]
    summary = [
        f"sigma = {point.sigma:g}: N_f = {point.N_f:.6g} ({point.modes} modes, dimension {point.dimension})"
        for point in scan.points
    ]
    if scan.slope is not None:
        summary.append(f"Slope {scan.slope:.6g} against kernel prediction {scan.prediction:.6g}")
    documents = {"fit": PhotonNumberFitSerializer(scan).data}
    return RunResult(columns=PHOTON_NUMBER_COLUMNS, rows=rows, documents=documents, summary=summary)


def kernel_norm(config: RunConfig, workers: int = 1) -> RunResult:
    physics = config.physics
    rho = physics["rho"]
    rows = []
    for sigma in physics["sigma_list"]:
        with blame("physics.p"):
            params = KernelParams(
                p=physics["p"],
                grad_E=physics["grad_E"] if physics["grad_E"] is not None else physics["p"],
                alpha=physics["alpha"],
                sigma=sigma,
                alpha_max=physics["alpha_max"],
            )
        with blame("physics.rho"):
            norm_sq = kernel_l2_norm_sq(params, rho)
            # At rest the sigma = 0, rho = 0 norm vanishes while R itself is unbounded.
            radial = radial_log_integral(sigma, rho) if sigma > 0 or rho > 0 else math.inf
        rows.append(
            [sigma, rho, params.speed, angular_constant(params.speed), radial, norm_sq, vacuum_field_energy(sigma)]
        )
    summary = [f"sigma = {row[0]:g}: ||v||^2 = {row[5]:.12g}" for row in rows]
    return RunResult(columns=KERNEL_NORM_COLUMNS, rows=rows, summary=summary)


def equivalence(config: RunConfig, workers: int = 1) -> RunResult:
    physics = config.physics
    arguments = {"grad_E": physics["grad_E"], "alpha_max": physics["alpha_max"]}
    with blame("physics.sigma_list"):
        verdict = equivalence_diagnostic(
            physics["p"], physics["alpha"], physics["sigma_list"], threshold=physics["threshold"], **arguments
        )
        sigmas = verdict.sigmas
        decay = sigma_overlap_decay(physics["p"], sigmas[0], sigmas[1:], physics["alpha"], **arguments)
    local = None
    if physics["rho"] > 0:
        with blame("physics.rho"):
            local = {
                "rho": physics["rho"],
                "local_number": local_number(physics["p"], 0.0, physics["rho"], physics["alpha"], **arguments),
                "c_rho": c_rho_expectation(physics["p"], sigmas[-1], physics["rho"], physics["alpha"], **arguments),
            }
    documents = {
        "": {
            "verdict": EquivalenceVerdictSerializer(verdict).data,
            "overlap_decay": OverlapDecaySerializer(decay).data,
            "local": LocalDiagnosticsSerializer(local).data if local else None,
        }
    }
    summary = [
        f"Verdict: {verdict.verdict.value} (slope {verdict.slope:.6g}, threshold {verdict.threshold * verdict.alpha:.3g})",
        f"Overlap decay exponent {decay.exponent:.6g} against {decay.prediction:.6g}",
    ]
    return RunResult(documents=documents, summary=summary)


def pull_through(config: RunConfig, workers: int = 1) -> RunResult:
    physics, solver = config.physics, config.solver
    basis = _basis(config, physics["sigma"])
    settings = _solver_settings(config)
    modes = config.grid["modes"] if config.grid["modes"] is not None else tuple(range(basis.modes))
    if max(modes) >= basis.modes:
        raise ConfigError("grid.modes", f"Mode {max(modes)} is outside the grid of {basis.modes} modes.")

    with blame("physics.p"):
        if physics["grad_E"] is None:
            result = gradient_and_mass(
                physics["p"], physics["sigma"], physics["alpha"], basis, solver["step"], physics["spin"],
                settings, solver["dimension_cap"],
            )
            gs, grad_E = result.ground_state, result.grad_E
        else:
            hamiltonian = assemble(physics["p"], physics["sigma"], physics["alpha"], basis, solver["dimension_cap"])
            gs, grad_E = ground_state(hamiltonian, physics["spin"], settings), physics["grad_E"]

    rows = []
    with blame("physics.grad_E"):
        for j in modes:
            described = basis.grid.describe(j)
            pull = pull_through_residual(gs, j)
            phi = phi_decomposition(gs, j, grad_E)
            two_point = two_point_deviation(gs, j, physics["c_two_point"])
            rows.append(
                [
                    j, *described["k"], described["helicity"], described["weight"], pull.residual, pull.edge_mass,
                    phi.phi1_coeff, phi.phi2_norm, phi.bound_ratio, apriori_bound_check(gs, j, physics["c_prime"]),
                    two_point.deviation, two_point.ratio, resolvent_bound_check(gs, j).norm,
                ]
            )
    worst = max(rows, key=lambda row: row[6])
    summary = [
        f"E = {gs.energy:.12g} ({gs.solver}, {gs.iterations} iterations), edge mass {gs.edge_mass:.3g}",
        f"Largest pull-through residual {worst[6]:.3g} at mode {worst[0]}",
        f"Largest resolvent norm {max(row[-1] for row in rows):.4g} (bound {RESOLVENT_BOUND:g})",
    ]
    return RunResult(columns=PULL_THROUGH_COLUMNS, rows=rows, summary=summary)


def scattering_cells(config: RunConfig, workers: int = 1) -> RunResult:
    physics, scattering = config.physics, config.scattering
    velocity = renormalized_velocity(scattering["d2E"]) if scattering["velocity"] == "renormalized" else None
    with blame("scattering.bump_center"):
        profile = BumpProfile(center=scattering["bump_center"], width=scattering["bump_width"])
    with blame("scattering.levels"):
        trend = scattering_trend(
            scattering["levels"],
            scattering["epsilon"],
            scattering["beta"],
            physics["alpha"],
            profile=profile,
            velocity=velocity,
            policy=_policy(config, scattering["n_angular"]),
            alpha_max=physics["alpha_max"],
            sampling=scattering["sampling"],
        )
    rows = [
        [row.t, row.level, row.cells, row.sigma_t, row.c, row.statistic, row.diagonal_mass, row.active_cells]
        for row in trend
    ]
    summary = [
        f"n = {row.level}: N = {row.cells}, sigma_t = {row.sigma_t:.3e}, c(t) N(t)^2 = {row.statistic:.6g}"
        for row in trend
    ]
    return RunResult(columns=SCATTERING_COLUMNS, rows=rows, summary=summary)
