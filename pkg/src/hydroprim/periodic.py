"""Time-periodic solutions through the period map and damped fixed-point iteration."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ZERO_FORCE, ForcingSpec, IntegratorConfig, simulate
from .field import VelocityField, norm

log = logging.getLogger(__name__)


def worker_count(n_tasks: int) -> int:
    """Thread count for independent integrations, capped by HYDROPRIM_THREADS."""
    cap = os.environ.get("HYDROPRIM_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


@dataclass(frozen=True)
class PeriodicSolveConfig:
    T: float
    forcing: ForcingSpec = ZERO_FORCE
    theta: float = 1.0
    tol: float = 1e-8
    max_iter: int = 50
    integrator: IntegratorConfig = IntegratorConfig()
    anderson: bool = False
    ensemble: int = 10
    delta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if not 0 < self.theta <= 1:
            raise ValueError("damping theta must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1 or self.ensemble < 0:
            raise ValueError("max_iter must be >= 1 and ensemble >= 0")
        f = self.forcing
        if f.variant == "time_periodic":
            ratio = self.T / f.period
            if abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"T={self.T} is not a multiple of the forcing period {f.period}")
        self.integrator.n_steps(self.T)


@dataclass
class PeriodicSolveReport:
    residuals: list
    converged: bool
    v_star: VelocityField
    rho: float
    iterations: int
    theta: float                       # damping in force at exit
    periods: list = field(default_factory=list)   # per-iteration norm summaries
    ratios: list = field(default_factory=list)    # contraction ensemble ratios

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "final_residual": float(self.residuals[-1]) if self.residuals else None,
            "rho": float(self.rho),
            "contraction_ratios": [float(r) for r in self.ratios],
            "theta": self.theta,
            "v_star_l2": norm(self.v_star),
            "v_star_h": norm(self.v_star, "H"),
            "periods": self.periods,
        }


def poincare_map(v0: VelocityField, f: ForcingSpec, T: float,
                 config: IntegratorConfig | None = None) -> VelocityField:
    """State after integrating ``v0`` over one period [0, T]."""
    config = replace(config or IntegratorConfig(), T_end=T)
    return simulate(v0, f, config, record=False).state.v


class _Anderson:
    """Type-II Anderson mixing on g(x) = map(x) - x with a short window."""

    def __init__(self, window: int = 3):
        self.window = window
        self.xs, self.gs = [], []

    def update(self, x: np.ndarray, g: np.ndarray, theta: float) -> np.ndarray:
        self.xs.append(x.ravel().copy())
        self.gs.append(g.ravel().copy())
        del self.xs[:-(self.window + 1)], self.gs[:-(self.window + 1)]
        if len(self.xs) < 2:
            return x + theta * g
        dX = np.diff(np.array(self.xs), axis=0).T
        dG = np.diff(np.array(self.gs), axis=0).T
        gamma, *_ = np.linalg.lstsq(dG, g.ravel(), rcond=None)
        new = x.ravel() + theta * g.ravel() - (dX + theta * dG) @ gamma
        return new.reshape(x.shape)

    def reset(self):
        self.xs.clear()
        self.gs.clear()


def fixed_point_solve(config: PeriodicSolveConfig, v0: VelocityField | None = None,
                      basis=None) -> PeriodicSolveReport:
    """Damped Picard iteration v <- (1 - theta) v + theta map(v).

    theta halves whenever the L2 residual ||v - map(v)|| grows.  Anderson
    mixing (window 3) is used instead of plain damping when enabled.  The
    contraction ensemble is evaluated at the returned iterate when
    ``config.ensemble`` > 0; otherwise rho is the last residual ratio.
    """
    if v0 is None:
        if basis is None:
            raise ValueError("need an initial iterate or a basis")
        v0 = VelocityField.zeros(basis)
    f, T = config.forcing, config.T
    theta = config.theta
    mixer = _Anderson() if config.anderson else None
    x = v0.copy()
    residuals, periods = [], []
    converged = False
    for it in range(1, config.max_iter + 1):
        mx = poincare_map(x, f, T, config.integrator)
        g = mx.coeffs - x.coeffs
        r = norm(mx - x)
        if not math.isfinite(r):
            raise FloatingPointError("non-finite residual in the periodic iteration")
        periods.append({"iteration": it, "l2_start": norm(x), "l2_end": norm(mx),
                        "residual": r})
        log.info("periodic iteration %d residual %.3e theta %.3g", it, r, theta)
        if residuals and r > residuals[-1]:
            theta *= 0.5
            if mixer:
                mixer.reset()
        residuals.append(r)
        if r <= config.tol:
            converged = True
            break
        if it == config.max_iter:
            break
        nxt = mixer.update(x.coeffs, g, theta) if mixer else x.coeffs + theta * g
        x = VelocityField(x.basis, nxt)
    ratios = []
    if config.ensemble > 0 and converged:
        rho, ratios = contraction_estimate(x, f, T, config.integrator, delta=config.delta,
                                           n=config.ensemble, seed=config.seed)
    elif len(residuals) >= 2 and residuals[-2] > 0:
        rho = residuals[-1] / residuals[-2]
    else:
        rho = 0.0
    return PeriodicSolveReport(residuals, converged, x, rho, len(residuals), theta,
                               periods, ratios)


def random_directions(basis, n: int, seed: int = 0) -> list[VelocityField]:
    """``n`` random perturbations of unit L2 norm (deterministic in ``seed``)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        u = VelocityField.random(basis, rng, amplitude=1.0)
        out.append(u * (1.0 / norm(u)))
    return out


def contraction_estimate(v_star: VelocityField, f: ForcingSpec, T: float,
                         config: IntegratorConfig | None = None, delta: float | None = None,
                         n: int = 10, seed: int = 0, directions=None,
                         threads: int | None = None) -> tuple[float, list]:
    """rho = max_u ||map(v* + delta u) - map(v*)|| / delta over unit directions u.

    Ensemble members are independent integrations run on a thread pool; each
    member is itself sequential, so the result does not depend on scheduling.
    """
    if delta is None:
        size = norm(v_star)
        delta = 1e-4 * size if size > 0 else 1e-6
    if not delta > 0:
        raise ValueError("delta must be > 0")
    dirs = directions if directions is not None else random_directions(v_star.basis, n, seed)
    base = poincare_map(v_star, f, T, config)

    def member(u):
        out = poincare_map(v_star + u * delta, f, T, config)
        return norm(out - base) / (delta * norm(u))

    workers = threads or worker_count(len(dirs))
    if workers == 1:
        ratios = [member(u) for u in dirs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ratios = list(pool.map(member, dirs))
    return (max(ratios) if ratios else 0.0), ratios
