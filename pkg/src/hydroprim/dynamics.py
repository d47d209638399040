"""Projected Galerkin system and its IMEX time integration."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import SpectralBasis, hydrostatic_project
from .field import VelocityField, grad_norm_sq, grid_state, norm, write_checkpoint

log = logging.getLogger(__name__)

SCHEMES = ("cnab2", "imex-euler")


class BlowUpError(FloatingPointError):
    """A tracked norm exceeded the ceiling or became non-finite.

    ``result`` carries the partial :class:`SimulationResult` when raised from
    :func:`simulate`.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CFLWarning(RuntimeWarning):
    pass


@dataclass
class ForcingSpec:
    """Body force f(t) = profile(t) * coeffs.

    ``coeffs`` is a raw sine x cosine tensor (it may contain a gradient part;
    the dynamics only ever sees its hydrostatic projection) or a
    :class:`VelocityField`.  ``variant`` is 'zero', 'steady' or
    'time_periodic'; the periodic profile is cos(2 pi t / period - phase).
    """

    variant: str = "zero"
    coeffs: np.ndarray | VelocityField | None = None
    period: float | None = None
    phase: float = 0.0
    _projected: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.variant not in ("zero", "steady", "time_periodic"):
            raise ValueError(f"unknown forcing variant {self.variant!r}")
        if self.variant != "zero" and self.coeffs is None:
            raise ValueError(f"{self.variant} forcing needs coefficients")
        if self.variant == "time_periodic" and not (self.period and self.period > 0):
            raise ValueError("time_periodic forcing needs period > 0")
        raw = self.coeffs.coeffs if isinstance(self.coeffs, VelocityField) else self.coeffs
        if raw is not None and not np.all(np.isfinite(raw)):
            raise ValueError("forcing coefficients must be finite")

    def profile(self, t: float) -> float:
        if self.variant == "zero":
            return 0.0
        if self.variant == "steady":
            return 1.0
        return math.cos(2 * math.pi * t / self.period - self.phase)

    def projected(self, basis: SpectralBasis) -> np.ndarray:
        """Coefficients of the hydrostatic projection of ``coeffs``."""
        key = id(basis)
        if key not in self._projected:
            if self.coeffs is None:
                self._projected[key] = basis.zeros()
            else:
                self._projected[key] = hydrostatic_project(self.coeffs, basis).coeffs
        return self._projected[key]

    def at(self, t: float, basis: SpectralBasis) -> np.ndarray:
        """Projected force at time ``t``."""
        s = self.profile(t)
        if s == 0.0:
            return np.zeros(basis.shape)
        return s * self.projected(basis)

    def raw_at(self, t: float, basis: SpectralBasis):
        """Unprojected force at ``t`` (raw tensor or field coefficients)."""
        s = self.profile(t)
        if self.coeffs is None or s == 0.0:
            return np.zeros(basis.shape)
        raw = self.coeffs.coeffs if isinstance(self.coeffs, VelocityField) else self.coeffs
        return s * np.asarray(raw)


ZERO_FORCE = ForcingSpec()


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    scheme: str = "cnab2"
    T_end: float = 1.0
    diag_every: int = 1
    checkpoint_every: int | None = None
    nonlinear: bool = True
    cfl: float = 0.5
    blowup: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.diag_every < 1 or (self.checkpoint_every is not None and self.checkpoint_every < 1):
            raise ValueError("cadences must be >= 1")
        if self.T_end < 0:
            raise ValueError("T_end must be >= 0")

    def n_steps(self, T: float | None = None) -> int:
        T = self.T_end if T is None else T
        n = round(T / self.dt)
        if abs(n * self.dt - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"T={T} is not a whole number of steps of dt={self.dt}")
        return n


@dataclass
class SimulationState:
    t: float
    v: VelocityField
    dt: float
    step_index: int = 0
    explicit_prev: np.ndarray | None = None
    # time integrals accumulated with the midpoint of consecutive states
    dissipation: float = 0.0
    work: float = 0.0

    def __post_init__(self):
        if self.t < 0 or not self.dt > 0:
            raise ValueError("need t >= 0 and dt > 0")


# ----------------------------------------------------------------- right side
def nonlinear_grid(v: VelocityField) -> tuple[np.ndarray, dict]:
    """Advective term v . grad_H v + w d_z v on the grid, plus the grid state."""
    g = grid_state(v)
    adv = np.einsum("dxyz,cdxyz->cxyz", g["v"], g["grad"]) + g["w"][None] * g["dz"]
    if not np.all(np.isfinite(adv)):
        raise FloatingPointError("non-finite values in the nonlinear product")
    return adv, g


def nonlinear_term(v: VelocityField) -> VelocityField:
    """Galerkin projection of v . grad_H v + w d_z v."""
    adv, _ = nonlinear_grid(v)
    return VelocityField(v.basis, v.basis.to_spectral(adv))


def rhs(state: SimulationState, f: ForcingSpec = ZERO_FORCE,
        nonlinear: bool = True) -> np.ndarray:
    """Time derivative of the coefficients: Lap_H v - N(v) + P f."""
    v = state.v
    b = v.basis
    out = -b.laplace_eigs * v.coeffs + f.at(state.t, b)
    if nonlinear:
        out -= nonlinear_term(v).coeffs
    return out


def _explicit(state, f, nonlinear):
    b = state.v.basis
    force = f.at(state.t, b)
    if not nonlinear:
        return force, None, None
    adv, g = nonlinear_grid(state.v)
    n = b.to_spectral(adv)
    return force - n, n, g


def _cfl_check(g: dict | None, basis: SpectralBasis, dt: float, c: float):
    if g is None:
        return
    wmax = float(abs(g["w"]).max())
    if wmax == 0:
        return
    dz_eff = 2 * basis.domain.h / basis.domain.K
    if dt > c * dz_eff / wmax:
        warnings.warn("time step exceeds the vertical advective CFL limit "
                      f"{c} * dz_eff / max|w|", CFLWarning, stacklevel=3)


def _advance(state: SimulationState, f: ForcingSpec, config: IntegratorConfig,
             explicit: np.ndarray) -> SimulationState:
    b = state.v.basis
    u = state.v.coeffs
    dt = state.dt
    eig = b.laplace_eigs
    euler = config.scheme == "imex-euler" or state.explicit_prev is None
    if euler:
        new = (u + dt * explicit) / (1.0 + dt * eig)
    else:
        new = ((1.0 - 0.5 * dt * eig) * u
               + dt * (1.5 * explicit - 0.5 * state.explicit_prev)) / (1.0 + 0.5 * dt * eig)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite coefficients at t={state.t + dt:.6g}")
    mid = 0.5 * (u + new)
    # pair the midpoint with the state the diffusion acts on, so that the
    # linear part of the discrete energy balance closes exactly
    implicit = new if euler else mid
    diss = dt * float(np.sum(eig * implicit * mid))
    work = dt * float(np.sum(f.at(state.t + 0.5 * dt, b) * mid))
    v_new = VelocityField(b, new)
    return SimulationState(
        t=state.t + dt, v=v_new, dt=dt, step_index=state.step_index + 1,
        explicit_prev=explicit, dissipation=state.dissipation + diss,
        work=state.work + work)


def step(state: SimulationState, f: ForcingSpec = ZERO_FORCE,
         config: IntegratorConfig | None = None) -> SimulationState:
    """Advance one step: diffusion implicit, nonlinearity and force explicit.

    IMEX-Euler divides by 1 + dt mu; CNAB2 uses Crank-Nicolson diffusion with
    second-order Adams-Bashforth for the explicit part, started by one
    IMEX-Euler step when no history is available.
    """
    config = config or IntegratorConfig(dt=state.dt)
    explicit, _, g = _explicit(state, f, config.nonlinear)
    _cfl_check(g, state.v.basis, state.dt, config.cfl)
    new = _advance(state, f, config, explicit)
    _check_ceiling(new, config)
    return new


def _check_ceiling(state, config):
    h_norm = norm(state.v, "H")
    if not math.isfinite(h_norm) or h_norm > config.blowup:
        raise BlowUpError(f"||v||_H = {h_norm:.3e} exceeds ceiling {config.blowup:.1e} "
                          f"at t={state.t:.6g}")


@dataclass
class SimulationResult:
    state: SimulationState
    records: list
    checkpoints: list          # (t, coefficient copy)
    status: str = "ok"


def simulate(v0: VelocityField, f: ForcingSpec = ZERO_FORCE,
             config: IntegratorConfig | None = None, diagnostics=None,
             checkpoint_dir: str | Path | None = None, t0: float = 0.0,
             record: bool = True) -> SimulationResult:
    """Integrate from ``v0`` to ``t0 + T_end``.

    Diagnostics (a :class:`~hydroprim.diagnostics.DiagnosticsConfig`) are
    sampled every ``diag_every`` steps and at the final time; coefficient
    snapshots every ``checkpoint_every`` steps are kept in memory and, when
    ``checkpoint_dir`` is given, written as PEHV files.  A blow-up raises
    :class:`BlowUpError` carrying the partial result.
    """
    from .diagnostics import DiagnosticsConfig, compute_record

    config = config or IntegratorConfig()
    diag = diagnostics or DiagnosticsConfig()
    b = v0.basis
    n_steps = config.n_steps()
    state = SimulationState(t=t0, v=v0.copy(), dt=config.dt)
    records, checkpoints = [], []
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(s):
        checkpoints.append((s.t, s.v.coeffs.copy()))
        if checkpoint_dir is not None:
            write_checkpoint(checkpoint_dir / f"state_{s.step_index:08d}.pehv", s.v, s.t)

    result = SimulationResult(state, records, checkpoints)
    try:
        for n in range(n_steps + 1):
            explicit, nl, g = _explicit(state, f, config.nonlinear)
            if record and (n % config.diag_every == 0 or n == n_steps):
                records.append(compute_record(state, f, diag, nonlinear=nl, grid=g))
            if config.checkpoint_every and (n % config.checkpoint_every == 0 or n == n_steps):
                snapshot(state)
            if n == n_steps:
                break
            _cfl_check(g, b, state.dt, config.cfl)
            state = _advance(state, f, config, explicit)
            result.state = state
            _check_ceiling(state, config)
    except (BlowUpError, FloatingPointError) as exc:
        result.status = "blowup"
        log.warning("simulation aborted: %s", exc)
        raise BlowUpError(str(exc), result) from exc
    result.state = state
    return result


def with_dt(config: IntegratorConfig, dt: float) -> IntegratorConfig:
    return replace(config, dt=dt)
