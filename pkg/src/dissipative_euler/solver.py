"""Finite-volume integrator for the viscous regularisation of isentropic Euler.

The convective part uses a Rusanov (local Lax-Friedrichs) or global
Lax-Friedrichs numerical flux with optional MUSCL reconstruction. The viscous
term ``epsilon * div S`` uses a Newtonian stress evaluated from cell-centred
central differences, so the semi-discrete viscous energy rate equals
``-epsilon * sum(S : grad u) * h**d`` exactly on the periodic grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DENSITY_FLOOR,
    ConservedField,
    EosParams,
    TorusGrid,
    Trajectory,
    pressure,
    sound_speed,
    total_energy,
    velocity_from_conservative,
)

logger = logging.getLogger(__name__)

FLUXES = ("rusanov", "central-dissipative")
TIME_SCHEMES = ("euler", "rk2")
RECONSTRUCTIONS = ("constant", "muscl")


class DegenerateModelError(ValueError):
    pass


class TimestepRejected(RuntimeError):
    """The update produced a negative density; retry with a smaller step."""


class SolverStall(RuntimeError):
    pass


@dataclass(frozen=True)
class ViscosityModel:
    """Newtonian stress ``S = 2 mu D0(u) + eta div(u) I`` scaled by ``epsilon``."""

    epsilon: float
    shear_mu: float = 1.0
    bulk_eta: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"viscosity scale must be positive, got {self.epsilon}")
        if self.shear_mu < 0 or self.bulk_eta < 0:
            raise ValueError("viscosity coefficients must be non-negative")
        if self.shear_mu == 0 and self.bulk_eta == 0:
            raise DegenerateModelError("at least one of shear_mu, bulk_eta must be positive")


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.4
    end_time: float = 0.2
    flux: str = "rusanov"
    time_scheme: str = "rk2"
    output_stride: int = 10
    reconstruction: str = "constant"
    dt_min: float = 1.0e-12
    density_floor: float = DENSITY_FLOOR
    output_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.end_time > 0:
            raise ValueError(f"end_time must be positive, got {self.end_time}")
        if self.flux not in FLUXES:
            raise ValueError(f"unknown flux {self.flux!r}; expected one of {FLUXES}")
        if self.time_scheme not in TIME_SCHEMES:
            raise ValueError(f"unknown time scheme {self.time_scheme!r}")
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ValueError(f"unknown reconstruction {self.reconstruction!r}")
        if self.output_stride < 1:
            raise ValueError("output_stride must be at least 1")
        object.__setattr__(self, "output_times", tuple(sorted(float(t) for t in self.output_times)))
        if any(not 0 < t <= self.end_time for t in self.output_times):
            raise ValueError("output times must lie in (0, end_time]")


@dataclass
class EnergyLedger:
    """Per-step record of total energy and cumulative viscous dissipation."""

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float)
        if self.dissipation is None:
            self.dissipation = np.zeros_like(self.energy)
        self.dissipation = np.asarray(self.dissipation, dtype=float)
        if not (self.times.shape == self.energy.shape == self.dissipation.shape):
            raise ValueError("ledger columns must have equal length")

    @property
    def initial_energy(self) -> float:
        return float(self.energy[0])

    @property
    def slack(self) -> np.ndarray:
        """``E(0) - E(t) - dissipation(t)``; non-negative for an admissible run."""
        return self.energy[0] - self.energy - self.dissipation

    def tolerance(self, rel: float = 1.0e-6) -> float:
        return rel * abs(self.initial_energy)

    def passes(self, rel: float = 1.0e-6) -> bool:
        tol = self.tolerance(rel)
        return bool(
            np.all(self.slack >= -tol)
            and np.all(np.diff(self.dissipation) >= 0)
            and np.max(self.energy) <= self.energy[0] + tol
        )

    def rows(self):
        yield from zip(self.times, self.energy, self.dissipation, self.slack)


# {{{ viscous stress


def deviatoric(mat: np.ndarray) -> np.ndarray:
    """Trace-free part of a stack of ``(d, d, ...)`` matrices."""
    d = mat.shape[0]
    tr = np.trace(mat, axis1=0, axis2=1)
    eye = np.eye(d).reshape((d, d) + (1,) * (mat.ndim - 2))
    return mat - eye * tr / d


def symmetric_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, 0, 1))


def viscous_stress(grad_u, model: ViscosityModel) -> np.ndarray:
    """Newtonian stress from a velocity gradient ``grad_u[a, b] = d u_a / d x_b``.

    Accepts one ``(d, d)`` matrix or a field of them with trailing grid axes.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    d = grad_u.shape[0]
    sym = symmetric_part(grad_u)
    div = np.trace(grad_u, axis1=0, axis2=1)
    eye = np.eye(d).reshape((d, d) + (1,) * (grad_u.ndim - 2))
    return 2.0 * model.shear_mu * deviatoric(sym) + model.bulk_eta * div * eye


def _frob(a, b):
    return np.sum(a * b, axis=(0, 1))


def fenchel_decomposition(D, S, model: ViscosityModel, rtol: float = 1.0e-14):
    """Split ``S : D`` into the quadratic potential and its conjugate.

    With ``F(D) = mu |D0|^2 + eta/2 (tr D)^2`` the conjugate is
    ``F*(S) = |S0|^2 / (4 mu) + (tr S)^2 / (2 eta d^2)``, infinite when a
    vanishing coefficient meets a non-zero component of ``S``.

    Returns
    -------
    (F(D), F*(S), gap) with ``gap = S:D - F(D) - F*(S) <= 0``.
    """
    D = np.asarray(D, dtype=float)
    S = np.asarray(S, dtype=float)
    mu, eta = model.shear_mu, model.bulk_eta
    d = D.shape[0]
    D0, S0 = deviatoric(D), deviatoric(S)
    trD = np.trace(D, axis1=0, axis2=1)
    trS = np.trace(S, axis1=0, axis2=1)
    scale = np.sqrt(_frob(S, S)) + 1.0e-300

    F = mu * _frob(D0, D0) + 0.5 * eta * trD**2
    s0 = _frob(S0, S0)
    if mu > 0:
        dev_part = s0 / (4.0 * mu)
    else:
        dev_part = np.where(np.sqrt(s0) <= rtol * scale, 0.0, np.inf)
    if eta > 0:
        vol_part = trS**2 / (2.0 * eta * d**2)
    else:
        vol_part = np.where(np.abs(trS) <= rtol * scale, 0.0, np.inf)
    Fstar = dev_part + vol_part
    gap = _frob(S, D) - F - Fstar
    return F, Fstar, gap


# }}}


# {{{ discrete operators


def central_difference(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)


def velocity_gradient(u: np.ndarray, h: float) -> np.ndarray:
    """Periodic central-difference gradient, ``G[a, b] = d u_a / d x_b``."""
    d = u.shape[0]
    return np.stack([np.stack([central_difference(u[a], b, h) for b in range(d)]) for a in range(d)])


def stress_divergence(S: np.ndarray, h: float) -> np.ndarray:
    d = S.shape[0]
    return np.stack([sum(central_difference(S[a, b], b, h) for b in range(d)) for a in range(d)])


def viscous_terms(rho, mom, grid: TorusGrid, model: ViscosityModel, floor: float = DENSITY_FLOOR):
    """Return ``(epsilon * div S, epsilon * sum(S:grad u) * h^d, S)``."""
    u = velocity_from_conservative(rho, mom, floor)
    G = velocity_gradient(u, grid.spacing)
    S = viscous_stress(G, model)
    force = model.epsilon * stress_divergence(S, grid.spacing)
    rate = model.epsilon * float(np.sum(_frob(S, G))) * grid.cell_volume
    return force, rate, S


def _van_leer(dl, dr):
    prod = dl * dr
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(prod > 0, 2.0 * prod / (dl + dr), 0.0)
    return s


def _face_states(U: np.ndarray, axis: int, reconstruction: str):
    """Left/right states at face ``i+1/2`` along ``axis`` for a stacked state."""
    if reconstruction == "constant":
        return U, np.roll(U, -1, axis=axis)
    dl = U - np.roll(U, 1, axis=axis)
    dr = np.roll(U, -1, axis=axis) - U
    s = _van_leer(dl, dr)
    return U + 0.5 * s, np.roll(U - 0.5 * s, -1, axis=axis)


def _physical_flux(U: np.ndarray, k: int, eos: EosParams, floor: float):
    rho, mom = U[0], U[1:]
    u = velocity_from_conservative(rho, mom, floor)
    F = np.empty_like(U)
    F[0] = mom[k]
    F[1:] = mom * u[k]
    F[1 + k] += pressure(rho, eos)
    speed = np.abs(u[k]) + sound_speed(rho, eos, floor)
    return F, speed


def convective_rhs(rho, mom, grid: TorusGrid, eos: EosParams, flux: str = "rusanov",
                   reconstruction: str = "constant", floor: float = DENSITY_FLOOR):
    """``-div`` of the numerical convective flux, stacked as ``(1 + d, ...)``."""
    U = np.concatenate([rho[None], mom])
    d = grid.dim
    if flux == "central-dissipative":
        u = velocity_from_conservative(rho, mom, floor)
        c = sound_speed(rho, eos, floor)
        lam_global = float(np.max(np.abs(u).max(axis=0) + c))
    dU = np.zeros_like(U)
    for k in range(d):
        ax = k + 1
        UL, UR = _face_states(U, ax, reconstruction)
        FL, sL = _physical_flux(UL, k, eos, floor)
        FR, sR = _physical_flux(UR, k, eos, floor)
        lam = np.maximum(sL, sR) if flux == "rusanov" else lam_global
        Fface = 0.5 * (FL + FR) - 0.5 * lam * (UR - UL)
        dU -= (Fface - np.roll(Fface, 1, axis=ax)) / grid.spacing
    return dU


# }}}


def stable_dt(field: ConservedField, eos: EosParams, model: ViscosityModel | None, cfl: float,
              floor: float = DENSITY_FLOOR) -> float:
    """Largest admissible step.

    ``cfl * min(h / max(sum_k |u_k| + d c), h^2 rho_min / (2 d epsilon (2 mu + eta)))``;
    in one dimension this is exactly ``cfl * min(h/(|u|+c), h^2 rho_min/(2 eps (2mu+eta)))``.
    """
    occupied = field.rho > floor
    if not np.any(occupied):
        raise ValueError("cannot choose a timestep for an all-vacuum field")
    grid = field.grid
    u = velocity_from_conservative(field.rho, field.mom, floor)
    c = sound_speed(field.rho, eos, floor)
    speed = np.sum(np.abs(u), axis=0) + grid.dim * c
    dt = grid.spacing / float(np.max(speed[occupied]))
    if model is not None:
        rho_min = float(np.min(field.rho[occupied]))
        visc = model.epsilon * (2.0 * model.shear_mu + model.bulk_eta)
        dt = min(dt, grid.spacing**2 * rho_min / (2.0 * grid.dim * visc))
    return cfl * dt


def _rhs(rho, mom, grid, eos, model, config: SolverConfig):
    dU = convective_rhs(rho, mom, grid, eos, config.flux, config.reconstruction, config.density_floor)
    rate = 0.0
    if model is not None:
        force, rate, _ = viscous_terms(rho, mom, grid, model, config.density_floor)
        dU[1:] += force
    return dU, rate


def _euler_update(U, dt, grid, eos, model, config):
    dU, rate = _rhs(U[0], U[1:], grid, eos, model, config)
    Un = U + dt * dU
    if np.any(Un[0] < 0):
        raise TimestepRejected(f"negative density after a step of size {dt:.3e}")
    return Un, rate


def advance(field: ConservedField, eos: EosParams, model: ViscosityModel | None, dt: float,
            config: SolverConfig = SolverConfig()) -> tuple[ConservedField, float]:
    """One step; returns the new field and the viscous energy dissipated in it."""
    grid = field.grid
    U = np.concatenate([field.rho[None], field.mom])
    U1, r0 = _euler_update(U, dt, grid, eos, model, config)
    if config.time_scheme == "euler":
        Un, dissipated = U1, dt * r0
    else:
        U2, r1 = _euler_update(U1, dt, grid, eos, model, config)
        Un = 0.5 * (U + U2)
        dissipated = 0.5 * dt * (r0 + r1)
    rho, mom = Un[0], Un[1:]
    mom = np.where(rho == 0, 0.0, mom)
    return ConservedField(grid, rho, mom, field.time + dt), dissipated


def step(field: ConservedField, eos: EosParams, model: ViscosityModel | None, dt: float,
         flux: str = "rusanov", time_scheme: str = "rk2", reconstruction: str = "constant") -> ConservedField:
    cfg = SolverConfig(flux=flux, time_scheme=time_scheme, reconstruction=reconstruction)
    return advance(field, eos, model, dt, cfg)[0]


def run(initial: ConservedField, eos: EosParams, model: ViscosityModel | None,
        config: SolverConfig) -> tuple[Trajectory, EnergyLedger]:
    """Integrate to ``config.end_time`` and audit the discrete energy balance.

    A step producing negative density is retried with half the timestep; a
    run whose step falls below ``config.dt_min`` raises ``SolverStall``.
    """
    field = initial
    t_end = initial.time + config.end_time
    marks = [initial.time + t for t in config.output_times]
    snapshots = [field]
    times, energy, dissipation = [field.time], [total_energy(field, eos)], [0.0]
    nstep = 0
    while field.time < t_end - 1.0e-14 * max(1.0, t_end):
        target = next((t for t in marks if t > field.time + 1.0e-14 * max(1.0, t)), t_end)
        dt = min(stable_dt(field, eos, model, config.cfl, config.density_floor), target - field.time)
        while True:
            if dt < config.dt_min:
                raise SolverStall(f"timestep fell below {config.dt_min} at t={field.time:.6g}")
            try:
                field, dissipated = advance(field, eos, model, dt, config)
                break
            except TimestepRejected:
                dt *= 0.5
        if abs(field.time - target) <= 1.0e-12 * max(1.0, abs(target)):
            field = field.with_time(target)  # land exactly on requested output times
        nstep += 1
        times.append(field.time)
        energy.append(total_energy(field, eos))
        dissipation.append(dissipation[-1] + dissipated)
        hit_mark = field.time in marks
        if nstep % config.output_stride == 0 or hit_mark or field.time >= t_end - 1.0e-14 * max(1.0, t_end):
            snapshots.append(field)
    if snapshots[-1] is not field:
        snapshots.append(field)

    ledger = EnergyLedger(np.array(times), np.array(energy), np.array(dissipation))
    if not ledger.passes():
        logger.warning("discrete energy inequality violated: min slack %.3e (tol %.3e)",
                       ledger.slack.min(), ledger.tolerance())
    return Trajectory(snapshots), ledger
