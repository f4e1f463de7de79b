"""Equation of state, energy functions, grids and field containers.

Every array-valued state stores density with the grid shape ``(N,)*dim`` and
momentum with the components on the leading axis, ``(dim, N, ..., N)``.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DENSITY_FLOOR = 1.0e-10


class DomainError(ValueError):
    """Raised when a thermodynamic function is evaluated outside its domain."""


@dataclass(frozen=True)
class EosParams:
    """Isentropic pressure law ``p = a * rho**gamma``."""

    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"pressure coefficient must be positive, got {self.a}")
        if not self.gamma > 1:
            raise ValueError(f"adiabatic exponent must exceed 1, got {self.gamma}")


@dataclass(frozen=True)
class TorusGrid:
    """Uniform cell-centred grid on the flat torus ``[-1, 1]**dim``."""

    dim: int
    cells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if self.cells < 1:
            raise ValueError(f"cells per axis must be positive, got {self.cells}")

    @property
    def spacing(self) -> float:
        return 2.0 / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    @property
    def size(self) -> int:
        return self.cells**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return 2.0**self.dim

    @cached_property
    def axis_centers(self) -> np.ndarray:
        return -1.0 + (np.arange(self.cells) + 0.5) * self.spacing

    @cached_property
    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates, one array of grid shape per axis."""
        return tuple(np.meshgrid(*([self.axis_centers] * self.dim), indexing="ij"))

    def wrap(self, x):
        """Map coordinates back into ``[-1, 1)``."""
        return np.mod(np.asarray(x, dtype=float) + 1.0, 2.0) - 1.0

    def integrate(self, values: np.ndarray) -> float:
        """Cell-volume weighted sum of a per-cell quantity."""
        return float(np.sum(values) * self.cell_volume)


@dataclass(frozen=True, eq=False)
class ConservedField:
    """Density and momentum on a torus grid at one instant."""

    grid: TorusGrid
    rho: np.ndarray
    mom: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        mom = np.asarray(self.mom, dtype=float)
        if rho.shape != self.grid.shape:
            raise ValueError(f"density shape {rho.shape} does not match grid {self.grid.shape}")
        if mom.shape != (self.grid.dim, *self.grid.shape):
            raise ValueError(
                f"momentum shape {mom.shape} does not match {(self.grid.dim, *self.grid.shape)}"
            )
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(mom))):
            raise ValueError("field contains non-finite values")
        if np.any(rho < 0):
            raise DomainError("negative density in field")
        if np.any(np.any(mom != 0, axis=0) & (rho == 0)):
            raise DomainError("non-zero momentum in a vacuum cell")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "mom", mom)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def constant(cls, grid: TorusGrid, rho: float, mom=None, time: float = 0.0) -> ConservedField:
        mom = np.zeros(grid.dim) if mom is None else np.asarray(mom, dtype=float)
        r = np.full(grid.shape, float(rho))
        m = np.broadcast_to(mom.reshape((grid.dim,) + (1,) * grid.dim), (grid.dim, *grid.shape))
        return cls(grid, r, m.copy(), time)

    def with_time(self, time: float) -> ConservedField:
        return ConservedField(self.grid, self.rho, self.mom, time)

    def mass(self) -> float:
        return self.grid.integrate(self.rho)

    def total_momentum(self) -> np.ndarray:
        return np.sum(self.mom, axis=tuple(range(1, self.grid.dim + 1))) * self.grid.cell_volume


@dataclass(eq=False)
class Trajectory:
    """Time-ordered snapshots sharing one grid."""

    snapshots: list[ConservedField] = field(default_factory=list)

    def __post_init__(self):
        self.snapshots = list(self.snapshots)
        if not self.snapshots:
            raise ValueError("a trajectory needs at least one snapshot")
        grid = self.snapshots[0].grid
        for s in self.snapshots[1:]:
            if s.grid != grid:
                raise ValueError("all snapshots must share one grid")
        t = self.times
        if np.any(np.diff(t) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def grid(self) -> TorusGrid:
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[ConservedField]:
        return iter(self.snapshots)

    def __getitem__(self, k) -> ConservedField:
        return self.snapshots[k]

    @property
    def initial(self) -> ConservedField:
        return self.snapshots[0]

    @property
    def final(self) -> ConservedField:
        return self.snapshots[-1]

    def index_of(self, t: float, tol: float = 1.0e-12) -> int:
        """Index of the snapshot at time ``t``; raises ``KeyError`` if absent."""
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return k

    def at(self, t: float, tol: float = 1.0e-12) -> ConservedField:
        return self.snapshots[self.index_of(t, tol)]

    def until(self, t: float) -> Trajectory:
        """Snapshots up to and including the one at time ``t``."""
        return Trajectory(self.snapshots[: self.index_of(t) + 1])

    def rho_stack(self) -> np.ndarray:
        return np.stack([s.rho for s in self.snapshots])

    def mom_stack(self) -> np.ndarray:
        return np.stack([s.mom for s in self.snapshots])


# {{{ thermodynamics


def _density(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("density must be non-negative")
    return rho


def pressure(rho, eos: EosParams):
    """Pressure ``a * rho**gamma``."""
    return eos.a * _density(rho) ** eos.gamma


def pressure_potential(rho, eos: EosParams):
    """Internal energy density ``P(rho) = a/(gamma-1) * rho**gamma``."""
    return eos.a / (eos.gamma - 1.0) * _density(rho) ** eos.gamma


def pressure_potential_derivative(rho, eos: EosParams):
    """``P'(rho) = a*gamma/(gamma-1) * rho**(gamma-1)``."""
    return eos.a * eos.gamma / (eos.gamma - 1.0) * _density(rho) ** (eos.gamma - 1.0)


def sound_speed(rho, eos: EosParams, floor: float = DENSITY_FLOOR):
    rho = np.maximum(_density(rho), floor)
    return np.sqrt(eos.gamma * eos.a * rho ** (eos.gamma - 1.0))


def kinetic_extended(rho, mom):
    """Lower-semicontinuous convex extension of ``|m|^2 / rho``.

    ``mom`` carries its components on axis 0. Returns 0 where the momentum
    vanishes, ``|m|^2/rho`` where ``rho > 0`` and ``inf`` otherwise.
    """
    rho = np.asarray(rho, dtype=float)
    mom = np.asarray(mom, dtype=float)
    m2 = np.sum(mom**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rho > 0, m2 / np.where(rho > 0, rho, 1.0), np.inf)
    out = np.where(m2 == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def total_energy_density(rho, mom, eos: EosParams):
    """``E = 1/2 |m|^2/rho + P(rho)``; infinite on the inadmissible branch."""
    return 0.5 * kinetic_extended(rho, mom) + pressure_potential(np.maximum(rho, 0.0), eos)


def total_energy(field: ConservedField, eos: EosParams) -> float:
    return field.grid.integrate(total_energy_density(field.rho, field.mom, eos))


def velocity_from_conservative(rho, mom, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """``u = m / max(rho, floor)`` cell by cell."""
    if not floor > 0:
        raise ValueError("density floor must be positive")
    return np.asarray(mom, dtype=float) / np.maximum(np.asarray(rho, dtype=float), floor)


def field_velocity(field: ConservedField, floor: float = DENSITY_FLOOR) -> np.ndarray:
    return velocity_from_conservative(field.rho, field.mom, floor)


# }}}


def stack_fields(fields: Sequence[ConservedField]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([f.rho for f in fields]), np.stack([f.mom for f in fields])
