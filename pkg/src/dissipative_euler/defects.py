"""Turbulent defect measures from block coarse-graining and viscosity sequences.

The measures are represented as per-block densities on a fixed coarse
partition. For block means ``<.>`` the Reynolds defect is evaluated as the
density-weighted velocity covariance ``<rho (u - U) (x) (u - U)>`` with
``U = <m>/<rho>``, which equals ``<m (x) m / rho> - <m> (x) <m> / <rho>`` and is
positive semidefinite term by term. The pressure defect is the block mean of
the Bregman remainder ``p(rho) - p(R) - p'(R)(rho - R)``, equal to
``<p(rho)> - p(<rho>)`` because ``<rho - R> = 0``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    ConservedField,
    EosParams,
    TorusGrid,
    Trajectory,
    kinetic_extended,
    pressure,
    pressure_potential,
)
from .testfunctions import TestFunctionBank


class InadmissibleBlockError(ValueError):
    pass


@dataclass(frozen=True)
class BlockPartition:
    """Blocks of ``block**dim`` fine cells; ``block`` must divide ``cells``."""

    grid: TorusGrid
    block: int

    def __post_init__(self):
        if self.block < 1 or self.grid.cells % self.block:
            raise ValueError(f"block size {self.block} does not divide {self.grid.cells} cells")

    @classmethod
    def default(cls, grid: TorusGrid) -> BlockPartition:
        return cls(grid, max(1, grid.cells // 16))

    @property
    def coarse_grid(self) -> TorusGrid:
        return TorusGrid(self.grid.dim, self.grid.cells // self.block)

    @property
    def block_volume(self) -> float:
        return self.coarse_grid.cell_volume

    def mean(self, a: np.ndarray) -> np.ndarray:
        """Block means over the trailing ``dim`` axes."""
        d, H, n = self.grid.dim, self.block, self.grid.cells // self.block
        lead = a.shape[: a.ndim - d]
        shape = lead + sum(((n, H) for _ in range(d)), ())
        axes = tuple(len(lead) + 2 * i + 1 for i in range(d))
        return a.reshape(shape).mean(axis=axes)

    def expand(self, a: np.ndarray) -> np.ndarray:
        """Repeat per-block values onto the fine cells."""
        d = self.grid.dim
        for i in range(d):
            a = np.repeat(a, self.block, axis=a.ndim - d + i)
        return a


@dataclass(eq=False)
class DefectField:
    """Reynolds defect ``Rv`` (``(d, d, *blocks)``) and pressure defect ``Rp``."""

    partition: BlockPartition
    Rv: np.ndarray
    Rp: np.ndarray

    def __post_init__(self):
        cg = self.partition.coarse_grid
        self.Rv = np.asarray(self.Rv, dtype=float)
        self.Rp = np.asarray(self.Rp, dtype=float)
        if self.Rv.shape != (cg.dim, cg.dim, *cg.shape) or self.Rp.shape != cg.shape:
            raise ValueError("defect arrays do not match the partition")

    @classmethod
    def zero(cls, partition: BlockPartition) -> DefectField:
        cg = partition.coarse_grid
        return cls(partition, np.zeros((cg.dim, cg.dim, *cg.shape)), np.zeros(cg.shape))

    @property
    def grid(self) -> TorusGrid:
        """The grid whose cells are the blocks."""
        return self.partition.coarse_grid

    def energy_density(self, eos: EosParams) -> np.ndarray:
        """``1/2 trace(Rv) + Rp / (gamma - 1)`` per block."""
        return 0.5 * np.trace(self.Rv, axis1=0, axis2=1) + self.Rp / (eos.gamma - 1.0)

    def mass(self, eos: EosParams) -> float:
        return self.grid.integrate(self.energy_density(eos))

    def min_eigenvalue(self) -> np.ndarray:
        return min_eigenvalue(self.Rv)

    def scale(self) -> float:
        return float(max(np.max(np.abs(np.trace(self.Rv, axis1=0, axis2=1)), initial=0.0),
                         np.max(np.abs(self.Rp), initial=0.0), 1.0e-300))

    def is_admissible(self, rtol: float = 1.0e-12, scale: float | None = None) -> bool:
        s = self.scale() if scale is None else scale
        sym = np.allclose(self.Rv, np.swapaxes(self.Rv, 0, 1), rtol=0, atol=rtol * s)
        return bool(sym and np.all(self.Rp >= -rtol * s) and np.all(self.min_eigenvalue() >= -rtol * s))

    def scaled(self, factor: float) -> DefectField:
        return DefectField(self.partition, factor * self.Rv, factor * self.Rp)

    def __add__(self, other: DefectField) -> DefectField:
        if other.partition != self.partition:
            raise ValueError("defects live on different partitions")
        return DefectField(self.partition, self.Rv + other.Rv, self.Rp + other.Rp)


def min_eigenvalue(M: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of symmetric ``(d, d, ...)`` stacks, closed form for d <= 2."""
    d = M.shape[0]
    if d == 1:
        return M[0, 0]
    a, b, c = M[0, 0], 0.5 * (M[0, 1] + M[1, 0]), M[1, 1]
    return 0.5 * (a + c) - np.sqrt((0.5 * (a - c)) ** 2 + b**2)


# {{{ block operations


def coarse_grain(field: ConservedField, partition: BlockPartition) -> ConservedField:
    """Block means of density and momentum on the coarse grid."""
    if field.grid != partition.grid:
        raise ValueError("partition does not belong to the field's grid")
    return ConservedField(partition.coarse_grid, partition.mean(field.rho),
                          partition.mean(field.mom), field.time)


def _check_blocks(rho_bar, mom_bar):
    bad = (rho_bar <= 0) & np.any(mom_bar != 0, axis=0)
    if np.any(bad):
        raise InadmissibleBlockError("vacuum block carrying momentum")


def pressure_defect(field: ConservedField, partition: BlockPartition, eos: EosParams) -> np.ndarray:
    """``<p(rho)> - p(<rho>)`` per block, non-negative by convexity."""
    if field.grid != partition.grid:
        raise ValueError("partition does not belong to the field's grid")
    rho_bar = partition.mean(field.rho)
    R = partition.expand(rho_bar)
    dp = eos.a * eos.gamma * R ** (eos.gamma - 1.0)
    bregman = pressure(field.rho, eos) - pressure(R, eos) - dp * (field.rho - R)
    return partition.mean(bregman)


def reynolds_defect(field: ConservedField, partition: BlockPartition) -> np.ndarray:
    """``<m (x) m / rho> - <m> (x) <m> / <rho>`` per block, shape ``(d, d, *blocks)``."""
    if field.grid != partition.grid:
        raise ValueError("partition does not belong to the field's grid")
    rho_bar = partition.mean(field.rho)
    mom_bar = partition.mean(field.mom)
    _check_blocks(rho_bar, mom_bar)
    with np.errstate(divide="ignore", invalid="ignore"):
        U = np.where(rho_bar > 0, mom_bar / np.where(rho_bar > 0, rho_bar, 1.0), 0.0)
    occupied = field.rho > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(occupied, field.mom / np.where(occupied, field.rho, 1.0), 0.0)
    w = u - partition.expand(U)
    d = field.grid.dim
    Rv = np.empty((d, d, *partition.coarse_grid.shape))
    for a in range(d):
        for b in range(a, d):
            Rv[a, b] = partition.mean(field.rho * w[a] * w[b])
            Rv[b, a] = Rv[a, b]
    return Rv


def block_defects(field: ConservedField, partition: BlockPartition, eos: EosParams) -> DefectField:
    return DefectField(partition, reynolds_defect(field, partition), pressure_defect(field, partition, eos))


@dataclass
class BookkeepingReport:
    residual: np.ndarray
    fine_energy: np.ndarray
    coarse_energy: np.ndarray
    defect_energy: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def max_rel(self) -> float:
        return self.max_abs / max(float(np.max(np.abs(self.fine_energy))), 1.0e-300)


def energy_bookkeeping(field: ConservedField, partition: BlockPartition, eos: EosParams) -> BookkeepingReport:
    """Check ``<E(rho, m)> = E(<rho>, <m>) + 1/2 tr Rv + Rp/(gamma-1)`` block by block.

    The defects are computed independently of the energy (see module notes),
    so a vanishing residual is a genuine cross-check of the identity.
    """
    fine = partition.mean(0.5 * kinetic_extended(field.rho, field.mom) + pressure_potential(field.rho, eos))
    cf = coarse_grain(field, partition)
    coarse = 0.5 * kinetic_extended(cf.rho, cf.mom) + pressure_potential(cf.rho, eos)
    defect = block_defects(field, partition, eos).energy_density(eos)
    return BookkeepingReport(fine - coarse - defect, fine, coarse, defect)


# }}}


# {{{ sequences


@dataclass(eq=False)
class SequenceDefect:
    """Defects of the finest member plus weak-* Cauchy diagnostics.

    ``rho_pairings[n, f]`` and ``mom_pairings[n, j, f]`` pair member ``n`` with
    spatial bank function ``f``; ``*_increments`` are successive differences.
    """

    defects: DefectField
    epsilons: np.ndarray
    time: float
    labels: list[str]
    rho_pairings: np.ndarray
    mom_pairings: np.ndarray

    @property
    def rho_increments(self) -> np.ndarray:
        return np.abs(np.diff(self.rho_pairings, axis=0))

    @property
    def mom_increments(self) -> np.ndarray:
        return np.abs(np.diff(self.mom_pairings, axis=0))


def spatial_pairings(field: ConservedField, bank: TestFunctionBank) -> tuple[np.ndarray, np.ndarray]:
    """Exact pairings ``<rho, f>`` (``(F,)``) and ``<m_j, f>`` (``(d, F)``)."""
    vals, _ = bank.cell_averages(field.grid)
    d = field.grid.dim
    axes = tuple(range(1, d + 1))
    r = np.tensordot(vals, field.rho, axes=(axes, tuple(range(d)))) * field.grid.cell_volume
    m = np.stack([np.tensordot(vals, field.mom[j], axes=(axes, tuple(range(d)))) for j in range(d)])
    return r, m * field.grid.cell_volume


def sequence_defect(members: Sequence[Trajectory], epsilons: Sequence[float], partition: BlockPartition,
                    eos: EosParams, t: float, bank: TestFunctionBank | None = None) -> SequenceDefect:
    """Defect estimate at time ``t`` from a vanishing-viscosity sequence.

    Members are ordered by strictly decreasing viscosity. Defects are taken
    from the finest member, which must live on the partition's grid; the
    pairings are exact on any grid, so other members may use their own.
    """
    if len(members) < 3:
        raise ValueError("a defect sequence needs at least three members")
    eps = np.asarray(epsilons, dtype=float)
    if eps.shape != (len(members),) or np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValueError("viscosities must be positive and strictly decreasing")
    if members[-1].grid != partition.grid:
        raise ValueError("the finest member must live on the partition's grid")
    if bank is None:
        bank = TestFunctionBank(partition.grid.dim, horizon=max(t, 1.0))
    snaps = [m.at(t) for m in members]
    pairs = [spatial_pairings(s, bank) for s in snaps]
    return SequenceDefect(
        defects=block_defects(snaps[-1], partition, eos),
        epsilons=eps,
        time=float(t),
        labels=bank.labels,
        rho_pairings=np.stack([p[0] for p in pairs]),
        mom_pairings=np.stack([p[1] for p in pairs]),
    )


# }}}
