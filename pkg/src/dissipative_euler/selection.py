"""Energy comparison between dissipative records, admissible selection and convexity."""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .analysis import DissipativeRecord
from .core import ConservedField, EosParams, Trajectory, pressure
from .defects import DefectField
from .solver import EnergyLedger

INITIAL_TOL = 1.0e-10
COMPARE_RTOL = 1.0e-10


class Comparison(enum.Enum):
    PRECEDES = "precedes"  # a <= b everywhere
    SUCCEEDS = "succeeds"  # b <= a everywhere
    INCOMPARABLE = "incomparable"


def _check_compatible(a: DissipativeRecord, b: DissipativeRecord) -> None:
    if a.grid != b.grid:
        raise ValueError("records live on different grids")
    if a.partition.block != b.partition.block:
        raise ValueError("records use different defect partitions")
    if a.eos != b.eos:
        raise ValueError("records use different equations of state")
    ta, tb = a.times, b.times
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1.0e-12 * max(1.0, ta[-1])):
        raise ValueError("records have different snapshot times")


def same_initial_data(a: DissipativeRecord, b: DissipativeRecord, tol: float = INITIAL_TOL) -> bool:
    sa, sb = a.trajectory.initial, b.trajectory.initial
    return bool(np.max(np.abs(sa.rho - sb.rho)) <= tol and np.max(np.abs(sa.mom - sb.mom), initial=0.0) <= tol)


def energy_density_total(record: DissipativeRecord, t: float) -> np.ndarray:
    """Per-block ``1/2 |m|^2/rho + P(rho) + 1/2 tr Rv + Rp/(gamma-1)`` at snapshot ``t``."""
    return record.energy_density(record.trajectory.index_of(t))


def _density_stack(record: DissipativeRecord) -> np.ndarray:
    return np.stack([record.energy_density(k) for k in range(len(record.trajectory))])


def precedes(a: DissipativeRecord, b: DissipativeRecord, rtol: float = COMPARE_RTOL) -> Comparison:
    """Blockwise comparison of total energy densities at every snapshot.

    ``PRECEDES`` when ``a <= b + tol`` everywhere (checked first, so a record
    precedes itself), ``SUCCEEDS`` when ``b <= a + tol`` everywhere and
    ``INCOMPARABLE`` otherwise; ``tol = rtol * max(E_a(0), E_b(0))``.
    """
    _check_compatible(a, b)
    tol = rtol * max(abs(a.initial_energy), abs(b.initial_energy))
    ea, eb = _density_stack(a), _density_stack(b)
    if np.all(ea <= eb + tol):
        return Comparison.PRECEDES
    if np.all(eb <= ea + tol):
        return Comparison.SUCCEEDS
    return Comparison.INCOMPARABLE


@dataclass(eq=False)
class Ensemble:
    members: list[DissipativeRecord]
    tol_0: float = INITIAL_TOL

    def __post_init__(self):
        self.members = list(self.members)
        for m in self.members[1:]:
            _check_compatible(self.members[0], m)
            if not same_initial_data(self.members[0], m, self.tol_0):
                raise ValueError("ensemble members do not share initial data")

    def __len__(self) -> int:
        return len(self.members)


def energy_functional(record: DissipativeRecord) -> float:
    """``int_0^T int (E + defect energy) dx dt`` by the trapezoid rule over snapshots."""
    e = np.array([record.grid.integrate(record.energy_density(k)) for k in range(len(record.trajectory))])
    t = record.times
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (e[1:] + e[:-1]) * np.diff(t)))


@dataclass
class Selection:
    index: int
    record: DissipativeRecord
    functional: np.ndarray
    certificate: list[tuple[int, Comparison]] = field(default_factory=list)

    def audit(self, members: Sequence[DissipativeRecord]) -> bool:
        """True when no member strictly precedes the winner with a smaller functional."""
        for i, m in enumerate(members):
            if i == self.index:
                continue
            if precedes(m, self.record) is Comparison.PRECEDES and self.functional[i] < self.functional[self.index]:
                return False
        return True


def select_admissible(ensemble: Ensemble) -> Selection:
    """Minimiser of the integrated total energy; ties go to the lowest index."""
    if len(ensemble) == 0:
        raise ValueError("cannot select from an empty ensemble")
    J = np.array([energy_functional(m) for m in ensemble.members])
    k = int(np.argmin(J))
    winner = ensemble.members[k]
    cert = [(i, precedes(winner, m)) for i, m in enumerate(ensemble.members) if i != k]
    return Selection(k, winner, J, cert)


# {{{ convexity


def _combine_defect(Da: DefectField, Db: DefectField, sa: ConservedField, sb: ConservedField,
                    lam: float, eos: EosParams) -> DefectField:
    """Affine combination of defects plus the convexity gaps of ``m (x) m / rho`` and ``p``.

    The kinetic gap equals ``lam (1-lam) rho_a rho_b / rho (u_a - u_b) (x) (u_a - u_b)``,
    which is evaluated in that positive semidefinite form.
    """
    rho = lam * sa.rho + (1 - lam) * sb.rho
    occ = rho > 0
    safe = np.where(occ, rho, 1.0)

    def vel(s):
        o = s.rho > 0
        return np.where(o, s.mom / np.where(o, s.rho, 1.0), 0.0)

    du = vel(sa) - vel(sb)
    w = np.where(occ, lam * (1 - lam) * sa.rho * sb.rho / safe, 0.0)
    kin = w * np.einsum("a...,b...->ab...", du, du)
    dp = eos.a * eos.gamma * rho ** (eos.gamma - 1.0)

    def bregman(r):
        return pressure(r, eos) - pressure(rho, eos) - dp * (r - rho)

    gap_p = lam * bregman(sa.rho) + (1 - lam) * bregman(sb.rho)
    return DefectField(Da.partition, lam * Da.Rv + (1 - lam) * Db.Rv + kin, lam * Da.Rp + (1 - lam) * Db.Rp + gap_p)


def convex_combine(a: DissipativeRecord, b: DissipativeRecord, lam: float) -> DissipativeRecord:
    """Record with fields ``lam a + (1 - lam) b`` and defects absorbing the convexity gaps.

    Energies, weak continuity and weak momentum residuals (with defects) of
    the result are the same affine combination of the parents'.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    _check_compatible(a, b)
    if not same_initial_data(a, b):
        raise ValueError("records do not share initial data")
    eos = a.eos
    snaps, defects = [], []
    for sa, sb, Da, Db in zip(a.trajectory, b.trajectory, a.defects, b.defects):
        snaps.append(ConservedField(a.grid, lam * sa.rho + (1 - lam) * sb.rho,
                                    lam * sa.mom + (1 - lam) * sb.mom, sa.time))
        defects.append(_combine_defect(Da, Db, sa, sb, lam, eos))
    traj = Trajectory(snaps)
    t = traj.times
    diss = lam * np.interp(t, a.ledger.times, a.ledger.dissipation) \
        + (1 - lam) * np.interp(t, b.ledger.times, b.ledger.dissipation)
    out = DissipativeRecord(traj, defects, EnergyLedger(t, np.zeros_like(t), diss), eos,
                            {"combination": float(lam), "a": a.provenance, "b": b.provenance})
    out.ledger.energy = np.array([out.total_energy(k) for k in range(len(traj))])
    return out


# }}}
