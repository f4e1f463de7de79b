"""Dissipative-solution records and their compatibility diagnostics.

A record stores a trajectory on a coarse grid together with one defect field
per snapshot (blocks of the defect partition are the trajectory's cells) and
an energy ledger. Plain runs carry zero defects on the trivial partition.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DENSITY_FLOOR,
    ConservedField,
    EosParams,
    TorusGrid,
    Trajectory,
    kinetic_extended,
    pressure_potential,
    pressure_potential_derivative,
    sound_speed,
    total_energy,
    velocity_from_conservative,
)
from .defects import BlockPartition, DefectField, block_defects, coarse_grain
from .solver import EnergyLedger, symmetric_part

logger = logging.getLogger(__name__)

CLASSICAL = "CLASSICAL"
DISSIPATIVE = "DISSIPATIVE"


# {{{ record


@dataclass(eq=False)
class DissipativeRecord:
    trajectory: Trajectory
    defects: list[DefectField]
    ledger: EnergyLedger
    eos: EosParams = EosParams()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.defects = list(self.defects)
        if len(self.defects) != len(self.trajectory):
            raise ValueError("one defect field per snapshot is required")
        for D in self.defects:
            if D.grid != self.trajectory.grid:
                raise ValueError("defect blocks must coincide with the trajectory cells")

    @property
    def grid(self) -> TorusGrid:
        return self.trajectory.grid

    @property
    def partition(self) -> BlockPartition:
        return self.defects[0].partition

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def initial_energy(self) -> float:
        return self.total_energy(0)

    def defect_at(self, t: float) -> DefectField:
        return self.defects[self.trajectory.index_of(t)]

    def defect_mass(self) -> np.ndarray:
        return np.array([D.mass(self.eos) for D in self.defects])

    def total_energy(self, k: int) -> float:
        """Energy of snapshot ``k`` including the defect energy."""
        return total_energy(self.trajectory[k], self.eos) + self.defects[k].mass(self.eos)

    def energy_density(self, k: int) -> np.ndarray:
        """Per-block ``E(rho, m) + 1/2 tr Rv + Rp/(gamma-1)`` at snapshot ``k``."""
        s = self.trajectory[k]
        E = 0.5 * kinetic_extended(s.rho, s.mom) + pressure_potential(s.rho, self.eos)
        return E + self.defects[k].energy_density(self.eos)

    def violations(self, rel_tol: float = 1.0e-6, psd_rtol: float = 1.0e-12) -> list[str]:
        """Names of the record invariants that fail; empty when the record is valid."""
        out = []
        E0 = self.initial_energy
        scale = max(abs(E0) / self.grid.volume, 1.0e-300)
        for k, D in enumerate(self.defects):
            if not D.is_admissible(psd_rtol, max(D.scale(), scale)):
                out.append(f"defect positivity at t={self.times[k]:.6g}")
                break
        if not self.ledger.passes(rel_tol):
            out.append("energy ledger slack")
        E = np.array([self.total_energy(k) for k in range(len(self.trajectory))])
        if np.any(np.diff(E) > rel_tol * abs(E0)):
            out.append("energy with defects increases between snapshots")
        return out

    def validate(self, rel_tol: float = 1.0e-6) -> None:
        v = self.violations(rel_tol)
        if v:
            raise ValueError("invalid dissipative record: " + "; ".join(v))

    @property
    def is_valid(self) -> bool:
        return not self.violations()


def build_record(trajectory: Trajectory, ledger: EnergyLedger, eos: EosParams, block: int = 1,
                 provenance: dict | None = None) -> DissipativeRecord:
    """Record from a solver run, coarse-grained by ``block`` with defects per snapshot.

    Because block coarse-graining preserves the energy including defect
    energy, the run's ledger remains valid for the coarse record.
    """
    partition = BlockPartition(trajectory.grid, block)
    if block == 1:
        coarse = trajectory
        defects = [DefectField.zero(partition)] * len(trajectory)
    else:
        coarse = Trajectory([coarse_grain(s, partition) for s in trajectory])
        defects = [block_defects(s, partition, eos) for s in trajectory]
    prov = {"block": block, "fine_cells": trajectory.grid.cells}
    prov.update(provenance or {})
    return DissipativeRecord(coarse, defects, ledger, eos, prov)


# }}}


# {{{ smoothness


def _derivative(a: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)
    return np.gradient(a, h, axis=axis, edge_order=2)


def velocity_gradient_field(u: np.ndarray, spacing: float, periodic: bool = True) -> np.ndarray:
    """``G[a, b] = d u_a / d x_b`` by central differences."""
    d = u.shape[0]
    return np.stack([np.stack([_derivative(u[a], b, spacing, periodic) for b in range(d)]) for a in range(d)])


def symmetric_min_eigenvalue(D: np.ndarray) -> np.ndarray:
    if D.shape[0] == 1:
        return D[0, 0]
    a, b, c = D[0, 0], 0.5 * (D[0, 1] + D[1, 0]), D[1, 1]
    return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)


def one_sided_lipschitz_d(u: np.ndarray, spacing: float, periodic: bool = True) -> float:
    """``max_x(-lambda_min(sym grad u))``, the smallest ``d`` with ``D u + d I >= 0``.

    ``u`` has its components on axis 0. With ``periodic=False`` one-sided
    second-order differences are used at the array edges.
    """
    G = velocity_gradient_field(np.asarray(u, dtype=float), spacing, periodic)
    return float(np.max(-symmetric_min_eigenvalue(symmetric_part(G)))) + 0.0


@dataclass
class SmoothnessReport:
    times: np.ndarray
    rho_min: np.ndarray
    d_osl: np.ndarray
    grad_max: np.ndarray
    cell_increment: np.ndarray
    vacuum_fraction: np.ndarray

    @property
    def d_integral(self) -> float:
        """``int max(d_osl, 0) dt`` by the trapezoid rule over snapshots."""
        dp = np.maximum(self.d_osl, 0.0)
        if len(self.times) < 2:
            return 0.0
        return float(np.sum(0.5 * (dp[1:] + dp[:-1]) * np.diff(self.times)))


def smoothness_report(trajectory: Trajectory, eos: EosParams, floor: float = DENSITY_FLOOR) -> SmoothnessReport:
    """Density bounds and velocity-gradient statistics per snapshot.

    ``cell_increment`` is ``max|grad u| * h`` divided by the largest sound
    speed, a resolution-independent measure of how close the velocity is to
    jumping between neighbouring cells.
    """
    g = trajectory.grid
    rows = []
    for s in trajectory:
        u = velocity_from_conservative(s.rho, s.mom, floor)
        G = velocity_gradient_field(u, g.spacing)
        lam = symmetric_min_eigenvalue(symmetric_part(G))
        gmax = float(np.max(np.sqrt(np.sum(G**2, axis=(0, 1)))))
        cmax = float(np.max(sound_speed(s.rho, eos, floor)))
        rows.append((float(s.rho.min()), float(np.max(-lam)), gmax, gmax * g.spacing / cmax,
                     float(np.mean(s.rho < floor))))
    r = np.array(rows)
    return SmoothnessReport(trajectory.times, r[:, 0], r[:, 1], r[:, 2], r[:, 3], r[:, 4])


# }}}


# {{{ gronwall and compatibility


@dataclass
class GronwallReport:
    times: np.ndarray
    defect_mass: np.ndarray
    bound: np.ndarray
    constant: float
    tolerance: float
    warnings: list[str]

    @property
    def passed(self) -> bool:
        return bool(np.all(self.defect_mass <= self.bound + self.tolerance))

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def gronwall_constant(eos: EosParams, dim: int) -> float:
    """Rate multiplying ``d_osl`` in the defect-energy growth estimate."""
    return max(2.0, dim * (eos.gamma - 1.0)) / 2.0


def gronwall_defect_bound(record: DissipativeRecord, interval: tuple[float, float] | None = None,
                          rel_tol: float = 1.0e-6, vacuum_limit: float = 0.01) -> GronwallReport:
    """Compare ``D(tau)`` with ``D(t0) exp(int C d_osl^+ ds)`` over snapshot times.

    ``D`` is the integrated defect energy. The right-hand side is evaluated
    in log space so large rates do not overflow.
    """
    tr = record.trajectory
    k0, k1 = (0, len(tr) - 1) if interval is None else (tr.index_of(interval[0]), tr.index_of(interval[1]))
    sub = Trajectory(tr.snapshots[k0:k1 + 1])
    sm = smoothness_report(sub, record.eos)
    warnings = []
    if np.max(sm.vacuum_fraction) > vacuum_limit:
        warnings.append("velocity unreliable: vacuum fraction exceeds the limit")
        logger.warning(warnings[-1])
    C = gronwall_constant(record.eos, record.grid.dim)
    dp = np.maximum(sm.d_osl, 0.0)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dp[1:] + dp[:-1]) * np.diff(sm.times))])
    D = record.defect_mass()[k0:k1 + 1]
    with np.errstate(divide="ignore"):
        log_bound = np.log(D[0]) + C * cum if D[0] > 0 else np.full_like(cum, -np.inf)
    bound = np.exp(np.minimum(log_bound, 700.0))
    return GronwallReport(sm.times, D, bound, C, rel_tol * abs(record.initial_energy), warnings)


@dataclass
class CompatibilityVerdict:
    verdict: str
    violated: list[str]
    rho_min: float
    max_cell_increment: float
    d_integral: float
    defect_mass: float
    tolerance: float


def compatibility_check(record: DissipativeRecord, smoothness: SmoothnessReport | None = None,
                        rho_floor: float = 1.0e-3, increment_limit: float = 0.1,
                        rel_tol: float = 1.0e-6) -> CompatibilityVerdict:
    """CLASSICAL iff the density stays above ``rho_floor``, velocity gradients stay
    resolved (``cell_increment <= increment_limit``), ``int d_osl^+`` is finite and
    the defect mass never exceeds ``rel_tol * E(0)``; otherwise DISSIPATIVE with
    the violated hypotheses named.
    """
    sm = smoothness if smoothness is not None else smoothness_report(record.trajectory, record.eos)
    tol = rel_tol * abs(record.initial_energy)
    mass = float(np.max(record.defect_mass()))
    violated = []
    if np.min(sm.rho_min) < rho_floor:
        violated.append("density bounded below")
    if np.max(sm.cell_increment) > increment_limit:
        violated.append("bounded velocity gradient")
    if not math.isfinite(sm.d_integral):
        violated.append("integrable one-sided Lipschitz rate")
    if mass > tol:
        violated.append("vanishing defect mass")
    return CompatibilityVerdict(
        CLASSICAL if not violated else DISSIPATIVE, violated, float(np.min(sm.rho_min)),
        float(np.max(sm.cell_increment)), sm.d_integral, mass, tol,
    )


# }}}


# {{{ besov


@dataclass
class BesovEstimate:
    lq_norm: float
    seminorm: float
    argmax_shift: tuple[int, float]

    @property
    def total(self) -> float:
        return self.lq_norm + self.seminorm


def _lq(a: np.ndarray, q: float, cell: float) -> float:
    if a.size == 0:
        return 0.0
    if math.isinf(q):
        return float(np.max(np.abs(a)))
    return float((np.sum(np.abs(a) ** q) * cell) ** (1.0 / q))


def besov_seminorm(v: np.ndarray, spacing, alpha: float, q: float,
                   periodic: bool | Sequence[bool] = True) -> BesovEstimate:
    """``||v||_q + sup_xi ||v(. + xi) - v||_q / |xi|**alpha`` over axis-aligned grid shifts.

    Shifts run over ``xi = s * h`` for ``1 <= s <= n/2`` on each axis. Periodic
    axes wrap; on other axes (e.g. time) the difference is taken over the
    overlap. The discrete sup under-estimates the continuum one.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not q >= 1:
        raise ValueError("q must be at least 1")
    v = np.asarray(v, dtype=float)
    h = np.broadcast_to(np.asarray(spacing, dtype=float), (v.ndim,))
    per = np.broadcast_to(np.asarray(periodic, dtype=bool), (v.ndim,))
    cell = float(np.prod(h))
    best, arg = 0.0, (0, 0.0)
    for ax in range(v.ndim):
        n = v.shape[ax]
        for s in range(1, n // 2 + 1):
            if per[ax]:
                diff = np.roll(v, -s, axis=ax) - v
            else:
                diff = np.take(v, range(s, n), axis=ax) - np.take(v, range(n - s), axis=ax)
            val = _lq(diff, q, cell) / (s * h[ax]) ** alpha
            if val > best:
                best, arg = val, (ax, s * float(h[ax]))
    return BesovEstimate(_lq(v, q, cell), best, arg)


# }}}


# {{{ relative energy


def relative_energy_density(rho, mom, r, U, eos: EosParams, r_min: float = DENSITY_FLOOR) -> np.ndarray:
    """``1/2 rho |m/rho - U|^2 + P(rho) - P'(r)(rho - r) - P(r)`` per cell."""
    rho = np.asarray(rho, dtype=float)
    mom = np.asarray(mom, dtype=float)
    r = np.asarray(r, dtype=float)
    U = np.asarray(U, dtype=float)
    if np.any(r < r_min):
        raise ValueError(f"reference density below {r_min}")
    occ = rho > 0
    u = np.where(occ, mom / np.where(occ, rho, 1.0), 0.0)
    kin = 0.5 * rho * np.sum((u - U) ** 2, axis=0)
    # vacuum carrying momentum sits on the infinite branch of the kinetic energy
    kin = np.where(~occ & np.any(mom != 0, axis=0), np.inf, kin)
    bregman = pressure_potential(rho, eos) - pressure_potential_derivative(r, eos) * (rho - r) \
        - pressure_potential(r, eos)
    return kin + bregman


def relative_energy(field: ConservedField, r, U, eos: EosParams, r_min: float = DENSITY_FLOOR) -> float:
    return field.grid.integrate(relative_energy_density(field.rho, field.mom, r, U, eos, r_min))


@dataclass
class GapReport:
    times: np.ndarray
    gap: np.ndarray
    relative: np.ndarray
    defect_mass: np.ndarray
    consistency: float
    rate: float
    reference_d_osl: float
    reference_besov: BesovEstimate | None

    def rows(self):
        yield from zip(self.times, self.gap, self.relative, self.defect_mass)


def _reference_on(reference: Trajectory, grid: TorusGrid, t: float) -> ConservedField:
    s = reference.at(t)
    if s.grid == grid:
        return s
    if s.grid.dim != grid.dim or s.grid.cells % grid.cells:
        raise ValueError("reference grid is not a refinement of the record grid")
    return coarse_grain(s, BlockPartition(s.grid, s.grid.cells // grid.cells))


def fitted_rate(times, gap, base: float) -> float:
    """Smallest ``L`` with ``gap(t) <= base * exp(L t)`` at the sampled times."""
    times = np.asarray(times, dtype=float)
    gap = np.asarray(gap, dtype=float)
    pos = times > times[0]
    if not np.any(pos):
        return 0.0
    if base <= 0:
        return 0.0 if np.all(gap[pos] <= 0) else math.inf
    with np.errstate(divide="ignore"):
        lg = np.log(np.maximum(gap[pos], 0.0) / base) / (times[pos] - times[0])
    return float(max(np.max(lg), -math.inf))


def weak_strong_gap(record: DissipativeRecord, reference: Trajectory, times: Sequence[float] | None = None,
                    consistency: float = 0.0, besov_alpha: float = 0.75) -> GapReport:
    """Relative energy plus defect mass of ``record`` against a smooth ``reference``.

    The reference must share the record's grid or refine it by an integer
    factor (it is then block averaged). ``times`` must be snapshot times of
    both; by default the record times present in the reference are used.
    """
    eos = record.eos
    if times is None:
        times = []
        for t in record.times:
            try:
                reference.index_of(t)
                times.append(float(t))
            except KeyError:
                pass
    times = np.asarray(times, dtype=float)
    rel, mass = [], []
    for t in times:
        s = record.trajectory.at(t)
        ref = _reference_on(reference, record.grid, t)
        U = velocity_from_conservative(ref.rho, ref.mom)
        rel.append(relative_energy(s, ref.rho, U, eos))
        mass.append(record.defect_at(t).mass(eos))
    rel, mass = np.array(rel), np.array(mass)
    gap = rel + mass
    rate = fitted_rate(times, gap, gap[0] + consistency) if len(times) else 0.0
    ref_d = max(one_sided_lipschitz_d(velocity_from_conservative(s.rho, s.mom), s.grid.spacing) for s in reference)
    q = 4.0 * eos.gamma / (eos.gamma - 1.0)
    rg = reference.grid
    besov = besov_seminorm(reference.final.rho, rg.spacing, besov_alpha, q)
    return GapReport(times, gap, rel, mass, consistency, rate, ref_d, besov)


# }}}
