"""Weak-form residuals, the integrated energy inequality and consistency sweeps.

Test functions are ``phi(t, x) = psi(t) chi(x)``. Spatial integrals are exact
for piecewise-constant cell data (cell averages of ``chi`` and of its
gradient); time integrals are exact for the piecewise-linear interpolant of
the snapshots. The reported quadrature estimate compares against the same
functional evaluated on every other snapshot.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .core import EosParams, Trajectory, pressure, total_energy, velocity_from_conservative
from .defects import DefectField
from .solver import EnergyLedger, ViscosityModel, velocity_gradient, viscous_stress
from .testfunctions import GAUSS_NODES, GAUSS_WEIGHTS, Envelope, TestFunctionBank, time_weights


@dataclass
class ResidualReport:
    labels: list[str]
    values: np.ndarray
    quadrature: np.ndarray
    description: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.quadrature = np.asarray(self.quadrature, dtype=float)
        if not (len(self.labels) == self.values.size == self.quadrature.size):
            raise ValueError("labels, values and quadrature estimates must align")

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))

    def rows(self):
        yield from zip(self.labels, self.values, self.quadrature)

    def subset(self, mask) -> ResidualReport:
        mask = np.asarray(mask, dtype=bool)
        labels = [lab for lab, keep in zip(self.labels, mask) if keep]
        return ResidualReport(labels, self.values[mask], self.quadrature[mask], self.description)


# {{{ temporal functional


def _restricted(traj: Trajectory, tau: float) -> Trajectory:
    try:
        return traj.until(tau)
    except KeyError:
        raise ValueError(f"tau={tau} is not a snapshot time") from None


def time_functional(times, psi: Envelope, rate: np.ndarray, state: np.ndarray) -> np.ndarray:
    """``[psi state]_{t0}^{tau} - int psi' state - int psi rate`` along axis 0.

    ``times`` are measured from the start of the trajectory.
    """
    wd = time_weights(times, psi.derivative, psi.breakpoints)
    w = time_weights(times, psi.value, psi.breakpoints)
    boundary = psi.value(times[-1]) * state[-1] - psi.value(times[0]) * state[0]
    return boundary - np.tensordot(wd, state, axes=1) - np.tensordot(w, rate, axes=1)


def _with_estimate(times, psi, rate, state):
    full = time_functional(times, psi, rate, state)
    if len(times) < 3:
        return full, np.zeros_like(full)
    keep = np.zeros(len(times), dtype=bool)
    keep[::2] = True
    keep[-1] = True
    half = time_functional(times[keep], psi, rate[keep], state[keep])
    return full, np.abs(full - half) / 3.0


# }}}


# {{{ spatial pairings


def _pair(a: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    """Contract the trailing ``dim`` axes of ``a`` (``(..., *cells)``) with ``b`` (``(F, *cells)``)."""
    ax = tuple(range(a.ndim - dim, a.ndim))
    return np.tensordot(a, b, axes=(ax, tuple(range(1, dim + 1))))


def _flux_tensor(rho, mom, eos: EosParams) -> np.ndarray:
    """``m (x) m / rho + p I`` per cell (zero kinetic part in vacuum)."""
    d = mom.shape[0]
    occ = rho > 0
    inv = np.where(occ, 1.0 / np.where(occ, rho, 1.0), 0.0)
    F = np.einsum("a...,b...->ab...", mom, mom) * inv
    p = pressure(rho, eos)
    for j in range(d):
        F[j, j] = F[j, j] + p
    return F


def continuity_pairings(traj: Trajectory, values: np.ndarray, grads: np.ndarray):
    """Per snapshot ``<rho, chi>`` and ``<m, grad chi>``, each of shape ``(K, F)``."""
    g = traj.grid
    vol = g.cell_volume
    state = np.stack([_pair(s.rho, values, g.dim) for s in traj]) * vol
    flux = np.stack([sum(_pair(s.mom[b], grads[:, b], g.dim) for b in range(g.dim)) for s in traj]) * vol
    return state, flux


def momentum_pairings(traj: Trajectory, values: np.ndarray, grads: np.ndarray, eos: EosParams):
    """Per snapshot ``<m_j, chi>`` and ``<F_jb, d_b chi>``, each of shape ``(K, d, F)``."""
    g = traj.grid
    vol = g.cell_volume
    state, flux = [], []
    for s in traj:
        F = _flux_tensor(s.rho, s.mom, eos)
        state.append(_pair(s.mom, values, g.dim))
        flux.append(np.stack([sum(_pair(F[j, b], grads[:, b], g.dim) for b in range(g.dim))
                              for j in range(g.dim)]))
    return np.stack(state) * vol, np.stack(flux) * vol


def defect_pairings(defects: DefectField, grads: np.ndarray) -> np.ndarray:
    """``sum_b Rv_jb <d_b chi> + Rp <d_j chi>`` integrated, shape ``(d, F)``."""
    g = defects.grid
    d = g.dim
    out = np.stack([
        sum(_pair(defects.Rv[j, b], grads[:, b], d) for b in range(d)) + _pair(defects.Rp, grads[:, j], d)
        for j in range(d)
    ])
    return out * g.cell_volume


def _defect_series(defects, traj: Trajectory, full_len: int):
    if defects is None:
        return None
    if isinstance(defects, DefectField):
        series = [defects] * len(traj)
    else:
        series = list(defects)
        if len(series) != full_len:
            raise ValueError("time-indexed defects must align with the trajectory snapshots")
        series = series[: len(traj)]
    for D in series:
        if D.grid != traj.grid:
            raise ValueError("defect partition is incompatible with the trajectory grid")
    return series


# }}}


# {{{ residuals


def _labels(bank: TestFunctionBank, suffixes=("",)):
    return [f"{f.label}|{e.label}{s}" for s in suffixes for f in bank.functions for e in bank.envelopes]


def continuity_residual(traj: Trajectory, bank: TestFunctionBank, tau: float) -> ResidualReport:
    """``[int rho phi]_0^tau - int_0^tau int (rho d_t phi + m . grad phi)`` per test function."""
    tr = _restricted(traj, tau)
    values, grads = bank.cell_averages(tr.grid)
    state, flux = continuity_pairings(tr, values, grads)
    t = tr.times - tr.times[0]
    vals, quad = [], []
    for psi in bank.envelopes:
        r, q = _with_estimate(t, psi, flux, state)
        vals.append(r)
        quad.append(q)
    # order: spatial function major, envelope minor
    return ResidualReport(_labels(bank), np.stack(vals, 1).ravel(), np.stack(quad, 1).ravel(),
                          f"continuity tau={tau:g} {bank.describe()}")


def momentum_residual(traj: Trajectory, bank: TestFunctionBank, tau: float, eos: EosParams,
                      defects=None) -> ResidualReport:
    """Weak momentum residual per component, optionally including the defect pairing.

    ``defects`` is a single ``DefectField`` (held constant in time) or a list
    aligned with the snapshots of ``traj``; its blocks must be the trajectory's
    cells. Labels carry the component as ``|e<j>``.
    """
    tr = _restricted(traj, tau)
    series = _defect_series(defects, tr, len(traj))
    values, grads = bank.cell_averages(tr.grid)
    state, flux = momentum_pairings(tr, values, grads, eos)
    if series is not None:
        flux = flux + np.stack([defect_pairings(D, grads) for D in series])
    t = tr.times - tr.times[0]
    d = tr.grid.dim
    vals = np.empty((d, len(bank.functions), len(bank.envelopes)))
    quad = np.empty_like(vals)
    for e, psi in enumerate(bank.envelopes):
        r, q = _with_estimate(t, psi, flux, state)
        vals[:, :, e] = r
        quad[:, :, e] = q
    desc = f"momentum tau={tau:g} defects={'yes' if series is not None else 'no'} {bank.describe()}"
    return ResidualReport(_labels(bank, [f"|e{j}" for j in range(d)]), vals.ravel(), quad.ravel(), desc)


def viscous_pairing(traj: Trajectory, bank: TestFunctionBank, tau: float, model: ViscosityModel,
                    floor: float = 1.0e-10) -> ResidualReport:
    """``epsilon int psi int S : grad chi`` with the solver's discrete stress.

    The viscous momentum residual is approximately the negative of this.
    """
    tr = _restricted(traj, tau)
    g = tr.grid
    values, grads = bank.cell_averages(g)
    pair = []
    for s in tr:
        S = viscous_stress(velocity_gradient(velocity_from_conservative(s.rho, s.mom, floor), g.spacing), model)
        pair.append(np.stack([sum(_pair(S[j, b], grads[:, b], g.dim) for b in range(g.dim))
                              for j in range(g.dim)]))
    rate = model.epsilon * np.stack(pair) * g.cell_volume
    t = tr.times - tr.times[0]
    d = g.dim
    vals = np.empty((d, len(bank.functions), len(bank.envelopes)))
    quad = np.empty_like(vals)
    for e, psi in enumerate(bank.envelopes):
        # the functional returns -int psi rate for zero state
        r, q = _with_estimate(t, psi, rate, np.zeros_like(rate))
        vals[:, :, e] = -r
        quad[:, :, e] = q
    return ResidualReport(_labels(bank, [f"|e{j}" for j in range(d)]), vals.ravel(), quad.ravel(),
                          f"viscous pairing eps={model.epsilon:g} tau={tau:g}")


# }}}


# {{{ energy inequality


@dataclass
class EnergyCheckReport:
    labels: list[str]
    min_slack: np.ndarray
    worst_pair: list[tuple[float, float]]
    tolerance: float
    initial_energy: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.min_slack >= -self.tolerance))

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def _interval_psi_integrals(times, psi: Envelope) -> np.ndarray:
    out = np.zeros(len(times) - 1)
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        cuts = [a] + [p for p in psi.breakpoints if a < p < b] + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            t = 0.5 * (hi - lo) * GAUSS_NODES + 0.5 * (hi + lo)
            out[k] += 0.5 * (hi - lo) * np.sum(GAUSS_WEIGHTS * psi.value(t))
    return out


def energy_series(traj: Trajectory, eos: EosParams, defects=None) -> np.ndarray:
    """Total energy per snapshot, plus defect energy when defects are given."""
    E = np.array([total_energy(s, eos) for s in traj])
    series = _defect_series(defects, traj, len(traj))
    if series is not None:
        E = E + np.array([D.mass(eos) for D in series])
    return E


def energy_inequality_slack(times, energy, psi: Envelope) -> tuple[float, tuple[int, int]]:
    """Minimum over snapshot pairs of ``int psi' E - [psi E]`` for piecewise-linear ``E``.

    Integrating by parts, the slack over ``[t_i, t_j]`` equals
    ``-int psi E'``, a sum of per-interval terms, so all pairs follow from one
    cumulative sum.
    """
    times = np.asarray(times, dtype=float)
    energy = np.asarray(energy, dtype=float)
    if len(times) < 2:
        return 0.0, (0, 0)
    q = -np.diff(energy) / np.diff(times) * _interval_psi_integrals(times, psi)
    C = np.concatenate([[0.0], np.cumsum(q)])
    best, pair = 0.0, (0, 0)
    run_max, arg = C[0], 0
    for j in range(1, len(C)):
        if C[j] - run_max < best:
            best, pair = C[j] - run_max, (arg, j)
        if C[j] > run_max:
            run_max, arg = C[j], j
    return float(best), pair


def energy_inequality_check(traj: Trajectory, envelopes: Sequence[Envelope], eos: EosParams, defects=None,
                            ledger: EnergyLedger | None = None, rel_tol: float = 1.0e-6) -> EnergyCheckReport:
    """Integrated energy inequality for every envelope and every pair of times.

    Without defects and with a ledger, the per-step ledger energies are used;
    otherwise the snapshot energies (plus defect energy) are.
    """
    if ledger is not None and defects is None:
        times, E = ledger.times, ledger.energy
    else:
        times, E = traj.times, energy_series(traj, eos, defects)
    times = times - times[0]
    labels, slack, pairs = [], [], []
    for psi in envelopes:
        s, (i, j) = energy_inequality_slack(times, E, psi)
        labels.append(psi.label)
        slack.append(s)
        pairs.append((float(times[i]), float(times[j])))
    return EnergyCheckReport(labels, np.array(slack), pairs, rel_tol * abs(E[0]), float(E[0]))


def dissipated_energy(traj: Trajectory, psi: Envelope, eos: EosParams, tau: float | None = None) -> float:
    """``|int psi' E dt - [psi E]_0^tau|``, the weighted energy loss."""
    tr = traj if tau is None else _restricted(traj, tau)
    t = tr.times - tr.times[0]
    E = np.array([total_energy(s, eos) for s in tr])
    wd = time_weights(t, psi.derivative, psi.breakpoints)
    return float(abs(wd @ E - (psi.value(t[-1]) * E[-1] - psi.value(t[0]) * E[0])))


# }}}


# {{{ consistency sweep


@dataclass
class ConsistencyTable:
    """Consistency errors per member (rows) and test function (columns)."""

    epsilons: np.ndarray
    labels_e1: list[str]
    labels_e2: list[str]
    labels_e3: list[str]
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    floor_e1: np.ndarray
    floor_e2: np.ndarray
    psi_sup: np.ndarray
    initial_energy: float
    notes: list[str] = field(default_factory=list)

    @staticmethod
    def _monotone(table, floor):
        return np.all(np.diff(table, axis=0) <= floor[None, :], axis=0)

    @property
    def monotone_e1(self) -> np.ndarray:
        return self._monotone(self.e1, self.floor_e1)

    @property
    def monotone_e2(self) -> np.ndarray:
        return self._monotone(self.e2, self.floor_e2)

    @property
    def monotone_e3(self) -> np.ndarray:
        return self._monotone(self.e3, np.full(self.e3.shape[1], 1.0e-12 * abs(self.initial_energy)))

    @property
    def bound_constant(self) -> float:
        """Smallest ``c`` with ``E3[psi] <= c ||psi||_inf`` over the whole table."""
        return float(np.max(self.e3 / self.psi_sup[None, :]))

    @property
    def bound_holds(self) -> bool:
        return bool(np.isfinite(self.bound_constant) and self.bound_constant <= self.initial_energy)

    @property
    def decreasing(self) -> bool:
        return bool(self.monotone_e1.all() and self.monotone_e2.all() and self.monotone_e3.all())

    def rows(self):
        for kind, labels, table in (("E1", self.labels_e1, self.e1), ("E2", self.labels_e2, self.e2),
                                    ("E3", self.labels_e3, self.e3)):
            for n, eps in enumerate(self.epsilons):
                for lab, v in zip(labels, table[n]):
                    yield kind, float(eps), lab, float(v)


def consistency_sweep(trajectories: Sequence[Trajectory], epsilons: Sequence[float], bank: TestFunctionBank,
                      eos: EosParams, tau: float | None = None) -> ConsistencyTable:
    """Tabulate ``E1 = |continuity residual|``, ``E2 = |momentum residual|`` and the
    envelope-weighted energy loss ``E3`` for each member of a viscosity sweep.

    Members may live on different grids. Monotonicity is judged up to a floor
    equal to the largest quadrature estimate of the two members compared.
    """
    if len(trajectories) < 3:
        raise ValueError("a consistency sweep needs at least three members")
    if tau is None:
        tau = min(float(tr.times[-1] - tr.times[0]) for tr in trajectories)
    e1, e2, e3, q1, q2 = [], [], [], [], []
    for tr in trajectories:
        r1 = continuity_residual(tr, bank, tau)
        r2 = momentum_residual(tr, bank, tau, eos)
        e1.append(np.abs(r1.values))
        e2.append(np.abs(r2.values))
        q1.append(r1.quadrature)
        q2.append(r2.quadrature)
        e3.append([dissipated_energy(tr, psi, eos, tau) for psi in bank.envelopes])
    floor1 = 2.0 * np.max(q1, axis=0) + 1.0e-13
    floor2 = 2.0 * np.max(q2, axis=0) + 1.0e-13
    E0 = max(total_energy(tr.initial, eos) for tr in trajectories)
    return ConsistencyTable(
        epsilons=np.asarray(epsilons, dtype=float),
        labels_e1=r1.labels, labels_e2=r2.labels, labels_e3=[p.label for p in bank.envelopes],
        e1=np.array(e1), e2=np.array(e2), e3=np.array(e3),
        floor_e1=floor1, floor_e2=floor2,
        psi_sup=np.array([p.sup() for p in bank.envelopes]),
        initial_energy=E0,
    )


# }}}
