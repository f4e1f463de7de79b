"""Patchwork assembly on dyadic blocks and weak-* versus strong convergence diagnostics.

Block momenta are supplied by the caller (constructing genuine block solutions
is out of reach here); the module checks the pasting conditions, the kinetic
constraint and the no-flux weak residuals, and ships synthetic fixtures.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .core import ConservedField, EosParams, TorusGrid, Trajectory, pressure
from .testfunctions import TestFunctionBank, _factor_cell_average, _factor_derivative_average
from .weak_form import ResidualReport, time_functional

Block = tuple[tuple[int, int], ...]  # per-axis half-open cell index ranges


class InfeasibleConstraintError(ValueError):
    pass


def kinetic_constraint_momentum(rho_i, Lambda, eos: EosParams, dim: int):
    """``|m_i| = sqrt(2 rho_i (Lambda - p(rho_i) dim / 2))``."""
    rho_i = np.asarray(rho_i, dtype=float)
    slack = np.asarray(Lambda, dtype=float) - pressure(rho_i, eos) * dim / 2.0
    if np.any(slack < 0):
        raise InfeasibleConstraintError("Lambda is below p(rho) * dim / 2")
    out = np.sqrt(2.0 * rho_i * slack)
    return out[()] if out.ndim == 0 else out


def dyadic_blocks(grid: TorusGrid, level: int) -> list[Block]:
    """``2**level`` equal blocks per axis."""
    n = 2**level
    if grid.cells % n:
        raise ValueError(f"{grid.cells} cells cannot be split into {n} blocks per axis")
    w = grid.cells // n
    return [tuple((i * w, (i + 1) * w) for i in idx) for idx in itertools.product(range(n), repeat=grid.dim)]


def _slices(block: Block):
    return tuple(slice(a, b) for a, b in block)


@dataclass(frozen=True, eq=False)
class PatchSpec:
    grid: TorusGrid
    blocks: tuple[Block, ...]
    rho: tuple[float, ...]
    period: float
    Lambda: float
    eos: EosParams = EosParams()

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(tuple(ax) for ax in b) for b in self.blocks))
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        if len(self.blocks) != len(self.rho):
            raise ValueError("one density per block is required")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if min(self.rho) <= 0:
            raise ValueError("block densities must be positive")
        cover = np.zeros(self.grid.shape, dtype=int)
        for b in self.blocks:
            if len(b) != self.grid.dim or any(not 0 <= lo < hi <= self.grid.cells for lo, hi in b):
                raise ValueError(f"block {b} does not fit the grid")
            cover[_slices(b)] += 1
        if not np.all(cover == 1):
            raise ValueError("blocks must be disjoint and cover the grid")
        need = max(float(pressure(r, self.eos)) for r in self.rho) * self.grid.dim / 2.0
        if self.Lambda < need:
            raise InfeasibleConstraintError(f"Lambda={self.Lambda} is below max p(rho_i) dim / 2 = {need}")

    def density(self) -> np.ndarray:
        rho = np.empty(self.grid.shape)
        for b, r in zip(self.blocks, self.rho):
            rho[_slices(b)] = r
        return rho

    def block_centers(self, i: int) -> tuple[np.ndarray, ...]:
        return tuple(c[_slices(self.blocks[i])] for c in self.grid.centers)

    def block_bounds(self, i: int) -> tuple[tuple[float, float], ...]:
        h = self.grid.spacing
        return tuple((-1.0 + lo * h, -1.0 + hi * h) for lo, hi in self.blocks[i])


BlockMomentum = Callable[[float, tuple[np.ndarray, ...]], np.ndarray]


def patchwork_assemble(spec: PatchSpec, fields: Sequence[BlockMomentum | None], horizon: float,
                       steps_per_period: int = 16, atol: float = 1.0e-12) -> Trajectory:
    """Paste block momenta ``m_i(t - kT)`` into one periodic-in-time trajectory.

    ``fields[i](s, X)`` returns the momentum ``(dim, *block_shape)`` at local
    time ``s`` in ``[0, T]`` on the block cell centres ``X``; ``None`` means
    zero momentum. Local times are computed from integer step counters so
    the result is exactly ``T``-periodic at the output times.
    """
    if len(fields) != len(spec.blocks):
        raise ValueError("one momentum field per block is required")
    T, K = spec.period, steps_per_period
    rho = spec.density()
    X = [spec.block_centers(i) for i in range(len(spec.blocks))]
    for i, f in enumerate(fields):
        if f is None:
            continue
        for s in (0.0, T):
            if np.max(np.abs(f(s, X[i])), initial=0.0) > atol:
                raise ValueError(f"block {i} momentum does not vanish at local time {s:g}")
    cache = {}

    def momentum_at(j: int) -> np.ndarray:
        if j not in cache:
            s = j * T / K
            m = np.zeros((spec.grid.dim, *spec.grid.shape))
            for i, f in enumerate(fields):
                if f is not None:
                    m[(slice(None),) + _slices(spec.blocks[i])] = f(s, X[i])
            cache[j] = m
        return cache[j]

    total = int(round(horizon / T * K))
    snaps = [ConservedField(spec.grid, rho, momentum_at(k % K), k * T / K) for k in range(total + 1)]
    return Trajectory(snaps)


def trace_free_stress(rho, mom) -> np.ndarray:
    """``m (x) m / rho - |m|^2 / (d rho) I`` with diagonal entries built to sum to zero exactly."""
    rho = np.asarray(rho, dtype=float)
    mom = np.asarray(mom, dtype=float)
    d = mom.shape[0]
    occ = rho > 0
    inv = np.where(occ, 1.0 / np.where(occ, rho, 1.0), 0.0)
    S = np.einsum("a...,b...->ab...", mom, mom) * inv
    if d == 1:
        S[0, 0] = 0.0
    else:
        half = 0.5 * (mom[0] ** 2 - mom[1] ** 2) * inv
        S[0, 0] = half
        S[1, 1] = -half
    return S


def _block_cell_averages(bank: TestFunctionBank, bounds, shape):
    """Cell averages of bank functions in the block coordinate ``xi in [0, 1]``.

    On ``[0, 1]`` the trigonometric factors cover half a period, so they are
    not periodic on the block and see fluxes through its faces.
    """
    d = len(bounds)
    vals, grads = [], []
    for f in bank.functions:
        avg, dav = [], []
        for (kind, k), (lo, hi), n in zip(f.factors, bounds, shape):
            xc = (np.arange(n) + 0.5) / n
            avg.append(_factor_cell_average(kind, k, xc, 1.0 / n))
            dav.append(_factor_derivative_average(kind, k, xc, 1.0 / n) / (hi - lo))
        out = avg[0]
        for a in avg[1:]:
            out = np.multiply.outer(out, a)
        vals.append(out)
        gs = []
        for b in range(d):
            g = dav[0] if b == 0 else avg[0]
            for a in range(1, d):
                g = np.multiply.outer(g, dav[a] if a == b else avg[a])
            gs.append(g)
        grads.append(np.stack(gs))
    return np.stack(vals), np.stack(grads)


def noflux_weak_residual(traj: Trajectory, spec: PatchSpec, block: int, bank: TestFunctionBank) -> dict:
    """No-flux weak residuals of one block over one period.

    The bank functions are evaluated in the block coordinate ``xi in [0, 1]``
    and carry no boundary condition there. Returns ``{"divergence": ResidualReport, "momentum":
    ResidualReport}``: the first pairs ``psi(t) m . grad chi``, the second is
    the weak momentum balance with the trace-free stress.
    """
    sl = _slices(spec.blocks[block])
    bounds = spec.block_bounds(block)
    shape = tuple(hi - lo for lo, hi in spec.blocks[block])
    cell = spec.grid.cell_volume
    values, grads = _block_cell_averages(bank, bounds, shape)
    d = spec.grid.dim
    rho_i = spec.rho[block]
    ax = tuple(range(1, d + 1))
    pairs_div, pairs_state, pairs_flux = [], [], []
    for s in traj:
        m = s.mom[(slice(None),) + sl]
        S = trace_free_stress(np.full(shape, rho_i), m)
        pairs_div.append(sum(np.tensordot(grads[:, b], m[b], axes=(ax, tuple(range(d)))) for b in range(d)))
        pairs_state.append(np.stack([np.tensordot(values, m[j], axes=(ax, tuple(range(d)))) for j in range(d)]))
        pairs_flux.append(np.stack([sum(np.tensordot(grads[:, b], S[j, b], axes=(ax, tuple(range(d))))
                                        for b in range(d)) for j in range(d)]))
    div = np.stack(pairs_div) * cell
    state = np.stack(pairs_state) * cell
    flux = np.stack(pairs_flux) * cell
    t = traj.times - traj.times[0]
    labs_div, v_div, labs_mom, v_mom = [], [], [], []
    for psi in bank.envelopes:
        r = -time_functional(t, psi, div, np.zeros_like(div))
        labs_div += [f"{f.label}|{psi.label}" for f in bank.functions]
        v_div.append(r)
        r2 = time_functional(t, psi, flux, state)
        labs_mom += [f"{f.label}|{psi.label}|e{j}" for j in range(d) for f in bank.functions]
        v_mom.append(r2.ravel())
    v_div, v_mom = np.concatenate(v_div), np.concatenate(v_mom)
    return {
        "divergence": ResidualReport(labs_div, v_div, np.zeros_like(v_div), f"no-flux divergence block {block}"),
        "momentum": ResidualReport(labs_mom, v_mom, np.zeros_like(v_mom), f"no-flux momentum block {block}"),
    }


def divergence_free_bump(spec: PatchSpec, block: int, amplitude: float = 1.0) -> BlockMomentum:
    """Momentum ``g(s) * perp-grad(sin^2 sin^2)`` on a 2D block, vanishing at ``s in {0, T}``.

    The stream function and its gradient vanish on the block boundary, so the
    field has no normal flux.
    """
    if spec.grid.dim != 2:
        raise ValueError("the divergence-free bump needs two dimensions")
    (x0, x1), (y0, y1) = spec.block_bounds(block)
    Lx, Ly, T = x1 - x0, y1 - y0, spec.period

    def f(s, X):
        xi, eta = (X[0] - x0) / Lx, (X[1] - y0) / Ly
        g = amplitude * np.sin(np.pi * s / T) ** 2
        dpsi_dx = 2 * np.pi / Lx * np.sin(np.pi * xi) * np.cos(np.pi * xi) * np.sin(np.pi * eta) ** 2
        dpsi_dy = 2 * np.pi / Ly * np.sin(np.pi * eta) * np.cos(np.pi * eta) * np.sin(np.pi * xi) ** 2
        return g * np.stack([dpsi_dy, -dpsi_dx])

    return f


# {{{ oscillating sequences


@dataclass(eq=False)
class OscillatingSequence:
    """Members ``n = 0..n_max`` on one grid with target ``rho_bar``, ``m = 0``.

    Member ``n`` is a ``2**(n+1)``-per-axis checkerboard of amplitude
    ``amplitudes[n]``; the members are diagnostic fixtures, not Euler solutions.
    """

    members: list[ConservedField]
    target: ConservedField
    delta: float
    amplitudes: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = self.target.grid
        if any(m.grid != grid for m in self.members):
            raise ValueError("all members must share the target grid")
        if self.amplitudes is None:
            self.amplitudes = np.full(len(self.members), self.delta)

    @property
    def grid(self) -> TorusGrid:
        return self.target.grid

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory([m]) for m in self.members]


def checkerboard_pattern(grid: TorusGrid, level: int) -> np.ndarray:
    """``+-1`` with ``2**(level+1)`` patches per axis; requires exact alignment."""
    n = 2 ** (level + 1)
    if grid.cells % n:
        raise ValueError(f"grid of {grid.cells} cells cannot resolve level {level}")
    idx = [np.arange(grid.cells) // (grid.cells // n)] * grid.dim
    parity = sum(np.meshgrid(*idx, indexing="ij")) % 2
    return 1.0 - 2.0 * parity


def checkerboard_sequence(rho_bar: float, delta: float, n_max: int, grid: TorusGrid,
                          amplitude_decay: float = 1.0) -> OscillatingSequence:
    """Densities ``rho_bar +- delta * amplitude_decay**n`` on refining checkerboards."""
    if not 0 < delta < rho_bar:
        raise ValueError("need 0 < delta < rho_bar")
    zero = np.zeros((grid.dim, *grid.shape))
    amps = delta * amplitude_decay ** np.arange(n_max + 1)
    members = [ConservedField(grid, rho_bar + a * checkerboard_pattern(grid, n), zero)
               for n, a in enumerate(amps)]
    return OscillatingSequence(members, ConservedField.constant(grid, rho_bar), delta, amps)


@dataclass
class WeakStarTable:
    labels: list[str]
    rho_pairings: np.ndarray  # (members, F): <rho_n - rho_0, chi>
    mom_pairings: np.ndarray  # (members, d, F): <m_n, chi>
    gradient_sup: np.ndarray
    volume: float
    delta: float

    @property
    def level_max(self) -> np.ndarray:
        return np.max(np.abs(self.rho_pairings), axis=1)

    @property
    def decay_ratios(self) -> np.ndarray:
        m = self.level_max
        with np.errstate(divide="ignore", invalid="ignore"):
            return m[1:] / m[:-1]

    def bound_holds(self, amplitudes) -> bool:
        """``|<rho_n - rho_0, chi>| <= amplitude_n |Omega| ||grad chi|| 2**-n``."""
        n = np.arange(self.rho_pairings.shape[0])
        rhs = np.asarray(amplitudes)[:, None] * self.volume * self.gradient_sup[None, :] * 2.0 ** -n[:, None]
        return bool(np.all(np.abs(self.rho_pairings) <= rhs + 1.0e-14))


def weakstar_diagnostics(seq: OscillatingSequence, bank) -> WeakStarTable:
    """Pairings of every member against every spatial function of ``bank``.

    ``bank`` is anything exposing ``cell_averages(grid)``, ``labels`` and
    ``functions`` with ``gradient_sup()``.
    """
    if len(seq.members) < 3:
        raise ValueError("weak-* diagnostics need at least three members")
    g = seq.grid
    values, _ = bank.cell_averages(g)
    ax = tuple(range(1, g.dim + 1))
    cells = tuple(range(g.dim))
    r = np.stack([np.tensordot(values, m.rho - seq.target.rho, axes=(ax, cells)) for m in seq.members])
    mp = np.stack([np.stack([np.tensordot(values, m.mom[j], axes=(ax, cells)) for j in range(g.dim)])
                   for m in seq.members])
    sups = np.array([f.gradient_sup() for f in bank.functions])
    return WeakStarTable(list(bank.labels), r * g.cell_volume, mp * g.cell_volume, sups, g.volume, seq.delta)


@dataclass
class SeparationReport:
    distances: np.ndarray
    threshold: float

    @property
    def estimate(self) -> float:
        return float(np.min(self.distances))

    @property
    def verdict(self) -> str:
        return "SEPARATION" if self.estimate >= self.threshold else "NO-SEPARATION"


def l1_separation(seq: OscillatingSequence) -> SeparationReport:
    """``min_n int |rho_n - rho_0|``, judged against ``delta |Omega| / 2``."""
    if len(seq.members) < 3:
        raise ValueError("separation needs at least three members")
    g = seq.grid
    d = np.array([g.integrate(np.abs(m.rho - seq.target.rho)) for m in seq.members])
    return SeparationReport(d, 0.5 * seq.delta * g.volume)


# }}}
