"""Initial states used by the CLI, the tests and the acceptance studies."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .core import ConservedField, EosParams, TorusGrid, pressure, sound_speed


def constant_state(grid: TorusGrid, rho: float = 1.0, velocity=None) -> ConservedField:
    u = np.zeros(grid.dim) if velocity is None else np.asarray(velocity, dtype=float)
    return ConservedField.constant(grid, rho, rho * u)


def acoustic_pulse(grid: TorusGrid, amplitude: float = 1.0e-2, rho0: float = 1.0,
                   eos: EosParams = EosParams(), wavenumber: int = 1) -> ConservedField:
    """Right-running linear acoustic wave ``rho = rho0 (1 + A sin(k pi x))``.

    The momentum is the matching simple-wave perturbation ``m = c0 (rho - rho0)``
    along the first axis, so the state is smooth and periodic.
    """
    x = grid.centers[0]
    drho = rho0 * amplitude * np.sin(wavenumber * np.pi * x)
    c0 = float(sound_speed(rho0, eos))
    mom = np.zeros((grid.dim, *grid.shape))
    mom[0] = c0 * drho
    return ConservedField(grid, rho0 + drho, mom)


def riemann_problem(grid: TorusGrid, left: tuple[float, float], right: tuple[float, float],
                    interfaces: tuple[float, float] = (-0.5, 0.5)) -> ConservedField:
    """Piecewise-constant data: ``left`` inside ``interfaces``, ``right`` outside.

    ``left`` and ``right`` are ``(density, velocity along x)`` pairs. On the
    torus two interfaces are unavoidable.
    """
    x = grid.centers[0]
    inside = (x >= interfaces[0]) & (x < interfaces[1])
    rho = np.where(inside, left[0], right[0])
    mom = np.zeros((grid.dim, *grid.shape))
    mom[0] = np.where(inside, left[0] * left[1], right[0] * right[1])
    return ConservedField(grid, rho, mom)


def stationary_shock_states(rho_up: float, mach: float, eos: EosParams) -> tuple[float, float, float]:
    """Upstream density, downstream density and common momentum of a standing shock.

    The upstream state moves right with Mach number ``mach > 1``; the
    downstream density solves ``m^2/rho + p(rho) = const`` on the compressive
    branch.
    """
    if not mach > 1:
        raise ValueError("a standing shock needs a supersonic upstream state")
    u = mach * float(sound_speed(rho_up, eos))
    m = rho_up * u
    flux_up = m**2 / rho_up + float(pressure(rho_up, eos))

    def g(r):
        return m**2 / r + float(pressure(r, eos)) - flux_up

    hi = rho_up * 2.0
    while g(hi) < 0:
        hi *= 2.0
    rho_down = brentq(g, rho_up * (1 + 1e-12), hi, xtol=1e-15, rtol=1e-15)
    return rho_up, rho_down, m


def stationary_shock(grid: TorusGrid, rho_up: float = 1.0, mach: float = 2.0,
                     eos: EosParams = EosParams(), position: float = 0.0,
                     ramp_width: float | None = None) -> ConservedField:
    """Data whose solution has a standing shock at ``position``.

    Upstream (supersonic) state on ``[-1, position)``, downstream on
    ``[position, 1)``, with the same momentum everywhere. The wrap-around
    interface at ``x = +-1`` opens into a transonic expansion; with
    ``ramp_width`` the density there is blended by a cosine ramp of that width
    instead of jumping, which keeps the expansion smooth from the start.
    """
    r_up, r_down, m = stationary_shock_states(rho_up, mach, eos)
    x = grid.centers[0]
    rho = np.where(x < position, r_up, r_down)
    if ramp_width is not None:
        if not 0 < ramp_width < 2 * min(1 - position, 1 + position):
            raise ValueError("ramp must fit between the shock and the wrap-around point")
        s = np.where(x >= position, x - 1.0, x + 1.0)  # signed distance to the wrap point
        theta = np.clip(0.5 + s / ramp_width, 0.0, 1.0)
        blend = r_down + (r_up - r_down) * (0.5 - 0.5 * np.cos(np.pi * theta))
        rho = np.where(np.abs(s) < 0.5 * ramp_width, blend, rho)
    mom = np.zeros((grid.dim, *grid.shape))
    mom[0] = m
    return ConservedField(grid, rho, mom)


def random_smooth(grid: TorusGrid, rng: np.random.Generator, modes: int = 3,
                  rho_amplitude: float = 0.2, velocity_amplitude: float = 0.2) -> ConservedField:
    """Random low-mode trigonometric data with density bounded away from zero."""
    x = grid.centers

    def trig_field():
        out = np.zeros(grid.shape)
        for _ in range(modes):
            k = rng.integers(1, modes + 1, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            arg = sum(np.pi * k[i] * x[i] for i in range(grid.dim))
            out += rng.uniform(-1, 1) * np.cos(arg + phase)
        return out / modes

    rho = 1.0 + rho_amplitude * trig_field()
    u = np.stack([velocity_amplitude * trig_field() for _ in range(grid.dim)])
    return ConservedField(grid, rho, rho * u)
