"""Finite families of smooth periodic test functions with exact derivatives.

Spatial members are tensor trigonometric polynomials on ``[-1, 1]**d``; time
envelopes are C^1 polynomial bumps with ``psi(0) = 1`` and ``psi(T) = 0``.
Cell data are treated as piecewise constant in space and piecewise linear in
time, and test functions are integrated exactly against them.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import TorusGrid

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


# {{{ time envelopes


@dataclass(frozen=True)
class Envelope:
    label: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple[float, ...] = ()

    def sup(self) -> float:
        return 1.0


def _clip01(s):
    return np.clip(s, 0.0, 1.0)


def make_envelopes(horizon: float, kinds: Sequence[str] = ("quad", "cubic", "half")) -> list[Envelope]:
    """Non-increasing envelopes on ``[0, horizon]``, all with ``psi(0) = 1``."""
    T = float(horizon)
    out = []
    for kind in kinds:
        if kind == "quad":
            out.append(Envelope(
                "quad",
                lambda t: (1.0 - _clip01(np.asarray(t) / T)) ** 2,
                lambda t: -2.0 / T * (1.0 - _clip01(np.asarray(t) / T)),
                (T,),
            ))
        elif kind == "cubic":
            out.append(Envelope(
                "cubic",
                lambda t: 1.0 - 3 * _clip01(np.asarray(t) / T) ** 2 + 2 * _clip01(np.asarray(t) / T) ** 3,
                lambda t: (-6 * _clip01(np.asarray(t) / T) + 6 * _clip01(np.asarray(t) / T) ** 2) / T,
                (T,),
            ))
        elif kind == "half":
            out.append(Envelope(
                "half",
                lambda t: (1.0 - _clip01(2.0 * np.asarray(t) / T)) ** 2,
                lambda t: -4.0 / T * (1.0 - _clip01(2.0 * np.asarray(t) / T)),
                (0.5 * T, T),
            ))
        else:
            raise ValueError(f"unknown envelope kind {kind!r}")
    return out


def time_weights(times: np.ndarray, g: Callable, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Weights ``w`` with ``sum_k w[k] f[k] = int g(t) f_lin(t) dt`` over ``[t_0, t_K]``.

    ``f_lin`` interpolates the samples ``f[k]`` linearly; ``g`` is integrated
    exactly for piecewise polynomials of degree <= 8 between breakpoints.
    """
    times = np.asarray(times, dtype=float)
    w = np.zeros(len(times))
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        cuts = [a] + [p for p in breakpoints if a < p < b] + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            t = 0.5 * (hi - lo) * GAUSS_NODES + 0.5 * (hi + lo)
            gw = 0.5 * (hi - lo) * GAUSS_WEIGHTS * g(t)
            theta = (t - a) / (b - a)
            w[k] += np.sum(gw * (1.0 - theta))
            w[k + 1] += np.sum(gw * theta)
    return w


# }}}


# {{{ spatial functions


def _factor_values(kind: str, k: int, x: np.ndarray) -> np.ndarray:
    if kind == "c":
        return np.cos(np.pi * k * x)
    return np.sin(np.pi * k * x)


def _factor_cell_average(kind: str, k: int, xc: np.ndarray, h: float) -> np.ndarray:
    if k == 0:
        return np.ones_like(xc)
    arg = 0.5 * np.pi * k * h
    return _factor_values(kind, k, xc) * (np.sin(arg) / arg)


def _factor_derivative_average(kind: str, k: int, xc: np.ndarray, h: float) -> np.ndarray:
    """Cell average of the derivative: difference of face values over ``h``."""
    if k == 0:
        return np.zeros_like(xc)
    return (_factor_values(kind, k, xc + 0.5 * h) - _factor_values(kind, k, xc - 0.5 * h)) / h


def _factor_derivative(kind: str, k: int, x: np.ndarray) -> np.ndarray:
    if kind == "c":
        return -np.pi * k * np.sin(np.pi * k * x)
    return np.pi * k * np.cos(np.pi * k * x)


def one_dimensional_factors(modes: int) -> list[tuple[str, int]]:
    out = [("c", 0)]
    for k in range(1, modes + 1):
        out += [("c", k), ("s", k)]
    return out


@dataclass(frozen=True)
class SpatialFunction:
    factors: tuple[tuple[str, int], ...]

    @property
    def label(self) -> str:
        return "*".join(f"{kind}{k}" for kind, k in self.factors)

    @property
    def max_mode(self) -> int:
        return max(k for _, k in self.factors)

    @property
    def is_constant(self) -> bool:
        return self.max_mode == 0

    def __call__(self, *x) -> np.ndarray:
        out = 1.0
        for (kind, k), xi in zip(self.factors, x):
            out = out * (_factor_values(kind, k, xi) if k else np.ones_like(xi))
        return out

    def gradient(self, *x) -> np.ndarray:
        comps = []
        for b in range(len(self.factors)):
            g = 1.0
            for a, ((kind, k), xi) in enumerate(zip(self.factors, x)):
                if a == b:
                    g = g * (_factor_derivative(kind, k, xi) if k else np.zeros_like(xi))
                else:
                    g = g * (_factor_values(kind, k, xi) if k else np.ones_like(xi))
            comps.append(g)
        return np.stack(comps)

    def gradient_sup(self, samples: int = 256) -> float:
        xs = np.linspace(-1, 1, samples, endpoint=False)
        X = np.meshgrid(*([xs] * len(self.factors)), indexing="ij")
        return float(np.max(np.sqrt(np.sum(self.gradient(*X) ** 2, axis=0))))


@dataclass(frozen=True)
class TestFunctionBank:
    """Tensor trigonometric functions of mode <= ``modes`` times time envelopes."""

    __test__ = False  # not a pytest class

    dim: int
    horizon: float
    modes: int = 3
    envelope_kinds: tuple[str, ...] = ("quad", "cubic", "half")
    functions: tuple[SpatialFunction, ...] = field(init=False)
    envelopes: tuple[Envelope, ...] = field(init=False)

    def __post_init__(self):
        if self.modes < 0:
            raise ValueError("modes must be non-negative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        facs = one_dimensional_factors(self.modes)
        funcs = tuple(SpatialFunction(tuple(p)) for p in itertools.product(facs, repeat=self.dim))
        object.__setattr__(self, "functions", funcs)
        object.__setattr__(self, "envelopes", tuple(make_envelopes(self.horizon, self.envelope_kinds)))

    def describe(self) -> str:
        env = ",".join(self.envelope_kinds)
        return f"trig modes<={self.modes} dim={self.dim} envelopes=[{env}] T={self.horizon:g}"

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.functions]

    def cell_averages(self, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
        """Exact cell averages of every function and of its gradient.

        Returns arrays of shape ``(F, *grid.shape)`` and ``(F, d, *grid.shape)``.
        """
        return _cell_averages(self.functions, grid)


@lru_cache(maxsize=32)
def _cell_averages(functions: tuple[SpatialFunction, ...], grid: TorusGrid):
    xc, h, d = grid.axis_centers, grid.spacing, grid.dim
    vals, grads = [], []
    for f in functions:
        avg = [_factor_cell_average(kind, k, xc, h) for kind, k in f.factors]
        dav = [_factor_derivative_average(kind, k, xc, h) for kind, k in f.factors]
        vals.append(_outer(avg))
        grads.append(np.stack([_outer([dav[a] if a == b else avg[a] for a in range(d)]) for b in range(d)]))
    v, g = np.stack(vals), np.stack(grads)
    v.flags.writeable = False
    g.flags.writeable = False
    return v, g


def _outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


# }}}


# {{{ polynomial bumps


@dataclass(frozen=True)
class BumpFunction:
    """Tensor product of ``(1 - x**2)**2 * L_j(x)`` factors, ``C^1`` on the torus."""

    degrees: tuple[int, ...]

    @property
    def label(self) -> str:
        return "*".join(f"b{j}" for j in self.degrees)

    @property
    def is_constant(self) -> bool:
        return False

    def _factor(self, j: int) -> np.polynomial.Polynomial:
        bump = np.polynomial.Polynomial([1.0, 0.0, -1.0]) ** 2
        return bump * np.polynomial.Legendre.basis(j).convert(kind=np.polynomial.Polynomial)

    def __call__(self, *x) -> np.ndarray:
        out = 1.0
        for j, xi in zip(self.degrees, x):
            out = out * self._factor(j)(xi)
        return out

    def gradient(self, *x) -> np.ndarray:
        comps = []
        for b in range(len(self.degrees)):
            g = 1.0
            for a, (j, xi) in enumerate(zip(self.degrees, x)):
                p = self._factor(j)
                g = g * (p.deriv()(xi) if a == b else p(xi))
            comps.append(g)
        return np.stack(comps)

    def gradient_sup(self, samples: int = 256) -> float:
        xs = np.linspace(-1, 1, samples, endpoint=False)
        X = np.meshgrid(*([xs] * len(self.degrees)), indexing="ij")
        return float(np.max(np.sqrt(np.sum(self.gradient(*X) ** 2, axis=0))))


@dataclass(frozen=True)
class BumpFamily:
    """Polynomial bumps of Legendre degree ``<= degree`` per axis.

    Unlike low trigonometric modes these are not orthogonal to fine dyadic
    patterns, so their pairings with oscillating data stay non-zero at every
    level.
    """

    dim: int
    degree: int = 2
    functions: tuple[BumpFunction, ...] = field(init=False)

    def __post_init__(self):
        funcs = tuple(BumpFunction(tuple(p)) for p in itertools.product(range(self.degree + 1), repeat=self.dim))
        object.__setattr__(self, "functions", funcs)

    def describe(self) -> str:
        return f"polynomial bumps degree<={self.degree} dim={self.dim}"

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.functions]

    def cell_averages(self, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
        xc, h, d = grid.axis_centers, grid.spacing, grid.dim
        vals, grads = [], []
        for f in self.functions:
            polys = [f._factor(j) for j in f.degrees]
            avg = [(p.integ()(xc + 0.5 * h) - p.integ()(xc - 0.5 * h)) / h for p in polys]
            dav = [(p(xc + 0.5 * h) - p(xc - 0.5 * h)) / h for p in polys]
            vals.append(_outer(avg))
            grads.append(np.stack([_outer([dav[a] if a == b else avg[a] for a in range(d)]) for b in range(d)]))
        return np.stack(vals), np.stack(grads)


# }}}
