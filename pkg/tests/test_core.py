import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dissipative_euler.core import (
    ConservedField,
    DomainError,
    EosParams,
    TorusGrid,
    Trajectory,
    kinetic_extended,
    pressure,
    pressure_potential,
    pressure_potential_derivative,
    total_energy,
    total_energy_density,
    velocity_from_conservative,
)

from conftest import random_field

positive = st.floats(1e-6, 1e6, allow_nan=False)
gammas = st.floats(1.01, 3.0)


def test_pressure_examples():
    assert pressure(3.0, EosParams(1.0, 2.0)) == 9.0
    assert pressure(0.0, EosParams(2.5, 1.7)) == 0.0
    assert pressure(1.0, EosParams(1.0, 1.4)) == 1.0


def test_pressure_potential_examples():
    eos = EosParams(1.0, 2.0)
    assert pressure_potential(2.0, eos) == 4.0
    assert pressure_potential(0.0, eos) == 0.0
    assert pressure_potential_derivative(2.0, eos) * 2.0 - pressure_potential(2.0, eos) == pressure(2.0, eos)


def test_negative_density_is_rejected():
    with pytest.raises(DomainError):
        pressure(-1.0, EosParams())
    with pytest.raises(DomainError):
        pressure_potential(np.array([1.0, -1e-3]), EosParams())


@pytest.mark.parametrize("a, gamma", [(0.0, 1.4), (-1.0, 2.0), (1.0, 1.0), (1.0, 0.5)])
def test_eos_invariants(a, gamma):
    with pytest.raises(ValueError):
        EosParams(a, gamma)


def test_kinetic_extended_branches():
    assert kinetic_extended(0.0, np.zeros(2)) == 0.0
    assert kinetic_extended(2.0, np.array([2.0, 0.0])) == 2.0
    assert kinetic_extended(0.0, np.array([1.0, 0.0])) == math.inf


def test_total_energy_density_examples():
    eos = EosParams(1.0, 2.0)
    assert total_energy_density(1.0, np.array([2.0, 0.0]), eos) == 3.0
    assert total_energy_density(1.0, np.zeros(2), eos) == 1.0
    assert total_energy_density(0.0, np.zeros(2), eos) == 0.0


def test_total_energy_constant_state_2d():
    eos = EosParams(1.0, 1.4)
    f = ConservedField.constant(TorusGrid(2, 8), 1.0)
    assert total_energy(f, eos) == pytest.approx(4.0 / 0.4, rel=1e-14)


def test_doubling_momentum_quadruples_kinetic_energy(rng):
    eos = EosParams()
    f = random_field(rng, 2, 8)
    internal = f.grid.integrate(pressure_potential(f.rho, eos))
    k1 = total_energy(f, eos) - internal
    g = ConservedField(f.grid, f.rho, 2 * f.mom)
    assert total_energy(g, eos) - internal == pytest.approx(4 * k1, rel=1e-13)


def test_total_energy_matches_per_cell_sum(rng):
    eos = EosParams(1.3, 1.6)
    f = random_field(rng, 2, 6)
    h2 = f.grid.cell_volume
    brute = 0.0
    for i in range(6):
        for j in range(6):
            r = f.rho[i, j]
            m = f.mom[:, i, j]
            brute += (0.5 * (m[0] ** 2 + m[1] ** 2) / r + eos.a / (eos.gamma - 1) * r**eos.gamma) * h2
    assert total_energy(f, eos) == pytest.approx(brute, rel=1e-13)


def test_infinite_energy_on_vacuum_momentum():
    eos = EosParams()
    assert total_energy_density(np.array([0.0]), np.array([[1.0]]), eos)[0] == math.inf


def test_velocity_examples():
    np.testing.assert_array_equal(velocity_from_conservative(2.0, np.array([4.0, 0.0]), 1e-10), [2.0, 0.0])
    np.testing.assert_array_equal(velocity_from_conservative(0.0, np.zeros(2)), [0.0, 0.0])
    u = velocity_from_conservative(1e-14, np.array([1e-14, 0.0]), 1e-10)
    assert u[0] == pytest.approx(1e-4, rel=1e-12) and u[1] == 0.0
    with pytest.raises(ValueError):
        velocity_from_conservative(1.0, np.ones(1), 0.0)


def test_grid_and_field_invariants():
    g = TorusGrid(2, 4)
    assert g.size == 16 and g.spacing == 0.5 and g.volume == 4.0
    assert g.wrap(1.25) == pytest.approx(-0.75)
    with pytest.raises(ValueError):
        TorusGrid(3, 4)
    with pytest.raises(DomainError):
        ConservedField(TorusGrid(1, 2), np.array([0.0, 1.0]), np.array([[1.0, 0.0]]))
    with pytest.raises(DomainError):
        ConservedField(TorusGrid(1, 2), np.array([-1.0, 1.0]), np.zeros((1, 2)))


def test_trajectory_requires_increasing_times():
    g = TorusGrid(1, 4)
    a = ConservedField.constant(g, 1.0)
    with pytest.raises(ValueError):
        Trajectory([a, a.with_time(0.0)])
    tr = Trajectory([a, a.with_time(0.5), a.with_time(1.0)])
    assert tr.index_of(0.5) == 1
    assert len(tr.until(0.5)) == 2
    with pytest.raises(KeyError):
        tr.index_of(0.3)


@given(rho=st.lists(positive, min_size=1, max_size=20), a=st.floats(0.1, 10), gamma=gammas)
def test_eos_identity(rho, a, gamma):
    eos = EosParams(a, gamma)
    r = np.array(rho)
    lhs = pressure_potential_derivative(r, eos) * r - pressure_potential(r, eos)
    np.testing.assert_allclose(lhs, pressure(r, eos), rtol=1e-12)


@given(r1=positive, r2=positive, m1=st.floats(-1e3, 1e3), m2=st.floats(-1e3, 1e3),
       n1=st.floats(-1e3, 1e3), n2=st.floats(-1e3, 1e3), lam=st.floats(0, 1), gamma=gammas)
def test_energy_convexity(r1, r2, m1, m2, n1, n2, lam, gamma):
    eos = EosParams(1.0, gamma)
    a, b = np.array([m1, n1]), np.array([m2, n2])
    e1, e2 = total_energy_density(r1, a, eos), total_energy_density(r2, b, eos)
    mid = total_energy_density(lam * r1 + (1 - lam) * r2, lam * a + (1 - lam) * b, eos)
    rhs = lam * e1 + (1 - lam) * e2
    assert mid <= rhs + 1e-12 * max(1.0, abs(rhs))


@given(rho=st.floats(1e-8, 1e8), m=st.floats(-1e4, 1e4))
def test_kinetic_matches_quotient(rho, m):
    assert kinetic_extended(rho, np.array([m])) == pytest.approx(m * m / rho, rel=1e-15, abs=0)
