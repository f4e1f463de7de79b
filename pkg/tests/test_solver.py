import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dissipative_euler.core import ConservedField, EosParams, TorusGrid, total_energy
from dissipative_euler.defects import BlockPartition, coarse_grain
from dissipative_euler.initial import acoustic_pulse, random_smooth, riemann_problem
from dissipative_euler.solver import (
    DegenerateModelError,
    EnergyLedger,
    SolverConfig,
    SolverStall,
    ViscosityModel,
    fenchel_decomposition,
    run,
    stable_dt,
    step,
    viscous_stress,
)

from conftest import random_field

EOS = EosParams()


def sym(rng, d):
    a = rng.normal(size=(d, d))
    return 0.5 * (a + a.T)


def test_viscous_stress_examples():
    m = ViscosityModel(1.0)
    np.testing.assert_array_equal(viscous_stress(np.zeros((2, 2)), m), np.zeros((2, 2)))
    S = viscous_stress(np.eye(2), m)
    np.testing.assert_allclose(S, 2 * np.eye(2), atol=1e-15)
    assert np.sum(S * np.eye(2)) == pytest.approx(4.0)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(viscous_stress(rot, m), 0.0, atol=1e-15)


def test_viscosity_model_invariants():
    with pytest.raises(ValueError):
        ViscosityModel(0.0)
    with pytest.raises(ValueError):
        ViscosityModel(1.0, shear_mu=-1.0)
    with pytest.raises(DegenerateModelError):
        ViscosityModel(1.0, 0.0, 0.0)


@pytest.mark.parametrize("kw", [dict(cfl=0.0), dict(cfl=1.0), dict(end_time=0.0), dict(flux="roe"),
                                dict(time_scheme="rk4"), dict(output_times=(0.5,), end_time=0.2)])
def test_solver_config_invariants(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_fenchel_examples(rng):
    m = ViscosityModel(1.0, 0.7, 1.3)
    for d in (1, 2):
        D = sym(rng, d)
        _, _, gap = fenchel_decomposition(D, viscous_stress(D, m), m)
        assert abs(gap) <= 1e-12
    F, Fs, gap = fenchel_decomposition(np.zeros((2, 2)), np.zeros((2, 2)), m)
    assert (F, Fs, gap) == (0.0, 0.0, 0.0)


def test_fenchel_conjugate_against_dense_maximisation(rng):
    """``F*(S) = sup_X S:X - F(X)`` checked by brute force over symmetric 2x2 ``X``."""
    m = ViscosityModel(1.0, 0.8, 0.5)
    S = sym(rng, 2)
    _, Fs, _ = fenchel_decomposition(np.zeros((2, 2)), S, m)
    axis = np.linspace(-3, 3, 121)
    a, b, c = np.meshgrid(axis, axis, axis, indexing="ij")
    X = np.array([[a, b], [b, c]])
    F, _, _ = fenchel_decomposition(X, np.zeros_like(X), m)
    best = np.max(np.einsum("ab,ab...->...", S, X) - F)
    assert best <= Fs + 1e-12
    assert best >= Fs - 1e-2 * max(1.0, Fs)


def test_fenchel_mismatched_pairs_have_negative_gap(rng):
    m = ViscosityModel(1.0, 1.0, 1.0)
    for _ in range(50):
        D, S = sym(rng, 2), sym(rng, 2)
        assert fenchel_decomposition(D, S, m)[2] < 0


def test_fenchel_degenerate_bulk_gives_infinite_conjugate():
    m = ViscosityModel(1.0, 1.0, 0.0)
    _, Fs, _ = fenchel_decomposition(np.zeros((2, 2)), np.eye(2), m)
    assert Fs == np.inf


def test_stable_dt_closed_form():
    eos = EosParams(1.0, 2.0)
    f = ConservedField.constant(TorusGrid(1, 50), 1.0)
    h = f.grid.spacing
    assert stable_dt(f, eos, None, 0.4) == pytest.approx(0.4 * h / np.sqrt(2), rel=1e-14)
    assert stable_dt(f, eos, ViscosityModel(1e-12), 0.4) == pytest.approx(0.4 * h / np.sqrt(2), rel=1e-14)


def test_stable_dt_matches_cell_scan():
    g = TorusGrid(1, 64)
    f = riemann_problem(g, (2.0, 0.3), (0.5, -0.2))
    model = ViscosityModel(0.02, 1.0, 0.5)
    h = g.spacing
    acoustic, rho_min = np.inf, np.inf
    for i in range(g.cells):
        r, u = f.rho[i], f.mom[0, i] / f.rho[i]
        c = np.sqrt(EOS.gamma * EOS.a * r ** (EOS.gamma - 1))
        acoustic = min(acoustic, h / (abs(u) + c))
        rho_min = min(rho_min, r)
    viscous = h**2 * rho_min / (2 * 0.02 * 2.5)
    assert stable_dt(f, EOS, model, 0.3) == pytest.approx(0.3 * min(acoustic, viscous), rel=1e-14)


def test_stable_dt_rejects_vacuum():
    with pytest.raises(ValueError):
        stable_dt(ConservedField.constant(TorusGrid(1, 4), 0.0), EOS, None, 0.5)


@pytest.mark.parametrize("flux", ["rusanov", "central-dissipative"])
@pytest.mark.parametrize("scheme", ["euler", "rk2"])
def test_constant_state_is_steady(flux, scheme):
    f = ConservedField.constant(TorusGrid(2, 8), 1.3, [0.2, -0.1])
    g = step(f, EOS, ViscosityModel(0.1), 1e-3, flux, scheme)
    np.testing.assert_allclose(g.rho, f.rho, rtol=1e-15)
    np.testing.assert_allclose(g.mom, f.mom, rtol=1e-14, atol=1e-16)


@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]),
       recon=st.sampled_from(["constant", "muscl"]))
def test_mass_is_conserved(seed, dim, recon):
    rng = np.random.default_rng(seed)
    f = random_field(rng, dim, 16, mom_scale=0.3)
    model = ViscosityModel(1e-2)
    dt = stable_dt(f, EOS, model, 0.2)
    g = step(f, EOS, model, dt, reconstruction=recon)
    assert g.mass() == pytest.approx(f.mass(), rel=1e-13)
    np.testing.assert_allclose(g.total_momentum(), f.total_momentum(), atol=1e-13 * (1 + np.abs(f.mom).sum()))


def test_steady_run_has_zero_slack():
    tr, ledger = run(ConservedField.constant(TorusGrid(1, 32), 1.0), EOS, ViscosityModel(1e-2),
                     SolverConfig(end_time=0.1))
    assert np.all(ledger.slack == 0.0)
    assert len(tr) >= 2


def test_acoustic_energy_is_non_increasing():
    g = TorusGrid(1, 128)
    tr, ledger = run(acoustic_pulse(g, 0.05), EOS, ViscosityModel(1e-2), SolverConfig(end_time=0.2))
    assert np.all(np.diff(ledger.energy) <= 1e-14 * ledger.energy[0])
    assert ledger.passes()


def test_halving_viscosity_keeps_energy_bounded():
    g = TorusGrid(1, 128)
    init = riemann_problem(g, (2.0, 0.0), (1.0, 0.0))
    out = [run(init, EOS, ViscosityModel(e), SolverConfig(end_time=0.2))[1] for e in (2e-2, 1e-2)]
    for led in out:
        assert np.max(led.energy) <= led.energy[0] * (1 + 1e-6)
        assert led.passes()
    assert out[1].dissipation[-1] <= out[0].dissipation[-1]


def test_output_times_are_hit_exactly():
    g = TorusGrid(1, 32)
    tr, _ = run(acoustic_pulse(g), EOS, None, SolverConfig(end_time=0.2, output_times=(0.05, 0.1), output_stride=1000))
    np.testing.assert_array_equal(tr.times, [0.0, 0.05, 0.1, 0.2])


def test_stall_is_reported():
    g = TorusGrid(1, 32)
    with pytest.raises(SolverStall):
        run(acoustic_pulse(g), EOS, None, SolverConfig(end_time=0.1, dt_min=1.0))


def test_random_viscous_runs_satisfy_energy_inequality():
    rng = np.random.default_rng(7)
    for _ in range(3):
        g = TorusGrid(int(rng.integers(1, 3)), 32)
        tr, ledger = run(random_smooth(g, rng), EOS, ViscosityModel(float(rng.uniform(5e-3, 5e-2))),
                         SolverConfig(end_time=0.05))
        assert np.all(ledger.slack >= -1e-6 * ledger.energy[0])
        assert np.all(np.diff(ledger.dissipation) >= 0)


def _l1_error(N, init, model, T):
    def final(n):
        g = TorusGrid(1, n)
        return run(init(g), EOS, model, SolverConfig(end_time=T, output_stride=10**6))[0].final

    coarse, fine = final(N), final(4 * N)
    ref = coarse_grain(fine, BlockPartition(fine.grid, 4))
    return coarse.grid.integrate(np.abs(coarse.rho - ref.rho))


def test_self_convergence_smooth():
    init = lambda g: acoustic_pulse(g, 0.1)  # noqa: E731
    errs = [_l1_error(N, init, ViscosityModel(1e-2), 0.1) for N in (32, 64, 128)]
    for a, b in itertools.pairwise(errs):
        assert a / b >= 1.7


def test_riemann_self_convergence_decreases():
    init = lambda g: riemann_problem(g, (2.0, 0.0), (1.0, 0.0))  # noqa: E731
    errs = [_l1_error(N, init, None, 0.2) for N in (32, 64, 128)]
    assert errs[0] > errs[1] > errs[2]


def test_ledger_rejects_ragged_columns():
    with pytest.raises(ValueError):
        EnergyLedger([0.0, 1.0], [1.0])


def test_ledger_detects_energy_growth():
    led = EnergyLedger([0, 1, 2], [1.0, 1.0, 1.1], [0, 0, 0])
    assert not led.passes()
    assert led.slack[-1] == pytest.approx(-0.1)


def test_total_energy_matches_ledger():
    g = TorusGrid(2, 16)
    tr, led = run(random_smooth(g, np.random.default_rng(1)), EOS, ViscosityModel(0.05),
                  SolverConfig(end_time=0.02, output_stride=1))
    for s in tr:
        k = int(np.argmin(np.abs(led.times - s.time)))
        assert total_energy(s, EOS) == pytest.approx(led.energy[k], rel=1e-14)
