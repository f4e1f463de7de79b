import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dissipative_euler.analysis import build_record
from dissipative_euler.core import EosParams, TorusGrid
from dissipative_euler.initial import riemann_problem
from dissipative_euler.selection import (
    Comparison,
    Ensemble,
    convex_combine,
    energy_functional,
    precedes,
    same_initial_data,
    select_admissible,
)
from dissipative_euler.solver import SolverConfig, ViscosityModel, run
from dissipative_euler.weak_form import momentum_residual
from dissipative_euler.testfunctions import TestFunctionBank

from conftest import dominance_record

EOS = EosParams()
weights = st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6)


def oracle_minimal(ws):
    """Indices not strictly dominated by another member, by direct comparison of weights."""
    ws = [np.asarray(w) for w in ws]
    out = []
    for i, wi in enumerate(ws):
        if not any(np.all(wj <= wi) and np.any(wj < wi) for j, wj in enumerate(ws) if j != i):
            out.append(i)
    return out


@given(a=weights)
def test_precedes_is_reflexive(a):
    r = dominance_record(a)
    assert precedes(r, r) is Comparison.PRECEDES


@given(a=weights, b=weights, c=weights)
def test_precedes_is_transitive(a, b, c):
    ra, rb, rc = (dominance_record(w) for w in (a, b, c))
    if precedes(ra, rb) is Comparison.PRECEDES and precedes(rb, rc) is Comparison.PRECEDES:
        assert precedes(ra, rc) is Comparison.PRECEDES


def test_precedes_examples():
    lo, hi = dominance_record([0.1] * 4), dominance_record([0.2] * 4)
    mixed = dominance_record([0.0, 0.3, 0.0, 0.3])
    assert precedes(lo, hi) is Comparison.PRECEDES
    assert precedes(hi, lo) is Comparison.SUCCEEDS
    assert precedes(lo, mixed) is Comparison.INCOMPARABLE


def test_precedes_rejects_incompatible_records():
    with pytest.raises(ValueError, match="grids"):
        precedes(dominance_record([0.1] * 4), dominance_record([0.1] * 8))
    with pytest.raises(ValueError, match="times"):
        precedes(dominance_record([0.1] * 4), dominance_record([0.1] * 4, snapshots=6))


def test_ensemble_requires_shared_initial_data():
    a = dominance_record([0.1] * 4)
    b = dominance_record([0.1] * 4, m0=1.1)
    assert not same_initial_data(a, b)
    with pytest.raises(ValueError, match="initial"):
        Ensemble([a, b])
    with pytest.raises(ValueError):
        select_admissible(Ensemble([]))


def test_selection_matches_exhaustive_oracle(rng):
    for size in range(1, 9):
        for _ in range(5):
            ws = [rng.uniform(0, 1, 6) for _ in range(size)]
            if rng.random() < 0.5:
                ws[rng.integers(size)] = np.zeros(6)  # a least member
            sel = select_admissible(Ensemble([dominance_record(w) for w in ws]))
            minimal = oracle_minimal(ws)
            assert sel.index in minimal
            least = [i for i in range(size) if all(np.all(ws[i] <= w) for w in ws)]
            if least:
                assert np.allclose(ws[sel.index], ws[least[0]])
            assert sel.audit(Ensemble([dominance_record(w) for w in ws]).members)


def test_selection_certificate_and_ties():
    ws = [[0.5] * 4, [0.2] * 4, [0.2] * 4, [0.9] * 4]
    sel = select_admissible(Ensemble([dominance_record(w) for w in ws]))
    assert sel.index == 1
    assert dict(sel.certificate) == {0: Comparison.PRECEDES, 2: Comparison.PRECEDES, 3: Comparison.PRECEDES}


def test_energy_functional_trapezoid():
    rec = dominance_record([0.0] * 4, snapshots=3)
    e = [rec.grid.integrate(rec.energy_density(k)) for k in range(3)]
    assert energy_functional(rec) == pytest.approx(0.1 * (e[0] / 2 + e[1] + e[2] / 2), rel=1e-14)


@pytest.fixture(scope="module")
def riemann_records():
    g = TorusGrid(1, 64)
    u0 = riemann_problem(g, (2.0, 0.0), (1.0, 0.0))
    cfg = SolverConfig(end_time=0.1, output_times=(0.025, 0.05, 0.075, 0.1), output_stride=10**9)
    recs = []
    for eps in (2e-2, 1e-2, 5e-3):
        tr, led = run(u0, EOS, ViscosityModel(eps), cfg)
        recs.append(build_record(tr, led, EOS, block=4))
    return recs


def test_convex_combine_endpoints(riemann_records):
    a, b = riemann_records[:2]
    for lam, ref in ((1.0, a), (0.0, b)):
        c = convex_combine(a, b, lam)
        for k in range(len(c.trajectory)):
            np.testing.assert_allclose(c.trajectory[k].rho, ref.trajectory[k].rho, atol=1e-15)
            np.testing.assert_allclose(c.defects[k].Rv, ref.defects[k].Rv, atol=1e-15)
            np.testing.assert_allclose(c.defects[k].Rp, ref.defects[k].Rp, atol=1e-15)
    with pytest.raises(ValueError):
        convex_combine(a, b, 1.5)


def test_convex_combine_gap_for_constant_states():
    # two states of equal density moving with velocities +1 and -1 average to rest;
    # the kinetic gap puts all lost kinetic energy into Rv
    a = dominance_record([0.0] * 4, m0=1.0)
    b = dominance_record([0.0] * 4, m0=1.0)
    for s in b.trajectory:
        s.mom[...] = -s.mom
    b.trajectory.initial.mom[...] = a.trajectory.initial.mom  # share initial data
    c = convex_combine(a, b, 0.5)
    s = c.trajectory[2]
    np.testing.assert_allclose(s.mom, 0.0, atol=1e-15)
    ua = a.trajectory[2].mom[0] / a.trajectory[2].rho
    np.testing.assert_allclose(c.defects[2].Rv[0, 0], 0.25 * (2 * ua) ** 2, rtol=1e-14)
    np.testing.assert_allclose(c.defects[2].Rp, 0.0, atol=1e-15)


def test_convex_combine_preserves_invariants_and_affinity(riemann_records, rng):
    bank = TestFunctionBank(1, 0.1)
    for _ in range(20):
        i, j = rng.choice(3, 2, replace=False)
        lam = rng.uniform()
        a, b = riemann_records[i], riemann_records[j]
        c = convex_combine(a, b, lam)
        assert c.violations() == []
        for k in range(len(c.trajectory)):
            assert c.total_energy(k) == pytest.approx(lam * a.total_energy(k) + (1 - lam) * b.total_energy(k),
                                                      rel=1e-12)
        res = [momentum_residual(r.trajectory, bank, 0.1, EOS, defects=r.defects).values for r in (a, b, c)]
        np.testing.assert_allclose(res[2], lam * res[0] + (1 - lam) * res[1], atol=1e-12)
