import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dissipative_euler.core import ConservedField, EosParams, TorusGrid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(rng, dim, cells, rho_range=(0.2, 3.0), mom_scale=1.0, time=0.0):
    grid = TorusGrid(dim, cells)
    rho = rng.uniform(*rho_range, size=grid.shape)
    mom = mom_scale * rng.normal(size=(dim, *grid.shape))
    return ConservedField(grid, rho, mom, time)


@pytest.fixture
def eos2():
    return EosParams(1.0, 2.0)


def dominance_record(weights, snapshots=5, eos=EosParams(), m0=1.0):
    """Steady density, momentum losing kinetic energy that the pressure defect picks up in part.

    Block-wise defect energy is ``weights * loss``, so record ``a`` precedes
    record ``b`` exactly when ``weights_a <= weights_b`` everywhere.
    """
    from dissipative_euler.analysis import DissipativeRecord
    from dissipative_euler.core import Trajectory
    from dissipative_euler.defects import BlockPartition, DefectField
    from dissipative_euler.solver import EnergyLedger

    w = np.asarray(weights, dtype=float)
    grid = TorusGrid(1, w.size)
    part = BlockPartition(grid, 1)
    snaps, defects = [], []
    for k in range(snapshots):
        frac = 0.5 * k / (snapshots - 1)
        mom = np.full((1, w.size), m0 * np.sqrt(1.0 - frac))
        snaps.append(ConservedField(grid, np.ones(w.size), mom, 0.1 * k))
        loss = 0.5 * m0**2 * frac
        defects.append(DefectField(part, np.zeros((1, 1, w.size)), (eos.gamma - 1.0) * w * loss))
    traj = Trajectory(snaps)
    rec = DissipativeRecord(traj, defects, EnergyLedger(traj.times, np.zeros(snapshots)), eos)
    E = np.array([rec.total_energy(k) for k in range(snapshots)])
    rec.ledger = EnergyLedger(traj.times, E, E[0] - E)
    return rec


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
