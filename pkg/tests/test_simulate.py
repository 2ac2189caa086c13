import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import build_spec
from nddestab.expr import parse
from nddestab.simulate import (CompiledSystem, IntegratorConfig, QTooLarge,
                               SimulationError, recover_state, rhs, simulate)


def decay_spec():
    """x' = -x with constant unit history."""
    return build_spec(C={(0, 0): "-1"}, v="1", eta=[1.0])


def terminal_error(step):
    traj = simulate(decay_spec(), IntegratorConfig(step=step, horizon=1.0))
    return abs(traj.states[-1, 0] - math.exp(-1.0))


def test_rk4_order():
    e1 = terminal_error(1e-2)
    e2 = terminal_error(5e-3)
    assert e1 < 1e-8
    assert e1 / e2 >= 12.0


def test_known_linear_solution_with_impulse():
    # x' = -x, jump of 0.5 x(1^-) at t = 1
    spec = build_spec(C={(0, 0): "-1"}, v="1", eta=[1.0],
                      impulses=([1.0], "0.5*x", [0.4], [0.8]))
    traj = simulate(spec, IntegratorConfig(step=1e-3, horizon=2.0))
    assert traj.eval_at(1.0, side="left")[0] == pytest.approx(
        math.exp(-1.0), abs=1e-9)
    assert traj.eval_at(1.0, side="right")[0] == pytest.approx(
        1.5 * math.exp(-1.0), abs=1e-9)
    assert traj.states[-1, 0] == pytest.approx(1.5 * math.exp(-2.0),
                                               abs=1e-9)


def test_jump_consistency_simple():
    spec = build_spec(C={(0, 0): "-1"}, v="1", eta=[1.0],
                      impulses=([0.7, 1.6], "arctan(0.4*x)", [0.4], [0.8]))
    traj = simulate(spec, IntegratorConfig(step=1e-3, horizon=2.0))
    for tk in spec.impulses.instants:
        left = traj.eval_at(tk, side="left")[0]
        right = traj.eval_at(tk, side="right")[0]
        assert right - left == pytest.approx(math.atan(0.4 * left),
                                             abs=1e-12)


def test_zero_history_stays_zero(ex5_1):
    spec = replace(ex5_1[0], phi=[parse("0"), parse("0")])
    traj = simulate(spec, IntegratorConfig(step=1e-2, horizon=5.0))
    assert np.max(np.abs(traj.states)) < 1e-12


def test_recover_state_fixed_point():
    class Stub:
        committed_time = -1.0

        def __init__(self):
            self.anchor = None

        def set_anchor(self, t, x):
            self.anchor = (t, x)

        def __call__(self, ts):
            return np.tile(self.anchor[1], (len(np.atleast_1d(ts)), 1))

    spec = build_spec(n=2, Q={(0, 0): "0.125", (1, 1): "0.2"},
                      C={(0, 0): "-1", (1, 1): "-1"}, v=["1", "1"],
                      phi=["1", "1"])
    y = np.array([0.4, -0.3])
    x = recover_state(spec, 1.0, y, Stub())
    Qm = np.array([[0.125, 0.0], [0.0, 0.2]])
    expected = np.linalg.solve(np.eye(2) - Qm, y)
    assert np.max(np.abs(x - expected)) < 1e-12


def test_recover_state_rejects_large_q():
    class Stub:
        committed_time = -1.0

        def set_anchor(self, t, x):
            pass

        def __call__(self, ts):
            return np.zeros((len(np.atleast_1d(ts)), 1))

    spec = build_spec(Q={(0, 0): "1.5"}, C={(0, 0): "-1"})
    with pytest.raises(QTooLarge):
        recover_state(spec, 1.0, np.array([1.0]), Stub())


def test_rhs_discrete_and_distributed_terms():
    # identity history x(t) = t; B g(x(t-1)) contributes x(t-1),
    # W * integral of x over [t-1, t] contributes t - 1/2
    spec = build_spec(B={(0, 0): "1"}, W={(0, 0): "1"}, g="x", h="x",
                      beta=[1.0], gamma=[1.0], delta="1", r="1",
                      C={(0, 0): "0"}, v="1")

    def history(ts):
        return np.atleast_1d(ts)[:, None].astype(float)

    d = rhs(spec, 2.0, history, quad_points=64)
    assert d[0] == pytest.approx(1.0 + 1.5, abs=1e-9)


def test_vanishing_neutral_delay_at_impulse_errors():
    spec = build_spec(Q={(0, 0): "0.1"}, C={(0, 0): "-1"}, tau="0",
                      impulses=([1.0], "0.5*x", [0.4], [0.8]))
    with pytest.raises(SimulationError):
        simulate(spec, IntegratorConfig(step=1e-2, horizon=2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(step=0.0).check()
    with pytest.raises(ValueError):
        IntegratorConfig(horizon=-1.0).check()


def test_invalid_spec_rejected():
    spec = build_spec(C={(0, 0): "-1"}, eta=[-1.0])
    with pytest.raises(SimulationError):
        simulate(spec, IntegratorConfig(step=1e-2, horizon=1.0))


def test_grid_hits_events_and_horizon(ex5_1):
    traj = simulate(ex5_1[0], IntegratorConfig(step=1e-2, horizon=3.0))
    for tk in (0.5, 1.5, 3.0):
        idx = np.nonzero(traj.grid == tk)[0]
        assert len(idx) == 2      # two-sided records
    assert traj.grid[-1] == 3.0
    assert list(traj.impulse_times) == [0.5, 1.5, 3.0]


def test_step_refinement_converges(ex5_1):
    spec = ex5_1[0]
    ref = simulate(spec, IntegratorConfig(step=5e-4, horizon=1.0))
    x_ref = ref.eval_at(1.0)
    errs = []
    for step in (4e-3, 2e-3, 1e-3):
        traj = simulate(spec, IntegratorConfig(step=step, horizon=1.0))
        errs.append(np.max(np.abs(traj.eval_at(1.0) - x_ref)))
    assert errs[0] > errs[2]
    assert errs[2] < 1e-6


def test_neutral_combination_initial_value(ex5_1):
    # at t = 0 the state equals the history value
    traj = simulate(ex5_1[0], IntegratorConfig(step=1e-2, horizon=0.4))
    assert np.allclose(traj.eval_at(0.0), [1.0, 0.0], atol=1e-15)
