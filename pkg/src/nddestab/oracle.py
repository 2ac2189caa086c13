# Picard iteration on the equivalent integral equation: an
# integrator-independent reference solution and an empirical
# contraction-rate measurement.

import math
from dataclasses import dataclass, field

import numpy as np

from .certify import cbar
from .model import Trajectory, theta, validate
from .simulate import CompiledSystem, IntegratorConfig, simulate

__all__ = [
    "PicardReport", "PicardEngine", "picard_operator", "picard_solve",
    "crosscheck", "CrosscheckReport", "NotConverged", "OracleError",
]


class OracleError(Exception):
    pass


class NotConverged(OracleError):
    def __init__(self, report):
        super().__init__(
            f"Picard iteration did not converge in {report.iterations} "
            f"sweeps (last delta {report.sup_deltas[-1]:.3g})")
        self.report = report


@dataclass
class PicardReport:
    iterations: int
    sup_deltas: list
    converged: bool
    final: Trajectory

    def contraction_ratios(self):
        d = self.sup_deltas
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]


def _exp_weights(dv, h):
    """Left/right weights of the exponentially weighted product rule for
    one interval: integral of exp(-(V(t1)-V(s))) * linear(G) ds with the
    rate frozen at dv/h."""
    if h <= 0.0:
        return 0.0, 0.0
    if abs(dv) < 1e-8:
        return 0.5 * h, 0.5 * h
    c = dv / h
    E = math.exp(-dv)
    I0 = (1.0 - E) / c
    I1 = h * I0 - (1.0 - E * (1.0 + dv)) / (c * c)
    wr = I1 / h
    return I0 - wr, wr


class PicardEngine:
    """Applies the solution operator of the integral equation on a fixed
    uniform grid with impulse instants inserted as duplicated nodes."""

    def __init__(self, spec, horizon, grid_step, quad_points=16):
        self.sys = CompiledSystem(spec) if not isinstance(
            spec, CompiledSystem) else spec
        spec = self.sys.spec
        self.spec = spec
        self.horizon = horizon
        self.grid_step = grid_step
        self.quad_points = quad_points
        n = spec.n

        nsteps = int(math.ceil(horizon / grid_step - 1e-9))
        base = np.linspace(0.0, horizon, nsteps + 1)
        events = [tk for tk in spec.impulses.instants if 0.0 < tk <= horizon]
        ts = np.unique(np.concatenate([base, np.array(events)]))
        grid = []
        right_of = {}
        for t in ts:
            grid.append(t)
            if t in events:
                right_of[len(grid)] = events.index(t)
                grid.append(t)    # right record
        self.grid = np.array(grid)
        self.right_nodes = right_of       # node index -> impulse k
        self.events = events
        N = len(self.grid)

        # coefficient tables on the grid
        g = self.grid
        self.tau_g = np.array([self.sys.tau(t) for t in g])
        self.delta_g = np.array([self.sys.delta(t) for t in g])
        self.r_g = np.array([self.sys.r(t) for t in g])
        self.Q_g = np.array([self.sys.Q(t) for t in g])        # (N, n, n)
        self.A_g = np.array([self.sys.A(t) for t in g])
        self.B_g = np.array([self.sys.B(t) for t in g])
        self.W_g = np.array([self.sys.W(t) for t in g])
        self.v_g = np.array([[self.sys.v[i](t) for i in range(n)]
                             for t in g])                      # (N, n)
        cb = [[cbar(spec, i, j) for j in range(n)] for i in range(n)]
        self.Cb_g = np.array([[[cb[i][j].evaluate(t, var="t")
                                for j in range(n)] for i in range(n)]
                              for t in g])

        dt = np.diff(g)
        self.dV = 0.5 * dt[:, None] * (self.v_g[:-1] + self.v_g[1:])  # (N-1, n)
        self.decay = np.exp(-self.dV)
        self.V = np.vstack([np.zeros((1, n)), np.cumsum(self.dV, axis=0)])
        wl = np.empty_like(self.dV)
        wr = np.empty_like(self.dV)
        for m in range(N - 1):
            for i in range(n):
                wl[m, i], wr[m, i] = _exp_weights(self.dV[m, i], dt[m])
        self.wl, self.wr = wl, wr

        self.phi0 = self.sys.phi_values(np.array([0.0]))[0]
        d0 = -self.sys.tau(0.0)
        self.s2_coeff = self.phi0 - self.sys.Q(0.0) @ \
            self.sys.phi_values(np.array([min(d0, 0.0)]))[0]

        # quadrature nodes of the distributed term, per grid node
        qs = np.linspace(0.0, 1.0, quad_points + 1)
        self.quad_t = g[:, None] - self.r_g[:, None] * (1.0 - qs[None, :])
        self.quad_w = np.full(quad_points + 1, 1.0 / quad_points)
        self.quad_w[0] = self.quad_w[-1] = 0.5 / quad_points

    def _lookup(self, states, ts):
        """Right-continuous linear interpolation of an iterate, with phi
        for ts <= 0."""
        ts = np.asarray(ts, dtype=float)
        flat = ts.ravel()
        out = np.empty((flat.size, self.sys.n))
        hist = flat <= 0.0
        if np.any(hist):
            out[hist] = self.sys.phi_values(flat[hist])
        main = ~hist
        if np.any(main):
            q = flat[main]
            pos = np.searchsorted(self.grid, q, side="right") - 1
            pos = np.clip(pos, 0, len(self.grid) - 1)
            nxt = np.minimum(pos + 1, len(self.grid) - 1)
            t0 = self.grid[pos]
            span = self.grid[nxt] - t0
            w = np.where(span > 0, (q - t0) / np.where(span > 0, span, 1.0),
                         0.0)
            out[main] = (1.0 - w)[:, None] * states[pos] \
                + w[:, None] * states[nxt]
        return out.reshape(ts.shape + (self.sys.n,))

    def initial_guess(self):
        return np.tile(self.phi0, (len(self.grid), 1))

    def apply(self, states):
        """One sweep of the operator over the whole grid."""
        sys = self.sys
        n = sys.n
        g = self.grid
        N = len(g)

        x_tau = self._lookup(states, g - self.tau_g)           # (N, n)
        x_del = self._lookup(states, g - self.delta_g)
        if sys.has_W:
            xq = self._lookup(states, self.quad_t)             # (N, qp+1, n)
            hq = sys.h(xq)
            D = (self.r_g[:, None]
                 * np.einsum("q,nqj->nj", self.quad_w, hq))    # (N, n)
        else:
            D = np.zeros((N, n))

        G = np.einsum("nij,nj->ni", self.Cb_g, states)
        if sys.has_A:
            G += np.einsum("nij,nj->ni", self.A_g, sys.f(states))
        if sys.has_B:
            G += np.einsum("nij,nj->ni", self.B_g, sys.g(x_del))
        if sys.has_W:
            G += np.einsum("nij,nj->ni", self.W_g, D)
        G -= self.v_g * np.einsum("nij,nj->ni", self.Q_g, x_tau)

        S1 = np.einsum("nij,nj->ni", self.Q_g, x_tau)
        S2 = np.exp(-self.V) * self.s2_coeff[None, :]

        jumps = {}
        for node, k in self.right_nodes.items():
            x_left = states[node - 1]
            maps = self.spec.impulses.maps[k]
            jumps[node] = np.array([
                maps[i].evaluate(float(x_left[i]), var="x") for i in range(n)])

        S3 = np.zeros((N, n))
        S4 = np.zeros((N, n))
        for m in range(1, N):
            S3[m] = self.decay[m - 1] * S3[m - 1]
            if m in jumps:
                S3[m] += jumps[m]
            S4[m] = (self.decay[m - 1] * S4[m - 1]
                     + self.wl[m - 1] * G[m - 1] + self.wr[m - 1] * G[m])

        return S1 + S2 + S3 + S4

    def to_trajectory(self, states, step=None):
        th = self.sys.theta
        hist_ts = []
        t = th
        while t < -1e-12:
            hist_ts.append(t)
            t += self.grid_step
        hist_ts = np.array(hist_ts)
        grid = np.concatenate([hist_ts, self.grid])
        if len(hist_ts):
            hist_states = self.sys.phi_values(hist_ts)
            all_states = np.vstack([hist_states, states])
        else:
            all_states = states.copy()
        return Trajectory(grid=grid, states=all_states,
                          step=step or self.grid_step, provenance="oracle",
                          phi=self.sys.phi, theta=th,
                          impulse_times=np.array(self.events),
                          horizon=self.horizon)


def picard_operator(spec, traj, grid_step=None, quad_points=16):
    """Apply the solution operator once to a trajectory; the history
    segment is copied unchanged."""
    engine = PicardEngine(spec, traj.horizon, grid_step or traj.step,
                          quad_points=quad_points)
    states = traj.values(engine.grid, side="right")
    # restore left records at duplicated nodes
    for node in engine.right_nodes:
        states[node - 1] = traj.eval_at(engine.grid[node - 1], side="left")
    return engine.to_trajectory(engine.apply(states))


def picard_solve(spec, horizon, grid_step, tol=1e-6, max_iter=200,
                 quad_points=16):
    """Iterate the operator from the constant-history initial guess until
    successive sweeps differ by less than tol in the product sup metric."""
    violations = validate(spec if not isinstance(spec, CompiledSystem)
                          else spec.spec)
    if violations:
        raise OracleError("validation failed: " + "; ".join(violations))
    engine = PicardEngine(spec, horizon, grid_step, quad_points=quad_points)
    states = engine.initial_guess()
    deltas = []
    converged = False
    for it in range(1, max_iter + 1):
        new = engine.apply(states)
        delta = float(np.sum(np.max(np.abs(new - states), axis=0)))
        deltas.append(delta)
        states = new
        if delta < tol:
            converged = True
            break
        if not np.isfinite(delta) or delta > 1e12:
            break
    report = PicardReport(iterations=len(deltas), sup_deltas=deltas,
                          converged=converged,
                          final=engine.to_trajectory(states))
    if not converged:
        raise NotConverged(report)
    return report


@dataclass
class CrosscheckReport:
    sup_diff: float
    per_component: np.ndarray
    picard: PicardReport
    sim: Trajectory
    horizon: float
    notes: list = field(default_factory=list)


def crosscheck(spec, horizon=5.0, sim_step=1e-3, oracle_step=1e-2,
               tol=1e-6, max_iter=200, quad_points=16):
    """Run the integrator and the Picard oracle and report the largest
    1-norm gap over [0, horizon] on the oracle grid."""
    config = IntegratorConfig(step=sim_step, horizon=horizon,
                              quad_points=quad_points)
    report = picard_solve(spec, horizon, oracle_step, tol=tol,
                          max_iter=max_iter, quad_points=quad_points)
    traj = simulate(spec, config)
    grid = report.final.grid
    mask = grid >= 0.0
    qs = grid[mask]
    sim_vals = traj.values(qs, side="right")
    # duplicated impulse nodes: the first twin is the left record
    for i in range(len(qs) - 1):
        if qs[i] == qs[i + 1]:
            sim_vals[i] = traj.eval_at(qs[i], side="left")
    orc_vals = report.final.states[mask]
    diff = np.abs(sim_vals - orc_vals)
    return CrosscheckReport(
        sup_diff=float(np.max(np.sum(diff, axis=1))),
        per_component=np.max(diff, axis=0),
        picard=report, sim=traj, horizon=horizon)
