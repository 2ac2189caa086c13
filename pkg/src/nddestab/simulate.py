# Method-of-steps RK4 integration of the impulsive neutral system.
# The integrator advances y = Fx (the neutral combination); the state x
# is recovered algebraically from y and the committed history at every
# stage.

import math
from dataclasses import dataclass

import numpy as np

_trapz = getattr(np, "trapezoid", None) or np.trapz

from .expr import constant_value
from .model import (OutOfRange, Trajectory, build_segments, interp_records,
                    theta, validate)

__all__ = [
    "IntegratorConfig", "CompiledSystem", "rhs", "recover_state", "step_rk4",
    "apply_impulse", "impulse_jump", "simulate", "SimulationError",
    "NeutralRecoveryDiverged", "QTooLarge",
]


class SimulationError(Exception):
    def __init__(self, message, at_time=None):
        if at_time is not None:
            message = f"{message} (t = {at_time})"
        super().__init__(message)
        self.at_time = at_time


class NeutralRecoveryDiverged(SimulationError):
    pass


class QTooLarge(SimulationError):
    pass


@dataclass
class IntegratorConfig:
    step: float = 1e-3
    horizon: float = 10.0
    quad_points: int = 16
    recovery_tol: float = 1e-13
    recovery_max_iter: int = 100

    def check(self):
        if self.step <= 0 or self.horizon <= 0 or self.quad_points < 1:
            raise ValueError("step, horizon and quad_points must be positive")


def _compile_matrix(M, n):
    """(t -> (n, n) ndarray, is_nonzero) for a matrix of expressions."""
    consts = [[constant_value(M[i][j]) for j in range(n)] for i in range(n)]
    if all(c is not None for row in consts for c in row):
        arr = np.array(consts, dtype=float)
        nonzero = bool(np.any(arr != 0.0))
        return (lambda t: arr), nonzero
    entries = [[(M[i][j] if consts[i][j] is None else None)
                for j in range(n)] for i in range(n)]
    base = np.array([[c if c is not None else 0.0 for c in row]
                     for row in consts])

    def fn(t):
        out = base.copy()
        for i in range(n):
            for j in range(n):
                e = entries[i][j]
                if e is not None:
                    out[i, j] = e.evaluate(t, var="t")
        return out
    return fn, True


def _compile_componentwise(funcs):
    """Vectorized map applying funcs[j] to column j of an (..., n) array."""
    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j, e in enumerate(funcs):
            out[..., j] = e.evaluate(x[..., j], var="x")
        return out
    return fn


def _compile_scalar(e):
    c = constant_value(e)
    if c is not None:
        return lambda t: c
    return lambda t: e.evaluate(t, var="t")


class CompiledSystem:
    """SystemSpec with every expression compiled to fast callables."""

    def __init__(self, spec):
        self.spec = spec
        n = spec.n
        self.n = n
        self.Q, self.has_Q = _compile_matrix(spec.Q, n)
        self.C, self.has_C = _compile_matrix(spec.C, n)
        self.A, self.has_A = _compile_matrix(spec.A, n)
        self.B, self.has_B = _compile_matrix(spec.B, n)
        self.W, self.has_W = _compile_matrix(spec.W, n)
        self.f = _compile_componentwise(spec.f)
        self.g = _compile_componentwise(spec.g)
        self.h = _compile_componentwise(spec.h)
        self.tau = _compile_scalar(spec.tau)
        self.delta = _compile_scalar(spec.delta)
        self.r = _compile_scalar(spec.r)
        self.v = [_compile_scalar(vi) for vi in spec.v]
        self.phi = spec.phi
        self.theta = theta(spec)

    def phi_values(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.empty((len(ts), self.n))
        for j, p in enumerate(self.phi):
            out[:, j] = p.evaluate(ts, var="t")
        return out


def _as_compiled(spec):
    return spec if isinstance(spec, CompiledSystem) else CompiledSystem(spec)


def rhs(spec, t, history, quad_points=16):
    """Drift of the neutral combination at time t.

    history(ts) must return the state on an array of times covering
    [theta, t]; the distributed term uses composite trapezoid on
    quad_points+1 nodes of [t - r(t), t]."""
    sys = _as_compiled(spec)
    xt = history(np.array([t]))[0]
    d = sys.C(t) @ xt
    if sys.has_A:
        d = d + sys.A(t) @ sys.f(xt)
    if sys.has_B:
        xd = history(np.array([t - sys.delta(t)]))[0]
        d = d + sys.B(t) @ sys.g(xd)
    if sys.has_W:
        rt = sys.r(t)
        if rt > 1e-14:
            ss = np.linspace(t - rt, t, quad_points + 1)
            hv = sys.h(history(ss))
            d = d + sys.W(t) @ _trapz(hv, ss, axis=0)
    return d


class _StageHistory:
    """State lookup over committed records plus a linear extension to the
    current stage anchor (the not-yet-committed point)."""

    def __init__(self, sys, grid, states, seg_id, seg_lo, seg_hi):
        self.sys = sys
        self.grid = grid
        self.states = states
        self.seg = (seg_id, seg_lo, seg_hi)
        self.m = 0                    # committed record count
        self.anchor_t = None
        self.anchor_x = None

    @property
    def committed_time(self):
        return self.grid[self.m - 1]

    def set_anchor(self, t, x):
        self.anchor_t = t
        self.anchor_x = x

    def __call__(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.empty((len(ts), self.sys.n))
        hist = ts <= 0.0
        if np.any(hist):
            out[hist] = self.sys.phi_values(ts[hist])
        tm = self.committed_time
        mid = (~hist) & (ts <= tm + 1e-13)
        if np.any(mid):
            seg_id, seg_lo, seg_hi = self.seg
            out[mid] = interp_records(self.grid, self.states, seg_id, seg_lo,
                                      seg_hi, ts[mid], cubic=True,
                                      limit=self.m)
        ext = (~hist) & ~mid
        if np.any(ext):
            if self.anchor_t is None or np.any(ts[ext] > self.anchor_t + 1e-12):
                raise OutOfRange("history gap beyond the committed frontier")
            span = self.anchor_t - tm
            if span <= 0:
                out[ext] = self.anchor_x
            else:
                w = np.clip((ts[ext] - tm) / span, 0.0, 1.0)
                x0 = self.states[self.m - 1]
                out[ext] = (1.0 - w)[:, None] * x0 + w[:, None] * self.anchor_x
        return out


def recover_state(spec, t, y, history, tol=1e-13, max_iter=100):
    """Invert the neutral combination: x(t) from y(t) = (Fx)(t) and the
    history.  When the delayed argument falls past the committed
    frontier the relation is iterated to a fixed point (geometric under
    the row-sum norm of Q(t) < 1)."""
    sys = _as_compiled(spec)
    if not sys.has_Q:
        return np.asarray(y, dtype=float).copy()
    Qt = sys.Q(t)
    qnorm = float(np.max(np.sum(np.abs(Qt), axis=1)))
    if qnorm >= 1.0:
        raise QTooLarge(f"row-sum norm of Q(t) is {qnorm:.4g} >= 1", t)
    d = t - sys.tau(t)
    committed = getattr(history, "committed_time", None)
    if committed is None or d <= committed + 1e-13:
        return y + Qt @ history(np.array([d]))[0]
    x = np.asarray(y, dtype=float).copy()
    for _ in range(max_iter):
        history.set_anchor(t, x)
        xn = y + Qt @ history(np.array([d]))[0]
        if np.max(np.abs(xn - x)) < tol:
            return xn
        x = xn
    raise NeutralRecoveryDiverged(
        "fixed-point recovery of the neutral state did not converge", t)


def step_rk4(spec, t, history, h, y, quad_points=16, recovery_tol=1e-13,
             recovery_max_iter=100):
    """One classical RK4 step of y' = drift over [t, t + h].

    history must expose the committed trajectory through t; returns
    (y_next, x_next) with the state recovered at t + h."""
    sys = _as_compiled(spec)

    def stage(ts, ys):
        xs = recover_state(sys, ts, ys, history, tol=recovery_tol,
                           max_iter=recovery_max_iter)
        history.set_anchor(ts, xs)
        return rhs(sys, ts, history, quad_points=quad_points)

    k1 = stage(t, y)
    k2 = stage(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = stage(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = stage(t + h, y + h * k3)
    y1 = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    x1 = recover_state(sys, t + h, y1, history, tol=recovery_tol,
                       max_iter=recovery_max_iter)
    history.set_anchor(t + h, x1)
    return y1, x1


def impulse_jump(spec, k, x_left):
    """Jump vector at instant k from the pre-impulse component values."""
    sys = _as_compiled(spec)
    maps = sys.spec.impulses.maps[k]
    return np.array([maps[i].evaluate(float(x_left[i]), var="x")
                     for i in range(sys.n)])


def apply_impulse(spec, k, t_k, y_left, x_left, history):
    """Add the jump to the neutral combination and recover the
    post-impulse state.  The delayed argument must lie strictly in the
    left history."""
    sys = _as_compiled(spec)
    d = t_k - sys.tau(t_k)
    if sys.has_Q and d >= t_k - 1e-12:
        raise SimulationError(
            "impulse instant coincides with a vanishing neutral delay; "
            "the jump relation would be implicit", t_k)
    J = impulse_jump(sys, k, x_left)
    y_right = y_left + J
    x_right = recover_state(sys, t_k, y_right, history)
    return y_right, x_right, J


def _plan_grid(sys, config):
    """Grid with history nodes, uniform steps inside each inter-impulse
    segment, and duplicated impulse nodes."""
    horizon = config.horizon
    events = [tk for tk in sys.spec.impulses.instants if 0.0 < tk <= horizon]
    cuts = [0.0] + events
    if not events or events[-1] < horizon:
        cuts.append(horizon)
    hist = []
    t = sys.theta
    while t < -1e-12:
        hist.append(t)
        t += config.step
    nodes = []          # (time, kind): kind 0 plain, 1 left, 2 right
    nodes.append((0.0, 0))
    for a, b in zip(cuts[:-1], cuts[1:]):
        nsteps = max(1, int(math.ceil((b - a) / config.step - 1e-9)))
        hseg = (b - a) / nsteps
        for s in range(1, nsteps + 1):
            tt = a + s * hseg if s < nsteps else b
            kind = 1 if (b in events and s == nsteps) else 0
            nodes.append((tt, kind))
        if b in events:
            nodes.append((b, 2))
    grid = np.array(hist + [tt for tt, _ in nodes])
    kinds = np.array([0] * len(hist) + [kd for _, kd in nodes])
    return grid, kinds, len(hist)


def simulate(spec, config):
    """Integrate the system on [theta, horizon]; impulse instants get
    two-sided records.  Deterministic for fixed inputs."""
    config.check()
    sys = _as_compiled(spec)
    violations = validate(sys.spec)
    if violations:
        raise SimulationError("validation failed: " + "; ".join(violations))

    grid, kinds, n_hist = _plan_grid(sys, config)
    N = len(grid)
    states = np.zeros((N, sys.n))
    seg_id, seg_lo, seg_hi = build_segments(grid)
    if n_hist:
        states[:n_hist] = sys.phi_values(grid[:n_hist])

    hist = _StageHistory(sys, grid, states, seg_id, seg_lo, seg_hi)
    x0 = sys.phi_values(np.array([0.0]))[0]
    states[n_hist] = x0
    hist.m = n_hist + 1

    d0 = -sys.tau(0.0)
    y = x0 - sys.Q(0.0) @ sys.phi_values(np.array([d0]))[0] if sys.has_Q \
        else x0.copy()

    impulse_seen = []
    instants = list(sys.spec.impulses.instants)
    try:
        for idx in range(n_hist + 1, N):
            t_prev = grid[idx - 1]
            t_next = grid[idx]
            if kinds[idx] == 2:
                k = instants.index(t_next)
                y, x_right, _ = apply_impulse(sys, k, t_next, y,
                                              states[idx - 1], hist)
                states[idx] = x_right
                hist.m = idx + 1
                impulse_seen.append(t_next)
                continue
            h = t_next - t_prev
            y, x1 = step_rk4(sys, t_prev, hist, h, y,
                             quad_points=config.quad_points,
                             recovery_tol=config.recovery_tol,
                             recovery_max_iter=config.recovery_max_iter)
            states[idx] = x1
            hist.m = idx + 1
    except SimulationError:
        raise
    except OutOfRange as exc:
        raise SimulationError(str(exc), grid[idx]) from exc

    return Trajectory(grid=grid, states=states, step=config.step,
                      provenance="integrator", phi=sys.phi, theta=sys.theta,
                      impulse_times=np.array(impulse_seen),
                      horizon=config.horizon)
