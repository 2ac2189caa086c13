# Problem instance and trajectory data model shared by certification,
# simulation and the Picard reference solver.

from dataclasses import dataclass, field

import numpy as np

from .expr import ScalarExpr, constant_value, sup_abs

__all__ = [
    "SystemSpec", "ImpulseSchedule", "Trajectory", "Certificate", "RowTerms",
    "ConditionResult", "validate", "theta", "OutOfRange",
]

ZERO_TOL = 1e-12


class OutOfRange(Exception):
    pass


@dataclass
class ImpulseSchedule:
    """Impulse instants plus per-(component, instant) jump maps.

    maps[k][i] is the jump expression for component i at instant k, a
    function of the pre-impulse component value.  p_ik has shape (n, K);
    p_row holds the per-row constants p_i.
    """
    instants: list          # strictly increasing positive floats
    maps: list              # [k][i] -> ScalarExpr in x
    p_ik: np.ndarray
    p_row: list

    @classmethod
    def empty(cls, n):
        return cls(instants=[], maps=[], p_ik=np.zeros((n, 0)), p_row=[0.0] * n)

    def is_empty(self):
        return len(self.instants) == 0


@dataclass
class SystemSpec:
    """Full problem instance for the impulsive neutral delay system."""
    n: int
    Q: list                  # n x n nested lists of ScalarExpr in t
    C: list
    A: list
    B: list
    W: list
    tau: ScalarExpr
    delta: ScalarExpr
    r: ScalarExpr
    f: list                  # length-n ScalarExpr in x
    g: list
    h: list
    alpha: list              # Lipschitz constants of f
    beta: list
    gamma: list
    v: list                  # length-n ScalarExpr in t
    eta: list
    mu: float
    impulses: ImpulseSchedule
    phi: list                # length-n ScalarExpr in t, history on [theta, 0]
    theta_floor: float = None
    sup_window: float = 100.0
    sup_step: float = 1e-3
    non_rigorous_constants: bool = False


def _delay_grid(spec):
    npts = int(spec.sup_window / max(spec.sup_step, 1e-6)) + 1
    npts = min(npts, 400_001)
    return np.linspace(0.0, spec.sup_window, npts)


def theta(spec):
    """Numeric inf over t >= 0 of t - tau(t), t - delta(t), t - r(t)."""
    if spec.theta_floor is not None:
        return spec.theta_floor
    consts = [constant_value(d) for d in (spec.tau, spec.delta, spec.r)]
    if all(c is not None for c in consts):
        val = -max(consts)
    else:
        ts = _delay_grid(spec)
        lags = np.minimum.reduce([
            ts - spec.tau.evaluate(ts, var="t"),
            ts - spec.delta.evaluate(ts, var="t"),
            ts - spec.r.evaluate(ts, var="t"),
        ])
        val = float(min(lags.min(), 0.0))
    spec.theta_floor = val
    return val


def _check_dims(spec, out):
    n = spec.n
    if n < 1:
        out.append("dimension: n must be a positive integer")
        return False
    ok = True
    for name in ("Q", "C", "A", "B", "W"):
        m = getattr(spec, name)
        if len(m) != n or any(len(row) != n for row in m):
            out.append(f"dimension: matrix {name} is not {n}x{n}")
            ok = False
    for name in ("f", "g", "h", "alpha", "beta", "gamma", "v", "eta", "phi"):
        if len(getattr(spec, name)) != n:
            out.append(f"dimension: {name} must have length {n}")
            ok = False
    if not spec.impulses.is_empty():
        kk = len(spec.impulses.instants)
        if len(spec.impulses.maps) != kk or spec.impulses.p_ik.shape != (n, kk):
            out.append("dimension: impulse schedule tables do not match "
                       "instants")
            ok = False
        if len(spec.impulses.p_row) != n:
            out.append("dimension: p_row must have length n")
            ok = False
    return ok


def validate(spec):
    """Check the structural assumptions (A1)-(A3) plus conditions (ii)/(iii) on
    the sampled window.  Returns a list of violation strings; empty iff
    the spec is admissible."""
    out = []
    if not _check_dims(spec, out):
        return out

    ts = _delay_grid(spec)
    for name, d in (("tau", spec.tau), ("delta", spec.delta), ("r", spec.r)):
        vals = d.evaluate(ts, var="t")
        if np.min(vals) < -ZERO_TOL:
            out.append(f"A1: delay {name}(t) is negative on the sampled "
                       f"window (min {np.min(vals):.3g})")

    for name, funcs in (("f", spec.f), ("g", spec.g), ("h", spec.h)):
        for j, e in enumerate(funcs, start=1):
            if abs(e.evaluate(0.0, var="x")) > ZERO_TOL:
                out.append(f"A2: {name}_{j}(0) != 0")
    for name, consts in (("alpha", spec.alpha), ("beta", spec.beta),
                         ("gamma", spec.gamma)):
        for j, c in enumerate(consts, start=1):
            if c < 0:
                out.append(f"A2: Lipschitz constant {name}_{j} is negative")

    imp = spec.impulses
    if not imp.is_empty():
        prev = 0.0
        for k, tk in enumerate(imp.instants, start=1):
            if tk <= prev:
                out.append("impulse instants not strictly increasing "
                           f"(t_{k} = {tk} after {prev})")
                break
            prev = tk
        for k, row in enumerate(imp.maps):
            for i, e in enumerate(row, start=1):
                if abs(e.evaluate(0.0, var="x")) > ZERO_TOL:
                    out.append(f"A3: I_{i}{k + 1}(0) != 0")
        tprev = 0.0
        for k, tk in enumerate(imp.instants):
            gap = tk - tprev
            for i in range(spec.n):
                if imp.p_ik[i, k] > imp.p_row[i] * gap + ZERO_TOL:
                    out.append(f"(ii): p_ik exceeds p_i*(t_k - t_(k-1)) for "
                               f"i={i + 1}, k={k + 1}")
            tprev = tk

    for i, (vi, eta_i) in enumerate(zip(spec.v, spec.eta), start=1):
        if eta_i <= 0:
            out.append(f"(iii) requires eta_i > 0 (eta_{i} = {eta_i})")
            continue
        vals = vi.evaluate(ts, var="t")
        # eta_i may equal the infimum of v_i, so the comparison is
        # non-strict up to rounding
        if np.min(vals) < eta_i - ZERO_TOL:
            out.append(f"(iii): v_{i}(t) >= eta_{i} fails on the sampled "
                       f"window (min {np.min(vals):.6g})")

    if theta(spec) > 0:
        out.append("theta_floor must be <= 0")
    return out


# --- trajectories -----------------------------------------------------------

def _lagrange4(tq, tg, yg):
    """Cubic Lagrange through 4 nodes, vectorized.

    tq: (m,), tg: (m, 4), yg: (m, 4, n) -> (m, n)
    """
    t = tq[:, None]
    w = np.ones((len(tq), 4))
    for a in range(4):
        for b in range(4):
            if a != b:
                w[:, a] *= (t[:, 0] - tg[:, b]) / (tg[:, a] - tg[:, b])
    return np.einsum("ma,man->mn", w, yg)


@dataclass
class Trajectory:
    """Piecewise-smooth time series with two-sided records at impulse
    instants.  History on [theta, 0] always evaluates through phi."""
    grid: np.ndarray         # sorted; impulse instants appear twice
    states: np.ndarray       # (N, n)
    step: float
    provenance: str          # "integrator" | "oracle"
    phi: list
    theta: float
    impulse_times: np.ndarray
    horizon: float
    _seg_id: np.ndarray = field(default=None, repr=False)
    _seg_lo: np.ndarray = field(default=None, repr=False)
    _seg_hi: np.ndarray = field(default=None, repr=False)

    @property
    def n(self):
        return self.states.shape[1]

    def _segments(self):
        if self._seg_id is None:
            self._seg_id, self._seg_lo, self._seg_hi = build_segments(self.grid)
        return self._seg_id, self._seg_lo, self._seg_hi

    def values(self, ts, side="right"):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < self.theta - 1e-9) or np.any(ts > self.horizon + 1e-9):
            raise OutOfRange(
                f"query outside [{self.theta}, {self.horizon}]")
        out = np.empty((len(ts), self.n))
        hist = ts <= 0.0
        if np.any(hist):
            th = ts[hist]
            for j, p in enumerate(self.phi):
                out[hist, j] = p.evaluate(th, var="t")
        main = ~hist
        if np.any(main):
            seg_id, seg_lo, seg_hi = self._segments()
            cubic = self.provenance != "oracle"
            out[main] = interp_records(
                self.grid, self.states, seg_id, seg_lo, seg_hi,
                ts[main], side=side, cubic=cubic)
        return out

    def eval_at(self, t, side="right"):
        return self.values(np.array([float(t)]), side=side)[0]


def build_segments(grid):
    """Per-node smooth-segment ids and inclusive segment bounds.

    A new segment starts after each duplicated node (impulse) and at the
    first node with t >= 0 (history nodes form their own segment)."""
    N = len(grid)
    seg_id = np.zeros(N, dtype=int)
    s = 0
    for i in range(1, N):
        if grid[i] == grid[i - 1] or (grid[i - 1] < 0.0 <= grid[i]):
            s += 1
        seg_id[i] = s
    nseg = s + 1
    seg_lo = np.zeros(nseg, dtype=int)
    seg_hi = np.zeros(nseg, dtype=int)
    for sid in range(nseg):
        idx = np.nonzero(seg_id == sid)[0]
        seg_lo[sid], seg_hi[sid] = idx[0], idx[-1]
    return seg_id, seg_lo, seg_hi


def interp_records(grid, states, seg_id, seg_lo, seg_hi, ts, side="right",
                   cubic=True, limit=None):
    """Interpolate stored records at query times ts (all > 0).

    Cubic Lagrange through the four nearest nodes of the containing
    smooth segment (linear when the segment is shorter or cubic=False);
    never interpolates across an impulse instant.  `limit` restricts
    lookups to the first `limit` committed records."""
    N = len(grid) if limit is None else limit
    pos = np.searchsorted(grid[:N], ts, side="left")
    exact = np.zeros(len(ts), dtype=bool)
    inb = pos < N
    exact[inb] = np.abs(grid[pos[inb]] - ts[inb]) <= 1e-13 * np.maximum(
        1.0, np.abs(ts[inb]))
    if side == "right":
        # move to the last record with this stamp
        while True:
            nxt = pos + 1
            adv = exact & (nxt < N)
            adv[adv] = grid[nxt[adv]] == ts[adv]
            if not np.any(adv):
                break
            pos[adv] += 1
            # re-check equality holds by construction
    pos = np.where(exact, pos, pos - 1)
    if np.any(pos < 0) or np.any(pos > N - 1):
        raise OutOfRange("query outside the committed grid")

    out = np.empty((len(ts), states.shape[1]))
    if np.any(exact):
        out[exact] = states[pos[exact]]
    rest = ~exact
    if not np.any(rest):
        return out
    p = pos[rest]
    tq = ts[rest]
    sid = seg_id[p]
    lo = seg_lo[sid]
    hi = np.minimum(seg_hi[sid], N - 1)
    if np.any(p + 1 > hi):
        raise OutOfRange("query beyond the end of a committed segment")
    wide = cubic & ((hi - lo) >= 3)
    vals = np.empty((len(tq), states.shape[1]))
    if np.any(wide):
        b = np.clip(p[wide] - 1, lo[wide], hi[wide] - 3)
        offs = b[:, None] + np.arange(4)[None, :]
        vals[wide] = _lagrange4(tq[wide], grid[offs], states[offs])
    lin = ~wide
    if np.any(lin):
        a = p[lin]
        t0, t1 = grid[a], grid[a + 1]
        w = (tq[lin] - t0) / (t1 - t0)
        vals[lin] = (1.0 - w)[:, None] * states[a] + w[:, None] * states[a + 1]
    out[rest] = vals
    return out


# --- certificates -----------------------------------------------------------

@dataclass
class RowTerms:
    """Per-row pieces of the contraction sum for one state component."""
    q_sup: float             # max_j sup |q_ij|
    cbar_sup: float          # max_j sup |cbar_ij|
    af_sup: float            # max_j sup |a_ij * alpha_j|
    bg_sup: float            # max_j sup |b_ij * beta_j|
    w_sup: float             # max_j sup |w_ij * mu * gamma_j|
    qv_sup: float            # max_j sup |q_ij * v_i|
    p_i: float
    kernel: float            # K_i

    @property
    def contribution(self):
        inner = (self.cbar_sup + self.af_sup + self.bg_sup + self.w_sup
                 + self.qv_sup + self.p_i)
        return self.q_sup + inner * self.kernel


@dataclass
class ConditionResult:
    ok: bool
    detail: str


@dataclass
class Certificate:
    """Outcome of a contraction-certificate evaluation."""
    mode: str                       # "asymptotic" | "exponential" | "corollary"
    rho: float
    rows: list                      # RowTerms per component
    conditions: dict                # label -> ConditionResult
    certified: bool
    lambda_max: float = None        # only for exponential mode
    reference_rho: float = None         # reported value when running a built-in
    notes: list = field(default_factory=list)
    non_rigorous: bool = False
    sup_step: float = None

    @property
    def kernels(self):
        return [r.kernel for r in self.rows]
