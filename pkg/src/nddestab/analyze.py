# Trajectory post-processing: norm series, decay-rate fits, empirical
# stability verdicts, CSV and SVG emission.

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DecayReport", "norm_series", "fit_decay", "check_definitions",
    "emit_csv", "emit_plot", "TooFewPoints", "history_norm",
]

NORM_FLOOR = 1e-14


class TooFewPoints(Exception):
    pass


@dataclass
class DecayReport:
    lambda_fit: float
    c_fit: float
    residual: float
    tail_norm: float
    decays_to_zero: bool
    exponential_bound_holds: bool
    lambda_bound_used: float
    c_bound_used: float = None


def norm_series(traj):
    """(t, 1-norm) per grid record; at impulse instants only the
    right-side record contributes."""
    grid = traj.grid
    keep = np.ones(len(grid), dtype=bool)
    keep[:-1] = grid[:-1] != grid[1:]     # drop left twins
    return grid[keep], np.sum(np.abs(traj.states[keep]), axis=1)


def history_norm(traj, samples=2001):
    """Sup-based 1-norm of the initial history on [theta, 0]."""
    if traj.theta >= 0.0:
        x0 = traj.values(np.array([0.0]))[0]
        return float(np.sum(np.abs(x0)))
    ts = np.linspace(traj.theta, 0.0, samples)
    vals = np.array([p.evaluate(ts, var="t") for p in traj.phi])
    return float(np.sum(np.max(np.abs(vals), axis=1)))


def fit_decay(ts, norms, window_start, window_end):
    """Least-squares log-linear fit of the norm over a tail window.

    Returns (lambda_fit, c_fit, residual); points with norm below the
    floor are skipped."""
    ts = np.asarray(ts, dtype=float)
    norms = np.asarray(norms, dtype=float)
    mask = (ts >= window_start) & (ts <= window_end) & (norms > NORM_FLOOR)
    if np.sum(mask) < 10:
        raise TooFewPoints(
            f"only {int(np.sum(mask))} usable points in "
            f"[{window_start}, {window_end}]")
    t = ts[mask]
    y = np.log(norms[mask])
    slope, intercept = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * t + intercept)) ** 2)))
    return -float(slope), float(np.exp(intercept)), resid


def check_definitions(traj, spec, certificate=None, decay_tol=1e-3,
                      c_cap=100.0, lambda_points=100):
    """Empirical verdicts for norm decay and the exponential bound,
    observed on the simulated horizon."""
    ts, norms = norm_series(traj)
    main = ts >= 0.0
    ts, norms = ts[main], norms[main]
    phi_norm = history_norm(traj)
    tail = float(norms[-1])
    decays = tail < decay_tol * max(phi_norm, NORM_FLOOR)

    eta_min = min(spec.eta)
    lambda_fit, c_fit, resid = 0.0, 0.0, 0.0
    try:
        lambda_fit, c_fit, resid = fit_decay(
            ts, norms, 0.2 * traj.horizon, traj.horizon)
    except TooFewPoints:
        pass

    best_c = np.inf
    best_lambda = 0.0
    scale = max(phi_norm, NORM_FLOOR)
    for lam in np.linspace(eta_min / (lambda_points + 1),
                           eta_min * lambda_points / (lambda_points + 1),
                           lambda_points):
        c_needed = float(np.max(norms * np.exp(lam * ts))) / scale
        if c_needed < best_c:
            best_c = c_needed
            best_lambda = lam
    holds = best_c <= c_cap
    return DecayReport(lambda_fit=lambda_fit, c_fit=c_fit, residual=resid,
                       tail_norm=tail, decays_to_zero=decays,
                       exponential_bound_holds=holds,
                       lambda_bound_used=best_lambda, c_bound_used=best_c)


def emit_csv(traj, destination):
    """Write `t,x1,...,xn,norm1` rows with 12 significant digits; impulse
    instants appear twice (left then right).  Returns bytes written."""
    n = traj.n
    buf = io.StringIO()
    buf.write("t," + ",".join(f"x{j + 1}" for j in range(n)) + ",norm1\n")
    for t, row in zip(traj.grid, traj.states):
        cells = [f"{t:.12g}"] + [f"{v:.12g}" for v in row]
        cells.append(f"{np.sum(np.abs(row)):.12g}")
        buf.write(",".join(cells) + "\n")
    data = buf.getvalue().encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data.decode("utf-8"))
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)


def emit_plot(trajectories, destination, labels=None, title=None):
    """Plot component trajectories against time into a standalone SVG
    with impulse instants marked.  Returns bytes written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    if not trajectories:
        raise ValueError("emit_plot needs at least one trajectory")

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for ti, traj in enumerate(trajectories):
        prefix = "" if labels is None else f"{labels[ti]} "
        for j in range(traj.n):
            ax.plot(traj.grid, traj.states[:, j], lw=1.2,
                    label=f"{prefix}x{j + 1}(t)")
        for tk in traj.impulse_times:
            ax.axvline(tk, color="0.75", ls="--", lw=0.7, zorder=0)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    data = buf.getvalue()
    if hasattr(destination, "write"):
        try:
            destination.write(data)
        except TypeError:
            destination.write(data.decode("utf-8"))
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)
