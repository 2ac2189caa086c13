import numpy as np
import pytest

from nddestab.certify import delay_bound
from nddestab.cli import loads
from nddestab.examples import BUILTIN
from nddestab.expr import constant_value, parse
from nddestab.model import ImpulseSchedule, SystemSpec


def matrix(n, entries=None):
    """n x n expression matrix from a {(i, j): "expr"} dict (0-based)."""
    M = [[parse("0") for _ in range(n)] for _ in range(n)]
    for (i, j), s in (entries or {}).items():
        M[i][j] = parse(s)
    return M


def family(n, entries, default="0"):
    if entries is None:
        entries = [default] * n
    if isinstance(entries, str):
        entries = [entries] * n
    return [parse(s) for s in entries]


def build_spec(n=1, Q=None, C=None, A=None, B=None, W=None, tau="0",
               delta="0", r="0", f=None, g=None, h=None, alpha=None,
               beta=None, gamma=None, v="1", eta=None, mu=None,
               impulses=None, phi="1", sup_window=20.0, sup_step=1e-3):
    """Small-system builder for unit tests.

    impulses: (instants, map_exprs, p_ik_row, p_row) or None.
    """
    tau_e, delta_e, r_e = parse(tau), parse(delta), parse(r)
    v_e = family(n, v)
    if eta is None:
        eta = [constant_value(e) or 1.0 for e in v_e]
    if mu is None:
        mu = max(delay_bound(d, sup_window, sup_step)[0]
                 for d in (tau_e, delta_e, r_e))
    if impulses is None:
        sched = ImpulseSchedule.empty(n)
    else:
        instants, map_exprs, p_ik_row, p_row = impulses
        maps = [family(n, map_exprs) for _ in instants]
        sched = ImpulseSchedule(
            instants=list(instants), maps=maps,
            p_ik=np.tile(np.asarray(p_ik_row, dtype=float)[:, None],
                         (1, len(instants))),
            p_row=list(p_row))
    return SystemSpec(
        n=n, Q=matrix(n, Q), C=matrix(n, C), A=matrix(n, A),
        B=matrix(n, B), W=matrix(n, W), tau=tau_e, delta=delta_e, r=r_e,
        f=family(n, f), g=family(n, g), h=family(n, h),
        alpha=list(alpha) if alpha else [0.0] * n,
        beta=list(beta) if beta else [0.0] * n,
        gamma=list(gamma) if gamma else [0.0] * n,
        v=v_e, eta=list(eta), mu=float(mu), impulses=sched,
        phi=family(n, phi), sup_window=sup_window, sup_step=sup_step)


def load_example(name):
    return loads(BUILTIN[name], warn=lambda m: None)


@pytest.fixture(scope="session")
def ex5_1():
    return load_example("ex5_1")


@pytest.fixture(scope="session")
def ex5_2():
    return load_example("ex5_2")
