# Contraction certificates: the rho < 1 criterion for asymptotic and
# exponential stability, and the impulse-free corollary variant.

import numpy as np

from .expr import Binary, Const, ScalarExpr, constant_value, sup_abs
from .model import Certificate, ConditionResult, RowTerms, theta, validate

__all__ = [
    "kernel_sup", "cbar", "row_term", "certify_asymptotic",
    "certify_exponential", "certify_corollary",
    "NonpositiveV", "NonEmptyImpulses", "CertifyError", "delay_bound",
]


class CertifyError(Exception):
    pass


class NonpositiveV(CertifyError):
    pass


class NonEmptyImpulses(CertifyError):
    pass


def kernel_sup(v_i, eta_i, window=50.0, step=1e-3):
    """K_i = sup over t of the integral from 0 to t of
    exp(-integral_s^t v_i(u) du) ds.

    Constant v_i = c bypasses to the closed form 1/c; otherwise the
    running integral accumulates by the trapezoid rule on a uniform
    grid over [0, window]."""
    c = constant_value(v_i)
    if c is not None:
        if c <= 0:
            raise NonpositiveV(f"constant v = {c} is not positive")
        return 1.0 / c
    npts = int(round(window / step)) + 1
    ts = np.linspace(0.0, window, npts)
    vs = v_i.evaluate(ts, var="t")
    if np.min(vs) <= 0:
        raise NonpositiveV("v(t) <= 0 on the grid")
    h = ts[1] - ts[0]
    dv = 0.5 * h * (vs[:-1] + vs[1:])     # trapezoid increments of V
    decay = np.exp(-dv)
    best = 0.0
    J = 0.0
    for m in range(len(dv)):
        J = decay[m] * J + 0.5 * h * (decay[m] + 1.0)
        if J > best:
            best = J
    return float(best)


def cbar(spec, i, j):
    """Shifted diagonal coefficient: c_ij for i != j, c_ii + v_i on the
    diagonal."""
    if i == j:
        return ScalarExpr(Binary("+", spec.C[i][j].root, spec.v[i].root))
    return spec.C[i][j]


def _sup_product(e1, scale, lo, hi, step, e2=None):
    """sup |e1 * scale * e2| over [lo, hi] (scale a constant, e2 optional)."""
    if scale == 0.0:
        return 0.0
    node = e1.root
    if e2 is not None:
        node = Binary("*", node, e2.root)
    if scale != 1.0:
        node = Binary("*", node, Const(scale))
    return sup_abs(ScalarExpr(node), lo, hi, step)


def row_term(spec, i, mode="asymptotic", window=None, step=None,
             kernel_window=50.0):
    """The seven quantities of row i of the contraction sum plus the
    kernel supremum and the row contribution."""
    window = spec.sup_window if window is None else window
    step = spec.sup_step if step is None else step
    lo = theta(spec)
    hi = window
    n = spec.n
    q_sup = max(sup_abs(spec.Q[i][j], lo, hi, step) for j in range(n))
    cb_sup = max(sup_abs(cbar(spec, i, j), lo, hi, step) for j in range(n))
    af_sup = max(_sup_product(spec.A[i][j], spec.alpha[j], lo, hi, step)
                 for j in range(n))
    bg_sup = max(_sup_product(spec.B[i][j], spec.beta[j], lo, hi, step)
                 for j in range(n))
    w_sup = max(_sup_product(spec.W[i][j], spec.mu * spec.gamma[j],
                             lo, hi, step) for j in range(n))
    qv_sup = max(_sup_product(spec.Q[i][j], 1.0, lo, hi, step, e2=spec.v[i])
                 for j in range(n))
    p_i = 0.0 if mode == "corollary" else spec.impulses.p_row[i]
    K_i = kernel_sup(spec.v[i], spec.eta[i], window=kernel_window, step=step)
    return RowTerms(q_sup=q_sup, cbar_sup=cb_sup, af_sup=af_sup,
                    bg_sup=bg_sup, w_sup=w_sup, qv_sup=qv_sup,
                    p_i=p_i, kernel=K_i)


def delay_bound(d, window, step):
    """(sup on the window, bounded?) for a delay expression.

    A delay is treated as unbounded when its supremum keeps growing
    between the two halves of the window."""
    c = constant_value(d)
    if c is not None:
        return c, True
    half = window / 2.0
    s1 = sup_abs(d, 0.0, half, step)
    s2 = sup_abs(d, half, window, step)
    bounded = s2 <= s1 + 1e-6
    return max(s1, s2), bounded


def _condition_iii(spec):
    details = []
    ok = True
    ts = np.linspace(0.0, spec.sup_window,
                     int(spec.sup_window / spec.sup_step) + 1)
    for i, (vi, eta_i) in enumerate(zip(spec.v, spec.eta), start=1):
        vmin = float(np.min(vi.evaluate(ts, var="t")))
        if eta_i <= 0 or vmin < eta_i - 1e-12:
            ok = False
            details.append(f"v_{i} min {vmin:.6g} vs eta_{i} = {eta_i}")
    return ConditionResult(ok, "; ".join(details) if details else
                           "v_i(t) >= eta_i > 0 on the window")


def _condition_ii(spec):
    imp = spec.impulses
    if imp.is_empty():
        return ConditionResult(True, "no impulses")
    tprev = 0.0
    for k, tk in enumerate(imp.instants):
        gap = tk - tprev
        for i in range(spec.n):
            if imp.p_ik[i, k] > imp.p_row[i] * gap + 1e-12:
                return ConditionResult(
                    False, f"p_ik > p_i*(t_k - t_(k-1)) at i={i + 1}, "
                    f"k={k + 1}")
        tprev = tk
    return ConditionResult(True, "p_ik <= p_i*(t_k - t_(k-1)) for all "
                           "listed instants")


def _certify(spec, mode, window=None, step=None, reference_rho=None):
    violations = validate(spec)
    if violations:
        raise CertifyError("validation failed: " + "; ".join(violations))
    window = spec.sup_window if window is None else window
    step = spec.sup_step if step is None else step

    conditions = {}
    if mode == "exponential":
        checks = [("tau", spec.tau), ("delta", spec.delta), ("r", spec.r)]
    else:
        checks = [("r", spec.r)]
    bad = []
    for name, d in checks:
        sup_d, bounded = delay_bound(d, window, step)
        if not bounded:
            bad.append(f"{name}(t) appears unbounded on the window")
        elif sup_d > spec.mu + 1e-9:
            bad.append(f"sup {name}(t) = {sup_d:.6g} exceeds mu = {spec.mu}")
    conditions["i"] = ConditionResult(not bad, "; ".join(bad) if bad else
                                      f"delays bounded by mu = {spec.mu}")
    conditions["ii"] = _condition_ii(spec)
    conditions["iii"] = _condition_iii(spec)

    rows = [row_term(spec, i, mode=mode, window=window, step=step)
            for i in range(spec.n)]
    rho = 0.0
    for r in rows:
        rho += r.contribution
    conditions["iv"] = ConditionResult(
        rho < 1.0, f"rho = {rho:.6g} {'<' if rho < 1.0 else '>='} 1")

    certified = all(c.ok for c in conditions.values())
    cert = Certificate(mode=mode, rho=rho, rows=rows, conditions=conditions,
                       certified=certified, reference_rho=reference_rho,
                       non_rigorous=spec.non_rigorous_constants,
                       sup_step=step)
    if spec.non_rigorous_constants:
        cert.notes.append("Lipschitz constants were estimated numerically; "
                          "the certificate is not rigorous.")
    if mode == "exponential" and certified:
        cert.lambda_max = min(spec.eta)
        cert.notes.append(
            f"admissible exponential rates lambda < {cert.lambda_max}")
    if reference_rho is not None:
        cert.notes.append(
            f"reference rho {reference_rho} vs recomputed {rho:.6g}; both "
            "values are reported, neither is silently preferred")
    return cert


def certify_asymptotic(spec, window=None, step=None, reference_rho=None):
    """Full certificate: conditions (i)-(iv), distributed delay r bounded."""
    return _certify(spec, "asymptotic", window=window, step=step,
                    reference_rho=reference_rho)


def certify_exponential(spec, window=None, step=None, reference_rho=None):
    """Same sum with all three delays required bounded; reports the
    admissible decay-rate bound min_i eta_i on success."""
    return _certify(spec, "exponential", window=window, step=step,
                    reference_rho=reference_rho)


def certify_corollary(spec, window=None, step=None, reference_rho=None):
    """Impulse-free specialization: identical sums with the p_i term
    absent."""
    if not spec.impulses.is_empty():
        raise NonEmptyImpulses("corollary mode requires an empty impulse "
                               "schedule")
    return _certify(spec, "corollary", window=window, step=step,
                    reference_rho=reference_rho)
