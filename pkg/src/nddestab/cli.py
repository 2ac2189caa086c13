# Command-line surface: sectioned spec-file ingestion, certification,
# simulation, crosschecking and the built-in examples.

import argparse
import io
import os
import re
import sys

import numpy as np

from . import analyze, certify, oracle
from .examples import BUILTIN
from .expr import ExprError, ScalarExpr, lipschitz_estimate, parse
from .expr import Const
from .model import ImpulseSchedule, SystemSpec, validate
from .oracle import NotConverged
from .simulate import IntegratorConfig, SimulationError, simulate

__all__ = ["main", "load", "loads", "dump", "SpecFileError"]

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 1
EXIT_USAGE = 2
EXIT_INTEGRATION = 3
EXIT_ORACLE = 4

_ZERO = ScalarExpr(Const(0.0))

_KNOWN = {
    "meta": {"name", "reference_rho"},
    "system": {"n"},
    "matrix.Q": None, "matrix.C": None, "matrix.A": None, "matrix.B": None,
    "matrix.W": None,
    "delays": {"tau", "delta", "r", "mu"},
    "nonlinearities": None,
    "auxiliary": None,
    "impulses": None,
    "history": None,
    "run": {"horizon", "step", "quad_points", "sup_window", "sup_step",
            "picard_step", "picard_tol"},
}


class SpecFileError(Exception):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _read_sections(text):
    """Parse the sectioned key = value layout, keeping line numbers."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SpecFileError("malformed section header", lineno)
            name = line[1:-1].strip()
            if name not in _KNOWN:
                raise SpecFileError(f"unknown section [{name}]", lineno)
            current = sections.setdefault(name, {})
            continue
        if current is None:
            raise SpecFileError("entry before any section header", lineno)
        if "=" not in line:
            raise SpecFileError("expected `key = value`", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in current:
            raise SpecFileError(f"duplicate key {key!r}", lineno)
        current[key] = (value, lineno)
    return sections


def _expr(raw, lineno, var):
    if not (raw.startswith('"') and raw.endswith('"') and len(raw) >= 2):
        raise SpecFileError("expressions must be double-quoted", lineno)
    try:
        e = parse(raw[1:-1])
    except ExprError as exc:
        raise SpecFileError(str(exc), lineno) from exc
    if e.variable not in (None, var):
        raise SpecFileError(
            f"expression must be over {var!r}, found {e.variable!r}", lineno)
    return e


def _number(raw, lineno, kind=float):
    try:
        return kind(raw)
    except ValueError as exc:
        raise SpecFileError(f"expected a number, found {raw!r}",
                            lineno) from exc


def _number_list(raw, lineno, count=None):
    vals = [_number(tok, lineno) for tok in raw.split()]
    if count is not None and len(vals) != count:
        raise SpecFileError(f"expected {count} numbers, found {len(vals)}",
                            lineno)
    return vals


def _matrix(sections, name, n):
    sect = sections.get(f"matrix.{name}", {})
    M = [[_ZERO for _ in range(n)] for _ in range(n)]
    for key, (value, lineno) in sect.items():
        m = re.fullmatch(r"(\d+)\s+(\d+)", key)
        if not m:
            raise SpecFileError(f"matrix entries use `i j = \"expr\"` "
                                f"(found key {key!r})", lineno)
        i, j = int(m.group(1)), int(m.group(2))
        if not (1 <= i <= n and 1 <= j <= n):
            raise SpecFileError(f"index ({i}, {j}) outside 1..{n}", lineno)
        M[i - 1][j - 1] = _expr(value, lineno, "t")
    return M


def _indexed_family(sect, prefix, n, var, default=None):
    out = [default] * n
    found = False
    for key, (value, lineno) in list(sect.items()):
        m = re.fullmatch(re.escape(prefix) + r"(\d+)", key)
        if not m:
            continue
        idx = int(m.group(1))
        if not 1 <= idx <= n:
            raise SpecFileError(f"index {idx} outside 1..{n}", lineno)
        out[idx - 1] = _expr(value, lineno, var)
        del sect[key]
        found = True
    if found and any(e is None for e in out):
        missing = [str(i + 1) for i, e in enumerate(out) if e is None]
        raise SpecFileError(
            f"{prefix}* given for some components but missing for "
            f"{', '.join(missing)}")
    return out, found


def _expand_generator(raw, lineno, count, horizon):
    body = raw[1:-1] if raw.startswith('"') else raw
    instants = []
    tprev = 0.0
    k = 1
    limit = count if count is not None else 10_000
    while len(instants) < limit:
        text = body.replace("t_{k-1}", repr(tprev))
        text = re.sub(r"\bk\b", str(k), text)
        try:
            tk = parse(text).evaluate(0.0)
        except ExprError as exc:
            raise SpecFileError(f"bad generator expression: {exc}",
                                lineno) from exc
        if tk <= tprev:
            raise SpecFileError("generator produced a non-increasing "
                                "instant", lineno)
        if count is None and tk > horizon:
            break
        instants.append(tk)
        tprev = tk
        k += 1
    return instants


def _check_keys(sections):
    for name, sect in sections.items():
        allowed = _KNOWN[name]
        if allowed is None:
            continue
        for key, (_, lineno) in sect.items():
            if key not in allowed:
                raise SpecFileError(f"unknown key {key!r} in [{name}]",
                                    lineno)


def loads(text, warn=None):
    """Parse spec-file text into (SystemSpec, IntegratorConfig, meta)."""
    warn = warn or (lambda msg: print(f"warning: {msg}", file=sys.stderr))
    sections = _read_sections(text)
    _check_keys(sections)

    sysect = sections.get("system", {})
    if "n" not in sysect:
        raise SpecFileError("[system] must define n")
    n = _number(*sysect["n"], kind=int)
    if n < 1:
        raise SpecFileError("n must be positive", sysect["n"][1])

    delays = sections.get("delays", {})
    for key in ("tau", "delta", "r"):
        if key not in delays:
            raise SpecFileError(f"[delays] must define {key}")
    tau = _expr(*delays["tau"], var="t")
    delta = _expr(*delays["delta"], var="t")
    rr = _expr(*delays["r"], var="t")

    nl = dict(sections.get("nonlinearities", {}))
    f, has_f = _indexed_family(nl, "f", n, "x", default=_ZERO)
    g, has_g = _indexed_family(nl, "g", n, "x", default=_ZERO)
    h, has_h = _indexed_family(nl, "h", n, "x", default=_ZERO)
    f = [e or _ZERO for e in f]
    g = [e or _ZERO for e in g]
    h = [e or _ZERO for e in h]
    non_rigorous = False

    def lip_constants(key, funcs, present):
        nonlocal non_rigorous
        if key in nl:
            value, lineno = nl.pop(key)
            return _number_list(value, lineno, count=n)
        if not present:
            return [0.0] * n
        non_rigorous = True
        warn(f"{key} not given; estimating Lipschitz constants on [-5, 5]")
        return [lipschitz_estimate(e, -5.0, 5.0, 1e-3) for e in funcs]

    alpha = lip_constants("alpha", f, has_f)
    beta = lip_constants("beta", g, has_g)
    gamma = lip_constants("gamma", h, has_h)
    for key, (_, lineno) in nl.items():
        raise SpecFileError(f"unknown key {key!r} in [nonlinearities]", lineno)

    aux = dict(sections.get("auxiliary", {}))
    v, has_v = _indexed_family(aux, "v", n, "t")
    if not has_v or any(e is None for e in v):
        raise SpecFileError("[auxiliary] must define v1..vn")
    if "eta" not in aux:
        raise SpecFileError("[auxiliary] must define eta")
    eta = _number_list(*aux.pop("eta"), count=n)
    for key, (_, lineno) in aux.items():
        raise SpecFileError(f"unknown key {key!r} in [auxiliary]", lineno)

    hist = dict(sections.get("history", {}))
    phi, has_phi = _indexed_family(hist, "phi", n, "t")
    if not has_phi or any(e is None for e in phi):
        raise SpecFileError("[history] must define phi1..phin")
    hist.pop("lo", None)
    for key, (_, lineno) in hist.items():
        raise SpecFileError(f"unknown key {key!r} in [history]", lineno)

    run = sections.get("run", {})

    def run_value(key, default, kind=float):
        if key in run:
            return _number(*run[key], kind=kind)
        return default

    config = IntegratorConfig(
        step=run_value("step", 1e-3),
        horizon=run_value("horizon", 10.0),
        quad_points=run_value("quad_points", 16, kind=int))
    sup_window = run_value("sup_window", 100.0)
    sup_step = run_value("sup_step", 1e-3)

    impsect = sections.get("impulses", {})
    if impsect:
        if "instants" in impsect:
            instants = _number_list(*impsect["instants"])
        elif "generator" in impsect:
            count = None
            if "count" in impsect:
                count = _number(*impsect["count"], kind=int)
            instants = _expand_generator(*impsect["generator"], count=count,
                                         horizon=config.horizon)
        else:
            raise SpecFileError("[impulses] needs `instants` or `generator`")
        imp_maps = dict(impsect)
        for key in ("instants", "generator", "count", "p_ik", "p_row"):
            imp_maps.pop(key, None)
        maps_i, has_maps = _indexed_family(imp_maps, "map", n, "x")
        if not has_maps or any(e is None for e in maps_i):
            raise SpecFileError("[impulses] must define map1..mapn")
        for key, (_, lineno) in imp_maps.items():
            raise SpecFileError(f"unknown key {key!r} in [impulses]", lineno)
        if "p_ik" not in impsect or "p_row" not in impsect:
            raise SpecFileError("[impulses] must define p_ik and p_row")
        p_ik_rows = _number_list(*impsect["p_ik"], count=n)
        p_row = _number_list(*impsect["p_row"], count=n)
        kk = len(instants)
        impulses = ImpulseSchedule(
            instants=list(instants),
            maps=[list(maps_i) for _ in range(kk)],
            p_ik=np.tile(np.asarray(p_ik_rows)[:, None], (1, kk)),
            p_row=p_row)
    else:
        impulses = ImpulseSchedule.empty(n)

    mu = None
    if "mu" in delays:
        mu = _number(*delays["mu"])

    spec = SystemSpec(
        n=n, Q=_matrix(sections, "Q", n), C=_matrix(sections, "C", n),
        A=_matrix(sections, "A", n), B=_matrix(sections, "B", n),
        W=_matrix(sections, "W", n), tau=tau, delta=delta, r=rr,
        f=f, g=g, h=h, alpha=alpha, beta=beta, gamma=gamma,
        v=v, eta=eta, mu=0.0, impulses=impulses, phi=phi,
        sup_window=sup_window, sup_step=sup_step,
        non_rigorous_constants=non_rigorous)
    if mu is None:
        sups = [certify.delay_bound(d, sup_window, sup_step)[0]
                for d in (tau, delta, rr)]
        mu = max(sups)
        warn(f"mu not given; using the numeric delay bound {mu:.6g}")
    spec.mu = mu

    meta = {}
    for key, (value, lineno) in sections.get("meta", {}).items():
        meta[key] = value if key == "name" else _number(value, lineno)
    return spec, config, meta


def load(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecFileError(f"cannot read {path}: {exc.strerror}") from exc
    return loads(text)


def dump(spec, config, meta=None):
    """Serialize back to the spec-file layout (generator schedules come
    out as explicit instants)."""
    out = io.StringIO()

    def sect(name):
        out.write(f"\n[{name}]\n")

    if meta:
        sect("meta")
        for key, value in meta.items():
            out.write(f"{key} = {value}\n")
    sect("system")
    out.write(f"n = {spec.n}\n")
    for name in ("Q", "C", "A", "B", "W"):
        M = getattr(spec, name)
        entries = [(i, j, M[i][j]) for i in range(spec.n)
                   for j in range(spec.n) if M[i][j] != _ZERO]
        if entries:
            sect(f"matrix.{name}")
            for i, j, e in entries:
                out.write(f'{i + 1} {j + 1} = "{e}"\n')
    sect("delays")
    out.write(f'tau = "{spec.tau}"\ndelta = "{spec.delta}"\nr = "{spec.r}"\n')
    out.write(f"mu = {spec.mu!r}\n")
    sect("nonlinearities")
    for prefix, funcs in (("f", spec.f), ("g", spec.g), ("h", spec.h)):
        if any(e != _ZERO for e in funcs):
            for j, e in enumerate(funcs, start=1):
                out.write(f'{prefix}{j} = "{e}"\n')
    out.write("alpha = " + " ".join(repr(a) for a in spec.alpha) + "\n")
    out.write("beta = " + " ".join(repr(b) for b in spec.beta) + "\n")
    out.write("gamma = " + " ".join(repr(c) for c in spec.gamma) + "\n")
    sect("auxiliary")
    for i, e in enumerate(spec.v, start=1):
        out.write(f'v{i} = "{e}"\n')
    out.write("eta = " + " ".join(repr(e) for e in spec.eta) + "\n")
    if not spec.impulses.is_empty():
        sect("impulses")
        out.write("instants = "
                  + " ".join(repr(t) for t in spec.impulses.instants) + "\n")
        for i in range(spec.n):
            out.write(f'map{i + 1} = "{spec.impulses.maps[0][i]}"\n')
        out.write("p_ik = " + " ".join(
            repr(float(spec.impulses.p_ik[i, 0])) for i in range(spec.n))
            + "\n")
        out.write("p_row = "
                  + " ".join(repr(p) for p in spec.impulses.p_row) + "\n")
    sect("history")
    for i, e in enumerate(spec.phi, start=1):
        out.write(f'phi{i} = "{e}"\n')
    sect("run")
    out.write(f"horizon = {config.horizon!r}\nstep = {config.step!r}\n")
    out.write(f"quad_points = {config.quad_points}\n")
    out.write(f"sup_window = {spec.sup_window!r}\n")
    out.write(f"sup_step = {spec.sup_step!r}\n")
    return out.getvalue()


# --- report rendering -------------------------------------------------------

def render_certificate(cert, out):
    verdict = "certified" if cert.certified else "not certified"
    out.write(f"Stability certificate ({cert.mode} mode): {verdict}\n")
    if cert.reference_rho is not None:
        out.write(f"  reference rho (reported): {cert.reference_rho}\n")
    out.write(f"  recomputed rho:           {cert.rho:.10g}\n")
    for label, cond in cert.conditions.items():
        mark = "ok " if cond.ok else "FAIL"
        out.write(f"  condition ({label}): [{mark}] {cond.detail}\n")
    for note in cert.notes:
        out.write(f"  note: {note}\n")
    out.write("\n")
    out.write(f"certified={'true' if cert.certified else 'false'}\n")
    out.write(f"mode={cert.mode}\n")
    out.write(f"rho={cert.rho!r}\n")
    if cert.reference_rho is not None:
        out.write(f"reference_rho={cert.reference_rho!r}\n")
    if cert.lambda_max is not None:
        out.write(f"lambda_max={cert.lambda_max!r}\n")
    for i, row in enumerate(cert.rows, start=1):
        out.write(f"K_{i}={row.kernel!r}\n")
        out.write(f"row{i}_q_sup={row.q_sup!r}\n")
        out.write(f"row{i}_cbar_sup={row.cbar_sup!r}\n")
        out.write(f"row{i}_af_sup={row.af_sup!r}\n")
        out.write(f"row{i}_bg_sup={row.bg_sup!r}\n")
        out.write(f"row{i}_w_sup={row.w_sup!r}\n")
        out.write(f"row{i}_qv_sup={row.qv_sup!r}\n")
        out.write(f"row{i}_p={row.p_i!r}\n")
        out.write(f"row{i}_contribution={row.contribution!r}\n")
    for label, cond in cert.conditions.items():
        out.write(f"cond_{label}={'true' if cond.ok else 'false'}\n")


def _pick_mode(spec, mode):
    if mode != "auto":
        return mode
    bounded = all(certify.delay_bound(d, spec.sup_window, spec.sup_step)[1]
                  for d in (spec.tau, spec.delta, spec.r))
    return "exponential" if bounded else "asymptotic"


def _certify_spec(spec, mode, reference_rho=None):
    mode = _pick_mode(spec, mode)
    fn = {"asymptotic": certify.certify_asymptotic,
          "exponential": certify.certify_exponential,
          "corollary": certify.certify_corollary}[mode]
    return fn(spec, reference_rho=reference_rho)


# --- subcommands ------------------------------------------------------------

def cmd_certify(args):
    try:
        spec, _, meta = load(args.spec)
        violations = validate(spec)
        if violations:
            for item in violations:
                print(f"validation: {item}", file=sys.stderr)
            return EXIT_USAGE
        cert = _certify_spec(spec, args.mode,
                             reference_rho=meta.get("reference_rho"))
    except (SpecFileError, certify.CertifyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    buf = io.StringIO()
    render_certificate(cert, buf)
    sys.stdout.write(buf.getvalue())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED


def cmd_simulate(args):
    try:
        spec, config, _ = load(args.spec)
    except SpecFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.step is not None:
        config.step = args.step
    if config.horizon <= 0 or config.step <= 0:
        print("error: horizon and step must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        traj = simulate(spec, config)
    except SimulationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    report = analyze.check_definitions(traj, spec)
    print(f"tail norm |x({config.horizon})|_1 = {report.tail_norm:.6g}")
    print(f"fitted decay rate lambda = {report.lambda_fit:.6g}")
    print(f"decays_to_zero={'true' if report.decays_to_zero else 'false'}")
    print("exponential_bound_holds="
          f"{'true' if report.exponential_bound_holds else 'false'}")
    if args.csv:
        nbytes = analyze.emit_csv(traj, args.csv)
        print(f"csv written: {args.csv} ({nbytes} bytes)")
    if args.plot:
        nbytes = analyze.emit_plot(traj, args.plot)
        print(f"plot written: {args.plot} ({nbytes} bytes)")
    return EXIT_OK


def cmd_crosscheck(args):
    try:
        spec, config, _ = load(args.spec)
    except SpecFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    horizon = args.horizon if args.horizon is not None else config.horizon
    try:
        report = oracle.crosscheck(
            spec, horizon=horizon, sim_step=args.sim_step,
            oracle_step=args.oracle_step, tol=args.picard_tol,
            max_iter=args.max_iter, quad_points=config.quad_points)
    except NotConverged as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        ratios = exc.report.contraction_ratios()
        if ratios:
            print("last contraction ratios: "
                  + " ".join(f"{r:.4g}" for r in ratios[-5:]),
                  file=sys.stderr)
        return EXIT_ORACLE
    except SimulationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    ratios = report.picard.contraction_ratios()
    print(f"sup |x_sim - x_oracle|_1 on [0, {horizon}] = "
          f"{report.sup_diff:.6g}")
    print("per-component maxima: "
          + " ".join(f"{v:.4g}" for v in report.per_component))
    print(f"picard iterations: {report.picard.iterations}")
    if ratios:
        print("last contraction ratios: "
              + " ".join(f"{r:.4g}" for r in ratios[-5:]))
    print(f"sup_diff={report.sup_diff!r}")
    return EXIT_OK if report.sup_diff < args.tol else EXIT_NOT_CERTIFIED


def cmd_example(args):
    if args.name not in BUILTIN:
        print(f"error: unknown example {args.name!r}; choose from "
              + ", ".join(sorted(BUILTIN)), file=sys.stderr)
        return EXIT_USAGE
    text = BUILTIN[args.name]
    os.makedirs(args.emit, exist_ok=True)
    path = os.path.join(args.emit, f"{args.name}.spec")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"spec written: {path}")
    spec, _, meta = loads(text)
    cert = _certify_spec(spec, "auto", reference_rho=meta.get("reference_rho"))
    print(f"reported rho:   {meta.get('reference_rho')}")
    print(f"recomputed rho: {cert.rho:.6g}")
    print(f"certified={'true' if cert.certified else 'false'}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="nddestab",
        description="Stability certification and simulation of impulsive "
                    "neutral delay differential systems.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="evaluate the contraction certificate")
    c.add_argument("spec")
    c.add_argument("--mode", choices=("asym", "exp", "auto", "corollary"),
                   default="auto")
    c.add_argument("--report", default=None)
    c.set_defaults(fn=cmd_certify)

    s = sub.add_parser("simulate", help="integrate the system forward")
    s.add_argument("spec")
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--step", type=float, default=None)
    s.add_argument("--csv", default=None)
    s.add_argument("--plot", default=None)
    s.set_defaults(fn=cmd_simulate)

    x = sub.add_parser("crosscheck",
                       help="compare the integrator with the Picard oracle")
    x.add_argument("spec")
    x.add_argument("--horizon", type=float, default=None)
    x.add_argument("--tol", type=float, default=5e-3)
    x.add_argument("--sim-step", type=float, default=1e-3)
    x.add_argument("--oracle-step", type=float, default=1e-2)
    x.add_argument("--picard-tol", type=float, default=1e-6)
    x.add_argument("--max-iter", type=int, default=200)
    x.set_defaults(fn=cmd_crosscheck)

    e = sub.add_parser("example", help="emit a built-in example spec")
    e.add_argument("name")
    e.add_argument("--emit", default=".")
    e.set_defaults(fn=cmd_example)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    mode_map = {"asym": "asymptotic", "exp": "exponential"}
    if getattr(args, "mode", None) in mode_map:
        args.mode = mode_map[args.mode]
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
