import math

import numpy as np
import pytest

from nddestab.cli import SpecFileError, dump, load, loads, main
from nddestab.examples import BUILTIN
from nddestab.expr import parse

MINIMAL = """\
[system]
n = 1

[matrix.C]
1 1 = "-2"

[delays]
tau = "0"
delta = "0"
r = "0"
mu = 0.1

[auxiliary]
v1 = "2"
eta = 2

[history]
phi1 = "1"

[run]
horizon = 2
step = 0.01
"""


def write(tmp_path, text, name="case.spec"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_loads_minimal():
    spec, config, meta = loads(MINIMAL, warn=lambda m: None)
    assert spec.n == 1
    assert spec.mu == 0.1
    assert spec.impulses.is_empty()
    assert config.horizon == 2.0
    assert config.step == 0.01
    assert meta == {}


def test_loads_examples_and_generator():
    spec, config, meta = loads(BUILTIN["ex5_1"], warn=lambda m: None)
    assert spec.impulses.instants == [0.5, 1.5, 3.0, 5.0, 7.5]
    assert meta["name"] == "ex5_1"
    assert meta["reference_rho"] == 0.7925
    spec2, _, _ = loads(BUILTIN["ex5_2"], warn=lambda m: None)
    assert str(spec2.tau) == "0.2*abs(sin(t))"
    assert str(spec2.phi[0]) == "0.575*t-0.5"


def test_generator_with_count():
    text = BUILTIN["ex5_1"].replace(
        'generator = "t_{k-1} + 0.5*k"',
        'generator = "t_{k-1} + 0.5*k"\ncount = 7')
    spec, _, _ = loads(text, warn=lambda m: None)
    assert spec.impulses.instants == [0.5, 1.5, 3.0, 5.0, 7.5, 10.5, 14.0]


@pytest.mark.parametrize("text,needle", [
    ("x = 1\n" + MINIMAL, "line 1"),
    ("[system]\nn = 1\nn = 2\n", "duplicate"),
    ("[nope]\nn = 1\n", "unknown section"),
    ("[system]\nn = 1\nbogus = 2\n", "unknown key"),
    (MINIMAL.replace('1 1 = "-2"', '1 1 = -2'), "double-quoted"),
    (MINIMAL.replace('1 1 = "-2"', '1 2 = "-2"'), "outside 1..1"),
    (MINIMAL.replace('1 1 = "-2"', '1 1 = "-2$"'), "unexpected character"),
    (MINIMAL.replace("[system]\nn = 1", "[system]\nn = 0"), "positive"),
    (MINIMAL.replace('tau = "0"\n', ""), "must define tau"),
    (MINIMAL.replace('phi1 = "1"', 'phi1 = "x"'), "must be over 't'"),
])
def test_load_errors(text, needle):
    with pytest.raises(SpecFileError) as err:
        loads(text, warn=lambda m: None)
    assert needle in str(err.value)


def test_line_numbers_in_errors():
    bad = MINIMAL.replace('1 1 = "-2"', '1 1 = "-2+"')
    with pytest.raises(SpecFileError) as err:
        loads(bad, warn=lambda m: None)
    assert str(err.value).startswith("line 5:")


def test_missing_lipschitz_constants_estimated():
    text = MINIMAL.replace(
        "[auxiliary]",
        '[nonlinearities]\nf1 = "0.2*tanh(2*x)"\n\n[auxiliary]')
    warnings = []
    spec, _, _ = loads(text, warn=warnings.append)
    assert spec.non_rigorous_constants
    assert spec.alpha[0] == pytest.approx(0.4, abs=1e-4)
    assert any("alpha" in w for w in warnings)


def test_missing_mu_uses_delay_bound():
    text = MINIMAL.replace("mu = 0.1\n", "").replace(
        'tau = "0"', 'tau = "0.2"')
    warnings = []
    spec, _, _ = loads(text, warn=warnings.append)
    assert spec.mu == pytest.approx(0.2, abs=1e-9)
    assert any("mu" in w for w in warnings)


def _assert_same_spec(a, b):
    assert a.n == b.n
    for name in ("Q", "C", "A", "B", "W"):
        Ma, Mb = getattr(a, name), getattr(b, name)
        for i in range(a.n):
            for j in range(a.n):
                assert Ma[i][j].root == Mb[i][j].root, (name, i, j)
    for name in ("tau", "delta", "r"):
        assert getattr(a, name).root == getattr(b, name).root
    for name in ("f", "g", "h", "v", "phi"):
        for ea, eb in zip(getattr(a, name), getattr(b, name)):
            assert ea.root == eb.root
    for name in ("alpha", "beta", "gamma", "eta"):
        assert getattr(a, name) == getattr(b, name)
    assert a.mu == b.mu
    assert a.impulses.instants == b.impulses.instants
    assert a.impulses.p_row == b.impulses.p_row
    assert np.array_equal(a.impulses.p_ik, b.impulses.p_ik)
    for ra, rb in zip(a.impulses.maps, b.impulses.maps):
        for ea, eb in zip(ra, rb):
            assert ea.root == eb.root


@pytest.mark.parametrize("name", ["ex5_1", "ex5_2"])
def test_dump_round_trip(name):
    spec, config, meta = loads(BUILTIN[name], warn=lambda m: None)
    text = dump(spec, config, meta)
    spec2, config2, meta2 = loads(text, warn=lambda m: None)
    _assert_same_spec(spec, spec2)
    assert config2.horizon == config.horizon
    assert config2.step == config.step
    assert meta2.get("reference_rho") == meta.get("reference_rho")


def test_dump_round_trip_minimal():
    spec, config, _ = loads(MINIMAL, warn=lambda m: None)
    spec2, config2, _ = loads(dump(spec, config), warn=lambda m: None)
    _assert_same_spec(spec, spec2)


def test_cmd_certify_exit_codes(tmp_path, capsys):
    path = write(tmp_path, BUILTIN["ex5_1"])
    assert main(["certify", path, "--mode", "exp"]) == 0
    out = capsys.readouterr().out
    machine = dict(line.split("=", 1) for line in out.splitlines()
                   if "=" in line and " " not in line.split("=", 1)[0])
    assert float(machine["rho"]) == pytest.approx(0.8025, abs=1e-9)
    assert machine["certified"] == "true"
    assert machine["lambda_max"] == "16.0"
    assert float(machine["K_1"]) == pytest.approx(1 / 16)
    assert machine["cond_iv"] == "true"
    assert "0.7925" in out


def test_cmd_certify_not_certified(tmp_path, capsys):
    text = BUILTIN["ex5_1"].replace("0.1*sin(t)", "1.0*sin(t)").replace(
        "0.1*cos(t)", "1.0*cos(t)")
    path = write(tmp_path, text)
    assert main(["certify", path]) == 1
    out = capsys.readouterr().out
    assert "certified=false" in out


def test_cmd_certify_report_file(tmp_path):
    path = write(tmp_path, BUILTIN["ex5_1"])
    report = tmp_path / "report.txt"
    assert main(["certify", path, "--report", str(report)]) == 0
    assert "rho=" in report.read_text()


def test_cmd_certify_load_failures(tmp_path, capsys):
    assert main(["certify", str(tmp_path / "missing.spec")]) == 2
    bad = write(tmp_path, MINIMAL.replace("eta = 2", "eta = -2"))
    assert main(["certify", bad]) == 2
    err = capsys.readouterr().err
    assert "(iii)" in err


def test_cmd_simulate(tmp_path, capsys):
    path = write(tmp_path, MINIMAL)
    csv_path = tmp_path / "out.csv"
    svg_path = tmp_path / "out.svg"
    assert main(["simulate", path, "--csv", str(csv_path),
                 "--plot", str(svg_path)]) == 0
    out = capsys.readouterr().out
    assert "tail norm" in out
    assert csv_path.exists() and svg_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "t,x1,norm1"


def test_cmd_simulate_usage_errors(tmp_path):
    path = write(tmp_path, MINIMAL)
    assert main(["simulate", path, "--horizon", "0"]) == 2
    assert main(["simulate", path, "--step", "-1"]) == 2
    assert main(["simulate", str(tmp_path / "missing.spec")]) == 2


def test_cmd_crosscheck_scalar(tmp_path, capsys):
    path = write(tmp_path, MINIMAL)
    assert main(["crosscheck", path, "--horizon", "2",
                 "--oracle-step", "0.01"]) == 0
    out = capsys.readouterr().out
    assert "sup_diff=" in out
    sup = float([ln for ln in out.splitlines()
                 if ln.startswith("sup_diff=")][0].split("=")[1])
    assert sup < 1e-6  # linear scalar case: both engines near-exact


def test_cmd_crosscheck_divergence_exit_code(tmp_path):
    text = BUILTIN["ex5_1"].replace("0.1*sin(t)", "2.0*sin(t)").replace(
        "0.1*cos(t)", "2.0*cos(t)")
    path = write(tmp_path, text)
    assert main(["crosscheck", path, "--horizon", "15",
                 "--oracle-step", "0.02", "--max-iter", "50"]) == 4


def test_cmd_crosscheck_above_tol_exit_code(tmp_path):
    path = write(tmp_path, BUILTIN["ex5_1"])
    assert main(["crosscheck", path, "--horizon", "1", "--sim-step", "0.01",
                 "--oracle-step", "0.05", "--tol", "1e-12"]) == 1


def test_cmd_example(tmp_path, capsys):
    assert main(["example", "ex5_1", "--emit", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert (tmp_path / "ex5_1.spec").exists()
    assert "0.7925" in out
    assert "0.8025" in out
    assert main(["example", "ex9_9", "--emit", str(tmp_path)]) == 2
