import json
import math

import pytest

from zenodyn import cli
from zenodyn.cli import fmt, main
from zenodyn.propagation import NonConvergenceError
from zenodyn.config import matrix_to_pairs

from conftest import SIGMA_MINUS, SX


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("ZENODYN_OUTPUT_DIR", str(tmp_path))
    return tmp_path


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


def write_config(path, **fields):
    path.write_text(json.dumps(dict({"dim": 2, "measurement": "computational"}, **fields)))
    return str(path)


def test_fmt_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(math.inf) == "inf"


def test_lz_all_modes(outdir, capsys):
    assert main(["lz", "--delta", "1", "--eps", "10", "--kind", "uniform", "--N", "16",
                 "--mode", "all", "--out", "run"]) == 0
    summary = json.loads((outdir / "run.json").read_text())
    point = summary["points"][0]
    for key in ("exact", "effective", "closed_form"):
        assert 0 < point[key] < 0.5
    assert abs(point["effective"] - point["closed_form"]) / point["closed_form"] < 0.05
    assert summary["tolerances"]["tol"] == 1e-8
    assert point["truncation_T"] > 0 and point["integrator"]["accepted_steps"] > 0
    assert point["N_times_rho11"]["closed_form"] == pytest.approx(16 * point["closed_form"])
    header, rows = read_csv(outdir / "run.csv")
    assert header == ["t", "scheme", "p0", "p1", "offdiag_norm"]
    assert {r["scheme"] for r in rows} == {"exact", "effective", "closed-form"}
    for r in rows:
        assert abs(float(r["p0"]) + float(r["p1"]) - 1) < 1e-8
    assert "closed_form=" in capsys.readouterr().out


def test_lz_no_measurement(outdir):
    assert main(["lz", "--kind", "none", "--mode", "exact", "--delta", "1", "--eps", "5",
                 "--out", "free"]) == 0
    point = json.loads((outdir / "free.json").read_text())["points"][0]
    assert abs(point["exact"] - math.exp(-math.pi / 5)) < 1e-3
    assert "effective" not in point


def test_lz_invalid_N_exits_2(outdir, capsys):
    with pytest.raises(SystemExit) as err:
        main(["lz", "--N", "0", "--out", "bad"])
    assert err.value.code == 2
    assert "--N" in capsys.readouterr().err
    assert not (outdir / "bad.json").exists()


def test_bad_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["lz", "--kind", "sideways"])
    assert err.value.code == 2


def test_lz_deterministic_and_parallel(outdir):
    args = ["lz", "--eps", "20", "--kind", "adapted", "--N", "4", "8", "--mode", "all"]
    assert main(args + ["--out", "a"]) == 0
    assert main(args + ["--out", "b", "--jobs", "2"]) == 0
    for n in (4, 8):
        assert (outdir / f"a_N{n}.csv").read_bytes() == (outdir / f"b_N{n}.csv").read_bytes()


def test_numeric_failure_exits_1(outdir, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise NonConvergenceError("step budget exhausted", accepted_steps=10)

    monkeypatch.setattr(cli, "lz_exact", boom)
    assert main(["lz", "--kind", "none", "--mode", "exact", "--out", "x"]) == 1
    assert "numerical failure" in capsys.readouterr().err


def test_strobe_hamiltonian(outdir, tmp_path):
    cfg = write_config(tmp_path / "sx.json", hamiltonian=matrix_to_pairs(SX),
                       initial_state={"populations": [1, 0]})
    assert main(["strobe", "--config", cfg, "--tau", "0.2", "0.1", "0.05", "--horizon", "1",
                 "--out", "st"]) == 0
    summary = json.loads((outdir / "st.json").read_text())
    assert summary["parameters"]["scaling"] == "fixed-g"
    devs = summary["max_deviations"]
    assert devs[0] > devs[1] > devs[2]
    assert all(r >= 1.5 for r in summary["halving_ratios"])
    header, rows = read_csv(outdir / "st_tau2.csv")
    assert {r["scheme"] for r in rows} == {"exact", "effective"}


def test_strobe_single_tau(outdir, tmp_path):
    cfg = write_config(tmp_path / "sx.json", hamiltonian=matrix_to_pairs(SX))
    assert main(["strobe", "--config", cfg, "--tau", "0.1", "--out", "one"]) == 0
    summary = json.loads((outdir / "one.json").read_text())
    assert summary["halving_ratios"] is None
    assert len(summary["max_deviations"]) == 1


def test_strobe_dissipative(outdir, tmp_path):
    cfg = write_config(tmp_path / "sm.json",
                       jump_operators=[{"matrix": matrix_to_pairs(SIGMA_MINUS), "rate": 1.0}],
                       initial_state={"populations": [0, 1]})
    assert main(["strobe", "--config", cfg, "--tau", "0.02", "--horizon", "3", "--out", "dis"]) == 0
    summary = json.loads((outdir / "dis.json").read_text())
    assert summary["parameters"]["scaling"] == "fixed-gamma"
    _, rows = read_csv(outdir / "dis_tau0.csv")
    exact = [float(r["p1"]) for r in rows if r["scheme"] == "exact"]
    eff = [float(r["p1"]) for r in rows if r["scheme"] == "effective"]
    assert max(abs(a - b) / b for a, b in zip(exact, eff)) < 0.02


def test_strobe_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"dim": 2, "hamiltonian": [[1]]}')
    with pytest.raises(SystemExit) as err:
        main(["strobe", "--config", str(path)])
    assert err.value.code == 2
    assert "hamiltonian" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["strobe", "--config", str(tmp_path / "missing.json")])


def test_strobe_rejects_time_dependent(tmp_path):
    cfg = write_config(tmp_path / "lz.json", hamiltonian={"builder": "lz", "delta": 1, "eps": 1})
    with pytest.raises(SystemExit) as err:
        main(["strobe", "--config", cfg])
    assert err.value.code == 2


def test_check_passes(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "all 11 invariants passed" in out


def test_check_seed_and_dimension(capsys):
    assert main(["check", "--seed", "7", "--dim", "8", "--trials", "2"]) == 0
    with pytest.raises(SystemExit) as err:
        main(["check", "--dim", "9"])
    assert err.value.code == 2


def test_check_failure_exits_1(monkeypatch, capsys):
    import zenodyn.checks as checks

    battery = list(checks.BATTERY) + [("always broken", lambda rng, dims, trials: 1.0, 0.5)]
    monkeypatch.setattr(checks, "BATTERY", battery)
    assert main(["check", "--dim", "2", "--trials", "1"]) == 1
    assert "always broken" in capsys.readouterr().err
