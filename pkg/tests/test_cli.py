import json

import pytest

from qmarginals.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json", "--no-timestamp")
    return code, json.loads(out)


def test_lhv_fig1(capsys):
    code, rep = report(capsys, "lhv", "@fig1")
    assert code == 0
    assert rep["results"]["verdict"] == "local-interpretable"
    assert rep["results"]["residual"] < 1e-12
    assert rep["schema"] == "qmarginals.report/1" and rep["tool"]["version"]


def test_lhv_fig2_is_a_violation(capsys):
    code, rep = report(capsys, "lhv", "@fig2")
    assert code == 1 and rep["results"]["verdict"] == "configuration-space"


def test_infoflow_fig3(capsys):
    code, rep = report(capsys, "infoflow", "@fig3")
    assert code == 1
    res = rep["results"]
    assert res["search"]["verdict"] == "violated"
    assert res["search"]["marginal_shift"] == pytest.approx(0.25, abs=1e-4)
    assert res["closed_form"]["printed_form"]["formula_consistent"] is False


def test_paths_verify(capsys):
    code, rep = report(capsys, "paths", "@fig2", "--verify")
    assert code == 0
    assert rep["results"]["verify"]["max_amplitude_diff"] < 1e-12
    assert rep["results"]["path_count"] == 32


@pytest.mark.parametrize(
    "argv, code",
    [
        (("simulate", "@fig1"), 0),
        (("marginals", "@fig2", "--sub", "1"), 0),
        (("miss-split", "@fig2", "--gate-index", "1"), 0),
        (("nosignal", "@fig2", "--trials", "20", "--path-trials", "5"), 0),
        (("nosignal", "@fig2", "--trials", "20", "--path-trials", "0", "--insert-at", "4"), 1),
    ],
)
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


@pytest.mark.parametrize(
    "argv",
    [
        ("simulate", "@nope"),
        ("simulate", "/no/such/file.qc"),
        ("lhv", "@fig3"),
        ("miss-split", "@fig2", "--gate-index", "0"),
        ("infoflow", "@fig3", "--params", "zeta"),
        ("simulate", "@fig1", "--sub", "5"),
        ("bohm", "--scenario", "@nope"),
    ],
)
def test_input_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_parse_error_names_position(capsys, tmp_path):
    f = tmp_path / "bad.qc"
    f.write_text("particles 2\ngate 0 mat(1 0 0 0 0 0 0.9 0)\n")
    code, _, err = run(capsys, "simulate", str(f))
    assert code == 2 and "bad.qc:2:8" in err


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["teleport", "@fig1"])
    assert exc.value.code == 2


def test_reports_are_byte_identical(capsys):
    argv = ("nosignal", "@fig2", "--trials", "10", "--path-trials", "3", "--seed", "11", "--json", "--no-timestamp")
    first = run(capsys, *argv)[1]
    assert first == run(capsys, *argv)[1]
    assert json.loads(first)["seed"] == 11


def test_timestamp_present_by_default(capsys):
    code, out, _ = run(capsys, "simulate", "@fig1", "--json")
    assert "timestamp" in json.loads(out)


def test_out_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    run(capsys, "simulate", "@fig1", "--out", str(out), "--no-timestamp")
    assert json.loads(out.read_text())["command"] == "simulate"


def test_bohm_scenario_with_dumps(capsys, tmp_path):
    scn = tmp_path / "s.json"
    scn.write_text(json.dumps({
        "grid": {"x_min": -12, "x_max": 12, "n_points": 64},
        "initial": {"kind": "product", "particle_1": {"x0": 0, "sigma": 1}, "particle_2": {"x0": 0, "sigma": 1}},
        "dt": 0.02, "steps": 20, "stride": 5, "ensemble": {"size": 1000, "bins": 16},
    }))
    code, rep = report(capsys, "bohm", "--scenario", str(scn), "--dump-dir", str(tmp_path / "d"))
    assert code == 0
    assert (tmp_path / "d" / "density_final.bin").stat().st_size == 64 * 64 * 8
    assert (tmp_path / "d" / "marginal_density.csv").read_text().startswith("t,")
    assert rep["results"]["width_law"]["relative_error"] < 0.01


def test_bad_scenario_json(capsys, tmp_path):
    scn = tmp_path / "s.json"
    scn.write_text("{not json")
    code, _, err = run(capsys, "bohm", "--scenario", str(scn))
    assert code == 2 and "line 1" in err
