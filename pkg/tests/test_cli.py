import json

import pytest

from gw_border.main import main


def test_apex_csv(capsys):
    assert main(["apex", "--family", "plane"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "tau,rho,psi_tau,sigma_tau,Q,in_k_star,tau_exact"
    assert out[1].startswith("0.5,0.25,2,")


def test_apex_json(capsys):
    assert main(["apex", "--family", "cayley", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["schema"] == "gw-border/1"
    assert payload["command"] == "apex"
    assert payload["family"] == "cayley"
    assert payload["tau"] == pytest.approx(1.0, rel=1e-12)


def test_family_without_apex(capsys):
    assert main(["apex", "--family", "unary"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "not in K*" in err


def test_coeffs_row(capsys):
    assert main(["coeffs", "--family", "plane", "--k", "2", "--n-max", "6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,A_n,A_n_k,ratio,gap"
    assert lines[4].startswith("4,5,2,2/5,")


def test_limit_cayley(capsys):
    assert main(["limit", "--family", "cayley", "--k", "2"]) == 0
    assert "0.692200627555346" in capsys.readouterr().out


def test_generalized(capsys):
    assert main(["generalized", "--family", "plane", "--index-set", "0,1", "--m", "1", "--n-max", "5",
                 "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["c"] == 0.75
    assert payload["index_set"] == [0, 1]


def test_generalized_needs_zero(capsys):
    assert main(["generalized", "--family", "plane", "--index-set", "1,2", "--m", "1"]) == 2


def test_distribution_residue(capsys):
    assert main(["distribution", "--family", "binary", "--n", "4"]) == 2
    assert "Q=2" in capsys.readouterr().err


def test_oracle_ok(capsys):
    assert main(["oracle", "--family", "binary", "--n-max", "9", "--k", "2"]) == 0
    captured = capsys.readouterr()
    assert "OK: all coefficients match" in captured.err
    assert captured.out.splitlines()[0] == "n,k,oracle_total,oracle_border,series_total,series_border,match"


def test_oracle_size_cap(capsys):
    assert main(["oracle", "--family", "plane", "--n-max", "15", "--k", "1"]) == 2


def test_output_file(tmp_path, capsys):
    target = tmp_path / "nested" / "apex.csv"
    assert main(["apex", "--family", "motzkin", "--output", str(target)]) == 0
    assert capsys.readouterr().out == ""
    assert target.read_text(encoding="utf-8").startswith("tau,rho,")


def test_psi_file(psi_file, capsys):
    path = psi_file({"coeffs": ["1", "0", "1"]})
    assert main(["apex", "--psi-file", path, "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["family"] == "custom:my_psi"
    assert payload["Q"] == 2
    assert payload["tau"] == pytest.approx(1.0, rel=1e-12)


def test_family_sources_are_exclusive(psi_file):
    path = psi_file({"coeffs": [1, 1, 1]})
    with pytest.raises(SystemExit) as excinfo:
        main(["apex", "--family", "plane", "--psi-file", path])
    assert excinfo.value.code == 2


def test_unknown_family_is_rejected():
    with pytest.raises(SystemExit) as excinfo:
        main(["apex", "--family", "ternary"])
    assert excinfo.value.code == 2


def test_simulate_budget_exhausted(capsys):
    code = main(["simulate", "--family", "plane", "--n", "10", "--k", "2", "--samples", "100",
                 "--max-attempts", "5"])
    assert code == 4
    captured = capsys.readouterr()
    assert "insufficient acceptance" in captured.err
    assert captured.out.splitlines()[1].endswith(",true")


def test_simulate_is_independent_of_threads(capsys):
    argv = ["simulate", "--family", "plane", "--n", "8", "--k", "2", "--samples", "300", "--seed", "3",
            "--format", "json"]
    assert main(argv + ["--threads", "1"]) == 0
    single = capsys.readouterr().out
    assert main(argv + ["--threads", "2"]) == 0
    assert capsys.readouterr().out == single
    assert json.loads(single)["accepted"] == 300


def test_mean_protected(capsys):
    assert main(["mean-protected", "--family", "unary", "--n", "10", "--k", "2", "--samples", "25"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.startswith("n,k,samples,accepted,attempts,mean_protected")
    assert row.split(",")[5] == "0.8"


@pytest.mark.parametrize("argv", [
    ["apex", "--family", "cayley"],
    ["coeffs", "--family", "plane", "--k", "2", "--n-max", "12"],
    ["limit", "--family", "binary", "--k", "3", "--format", "json"],
    ["generalized", "--family", "motzkin", "--index-set", "0,1", "--m", "2", "--n-max", "10"],
    ["distribution", "--family", "cayley", "--n", "8"],
    ["oracle", "--family", "motzkin", "--n-max", "8", "--k", "2"],
    ["simulate", "--family", "binary", "--n", "9", "--k", "2", "--samples", "200", "--seed", "5"],
    ["mean-protected", "--family", "plane", "--n", "7", "--k", "1", "--samples", "200", "--seed", "5"],
])
def test_every_command_accepts_threads(argv, capsys):
    assert main(argv + ["--threads", "1"]) == 0
    single = capsys.readouterr().out
    assert main(argv + ["--threads", "8"]) == 0
    assert capsys.readouterr().out.encode("utf-8") == single.encode("utf-8")
    assert single


def test_supercritical_tilt_needs_node_cap(capsys):
    argv = ["simulate", "--family", "plane", "--n", "6", "--k", "2", "--samples", "50", "--t", "0.7"]
    assert main(argv) == 2
    assert "node_cap" in capsys.readouterr().err
    assert main(argv + ["--node-cap", "60"]) == 0
