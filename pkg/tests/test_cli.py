import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from wassercalc.cli import main
from wassercalc.measures import measure
from wassercalc.serialization import (
    dumps,
    functional_from_dict,
    load_measure,
    measure_from_dict,
    measure_to_dict,
    plan_from_dict,
)
from wassercalc.solvers import solve_meanvar_dro
from wassercalc.transport import solve_ot


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def files(tmp_path):
    mu = write(tmp_path / "mu.json", {"dim": 2, "points": [[0, 0], [1, 1]], "weights": [0.5, 0.5]})
    nu = write(tmp_path / "nu.json", {"dim": 2, "points": [[1, 0], [0, 1]], "weights": [0.5, 0.5]})
    nuhat = write(tmp_path / "nuhat.json", {"dim": 1, "points": [[0], [1]], "weights": [0.5, 0.5]})
    return tmp_path, mu, nu, nuhat


def test_ot_command(files, capsys):
    tmp, mu, nu, _ = files
    code, out, _ = run(["ot", "--mu", mu, "--nu", nu, "--cost", "sqeuclidean", "--vertices"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["value"] == pytest.approx(1.0)
    assert res["optimality"]["optimal"] is True
    assert res["vertices"]["vertices"] == 2
    # round trip into a plan object equal to the in-memory one
    a, b = load_measure(mu), load_measure(nu)
    plan = plan_from_dict(res, a, b)
    ref = solve_ot(a, b)
    assert plan.entries == ref.entries and plan.value == ref.value
    assert np.array_equal(plan.phi, ref.phi)


def test_ot_pnorm_and_csv(files, capsys):
    tmp, mu, nu, _ = files
    out_csv = tmp / "plan.csv"
    code, out, _ = run(["ot", "--mu", mu, "--nu", nu, "--cost", "pnorm:1", "--csv-out", out_csv], capsys)
    assert code == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["x1", "x2", "x3", "x4", "weight"]
    assert len(rows) == 3


def test_csv_measure_input(files, capsys):
    tmp, _, nu, _ = files
    (tmp / "mu.csv").write_text("x1,x2,weight\n0,0,0.5\n1,1,0.5\n")
    code, out, _ = run(["ot", "--mu", tmp / "mu.csv", "--nu", nu], capsys)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(1.0)


def test_bad_weights_exit_2(files, capsys):
    tmp, _, nu, _ = files
    bad = write(tmp / "bad.json", {"dim": 1, "points": [[0], [1]], "weights": [0.5, 0.3]})
    code, out, err = run(["ot", "--mu", bad, "--nu", bad], capsys)
    assert code == 2 and out == ""
    payload = json.loads(err)
    assert "weights sum 0.8 ≠ 1" in payload["message"]
    assert payload["code"] and payload["details"]["field"] == "weights"


def test_missing_file_and_usage(files, capsys):
    tmp, mu, _, _ = files
    code, _, err = run(["ot", "--mu", mu, "--nu", tmp / "nope.json"], capsys)
    assert code == 2 and "nope.json" in json.loads(err)["message"]
    code, _, err = run(["ot", "--mu", mu], capsys)
    assert code == 2 and json.loads(err)["code"] == "usage_error"
    code, _, err = run(["frobnicate"], capsys)
    assert code == 2
    (tmp / "broken.json").write_text("{not json")
    code, _, err = run(["ot", "--mu", tmp / "broken.json", "--nu", mu], capsys)
    assert code == 2


def test_dro_pipeline_residual_exit_0(files, capsys):
    tmp, _, _, nuhat = files
    cand = tmp / "cand.json"
    code, out, _ = run(["dro-meanvar", "--theta", "1", "--rho", "1", "--eps", "0.1", "--nuhat", nuhat], capsys)
    assert code == 0
    res = json.loads(out)
    write(cand, res["worst_case"])
    J = write(tmp / "mv.json", {"type": "mean_variance", "theta": [1.0], "rho": 1.0, "sign": -1})
    C = write(tmp / "ball.json", {"type": "w2ball", "ref": "nuhat.json", "eps": 0.1})
    code, out, _ = run(["residual", "--J", J, "--C", C, "--mu", cand, "--assert-stationary"], capsys)
    assert code == 0
    assert json.loads(out)["verdict"] == "StationaryWithin"
    # the emitted worst case re-parses to the in-memory one
    sol = solve_meanvar_dro([1.0], 1.0, 0.1, load_measure(nuhat))
    assert measure_from_dict(res["worst_case"]).same_as(sol.worst_case, atol=0.0)
    assert res["cost_direct"] == sol.cost_direct


def test_fermat_not_stationary_exit_4(files, capsys):
    tmp, mu, _, _ = files
    J = write(tmp / "mv.json", {"type": "mean_variance", "theta": [1.0, 0.0], "rho": 1.0})
    code, out, _ = run(["fermat", "--J", J, "--mu", mu, "--assert-stationary"], capsys)
    assert code == 4
    assert json.loads(out)["verdict"] == "NotStationary"
    code, _, _ = run(["fermat", "--J", J, "--mu", mu], capsys)
    assert code == 0


def test_solver_error_exit_3(files, capsys):
    tmp, _, _, nuhat = files
    code, _, err = run(
        ["dro-nonlinear", "--V", "catalog:poly1d:0,0,1", "--rho", "0.5", "--eps", "0.1", "--nuhat", nuhat], capsys
    )
    assert code == 3
    assert json.loads(err)["code"] == "unbounded_inner"


def test_unknown_catalog_item(files, capsys):
    _, mu, _, _ = files
    code, _, err = run(["prox", "--V", "catalog:nope", "--mu", mu], capsys)
    assert code == 2 and json.loads(err)["details"]["field"] == "V"


def test_prox_gmm_tangent_commands(files, capsys, rng):
    tmp, mu, _, _ = files
    code, out, _ = run(["prox", "--V", "catalog:halfnorm2", "--mu", mu, "--seed", "3"], capsys)
    assert code == 0 and json.loads(out)["mu_star"]["points"] == [[0.0, 0.0], [0.5, 0.5]]
    data = tmp / "data.csv"
    np.savetxt(data, rng.standard_normal((40, 2)), delimiter=",", header="x1,x2", comments="")
    out_csv = tmp / "fit.csv"
    code, out, _ = run(["gmm-fit", "--data", data, "--m", "2", "--seed", "7", "--csv-out", out_csv], capsys)
    assert code == 0 and np.isfinite(json.loads(out)["residual"])
    assert len(out_csv.read_text().splitlines()) == 3
    xi = write(tmp / "xi.json", {"anchor": "mu.json", "arrows": [{"k": 0, "v": [0, 0], "mass": 0.5}, {"k": 1, "v": [1, 1], "mass": 0.5}]})
    code, out, _ = run(["tangent-check", "--xi", xi, "--eps-grid", "0.01,0.1"], capsys)
    assert code == 0 and json.loads(out)["status"] == "grid-verified"


def test_out_file_and_determinism(files, capsys):
    tmp, _, _, nuhat = files
    argv = ["dro-nonlinear", "--V", "catalog:softnorm", "--rho", "0.5", "--eps", "0.1", "--nuhat", nuhat, "--seed", "5", "--multistart", "2"]
    code1, out1, _ = run(argv, capsys)
    code2, out2, _ = run(argv, capsys)
    assert code1 == code2 == 0 and out1 == out2
    target = tmp / "res.json"
    assert run(argv + ["--out", target], capsys)[1] == ""
    assert target.read_text() == out1


def test_functional_json_parsing(tmp_path):
    write(tmp_path / "ref.json", {"dim": 1, "points": [[0]], "weights": [1]})
    J = functional_from_dict(
        {
            "type": "linear_combination",
            "terms": [
                {"coef": 1.0, "J": {"type": "w2sq", "ref": "ref.json"}},
                {"coef": 2.0, "J": {"type": "expected_value", "V": "catalog:halfnorm2"}},
                {"coef": 0.5, "J": {"type": "interaction", "W": {"type": "poly1d", "coeffs": [0, 0, 1]}}},
                {"coef": 1.0, "J": {"type": "gmm_nll", "data": [[0.0], [1.0]]}},
                {"coef": 1.0, "J": {"type": "ot", "ref": "ref.json", "cost": "pnorm:1"}},
                {"coef": 1.0, "J": {"type": "variance", "V": {"type": "linear", "a": [1.0]}}},
            ],
        },
        tmp_path,
    )
    assert np.isfinite(J.evaluate(measure([[1.0]])))


def test_measure_dict_round_trip(rng):
    m = measure(rng.standard_normal((4, 3)), rng.dirichlet(np.ones(4)))
    back = measure_from_dict(json.loads(dumps(measure_to_dict(m))))
    assert back.same_as(m, atol=0.0)


def test_console_entry_point(files):
    _, mu, nu, _ = files
    proc = subprocess.run(
        [sys.executable, "-m", "wassercalc.cli", "ot", "--mu", str(mu), "--nu", str(nu)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["value"] == pytest.approx(1.0)
