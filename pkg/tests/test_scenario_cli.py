import csv
import json
import math
from pathlib import Path

import pytest
import yaml

from wavegram import cli
from wavegram.errors import BadScenario
from wavegram.scenario import dump, from_dict, load

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

FULL = {
    "manifold": {"kind": "torus", "dims": 1, "periods": [2 * math.pi]},
    "system": {"N": 1, "K": 1, "order": "first"},
    "symbols": {"d0": [[1.0]]},
    "run": {"T": 2.0, "n_x": 8, "n_steps": 128},
}


def write(tmp_path, doc, name="sc.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def run_json(capsys, argv):
    code = cli.run(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_kappa_golden(tmp_path, capsys):
    code, rep = run_json(capsys, ["kappa", "--scenario", write(tmp_path, FULL)])
    assert code == 0
    assert rep["result"]["kappa"] == pytest.approx(0.5, abs=1e-10)
    assert rep["result"]["c_obs"] == pytest.approx(1.0, abs=1e-9)
    meta = rep["metadata"]
    assert meta["tolerances"]["positive_rel"] == 1e-9 and len(meta["scenario_sha256"]) == 64


def test_kappa_unobserved_reports_inf(tmp_path, capsys):
    doc = dict(FULL, omega={"center": [0.0], "r_in": 0.2, "r_out": 0.4}, symbols={"d0": [["omega"]]})
    code, rep = run_json(capsys, ["kappa", "--scenario", write(tmp_path, doc), "--T", "0.5"])
    assert code == 0 and rep["result"]["c_obs"] == "inf"


def test_threads_byte_identical(tmp_path):
    path = write(tmp_path, dict(FULL, run={"T": 2.0, "n_x": 80, "n_steps": 64}))
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"r{threads}.json"
        assert cli.run(["kappa", "--scenario", path, "--threads", threads, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_threads_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "junk")
    assert cli.resolve_threads(None) == 1


def test_csv_output(tmp_path):
    path = write(tmp_path, FULL)
    out = tmp_path / "t.csv"
    assert cli.run(["gramian", "--scenario", path, "--csv", str(out), "--out", str(tmp_path / "g.json")]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["x0", "xi0", "branch", "min_eig"]
    # 16 sampled points, each with a computed - row and an inferred + row
    assert len(rows) == 1 + 32


def test_tcrit_on_arc(capsys):
    code, rep = run_json(capsys, ["tcrit", "--scenario", str(SCENARIOS / "circle_arc.yaml")])
    assert code == 0
    res = rep["result"]
    assert abs(res["t_crit"] - 1.5 * math.pi) <= max(2 * res["grid_step"], 2 * res["tol_T"])


def test_tcrit_not_found(tmp_path, capsys):
    doc = dict(FULL, omega={"center": [0.0], "r_in": 0.2, "r_out": 0.4}, symbols={"d0": [["omega"]]},
               run={"T": 1.0, "T_max": 2.0, "n_x": 8, "n_steps": 64})
    code, rep = run_json(capsys, ["tcrit", "--scenario", write(tmp_path, doc)])
    assert code == 0 and rep["result"]["t_crit"] == "NotFound"


def test_brunovsky_and_decompose(capsys):
    path = str(SCENARIOS / "cascade_constant.yaml")
    code, rep = run_json(capsys, ["brunovsky", "--scenario", path])
    assert code == 0
    r = rep["result"]
    assert r["d"] == [1, 1] and r["residual_A"] < 1e-10 and all(r["A_t_shape_ok"].values())
    code, rep = run_json(capsys, ["decompose", "--scenario", path])
    assert code == 0 and rep["result"]["k"] == 2 and rep["result"]["reachable"]


def test_cascade_scenario(capsys):
    code, rep = run_json(capsys, ["cascade", "--scenario", str(SCENARIOS / "cascade_velocity.yaml")])
    assert code == 0
    r = rep["result"]
    assert r["all_agree"]
    assert r["beta_sign"] == "nonneg"
    assert 2 * math.pi < r["t_omega_o_omega"] < 4 * math.pi


def test_bad_scenarios_exit_1(tmp_path):
    bad_docs = [
        dict(FULL, extra=1),
        dict(FULL, manifold={"kind": "torus", "dims": 3, "periods": [1, 1, 1]}),
        dict(FULL, symbols={"d0": [[{"xi": 1}]]}),
        dict(FULL, symbols={"d0": [["omega"]]}),
        dict(FULL, symbols={"d0": [[1.0, 2.0]]}),
        dict(FULL, omega={"center": [0.0], "r_in": 1.0, "r_out": 0.5}),
        {"manifold": {"kind": "torus"}, "system": {"N": 2, "K": 1, "order": "zero"},
         "symbols": {"A": [[0, 0], [0, 0]], "B": [[0], [1]], "block_sizes": [1, 1]}},
    ]
    for i, doc in enumerate(bad_docs):
        assert cli.run(["kappa", "--scenario", write(tmp_path, doc, f"b{i}.yaml")]) == 1, doc
    assert cli.run(["kappa", "--scenario", str(tmp_path / "missing.yaml")]) == 1
    (tmp_path / "junk.yaml").write_text("- [unbalanced")
    assert cli.run(["kappa", "--scenario", str(tmp_path / "junk.yaml")]) == 1
    assert cli.run(["brunovsky", "--scenario", write(tmp_path, FULL)]) == 1


def test_numerical_failure_exit_2(tmp_path):
    doc = {"manifold": {"kind": "torus"}, "system": {"N": 2, "K": 1, "order": "zero"},
           "symbols": {"A": [[1, 0], [0, 1]], "B": [[1], [0]], "block_sizes": [2]},
           "run": {"T": 1.0, "n_x": 4, "n_steps": 64}}
    assert cli.run(["brunovsky", "--scenario", write(tmp_path, doc)]) == 2


def test_schema_round_trip(tmp_path):
    for p in sorted(SCENARIOS.glob("*.yaml")):
        sc = load(str(p))
        again = from_dict(yaml.safe_load(dump(sc)))
        assert again.to_dict() == sc.to_dict()
        assert again.observability().symbols == sc.observability().symbols


def test_time_and_trig_fields_round_trip():
    doc = dict(FULL, symbols={"a0": [[{"trig": [[1, 0.5, 0.0], [-1, 0.5, 0.0]], "time": [[1.0, 1.0, 0.0]]}]],
                              "d1": [[{"const": [1.0, 0.5], "scale": 2.0}]]})
    sc = from_dict(doc)
    assert from_dict(yaml.safe_load(dump(sc))).to_dict() == sc.to_dict()
    with pytest.raises(BadScenario):
        from_dict(dict(FULL, symbols={"d0": [[{"trig": [[0.5, 1.0, 0.0]]}]]}))


def test_validate_small(tmp_path, capsys):
    doc = yaml.safe_load((SCENARIOS / "cascade_zero_order.yaml").read_text())
    doc["run"].update(T=1.0, validate={"k": [8], "dt": 2e-3, "M": 64, "ucp_M": 16})
    code, rep = run_json(capsys, ["validate", "--scenario", write(tmp_path, doc)])
    assert code == 0
    r = rep["result"]
    assert r["energy_drift"] < 1e-8 and r["halfwave_gap"] < 1e-10
    assert r["discrete_ucp"]["verdict"] == "NoViolationFound"
    assert abs(r["ratios"][0]["ratio"] - 1) < 0.1
