import csv
import json

import numpy as np
import pytest

from foliation_descent import cli
from foliation_descent.scenario import Scenario, ScenarioError, load_scenario, shipped_scenarios

SCENARIOS = shipped_scenarios()
INVALID = SCENARIOS["balls"].parent / "invalid"


def small(name, tmp_path, **changes):
    d = load_scenario(SCENARIOS[name]).to_dict()
    d["schedule"]["sizes"] = [8, 16, 32]
    d["analysis"]["reference"] = False
    for k, v in changes.items():
        d[k] = v
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(d))
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_balls_csv_endpoints(tmp_path):
    assert cli.main(["run", str(SCENARIOS["balls"]), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert rows[0] == ["s", "x_1", "x_2", "level_t", "step_index"]
    first, last = np.array(rows[1][1:3], float), np.array(rows[-1][1:3], float)
    np.testing.assert_allclose(first, [3, 4], atol=1e-15)
    np.testing.assert_allclose(last, [0.6, 0.8], atol=1e-12)
    # one row per requested arclength sample
    assert len(rows) - 1 == load_scenario(SCENARIOS["balls"]).analysis["n_samples"]


def test_metrics_fields_populated_or_explained(tmp_path):
    assert cli.main(["run", str(small("boxes", tmp_path)), "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    for key in ("self_contracted_max_violation", "length_diameter_ratio", "total_lengths",
                "sup_distances", "converged", "inclusion_residual_max", "tangent_gap_max"):
        assert key in m
    for key, value in m.items():
        if value is None:
            assert m["null_reasons"].get(key), key
    assert m["provenance"]["seed"] == 0
    assert len(m["provenance"]["scenario_hash"]) == 64


def test_missing_x0_names_field(capsys):
    code = cli.main(["validate", str(INVALID / "missing_x0.json")])
    assert code == 2
    assert "'x0'" in capsys.readouterr().err


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "dimension": 2,\n  "x0": [1, 2\n}\n')
    assert cli.main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 4" in capsys.readouterr().err


def test_x0_outside_sb(tmp_path, capsys):
    path = small("balls", tmp_path, x0=[9.0, 0.0])
    assert cli.main(["run", str(path), "--out", str(tmp_path)]) == 2
    assert "S_b" in capsys.readouterr().err


def test_validate_translated_balls(capsys):
    assert cli.main(["validate", str(INVALID / "translated_balls.json")]) == 2
    assert "FAIL nesting" in capsys.readouterr().out


def test_validate_nonquasiconvex(capsys):
    assert cli.main(["validate", str(INVALID / "nonquasiconvex.json")]) == 2
    line = [l for l in capsys.readouterr().out.splitlines() if "quasiconvexity" in l][0]
    assert line.startswith("FAIL") and "violating pair" in line


def test_validate_balls_all_pass(capsys):
    assert cli.main(["validate", str(SCENARIOS["balls"])]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(l.startswith("PASS") for l in lines)


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from foliation_descent.errors import ProjectionError

    def boom(*args, **kwargs):
        raise ProjectionError("budget exhausted", residual=1.0, context={"level_index": 3})

    monkeypatch.setattr(cli, "refine", boom)
    assert cli.main(["run", str(small("balls", tmp_path)), "--out", str(tmp_path)]) == 3
    assert "level_index" in capsys.readouterr().err


def test_overrides(tmp_path):
    path = small("ellipsoid", tmp_path)
    assert cli.main(["run", str(path), "--out", str(tmp_path), "--levels", "4,8",
                     "--scheme", "geometric", "--seed", "5"]) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["n"] == [4, 8]
    assert m["provenance"]["scheme"] == "geometric" and m["provenance"]["seed"] == 5


def test_bad_levels_override(tmp_path):
    path = small("balls", tmp_path)
    assert cli.main(["run", str(path), "--out", str(tmp_path), "--levels", "8,x"]) == 2


def test_round_trip():
    for path in SCENARIOS.values():
        sc = load_scenario(path)
        again = Scenario.from_dict(json.loads(sc.to_json()))
        assert again.to_json() == sc.to_json()
        assert again.digest() == sc.digest()


@pytest.mark.parametrize("field,value", [("dimension", 0), ("t_range", [3, 1]),
                                         ("x0", [1.0]), ("seed", 1.5)])
def test_scenario_field_errors(field, value):
    d = load_scenario(SCENARIOS["balls"]).to_dict()
    d[field] = value
    with pytest.raises(ScenarioError) as info:
        Scenario.from_dict(d)
    assert info.value.field == field


def test_deterministic_outputs(tmp_path):
    path = small("ellipsoid", tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(path), "--out", str(a)]) == 0
    assert cli.main(["run", str(path), "--out", str(b)]) == 0
    for name in ("trajectory.csv", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
