import numpy as np
import pytest

from crgame import experiments as ex
from crgame.units import ScenarioError, default_scenario

SMALL = {"network": {"users": 3, "subcarriers": 3}}


def small(**sections):
    doc = default_scenario(**SMALL)
    for name, values in sections.items():
        doc[name].update(values)
    return doc


def test_empty_grid_is_a_schema_error():
    with pytest.raises(ScenarioError) as err:
        ex.SweepSpec("lambda0", [])
    assert err.value.field == "sweep.values"


def test_spec_validation():
    with pytest.raises(ScenarioError):
        ex.SweepSpec("lambda0", [1.0], replications=0)
    with pytest.raises(ScenarioError):
        ex.SweepSpec("lambda0", [1.0], certify="maybe")
    with pytest.raises(ScenarioError):
        ex.SweepSpec("bogus", [1.0])
    with pytest.raises(ScenarioError):
        ex.SweepSpec("lambda0", [1.0], replications=2, seeds=[1])
    with pytest.raises(ScenarioError, match="unknown"):
        ex.SweepSpec.from_dict({"parameter": "lambda0", "values": [1], "colour": "red"})


def test_parameter_aliases_and_gamma():
    spec = ex.SweepSpec("i_max", [-60.0], base=small())
    doc, _ = spec.point(-60.0)
    assert doc["pu"]["i_max_dbm"] == -60.0
    spec = ex.SweepSpec("gamma", [0.2], base=small(), schedule={"kind": "constant", "gamma": 1})
    _, sched = spec.point(0.2)
    assert sched == {"kind": "constant", "gamma": 0.2}
    assert ex.SweepSpec("lambda0", [1], base=small(), replications=3).seeds == [0, 1, 2]


def test_failed_rows_are_recorded_and_the_sweep_continues():
    spec = ex.SweepSpec("network.users", [2, 0], base=small(), iterations=50, certify="none")
    rows = ex.run_sweep(spec)
    assert [r["status"] for r in rows] == ["ok", "error"]
    assert "ScenarioError" in rows[1]["error"]
    assert rows[0]["su_rate_bits"] > 0


def test_sweeps_are_byte_identical(tmp_path):
    spec = ex.SweepSpec("lambda0", [0.1, 10.0], replications=2, base=small(),
                        iterations=200, baseline=True)
    a = ex.write_csv(ex.run_sweep(spec), tmp_path / "a.csv", ex.sweep_columns(spec), "t")
    b = ex.write_csv(ex.run_sweep(spec), tmp_path / "b.csv", ex.sweep_columns(spec), "t")
    assert a.read_bytes() == b.read_bytes()
    rows = ex.read_csv(a)
    assert len(rows) == 4 and rows[0]["lambda0"] == "0.1"
    assert set(ex.BASELINE_COLUMNS) <= set(rows[0])


def test_steep_linear_price_shuts_users_down():
    # steep means lambda0 / I above 1 / sigma^2, i.e. lambda0 > I / sigma^2 ~ 1.8e6 here
    spec = ex.SweepSpec("lambda0", [0.0, 1e7], replications=2,
                        base=small(pricing={"flat": "lp"}), iterations=3000, certify="none")
    power = ex.aggregate(ex.run_sweep(spec), "lambda0", "total_power")
    cap = 3 * 0.12676519
    assert power[1e7] <= power[0.0]
    assert power[1e7] <= 1e-3 * cap


def test_violation_price_respects_the_tolerance_above_a_grid_point():
    grid = [0.01, 2.0, 10.0, 100.0]
    spec = ex.SweepSpec("lambda0", grid, replications=2, base=small(pricing={"flat": "vp"}),
                        iterations=3000, certify="none")
    worst = ex.aggregate(ex.run_sweep(spec), "lambda0", "psi_max")
    ok = [worst[v] <= 1.0 + 1e-3 for v in grid]
    first = ok.index(True)
    assert all(ok[first:])


def test_simulate_reports_eql_and_gap():
    out = ex.simulate(small(), 0, iterations=500)
    assert out.bounds is not None and out.bounds.exact
    row = ex.outcome_row(out)
    assert 0.0 <= row["eql"] <= 1.0 + 1e-9
    assert np.isfinite(row["br_gap_max"])
    assert row["iterations_run"] == out.record.steps


def test_ergodic_simulation_skips_static_certificates():
    out = ex.simulate(small(), 0, iterations=50, mode="ergodic")
    assert out.record.mode == "ergodic"
    assert out.br_gap is None and out.report.eql is None


@pytest.mark.parametrize("text, expect", [
    ("full", (10, 10, 30)), ("ci", (4, 4, 5)), ("0.5", (5, 5, 15)), ("0.01", (2, 2, 1)),
])
def test_scale_parsing(text, expect):
    s = ex.Scale.parse(text)
    assert (s.users, s.subcarriers, s.replications) == expect


@pytest.mark.parametrize("bad", ["huge", "0", "-1", "nan"])
def test_bad_scale(bad):
    with pytest.raises(ScenarioError):
        ex.Scale.parse(bad)


def test_csv_formatting(tmp_path):
    path = ex.write_csv([{"a": 0.1, "b": None, "c": True, "d": np.int64(3)}], tmp_path / "x.csv")
    assert path.read_text() == "a,b,c,d\n0.1,,true,3\n"


def test_aggregate_skips_failures_and_nans():
    rows = [{"x": 1, "v": 2.0, "status": "ok"}, {"x": 1, "v": float("nan"), "status": "ok"},
            {"x": 1, "v": 100.0, "status": "error"}, {"x": 2, "v": None, "status": "ok"}]
    agg = ex.aggregate(rows, "x", "v")
    assert agg[1] == 2.0 and np.isnan(agg[2])


def test_preset_writes_tables_and_manifest(tmp_path):
    paths = ex.reproduce_figure("fig2", tmp_path, seed=1, scale="ci")
    names = sorted(p.name for p in paths)
    assert names == ["fig2.csv", "fig2_manifest.json"]
    rows = ex.read_csv(tmp_path / "fig2.csv")
    assert len(rows) == 501
    assert {"w_vp", "w_lp", "i_max_w", "psi_vp"} <= set(rows[0])
    assert float(rows[0]["i_max_w"]) == pytest.approx(1e-10)


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        ex.reproduce_figure("fig10", "unused")


def test_manifest_hashes(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a\n1\n")
    m = ex.write_manifest(tmp_path / "m.json", "t", [1, 2], "ci", {"a": 1}, [f])
    import json

    doc = json.loads(m.read_text())
    assert doc["seeds"] == [1, 2] and doc["scale"] == "ci"
    assert doc["scenario_sha256"] == ex.scenario_hash({"a": 1})
    assert set(doc["files"]) == {"x.csv"}
