import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import pytest

from purcell_sim import model, sweep
from purcell_sim.errors import PlanError
from purcell_sim.sweep import Axis, SweepPlan, SweepResult

GOLDEN = Path(__file__).parent / "golden" / "fig2a_21x21.csv"


def small_plan(**kw):
    base = dict(
        name="t",
        base=model.SystemSpec(J=20.0, kappa=50.0, g=5.0, P=4.0, Delta_a=-20.0, n_max=2),
        axes=(Axis("P", 1.0, 10.0, 3, "log"), Axis("Delta_a", -1.5, -0.5, 3, unit="J")),
        metrics=("concurrence", "fidelity_S", "n_cav"),
    )
    base.update(kw)
    return SweepPlan(**base)


class TestValidation:
    @pytest.mark.parametrize(
        "change",
        [
            dict(axes=(Axis("chi", 0, 1, 3),)),
            dict(axes=(Axis("P", 0, 1, 3, "log"),)),
            dict(axes=(Axis("P", 0, 1, 1),)),
            dict(axes=(Axis("P", 1, 2, 3), Axis("P", 1, 2, 3))),
            dict(axes=(Axis("n_max", 1, 4, 4),)),
            dict(axes=(Axis("t", 0, 1, 3),)),
            dict(axes=(Axis("P", 1, 2, 3, unit="kappa"),)),
            dict(metrics=("purity",)),
            dict(metrics=()),
            dict(solver="magic"),
            dict(mode="sideways"),
            dict(pump="maximal"),
            dict(linked={"Delta_a": ("chi", 1.0)}),
            dict(base=model.preset("fig3c")),
            dict(solver="pim", base=model.preset("fig1")),
            dict(solver="effective", metrics=("fidelity_W_heralded",)),
        ],
    )
    def test_invalid_plans_rejected_before_running(self, change):
        with pytest.raises(PlanError):
            sweep.run_sweep(small_plan(**change))

    def test_full_solver_refuses_large_ensembles(self):
        plan = small_plan(base=model.preset("fig3d"), metrics=("fidelity_W",))
        with pytest.raises(PlanError):
            plan.validate()

    def test_unknown_plan_key(self):
        data = small_plan().to_dict()
        data["colour"] = "red"
        with pytest.raises(PlanError):
            SweepPlan.from_dict(data)


@pytest.fixture(scope="module")
def small_result():
    return sweep.run_sweep(small_plan(), jobs=1)


class TestOutput:
    def test_grid_rows_and_header(self, small_result):
        text = small_result.to_csv()
        rows = list(csv.reader(io.StringIO(text)))
        assert len(rows) == 1 + 9
        assert rows[0][:5] == ["P", "Delta_a/J", "concurrence", "fidelity_S", "n_cav"]
        assert rows[0][-1] == "error"
        assert all(r[-1] == "" for r in rows[1:])

    def test_json_round_trip(self, small_result):
        back = SweepResult.from_json(small_result.to_json())
        assert back.rows == small_result.rows
        assert back.columns == small_result.columns
        assert SweepPlan.from_dict(back.plan) == small_plan()

    def test_json_schema_checked(self, small_result):
        doc = json.loads(small_result.to_json())
        doc["schema_version"] = 99
        with pytest.raises(PlanError):
            SweepResult.from_json(json.dumps(doc))

    def test_metadata(self, small_result):
        md = small_result.metadata
        assert {"code_version", "git_commit", "seed", "tolerances", "steady_method"} <= set(md)

    def test_reruns_are_byte_identical(self, small_result):
        again = sweep.run_sweep(small_plan(), jobs=1)
        assert again.to_csv() == small_result.to_csv()
        assert again.to_json() == small_result.to_json()

    def test_parallel_matches_serial(self, small_result):
        assert sweep.run_sweep(small_plan(), jobs=2).to_csv() == small_result.to_csv()

    def test_emit_writes_file(self, small_result, tmp_path):
        path = tmp_path / "out.json"
        text = sweep.emit(small_result, "json", str(path))
        assert path.read_text() == text
        with pytest.raises(ValueError):
            sweep.emit(small_result, "xml")


def test_failed_points_are_recorded():
    # optimal pump needs C > 0, so the g = 0 point fails while the others run
    plan = small_plan(axes=(Axis("g", 0.0, 4.0, 3),), pump="optimal")
    result = sweep.run_sweep(plan, jobs=1)
    assert result.n_failed == 1
    assert result.rows[0][-1] == "SpecError"
    assert result.rows[0][1] is None
    assert "nan" in result.to_csv().splitlines()[1]
    assert all(r[-1] == "" for r in result.rows[1:])


def test_metric_failure_keeps_other_columns():
    # an empty cavity leaves g2 undefined
    plan = small_plan(axes=(Axis("g", 0.0, 1.0, 2),), metrics=("fidelity_S", "g2_0"))
    row = sweep.run_sweep(plan, jobs=1).rows[0]
    assert row[1] is not None and row[2] is None
    assert "g2_0:UndefinedStatisticsError" in row[-1]


def test_evolve_mode_adds_time_axis():
    plan = small_plan(mode="evolve", axes=(Axis("t", 1e-3, 1.0, 4, "log"),),
                      metrics=("fidelity_S", "analytic_rho_S"))
    result = sweep.run_sweep(plan, jobs=1)
    assert result.column("t") == pytest.approx([1e-3, 1e-2, 1e-1, 1.0])
    F = result.column("fidelity_S")
    assert F == sorted(F)


def test_point_spec_axes_and_links():
    plan = small_plan(axes=(Axis("C", 10, 100, 2, "log"), Axis("J", 10, 20, 2)),
                      linked={"Delta_a": ("J", -1.0)})
    spec = sweep.point_spec(plan, (100.0, 20.0))
    assert math.isclose(spec.derived().C, 100.0)
    assert spec.Delta_a == -20.0


def test_evaluate_spec_single_point(fig1):
    cols, row = sweep.evaluate_spec(fig1, ["concurrence", "analytic_P_opt"])
    assert cols[-1] == "error" and row[-1] == ""
    assert row[1] == pytest.approx(45.548, abs=1e-3)


class TestPresets:
    def test_all_presets_load_and_validate(self):
        names = sweep.plan_presets()
        assert {"fig1c", "fig1d", "fig2a", "fig2b", "fig3c", "fig3d"} <= set(names)
        for name in names:
            sweep.load_plan_preset(name).validate()
            sweep.load_plan_preset(name, full_res=True).validate()

    def test_full_res_density(self):
        assert sweep.load_plan_preset("fig1c").shape == (76,)
        assert sweep.load_plan_preset("fig1c", full_res=True).shape == (301,)
        assert sweep.load_plan_preset("fig2a", full_res=True).shape == (81, 81)

    def test_unknown_preset(self):
        with pytest.raises(PlanError):
            sweep.load_plan_preset("fig9z")

    def test_load_plan_from_file(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text(json.dumps({**small_plan().to_dict(), "description": "x"}))
        assert sweep.load_plan(str(path)) == small_plan()


def test_fig2a_matches_golden(fig2a_result):
    golden = list(csv.reader(GOLDEN.open()))
    fresh = list(csv.reader(io.StringIO(fig2a_result.to_csv())))
    assert golden[0] == fresh[0]
    assert len(golden) == len(fresh) == 1 + 21 * 21
    worst = 0.0
    for g, f in zip(golden[1:], fresh[1:]):
        assert g[-1] == f[-1]
        for a, b in zip(g[:-1], f[:-1]):
            worst = max(worst, abs(float(a) - float(b)))
    assert worst <= 1e-6


def test_effective_spot_check(fig2a_result):
    assert sweep.solver_consistency(fig2a_result, n=5, seed=0) <= 0.05


def test_spot_check_needs_full_steady_plan(fig2a_result):
    doc = dataclasses.replace(fig2a_result, plan={**fig2a_result.plan, "solver": "effective"})
    with pytest.raises(PlanError):
        sweep.solver_consistency(doc)
