import os

import numpy as np
import pytest

from corrlab import harness, settings
from corrlab.errors import ConfigError, OutOfRegimeError, ResolutionError, ResourceError, ValidationError
from corrlab.harness import (
    confine_output,
    config_hash,
    convergence_study,
    estimated_cost,
    evolve_checkpoint,
    expand_points,
    list_presets,
    load_config,
    read_manifest,
    report,
    run_experiment,
    validate_config,
    window_r_max,
    write_csv,
)
from corrlab.propagator import load_checkpoint


def _micro_macro(out_dir, **physics):
    physics = physics or {"N": [100, 200], "ell": [0.01], "t": [0.0001, 0.0002]}
    return validate_config({"kind": "micro-macro", "physics": physics, "output": {"dir": out_dir}})


# -------------------------------------------------------------------
# Configs
# -------------------------------------------------------------------
def test_presets_validate():
    names = list_presets()
    assert {"scatter", "fn0", "micro-macro", "formation", "gp"} <= set(names)
    for name in names:
        assert load_config(preset=name).kind


def test_overrides_merge_over_presets(out_dir):
    config = load_config(preset="fn0", overrides={"physics": {"ell": [0.02]}, "output": {"dir": out_dir}})
    assert config.physics.ell == [0.02]
    assert config.physics.N == [10000]
    assert config.output.dir == out_dir


@pytest.mark.parametrize("data, loc", [
    ({"kind": "scatter", "grid": {"dr": -1.0}}, "grid.dr"),
    ({"kind": "scatter", "potential": {"bogus": 1}}, "potential.bogus"),
    ({"kind": "teleport"}, "kind"),
    ({"kind": "window", "physics": {"L": []}}, "physics.L"),
])
def test_config_errors_name_the_field(data, loc):
    with pytest.raises(ConfigError) as info:
        validate_config(data)
    assert info.value.loc == loc
    assert info.value.exit_code == 2


@pytest.mark.parametrize("name", ["../x", "a/b", ".", "..", "a\\b"])
def test_output_name_must_be_a_bare_stem(name):
    with pytest.raises(ConfigError) as info:
        validate_config({"kind": "micro-macro", "output": {"name": name}})
    assert info.value.loc == "output.name"


def test_manifest_flag_accepts_json_alias():
    by_alias = validate_config({"kind": "micro-macro", "output": {"json": False}})
    by_name = validate_config({"kind": "micro-macro", "output": {"manifest": False}})
    assert by_alias.output.manifest is False
    assert by_name.output.manifest is False
    assert validate_config(by_alias.model_dump(mode="json")).output.manifest is False


def test_confine_output(tmp_path):
    inside = validate_config({"kind": "micro-macro", "output": {"dir": str(tmp_path / "runs" / "a")}})
    confine_output(inside, str(tmp_path / "runs"))
    outside = validate_config({"kind": "micro-macro", "output": {"dir": str(tmp_path / "runs" / ".." / "b")}})
    with pytest.raises(ConfigError) as info:
        confine_output(outside, str(tmp_path / "runs"))
    assert info.value.loc == "output.dir"


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(path=str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path=str(bad))
    with pytest.raises(ConfigError) as info:
        load_config(preset="nope")
    assert info.value.loc == "preset"


def test_config_hash_ignores_output_and_workers(out_dir):
    a = _micro_macro(out_dir)
    b = a.model_copy(update={"workers": 3})
    assert config_hash(a) == config_hash(b)


def test_points_are_stable():
    config = validate_config({"kind": "micro-macro", "physics": {"N": [100], "ell": [0.01], "t": [0.0, 1e-4]}})
    first = expand_points(config)
    assert [pid for pid, _ in first] == [pid for pid, _ in expand_points(config)]
    assert [params["t"] for _, params in first] == [0.0, 1e-4]


# -------------------------------------------------------------------
# Gates
# -------------------------------------------------------------------
def test_energy_below_one_over_n_is_rejected(out_dir):
    config = load_config(preset="fn0", overrides={"physics": {"N": [100], "ell": [0.001]},
                                                 "output": {"dir": out_dir}})
    with pytest.raises(OutOfRegimeError):
        run_experiment(config)
    assert not os.path.exists(out_dir)


def test_window_reaching_absorber_is_rejected(out_dir):
    config = validate_config({"kind": "window", "grid": {"r_max": 100.0}, "physics": {"L": [50.0]},
                              "output": {"dir": out_dir}})
    with pytest.raises(OutOfRegimeError):
        run_experiment(config)


def test_window_grid_grows_with_lambda():
    config = load_config(preset="f2-scaling")
    extents = [window_r_max(config, params["Lambda"]) for _, params in expand_points(config)]
    assert extents == [500.0, 1000.0, 2000.0, 4000.0]
    assert window_r_max(config, 10.0) == config.grid.r_max
    assert estimated_cost(config) == pytest.approx(2 * 4000.0 / 0.02 * 1000, rel=1e-2)


def test_wide_window_accepted_once_grid_scales():
    config = validate_config({"kind": "window", "grid": {"r_max": 20.0},
                              "physics": {"Lambda": [100.0], "L": [50.0], "T": [0.0]}})
    harness.check_regime(config)


def test_resource_guard(monkeypatch, out_dir):
    monkeypatch.setattr(settings, "MAX_NODE_STEPS", 10.0)
    with pytest.raises(ResourceError) as info:
        run_experiment(load_config(preset="scatter", overrides={"output": {"dir": out_dir}}))
    assert info.value.exit_code == 4


# -------------------------------------------------------------------
# Runs
# -------------------------------------------------------------------
def test_scatter_run(out_dir):
    config = load_config(preset="scatter", overrides={"output": {"dir": out_dir}})
    record = run_experiment(config)
    assert record.status == "OK"
    row = record.rows[0]
    assert row["a_asymptotic"] == pytest.approx(1.0 - np.tanh(1.0), abs=1e-7)
    assert record.verdicts["omega_bounds_passed"]
    assert record.verdicts["a_cross_formula_gap"] < 1e-6
    with open(record.csv_path, "r", encoding="utf-8") as f:
        assert f.readline().strip().split(",")[:2] == ["N", "a_asymptotic"]


def test_micro_macro_rows(out_dir):
    record = run_experiment(load_config(preset="micro-macro", overrides={"output": {"dir": out_dir}}))
    assert len(record.rows) == 1
    row = record.rows[0]
    assert (row["Lambda"], row["L"], row["T"]) == pytest.approx((100.0, 2.0, 1.0))


def test_window_run(out_dir):
    config = validate_config({
        "kind": "window",
        "potential": {"kind": "bump", "V0": 1.0, "R": 1.0},
        "orbital": {"kind": "bump"},
        "grid": {"dr": 0.05, "r_max": 100.0, "dt": 0.05, "min_points_per_range": 20},
        "physics": {"Lambda": [10.0], "L": [2.0], "T": [0.0, 1.0]},
        "output": {"dir": out_dir},
    })
    record = run_experiment(config)
    assert [row["T"] for row in record.rows] == [0.0, 1.0]
    assert all(row["F"] >= 0 for row in record.rows)
    assert record.verdicts["F_nonincreasing_after_20"]


def test_energy_run(out_dir):
    config = load_config(preset="fn0", overrides={"physics": {"ell": [0.02]}, "output": {"dir": out_dir}})
    record = run_experiment(config)
    assert record.status == "OK"
    assert record.verdicts["e1_relative_gap"] < 0.01
    assert record.rows[0]["N_ell"] == pytest.approx(200.0)


def test_rows_carry_config_hash(out_dir):
    record = run_experiment(_micro_macro(out_dir))
    assert {row["config_hash"] for row in record.rows} == {record.config_hash}
    with open(record.csv_path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        first = f.readline().strip().split(",")
    assert header[-1] == "config_hash"
    assert first[-1] == record.config_hash


def test_write_csv_normalises_parent_segments(tmp_path):
    raw = os.path.join(str(tmp_path), "missing", "..", "rows.csv")
    path = write_csv(raw, ("x",), [{"x": 1}])
    assert path == str(tmp_path / "rows.csv")
    with open(path, "r", encoding="utf-8") as f:
        assert f.read() == "x\n1\n"


def test_scatter_runs_are_deterministic(tmp_path):
    paths = []
    for sub in ("a", "b"):
        harness._solve.cache_clear()
        config = load_config(preset="scatter", overrides={"output": {"dir": str(tmp_path / sub)}})
        paths.append(run_experiment(config).csv_path)
    with open(paths[0], "rb") as fa, open(paths[1], "rb") as fb:
        assert fa.read() == fb.read()


def test_runs_are_deterministic(tmp_path):
    first = run_experiment(_micro_macro(str(tmp_path / "a")))
    second = run_experiment(_micro_macro(str(tmp_path / "b")))
    with open(first.csv_path, "rb") as fa, open(second.csv_path, "rb") as fb:
        assert fa.read() == fb.read()


def test_worker_pool_matches_sequential(tmp_path):
    serial = run_experiment(_micro_macro(str(tmp_path / "serial")))
    pooled = run_experiment(_micro_macro(str(tmp_path / "pooled")).model_copy(update={"workers": 2}))
    assert pooled.rows == serial.rows
    with open(serial.csv_path, "rb") as fa, open(pooled.csv_path, "rb") as fb:
        assert fa.read() == fb.read()


def test_failed_point_gives_partial_then_resumes(monkeypatch, out_dir):
    real = harness._POINT_RUNNERS["micro-macro"]
    calls = []
    broken = {"N": 200}

    def flaky(config, params):
        calls.append(params["N"])
        if params["N"] == broken["N"]:
            raise ResolutionError("grid too coarse")
        return real(config, params)

    monkeypatch.setitem(harness._POINT_RUNNERS, "micro-macro", flaky)
    config = _micro_macro(out_dir, N=[100, 200], ell=[0.01], t=[0.0001])
    first = run_experiment(config)
    assert first.status == "PARTIAL"
    assert [f["exit_code"] for f in first.failures] == [3]
    assert len(first.rows) == 1
    assert read_manifest(first.manifest_path)["status"] == "PARTIAL"

    broken["N"] = None
    second = run_experiment(config)
    assert second.status == "OK"
    assert calls == [100, 200, 200]
    assert [row["N"] for row in second.rows] == [100, 200]


def test_report_summarises_manifest(out_dir):
    record = run_experiment(_micro_macro(out_dir))
    text = report(read_manifest(record.manifest_path))
    assert "status: OK" in text
    assert "kind: micro-macro" in text


def test_read_manifest_errors(tmp_path):
    with pytest.raises(ValidationError):
        read_manifest(str(tmp_path / "none.json"))


def test_evolve_checkpoint(out_dir):
    config = validate_config({
        "kind": "window",
        "potential": {"kind": "bump", "V0": 1.0, "R": 1.0},
        "grid": {"dr": 0.1, "r_max": 20.0, "dt": 0.05},
        "physics": {"T": [0.0, 0.5]},
        "output": {"dir": out_dir},
    })
    path = evolve_checkpoint(config)
    field_ = load_checkpoint(path)
    assert field_.time == pytest.approx(0.5)
    assert field_.mu == 2.0


# -------------------------------------------------------------------
# Convergence
# -------------------------------------------------------------------
def _bump_scatter(out_dir):
    return validate_config({
        "kind": "scatter",
        "potential": {"kind": "bump", "V0": 1.0, "R": 1.0},
        "grid": {"dr": 0.02, "r_max": 4.0, "min_points_per_range": 50},
        "output": {"dir": out_dir},
    })


def test_repeated_level_has_zero_shift(out_dir):
    study = convergence_study(_bump_scatter(out_dir), (0, 0, 0))
    entry = study["functionals"]["a_asymptotic"][0]
    assert entry["deltas"] == [0.0, 0.0]
    assert entry["shift"] == 0.0
    assert study["flagged"] == []


def test_numerov_order_is_observed(out_dir):
    study = convergence_study(_bump_scatter(out_dir), (0, 1, 2))
    order = study["functionals"]["a_asymptotic"][0]["orders"][0]
    assert 3.3 <= order <= 4.7


def test_convergence_guards(monkeypatch, out_dir):
    with pytest.raises(ValidationError):
        convergence_study(_bump_scatter(out_dir), (0, 1))
    monkeypatch.setattr(settings, "MAX_NODE_STEPS", 10.0)
    with pytest.raises(ResourceError):
        convergence_study(_bump_scatter(out_dir), (0, 1, 2))
