import numpy as np
import pytest

from fairmiss import cli
from fairmiss.data import load_csv, read_schema
from fairmiss.errors import ConfigError
from fairmiss.harness import (
    fit_pipeline,
    evaluate_pipeline,
    exact_table_analysis,
    grid_points,
    load_config,
    run_experiment,
    sweep_and_aggregate,
)
from fairmiss.simulate import MaskedPositives, gen_synthetic

from conftest import random_dataset


def write_config(tmp_path, body, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return p


BASIC = """
[data]
source = synthetic

[method]
name = indicators

[intervention]
name = penalty
tau = 0.1, 10

[sweep]
repeats = 2
test_fraction = 0.3
seed = 5

[output]
dir = {out}
"""


class TestConfig:
    def test_load_and_validate(self, tmp_path):
        cfg = load_config(write_config(tmp_path, BASIC.format(out=tmp_path / "o")))
        assert cfg.method.name == "indicators"
        assert cfg.intervention.taus == (0.1, 10.0)
        assert cfg.sweep.repeats == 2

    def test_unknown_section_rejected(self, tmp_path):
        bad = BASIC.format(out=tmp_path) + "\n[surprise]\nkey = 1\n"
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, bad))

    def test_missing_csv_rejected(self, tmp_path):
        body = "[data]\nsource = csv\npath = nope.csv\nschema = nope.txt\n"
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, body))

    def test_missingness_entries_parse(self, tmp_path):
        body = BASIC.format(out=tmp_path) + (
            "\n[missingness]\nmechanism = mnar\n"
            "entry1 = x1, label, 0.1, 0.4\n"
            "entry2 = x2, x1<0.2, 0.1, 0.4\n"
        )
        cfg = load_config(write_config(tmp_path, body))
        assert cfg.missingness.mechanism == "mnar"
        assert cfg.missingness.entries[0].indicator == "label"
        assert cfg.missingness.entries[1].threshold == 0.2

    def test_bad_mechanism_rejected(self, tmp_path):
        body = BASIC.format(out=tmp_path) + (
            "\n[missingness]\nmechanism = mar\nentry1 = x1, label, 0.1, 0.4\n"
        )
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, body))

    def test_missingness_config_roundtrip(self, tmp_path):
        from fairmiss.harness import missingness_to_config

        body = BASIC.format(out=tmp_path) + (
            "\n[missingness]\nmechanism = mnar\n"
            "entry1 = x1, label, 0.1, 0.4\n"
            "entry2 = x2, x1<0.2, 0.1, 0.4\n"
        )
        cfg = load_config(write_config(tmp_path, body))
        section = missingness_to_config(cfg.missingness)
        body2 = BASIC.format(out=tmp_path) + "\n" + section
        cfg2 = load_config(write_config(tmp_path, body2, "rt.cfg"))
        assert cfg2.missingness == cfg.missingness


class TestAggregate:
    def test_two_values(self):
        per_repeat = [{"g0": {"m": 0.8}}, {"g0": {"m": 0.9}}]
        out = sweep_and_aggregate(per_repeat)
        mean, stderr = out["g0"]["m"]
        assert mean == pytest.approx(0.85)
        assert stderr == pytest.approx(np.std([0.8, 0.9], ddof=1) / np.sqrt(2))
        assert stderr == pytest.approx(0.05)

    def test_single_repeat_stderr_zero(self):
        out = sweep_and_aggregate([{"g0": {"m": 0.7}}])
        assert out["g0"]["m"] == (0.7, 0.0)

    def test_constant_metric_stderr_zero(self):
        out = sweep_and_aggregate([{"g0": {"m": 0.5}}] * 10)
        assert out["g0"]["m"][1] == pytest.approx(0.0)

    def test_mismatched_grids_error(self):
        with pytest.raises(ConfigError):
            sweep_and_aggregate([{"g0": {"m": 1.0}}, {"g1": {"m": 1.0}}])


class TestRunExperiment:
    def test_outputs_and_pareto_contract(self, tmp_path):
        out = tmp_path / "res"
        cfg = load_config(write_config(tmp_path, BASIC.format(out=out)))
        result = run_experiment(cfg)
        assert result.succeeded
        raw = (out / "raw.csv").read_text().splitlines()
        summary = (out / "summary.csv").read_text().splitlines()
        pareto = (out / "pareto.csv").read_text().splitlines()
        assert raw[0].startswith("method,grid_id,params,repeat,train_accuracy")
        assert len(raw) == 1 + 2 * 2  # grid x repeats
        assert summary[0] == "method,grid_id,params,metric,mean,stderr"
        raw_gids = {ln.split(",")[1] for ln in raw[1:]}
        pareto_gids = [ln.split(",")[1] for ln in pareto[1:]]
        assert set(pareto_gids) <= raw_gids
        # mutually non-dominating frontier
        pts = []
        for ln in pareto[1:]:
            parts = ln.split(",")
            pts.append((float(parts[3]), float(parts[5])))
        for a in pts:
            for b in pts:
                if a != b:
                    assert not (b[0] >= a[0] and b[1] <= a[1])

    def test_deterministic_bytes(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            cfg = load_config(write_config(tmp_path, BASIC.format(out=out)))
            run_experiment(cfg)
        for name in ("raw.csv", "summary.csv", "pareto.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_exact_table_mode_reports_gap(self, tmp_path):
        body = """
[data]
source = theorem1
alpha0 = 0.25
q0 = 0.5
samples = 0

[output]
dir = {out}
"""
        out = tmp_path / "thm"
        cfg = load_config(write_config(tmp_path, body.format(out=out)))
        result = run_experiment(cfg)
        rec = result.raw[0]
        assert rec["f_eps_original"] == pytest.approx(1.0, abs=1e-9)
        assert rec["f_eps_imputed_best"] == pytest.approx(0.75, abs=1e-6)
        assert rec["gap"] == pytest.approx(0.25, abs=1e-6)
        text = (out / "summary.csv").read_text()
        assert "f_eps_original" in text and "f_eps_imputed_best" in text

    def test_methods_cover_missingness_pipeline(self, tmp_path):
        # csv source + mnar injection + fairmissbag, small but end to end
        ds = gen_synthetic(0)
        from fairmiss.data import write_csv

        csv_path = tmp_path / "synth.csv"
        write_csv(ds.subset(np.arange(0, 2400, 8)), csv_path)
        schema_path = tmp_path / "schema.txt"
        schema_path.write_text(
            "x1 = feature\nx2 = feature\nsensitive = sensitive\nlabel = label\n"
        )
        body = f"""
[data]
source = csv
path = {csv_path}
schema = {schema_path}

[method]
name = fairmissbag
imputer = mean
bags = 2

[intervention]
name = none

[sweep]
repeats = 1
test_fraction = 0.3
seed = 1

[output]
dir = {tmp_path / "bag"}
"""
        result = run_experiment(load_config(write_config(tmp_path, body, "bag.cfg")))
        assert result.succeeded
        assert 0.0 <= result.aggregated["g0"]["test_accuracy"][0] <= 1.0


class TestAllMethods:
    @pytest.mark.parametrize(
        "method_lines",
        [
            "name = impute-then-classify\nimputer = mean",
            "name = impute-then-classify\nimputer = knn:3",
            "name = indicators",
            "name = affine",
            "name = clustering\nk_min = 1\nalpha = 1.0\nbeta = 0.0",
            "name = fairmissbag\nimputer = mean\nbags = 2",
        ],
    )
    def test_every_method_runs_end_to_end(self, tmp_path, method_lines):
        from fairmiss.data import write_csv

        ds = gen_synthetic(0).subset(np.arange(0, 2400, 6))
        csv_path = tmp_path / "d.csv"
        write_csv(ds, csv_path)
        schema_path = tmp_path / "schema.txt"
        schema_path.write_text(
            "x1 = feature\nx2 = feature\nsensitive = sensitive\nlabel = label\n"
        )
        name = method_lines.splitlines()[0].split("=")[1].strip()
        body = f"""
[data]
source = csv
path = {csv_path}
schema = {schema_path}

[method]
{method_lines}

[intervention]
name = none

[sweep]
repeats = 1
test_fraction = 0.3
seed = 2

[output]
dir = {tmp_path / name}
"""
        result = run_experiment(load_config(write_config(tmp_path, body, f"{name}.cfg")))
        assert result.succeeded, result.failures
        acc = result.aggregated["g0"]["test_accuracy"][0]
        assert 0.3 <= acc <= 1.0

    def test_all_repeats_failing_is_reported(self, tmp_path):
        # single-group data cannot support the disparity penalty
        from fairmiss.data import Dataset, write_csv

        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(40, 2)), np.zeros(40, int), rng.integers(0, 2, 40))
        csv_path = tmp_path / "one_group.csv"
        write_csv(ds, csv_path)
        schema_path = tmp_path / "schema.txt"
        schema_path.write_text(
            "x1 = feature\nx2 = feature\nsensitive = sensitive\nlabel = label\n"
        )
        body = f"""
[data]
source = csv
path = {csv_path}
schema = {schema_path}

[method]
name = indicators

[intervention]
name = penalty
tau = 1.0

[sweep]
repeats = 2
test_fraction = 0.3
seed = 0

[output]
dir = {tmp_path / "fail"}
"""
        result = run_experiment(load_config(write_config(tmp_path, body, "fail.cfg")))
        assert not result.succeeded
        assert len(result.failures) == 2
        assert cli.main(["run", str(tmp_path / "fail.cfg")]) == 1


class TestLeakage:
    def test_fitted_state_ignores_test_rows(self, rng, tmp_path):
        cfg = load_config(write_config(tmp_path, BASIC.format(out=tmp_path / "x")))
        train = random_dataset(rng, n=80, d=3, missing_rate=0.2)
        gp = grid_points(cfg.intervention)[0]
        f1 = fit_pipeline(train, cfg, gp, seed=3)
        f2 = fit_pipeline(train, cfg, gp, seed=3)
        assert np.array_equal(f1.state["model"].weights, f2.state["model"].weights)
        test_a = random_dataset(rng, n=30, d=3, missing_rate=0.2)
        test_b = random_dataset(rng, n=30, d=3, missing_rate=0.6)
        evaluate_pipeline(f1, test_a, seed=0)
        m = evaluate_pipeline(f1, test_b, seed=0)
        assert np.array_equal(f1.state["model"].weights, f2.state["model"].weights)
        assert set(m) == {"train_accuracy", "test_accuracy", "fnr_diff", "fpr_diff", "meo"}


class TestExactAnalysis:
    def test_gap_matches_mixture_rate_on_grid(self):
        for a in (0.05, 0.1, 0.2, 0.3):
            rows = exact_table_analysis(MaskedPositives((a, a), (0.5, 0.5)), (0.0,))
            assert rows[0]["gap"] == pytest.approx(a, abs=1e-6)


class TestCli:
    def test_validate_command(self, tmp_path, capsys):
        p = write_config(tmp_path, BASIC.format(out=tmp_path / "v"))
        assert cli.main(["validate", str(p)]) == 0
        assert "OK" in capsys.readouterr().out

    def test_validate_rejects_bad_config(self, tmp_path, capsys):
        p = write_config(tmp_path, "[data]\nsource = nonsense\n")
        assert cli.main(["validate", str(p)]) == 1

    def test_theorem1_command(self, capsys):
        assert cli.main(["theorem1", "--alpha", "0.25", "--q0", "0.5"]) == 0
        out = capsys.readouterr().out
        assert "gap" in out and "0.250000" in out

    def test_synthetic_command_roundtrips(self, tmp_path, capsys):
        out_csv = tmp_path / "synth.csv"
        schema = tmp_path / "synth.schema"
        code = cli.main([
            "synthetic", "--seed", "3", "--out", str(out_csv), "--schema", str(schema)
        ])
        assert code == 0
        ds = load_csv(out_csv, read_schema(schema))
        assert ds.n_samples == 2400
        assert int(ds.mask[:, 1].sum()) == 800

    def test_run_command(self, tmp_path, capsys):
        body = """
[data]
source = theorem1
alpha0 = 0.2

[output]
dir = {out}
"""
        p = write_config(tmp_path, body.format(out=tmp_path / "r"))
        assert cli.main(["run", str(p)]) == 0
        assert "best_constrained_accuracy" in capsys.readouterr().out
