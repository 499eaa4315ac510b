import json

import pytest

from lobsift.cli import main
from lobsift.errors import ConfigError
from lobsift.pipeline import RunConfig, run_pipeline
from lobsift.report import load_scores, render_report
from lobsift.synth import GeneratorConfig

GEN = {
    "seed": 3,
    "session_seconds": 300.0,
    "order_rate": 25.0,
    "flicker_fraction": 0.3,
    "spoof_fraction": 0.2,
    "trade_rate": 2.0,
    "signal_strength": 1.0,
}

SMALL_RUN = {
    "generator": GEN,
    "lag_horizons_s": [1, 10, 30],
    "regime_horizons_s": [1, 10],
    "block_count": 4,
    "hawkes_max_iter": 200,
}


class TestRunConfig:
    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(SMALL_RUN))
        config = RunConfig.from_json(path)
        assert config.generator == GeneratorConfig(**GEN)
        assert config.lag_horizons_s == (1, 10, 30)
        assert config.hawkes_max_iter == 200

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({**SMALL_RUN, "lookbak_s": 5}))
        with pytest.raises(ConfigError, match="unknown run settings"):
            RunConfig.from_json(path)

    def test_exactly_one_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            RunConfig()
        with pytest.raises(ConfigError, match="exactly one"):
            RunConfig(generator=GeneratorConfig(), input_path="ticks.csv", date="20230102")

    def test_file_mode_needs_date(self):
        with pytest.raises(ConfigError, match="date"):
            RunConfig(input_path="ticks.csv")

    def test_forecast_must_be_a_lag_column(self):
        with pytest.raises(ConfigError, match="forecast"):
            RunConfig(generator=GeneratorConfig(), forecast_s=2.0)

    def test_filter_grid_has_ten_cells(self):
        config = RunConfig(generator=GeneratorConfig())
        labels = [spec.label for spec in config.filter_specs()]
        assert labels == [
            "UF", "LF-100ms", "LF-500ms", "LF-1s",
            "MF-1", "MF-3", "MF-5",
            "MTF-50ms", "MTF-100ms", "MTF-200ms",
        ]


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    config = RunConfig(
        generator=GeneratorConfig(**GEN),
        lag_horizons_s=(1, 10, 30),
        regime_horizons_s=(1, 10),
        block_count=4,
        hawkes_max_iter=200,
    )
    manifest, code = run_pipeline(config, out, jobs=1)
    return out, manifest, code


class TestRunPipeline:
    def test_exit_code_and_cells(self, finished_run):
        out, manifest, code = finished_run
        assert code == 0
        assert manifest["failed_cells"] == []
        assert len(manifest["cells"]) == 10
        assert all(c["status"] == "ok" for c in manifest["cells"].values())

    def test_artifact_layout(self, finished_run):
        out, _, _ = finished_run
        assert sorted(p.name for p in (out / "signals").glob("*.csv"))[0] == "LF-100ms.csv"
        assert len(list((out / "signals").glob("*.csv"))) == 10
        assert len(list((out / "kernels").glob("*.json"))) == 20
        assert (out / "scores.json").exists()
        assert (out / "manifest.json").exists()

    def test_scores_cover_both_variants(self, finished_run):
        out, _, _ = finished_run
        scores = json.loads((out / "scores.json").read_text())
        for label, cell in scores["cells"].items():
            assert set(cell) >= {"book", "trade", "excluded_orders"}
            assert set(cell["book"]["pearson_raw"]) == {
                str(h * 10**9) for h in (1, 10, 30)
            }
            assert set(cell["book"]["cc_raw"]) == {str(h * 10**9) for h in (1, 10)}

    def test_windows_comparable_across_cells(self, finished_run):
        # the whole point of the shared masks: every cell of a variant scores
        # the same windows, so the counts must agree exactly
        out, _, _ = finished_run
        scores = json.loads((out / "scores.json").read_text())
        for variant in ("book", "trade"):
            counts = {cell[variant]["n_windows"] for cell in scores["cells"].values()}
            assert len(counts) == 1

    def test_manifest_bookkeeping(self, finished_run):
        out, manifest, _ = finished_run
        assert manifest["n_events"] > 0
        assert manifest["n_orders"] > 2
        assert manifest["cells"]["UF"]["excluded_orders"] == 0
        assert manifest["cells"]["LF-100ms"]["excluded_orders"] > 0

    def test_report_rendering(self, finished_run):
        out, _, _ = finished_run
        paths = render_report(load_scores(out), out)
        names = {p.name for p in paths}
        assert "pearson_book_raw.csv" in names
        assert "hawkes.csv" in names
        assert "pearson_by_horizon.png" in names
        assert "excitation_by_filter.png" in names
        for p in paths:
            assert p.exists() and p.stat().st_size > 0


class TestCli:
    def test_simulate_ingest_filter_signals(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        truth = tmp_path / "truth.csv"
        gen = tmp_path / "gen.json"
        gen.write_text(json.dumps(GEN))
        assert main(["simulate", "--config", str(gen), "--out", str(ticks),
                     "--truth", str(truth)]) == 0
        assert ticks.exists() and truth.exists()

        lifecycle_csv = tmp_path / "orders.csv"
        assert main(["ingest", str(ticks), "--date", "20230102",
                     "--end", "09:25", "--out", str(lifecycle_csv)]) == 0
        header = lifecycle_csv.read_text().splitlines()[0]
        assert header == "oid,entry_ns,exit_ns,lifetime_ns,mod_count,last_mod_gap_ns,terminal"

        oids = tmp_path / "excluded.txt"
        assert main(["filter", str(ticks), "--date", "20230102", "--end", "09:25",
                     "--filter", "mtf", "--threshold", "50ms",
                     "--out", str(oids)]) == 0
        out = capsys.readouterr().out
        assert "MTF-50ms: excluded" in out
        assert oids.read_text().strip()

        signals_csv = tmp_path / "signals.csv"
        assert main(["signals", str(ticks), "--date", "20230102", "--end", "09:25",
                     "--filter", "lf", "--threshold", "100ms",
                     "--out", str(signals_csv)]) == 0
        assert signals_csv.read_text().startswith("anchor_ns,")

    def test_score_command(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        gen = tmp_path / "gen.json"
        gen.write_text(json.dumps(GEN))
        main(["simulate", "--config", str(gen), "--out", str(ticks)])
        assert main(["score", str(ticks), "--date", "20230102", "--end", "09:25",
                     "--horizon", "10s"]) == 0
        out = capsys.readouterr().out
        assert "pearson(imbalance, fwd return @10s)" in out

    def test_missing_threshold_is_config_error(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        main(["simulate", "--out", str(ticks)])
        code = main(["filter", str(ticks), "--date", "20230102", "--end", "09:25",
                     "--filter", "lf"])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_date_is_config_error(self, tmp_path, capsys):
        ticks = tmp_path / "ticks.csv"
        main(["simulate", "--out", str(ticks)])
        assert main(["ingest", str(ticks)]) == 1
        assert "--date" in capsys.readouterr().err

    def test_run_and_report_commands(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps(SMALL_RUN))
        out_dir = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out_dir)]) == 0
        assert "run complete: 10 cells, 0 failed" in capsys.readouterr().out
        assert (out_dir / "tables" / "summary.csv").exists()
        assert (out_dir / "figures" / "regime_by_filter.png").exists()

        assert main(["report", str(out_dir)]) == 0
        assert "rendered" in capsys.readouterr().out

    def test_bad_run_config_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"generator": GEN, "no_such_setting": 1}))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "unknown run settings" in capsys.readouterr().err
