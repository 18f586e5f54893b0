#!/usr/bin/env python3
"""
End-to-end tests for the dp-dbscan command line
"""

import argparse
import json
import logging

import numpy as np
import pandas as pd
import pytest

import main
from src import command_processor
from src.command_processor import (RunConfig, cmd_bounds, cmd_run, ingest, parse_columns,
                                   parse_int_list, project_latlon, provenance_path, sweep_path)
from src.config import Config
from src.errors import ConfigError, DataError
from src.span_io import read_spans


@pytest.fixture
def config_path(tmp_path):
    return str(tmp_path / "no-config.yaml")


@pytest.fixture
def clusters_csv(tmp_path):
    """Two tight clusters around (2, 2) and (8, 8), with a header and a label column"""
    rng = np.random.default_rng(0)
    points = np.vstack([rng.normal(2.0, 0.1, size=(500, 2)), rng.normal(8.0, 0.1, size=(500, 2))])
    frame = pd.DataFrame(points, columns=["x", "y"])
    frame["label"] = np.repeat([1, 2], 500)
    path = tmp_path / "clusters.csv"
    frame.to_csv(path, index=False)
    return path


def cli(config_path, *argv):
    return main.main(["--config", config_path, *[str(a) for a in argv]])


def run_args(clusters_csv, out, *extra):
    return ["run", "--input", clusters_csv, "--header", "--cols", "x,y", "--alpha", "0.33",
            "--minpts", "7", "--seed", "5", "--out", out, *extra]


def test_run_then_evaluate(tmp_path, config_path, clusters_csv, capsys):
    out = tmp_path / "spans.json"
    assert cli(config_path, *run_args(clusters_csv, out)) == 0
    assert out.exists()
    record = json.loads(provenance_path(out).read_text())
    assert record["provenance"]["epsilon"] == 1.0
    assert record["shared_budget"] is True
    capsys.readouterr()

    report_path = tmp_path / "report.json"
    assert cli(config_path, "evaluate", "--spans", out, "--input", clusters_csv, "--header",
               "--cols", "x,y", "--labels-col", "label", "--out", report_path) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads(report_path.read_text())
    assert report["span_count"] == 2
    assert report["ari"] >= 0.95
    assert report["ami"] >= 0.9
    assert report["n_outside"] == 0


def test_run_logs_through_the_module_logger(tmp_path, config_path, clusters_csv, caplog):
    args = argparse.Namespace(input=str(clusters_csv), out=str(tmp_path / "spans.json"), alpha=0.33,
                              minpts=7, epsilon=None, beta=None, eta_prime=None, theta=None, hist=None,
                              seed=5, cols="x,y", header=True, minpts_sweep=None, hist_dump=None,
                              project_latlon=False, one_sided_tau=False)
    with caplog.at_level(logging.INFO, logger=command_processor.logger.name):
        cmd_run(RunConfig.from_args(args, Config(config_path)))
    messages = [r.getMessage() for r in caplog.records if r.name == "src.command_processor"]
    assert any(m.startswith("Ingested 1000 points") for m in messages)
    assert any(m.startswith("Wrote provenance") for m in messages)


def test_same_seed_gives_byte_identical_files(tmp_path, config_path, clusters_csv):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert cli(config_path, *run_args(clusters_csv, first)) == 0
    assert cli(config_path, *run_args(clusters_csv, second)) == 0
    assert first.read_bytes() == second.read_bytes()


def test_minpts_sweep_shares_one_release(tmp_path, config_path, clusters_csv):
    out = tmp_path / "spans.json"
    assert cli(config_path, *run_args(clusters_csv, out, "--minpts-sweep", "5,20",
                                      "--hist-dump", tmp_path / "hist.csv")) == 0
    files = [out, sweep_path(out, 5), sweep_path(out, 20)]
    provenances = [read_spans(path)[0].provenance for path in files]
    assert {p.epsilon for p in provenances} == {1.0}
    assert len({p.histogram_hash for p in provenances}) == 1
    assert [p.min_pts for p in provenances] == [7, 5, 20]
    assert (tmp_path / "hist.csv").exists()
    record = json.loads(provenance_path(out).read_text())
    assert record["epsilon_total"] == 1.0
    assert len(record["outputs"]) == 3


def test_evaluate_without_truth_and_plot(tmp_path, config_path, clusters_csv, capsys):
    out = tmp_path / "spans.json"
    assert cli(config_path, *run_args(clusters_csv, out)) == 0
    capsys.readouterr()
    assert cli(config_path, "evaluate", "--spans", out, "--input", clusters_csv, "--header",
               "--cols", "x,y") == 0
    report = json.loads(capsys.readouterr().out)
    assert "ari" not in report
    assert report["covered_fraction"] + report["noise_fraction"] == pytest.approx(1.0)

    rects = tmp_path / "rects.csv"
    assert cli(config_path, "plot", "--spans", out, "--out", rects) == 0
    frame = pd.read_csv(rects)
    assert list(frame.columns) == ["id", "min_0", "min_1", "max_0", "max_1"]
    # raw units, not the normalized cube
    assert 7.0 < frame["max_0"].max() < 9.5
    assert 0.5 < frame["min_0"].min() < 3.0


def test_generate_command(tmp_path, config_path, capsys):
    out = tmp_path / "moons.csv"
    assert cli(config_path, "generate", "--kind", "moons", "--n", "200", "--seed", "1", "--out", out) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 200
    assert json.loads(capsys.readouterr().out)["kind"] == "moons"


def test_bounds_command(config_path, capsys):
    assert cli(config_path, "bounds", "--d", "2", "--alpha", "0.05", "--n", "600",
               "--hist", "naive", "--minpts", "7") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kappa"] == 21
    assert report["histogram_mode"] == "naive"
    assert report["big_gamma"] == pytest.approx(37.85, abs=0.1)
    assert report["min_pts_effective"] == pytest.approx(7 + 2 * report["big_gamma"])


def test_bounds_reports_linear_threshold():
    report = cmd_bounds(d=2, alpha=0.01, eta_prime=1.0, epsilon=1.0, beta=1 / 3, n=100)
    assert report["histogram_mode"] == "linear"
    assert report["theta"] > 0
    assert report["big_gamma"] > report["kappa"] * report["theta"]


def test_exit_codes(tmp_path, config_path, clusters_csv):
    out = tmp_path / "spans.json"
    assert cli(config_path, *run_args(tmp_path / "absent.csv", out)) == 3
    assert cli(config_path, *run_args(clusters_csv, out, "--epsilon", "-1")) == 2

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n5,6\n")
    assert cli(config_path, "run", "--input", bad, "--header", "--alpha", "0.5", "--out", out) == 3

    constant = tmp_path / "constant.csv"
    constant.write_text("1,5\n2,5\n3,5\n")
    assert cli(config_path, "run", "--input", constant, "--alpha", "0.5", "--out", out) == 3

    unit = tmp_path / "unit.csv"
    unit.write_text("0,0\n1,1\n0.5,0.25\n")
    assert cli(config_path, "run", "--input", unit, "--alpha", "0.0001", "--hist", "naive",
               "--out", out) == 4


def test_evaluate_rejects_dimension_mismatch(tmp_path, config_path, clusters_csv):
    out = tmp_path / "spans.json"
    assert cli(config_path, *run_args(clusters_csv, out)) == 0
    wide = tmp_path / "wide.csv"
    wide.write_text("0,0,0\n1,1,1\n")
    assert cli(config_path, "evaluate", "--spans", out, "--input", wide) == 2


def test_broken_config_file_exit_code(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("privacy: [unclosed\n")
    assert main.main(["--config", str(path), "bounds", "--alpha", "0.1", "--n", "10"]) == 2


def test_non_numeric_rows_are_reported(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n5,6\n7,\n")
    with pytest.raises(DataError, match="3, 5"):
        ingest(bad, header=True)


def test_ingest_rescales_by_the_largest_extent(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("0,0\n10,10\n")
    data = ingest(path)
    assert np.allclose(data.points, [[0, 0], [1, 1]])
    assert data.transform.normalize_length(2.0) == pytest.approx(0.2)


def test_latlon_projection():
    projected = project_latlon(np.array([[1.0, 1.0]]))
    assert np.allclose(projected, [[111.2, 85.2]])
    with pytest.raises(DataError):
        project_latlon(np.zeros((2, 3)))


def test_run_config_prefers_flags_over_config(tmp_path, config_path):
    config = Config(config_path)
    args = argparse.Namespace(input="in.csv", out="out.json", alpha=0.2, minpts=None, epsilon=0.5,
                              beta=None, eta_prime=None, theta=None, hist=None, seed=3, cols="0,1",
                              header=False, minpts_sweep="4,9", hist_dump=None, project_latlon=False,
                              one_sided_tau=False)
    run_config = RunConfig.from_args(args, config)
    assert run_config.epsilon == 0.5
    assert run_config.min_pts == 7
    assert run_config.histogram_mode == "auto"
    assert run_config.columns == ["0", "1"]
    assert run_config.minpts_sweep == [4, 9]
    args.alpha = None
    with pytest.raises(ConfigError):
        RunConfig.from_args(args, config)


def test_list_parsers():
    assert parse_columns(None) is None
    assert parse_columns(" a, b ") == ["a", "b"]
    assert parse_int_list("1,2") == [1, 2]
    assert parse_int_list(None) == []
    with pytest.raises(ConfigError):
        parse_int_list("1,x")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
