"""Figure rendering from metrics and sweep files."""

import os

import pytest

from coeflab.noise_harness import build_noisy_dataset
from coeflab.report import render_run_report, render_sweep_report
from coeflab.trainer import METRIC_COLUMNS, RunConfig, fit, write_metrics

RUN_FIGURES = ("loss_components.png", "learning_rate.png", "coefficients.png",
               "accuracy.png", "report_summary.csv")


@pytest.fixture(scope="module")
def metrics_file(tmp_path_factory):
    ds = build_noisy_dataset("blobs", 3, 20, 3, 3.0, 0.5, "uniform", 0.3, 2, 1)
    cfg = RunConfig(hidden_dims="8", batch_size=18, probe_batch=6, epochs=2,
                    eval_every=2, seed=0)
    _, history = fit(ds, cfg, eval_x=ds.features, eval_y=ds.clean_labels)
    path = tmp_path_factory.mktemp("metrics") / "metrics.csv"
    write_metrics(path, {"config_hash": "deadbeefdeadbeef"}, history)
    return path, len(history)


def test_run_report_writes_figures(metrics_file, tmp_path):
    path, n_steps = metrics_file
    out = tmp_path / "figs"
    written = render_run_report(path, out)
    assert [os.path.basename(p) for p in written] == list(RUN_FIGURES)
    for p in written:
        assert os.path.getsize(p) > 0
    summary = (out / "report_summary.csv").read_text().strip().split("\n")
    assert summary[0] == "metric,value"
    assert f"steps,{n_steps}" in summary
    assert "config_hash,deadbeefdeadbeef" in summary
    names = [ln.split(",")[0] for ln in summary[1:]]
    assert "final_loss_total" in names
    assert "tail_mean_omega_mislabeled" in names


def test_run_report_rejects_empty(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# config_hash=x\n" + ",".join(METRIC_COLUMNS) + "\n")
    with pytest.raises(ValueError, match="no step records"):
        render_run_report(empty, tmp_path / "figs")


def test_sweep_report_writes_figure(tmp_path):
    sweep = tmp_path / "sweep.csv"
    sweep.write_text(
        "# seeds=1,2\n"
        "noise_ratio,variant,seed,accuracy,cell_mean,cell_std\n"
        "0.2,full,1,0.91,0.9,0.01\n"
        "0.2,full,2,0.89,0.9,0.01\n"
        "0.4,full,1,0.88,0.87,0.02\n"
        "0.4,full,2,0.86,0.87,0.02\n"
        "0.2,vanilla,1,0.8,0.79,0.01\n"
        "0.4,vanilla,1,0.6,0.6,0.0\n")
    written = render_sweep_report(sweep, tmp_path / "figs")
    assert [os.path.basename(p) for p in written] == ["sweep_accuracy.png"]
    assert os.path.getsize(written[0]) > 0


def test_sweep_report_errors(tmp_path):
    missing = tmp_path / "missing.csv"
    missing.write_text("noise_ratio,variant,seed,accuracy\n0.2,full,1,0.9\n")
    with pytest.raises(ValueError, match="missing sweep columns"):
        render_sweep_report(missing, tmp_path / "figs")
    empty = tmp_path / "empty.csv"
    empty.write_text("# only comments\n")
    with pytest.raises(ValueError, match="empty sweep table"):
        render_sweep_report(empty, tmp_path / "figs")
