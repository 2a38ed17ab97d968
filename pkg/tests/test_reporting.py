import math

import numpy as np
import pytest

from engine import toydata
from engine.metrics import MetricsRecord
from engine.nn import NetworkSpec, init_network, load_parameters
from engine.toydata import Rng
from engine.trainers import STATUS_COMPLETED, STATUS_DIVERGED, RunLog
from ganlab import reporting


def record(step, js=0.1, modes=3):
    return MetricsRecord(step, 0.5, 1.0 / 3.0, 0.2, js, 0.25, modes, 0.9, 0.5)


def make_log(status=STATUS_COMPLETED, n=40, wall_time=1.5, js=0.1):
    dist = toydata.MixtureRing()
    return RunLog(
        config={"algorithm": "vanilla", "seed": 4, "data": toydata.describe(dist)},
        records=[MetricsRecord(0, math.nan, math.nan, 1.0, 0.6, 2.0, 0, 0.0, 0.5), record(10, js)],
        samples=toydata.sample(dist, n, Rng(1)) if n else np.zeros((0, 2)),
        wall_time=wall_time,
        status=status,
        diagnostics={"d_accuracy_final": 0.5},
        counters={"d_updates": 10},
        timings={"d_step": {"count": 10, "total_ms": 5.0, "mean_ms": 0.5, "max_ms": 1.0}},
        run_id="vanilla-0123456789-s4",
    )


def test_metrics_header_is_fixed():
    text = reporting.metrics_csv([])
    assert text == "step,d_loss,g_loss,kl,js,w1,modes_covered,hq_frac,d_acc\n"


def test_metrics_csv_preserves_values():
    records = make_log().records
    parsed = reporting.parse_metrics_csv(reporting.metrics_csv(records))
    assert parsed[1] == records[1]
    assert math.isnan(parsed[0].d_loss)
    assert parsed[1].g_loss == 1.0 / 3.0


def test_metrics_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        reporting.parse_metrics_csv("a,b\n1,2\n")


def test_runlog_file_round_trip(tmp_path):
    log = make_log()
    path = reporting.write_runlog(log, tmp_path / "runlog.json")
    back = reporting.read_runlog(path)
    assert back.run_id == log.run_id
    assert back.records[1] == log.records[1]
    assert np.array_equal(back.samples, log.samples)
    assert back.diagnostics == log.diagnostics
    assert back.counters == {"d_updates": 10}


def test_read_runlog_errors(tmp_path):
    with pytest.raises(OSError):
        reporting.read_runlog(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValueError):
        reporting.read_runlog(bad)


def test_rescore_is_seeded():
    log = make_log(n=500)
    a = reporting.rescore(log)
    assert a == reporting.rescore(log)
    assert a.modes_covered == 8
    assert a != reporting.rescore(log, seed=5)


def test_rescore_needs_samples():
    log = make_log(n=0)
    with pytest.raises(ValueError):
        reporting.rescore(log)


def test_reference_draws_use_output_domain():
    paired = reporting.reference_draws(toydata.PairedData(), 10, Rng(0))
    assert paired.shape == (10, 2)
    domain = reporting.reference_draws(toydata.TwoDomainData(), 10, Rng(0))
    assert domain.shape == (10, 2)


def test_histogram_svg_has_one_panel_per_axis():
    svg = reporting.histogram_svg(make_log().samples, toydata.MixtureRing())
    assert svg.startswith("<svg")
    assert svg.count("<polyline") == 2
    one_d = reporting.histogram_svg(np.zeros((10, 1)), toydata.Gaussian1D())
    assert one_d.count("<polyline") == 1


def test_write_run_creates_artifacts(tmp_path):
    spec = NetworkSpec.mlp(2, (4,), 2)
    params = init_network(spec, 0)
    run_dir = reporting.write_run(tmp_path / "run", make_log(), "version: 1\n", generator=params)
    for name in (
        reporting.METRICS_FILE,
        reporting.SAMPLES_FILE,
        reporting.RUNLOG_FILE,
        reporting.TIMING_FILE,
        reporting.CONFIG_ECHO_FILE,
        reporting.GENERATOR_FILE,
        reporting.HISTOGRAM_FILE,
    ):
        assert (run_dir / name).exists(), name
    assert load_parameters(run_dir / reporting.GENERATOR_FILE).fingerprint() == params.fingerprint()
    assert reporting.read_samples(run_dir / reporting.SAMPLES_FILE).shape == (40, 2)


def test_write_run_without_svg(tmp_path):
    run_dir = reporting.write_run(tmp_path / "run", make_log(), "", svg=False)
    assert not (run_dir / reporting.HISTOGRAM_FILE).exists()


def test_index_round_trip(tmp_path):
    rows = [
        reporting.IndexRow(0, "seed=0", 0, "a", STATUS_COMPLETED, 1.25, record(10)),
        reporting.IndexRow(1, "seed=1", 1, "b", STATUS_DIVERGED, 0.5, None),
    ]
    path = reporting.write_index(rows, tmp_path / reporting.INDEX_FILE)
    assert path.read_text(encoding="utf-8").splitlines()[0].startswith("cell,label,seed,run_id,status,wall_time,step")
    assert reporting.read_index(path) == rows


def test_summarize_skips_diverged_runs():
    logs = [make_log(js=0.1, wall_time=1.0), make_log(js=0.3, wall_time=2.0), make_log(STATUS_DIVERGED, wall_time=3.0)]
    row = reporting.summarize("wgan_gp", logs)
    assert (row.runs, row.diverged) == (3, 1)
    assert row.js == pytest.approx(0.2)
    assert row.modes_covered == pytest.approx(3.0)
    assert row.wall_time == pytest.approx(2.0)


def test_summarize_all_diverged_is_nan():
    row = reporting.summarize("vanilla", [make_log(STATUS_DIVERGED)])
    assert math.isnan(row.js)


def test_compare_files(tmp_path):
    rows = [reporting.summarize("wgan_gp", [make_log()]), reporting.summarize("ddpm", [make_log(js=0.05)])]
    csv_path, md_path = reporting.write_compare(rows, tmp_path)
    assert csv_path.read_text(encoding="utf-8").splitlines()[0] == ",".join(reporting.COMPARE_HEADER)
    table = md_path.read_text(encoding="utf-8")
    assert table.splitlines()[0] == "| aspect | wgan_gp | ddpm |"
    assert "| training stability (diverged runs) | 0/1 | 0/1 |" in table
    assert "| sample quality (JS) | 0.1000 | 0.0500 |" in table


def test_runlog_json_excludes_wall_clock(tmp_path):
    fast = reporting.write_run(tmp_path / "fast", make_log(wall_time=0.5), "", svg=False)
    slow_log = make_log(wall_time=9.0)
    slow_log.timings = {"d_step": {"count": 10, "total_ms": 90.0, "mean_ms": 9.0, "max_ms": 20.0}}
    slow = reporting.write_run(tmp_path / "slow", slow_log, "", svg=False)
    assert (fast / reporting.RUNLOG_FILE).read_bytes() == (slow / reporting.RUNLOG_FILE).read_bytes()
    assert "wall_time" not in (fast / reporting.RUNLOG_FILE).read_text(encoding="utf-8")


def test_read_runlog_picks_up_sibling_timing(tmp_path):
    run_dir = reporting.write_run(tmp_path / "run", make_log(wall_time=2.25), "", svg=False)
    back = reporting.read_runlog(run_dir / reporting.RUNLOG_FILE)
    assert back.wall_time == 2.25
    assert back.timings["d_step"]["count"] == 10
