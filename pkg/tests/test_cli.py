import pytest

from ganlab import reporting, sweep
from ganlab.cli import EXIT_OK, EXIT_USAGE, build_parser, run
from ganlab.experiment import parse_sweep

TINY = """\
version: 1
experiment:
  algorithm: vanilla
  steps: 3
  batch: 16
  eval_every: 2
  eval_samples: 64
model:
  z_dim: 4
  hidden: [8]
diffusion:
  T: 10
  steps: 3
  batch: 16
  hidden: [8]
  eval_samples: 64
"""

TINY_SWEEP = """\
version: 1
base:
  experiment:
    steps: 2
    batch: 16
    eval_every: 1
    eval_samples: 64
  model:
    z_dim: 4
    hidden: [8]
axes:
  model.pack_k: [1, 2]
seeds: [0, 1]
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY, encoding="utf-8")
    return path


def test_train_then_eval(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["train", "--config", str(tiny_config), "--out", str(out), "--svg", "off"]) == EXIT_OK
    assert (out / reporting.METRICS_FILE).exists()
    assert (out / reporting.GENERATOR_FILE).exists()
    assert not (out / reporting.HISTOGRAM_FILE).exists()
    records = reporting.read_metrics(out / reporting.METRICS_FILE)
    assert [r.step for r in records] == [0, 2, 3]

    capsys.readouterr()
    assert run(["eval", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "status=completed" in printed
    assert "js=" in printed


def test_train_seed_override(tiny_config, tmp_path):
    out = tmp_path / "run"
    assert run(["train", "--config", str(tiny_config), "--out", str(out), "--seed", "9", "--svg", "on"]) == EXIT_OK
    log = reporting.read_runlog(out / reporting.RUNLOG_FILE)
    assert log.run_id.endswith("-s9")
    assert (out / reporting.HISTOGRAM_FILE).exists()


def test_config_error_exits_with_usage_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("experiment:\n  foo: 1\n", encoding="utf-8")
    assert run(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert f"config error in {path}" in err
    assert "experiment.foo" in err


def test_missing_file_exits_with_usage_code(tmp_path):
    assert run(["eval", str(tmp_path / "nowhere" / "runlog.json")]) == EXIT_USAGE


def test_gradcheck_verb_passes(capsys):
    assert run(["gradcheck", "--cases", "2", "--seed", "1"]) == EXIT_OK
    assert "gradient checks passed" in capsys.readouterr().out


def test_sweep_writes_index(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(TINY_SWEEP, encoding="utf-8")
    out = tmp_path / "sweep"
    assert run(["sweep", "--config", str(path), "--out", str(out), "--parallel", "1"]) == EXIT_OK
    rows = reporting.read_index(out / reporting.INDEX_FILE)
    assert [r.cell for r in rows] == [0, 1, 2, 3]
    assert [r.label for r in rows][-1] == "model.pack_k=2,seed=1"
    assert (out / "cell0003-s1" / reporting.RUNLOG_FILE).exists()


def test_sweep_rows_do_not_depend_on_pool_size(tmp_path):
    spec = parse_sweep(TINY_SWEEP)
    serial = sweep.run_sweep(spec, tmp_path / "serial", parallel=1)
    pooled = sweep.run_sweep(spec, tmp_path / "pooled", parallel=2)
    assert [(r.run_id, r.status, r.final) for r in serial] == [(r.run_id, r.status, r.final) for r in pooled]


def test_compare_writes_table(tiny_config, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert run(["compare", "--config", str(tiny_config), "--out", str(out), "--runs", "1"]) == EXIT_OK
    assert (out / reporting.COMPARE_CSV).exists()
    assert (out / "gan-s0" / reporting.RUNLOG_FILE).exists()
    assert (out / "ddpm-s0" / reporting.RUNLOG_FILE).exists()
    table = capsys.readouterr().out
    assert "| aspect | vanilla | ddpm |" in table


def test_parser_requires_a_verb():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
