# tests/test_commands.py
import json

import pytest
from click.testing import CliRunner

from rgbdt_segment import create_cli
from rgbdt_segment.decorators import EXIT_IO, EXIT_OK, EXIT_VALIDATION


@pytest.fixture
def cli():
    return create_cli()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def static_root(cli, runner, tmp_path):
    root = tmp_path / "static"
    result = runner.invoke(cli, ["synth", "--preset", "static", "--output", str(root), "--seed", "1"])
    assert result.exit_code == EXIT_OK, result.output
    return root


def test_synth_run_eval_succeed(cli, runner, static_root, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", "--input", str(static_root), "--output", str(out), "--window-n", "10"])
    assert result.exit_code == EXIT_OK, result.output
    summary = json.loads(result.output.strip().splitlines()[-1])
    assert summary["frames_written"] == 200

    scores = tmp_path / "scores.csv"
    result = runner.invoke(cli, ["eval", "--pred", str(out), "--gt", str(static_root), "--out", str(scores)])
    assert result.exit_code == EXIT_OK, result.output
    lines = scores.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "frame_index,precision,recall,f_measure"
    assert lines[-1].startswith("mean,")
    assert len(lines) == 202


def test_invalid_config_exits_with_one(cli, runner, static_root, tmp_path):
    result = runner.invoke(cli, ["run", "--input", str(static_root), "--output", str(tmp_path / "out"),
                                 "--window-n", "1"])
    print(f"\nOutput for window_n=1: {result.output!r}")
    assert result.exit_code == EXIT_VALIDATION
    assert "window_n" in result.output


def test_missing_input_exits_with_two(cli, runner, tmp_path):
    result = runner.invoke(cli, ["run", "--input", str(tmp_path / "missing"), "--output", str(tmp_path / "out")])
    assert result.exit_code == EXIT_IO


def test_missing_config_file_exits_with_two(cli, runner, static_root, tmp_path):
    result = runner.invoke(cli, ["run", "--config", str(tmp_path / "absent.env"), "--input", str(static_root),
                                 "--output", str(tmp_path / "out")])
    assert result.exit_code == EXIT_IO


def test_config_file_with_override(cli, runner, static_root, tmp_path):
    config = tmp_path / "pipeline.env"
    config.write_text("WINDOW_N=1\n", encoding="utf-8")
    base = ["run", "--config", str(config), "--input", str(static_root), "--output", str(tmp_path / "out")]
    assert runner.invoke(cli, base).exit_code == EXIT_VALIDATION
    assert runner.invoke(cli, base + ["--window-n", "8"]).exit_code == EXIT_OK


def test_empty_sequence_exits_cleanly(cli, runner, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(cli, ["run", "--input", str(empty), "--output", str(tmp_path / "out")])
    assert result.exit_code == EXIT_OK
    assert json.loads(result.output.strip().splitlines()[-1])["frame_count"] == 0
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("flag, value", [
    ("--threads", "0"),
    ("--mask-format", "bmp"),
    ("--window-n", "abc"),
])
def test_bad_flag_value_exits_with_one(cli, runner, static_root, tmp_path, flag, value):
    result = runner.invoke(cli, ["run", "--input", str(static_root), "--output", str(tmp_path / "out"),
                                 flag, value])
    assert result.exit_code == EXIT_VALIDATION
    assert not (tmp_path / "out").exists()


def test_missing_required_flag_exits_with_one(cli, runner, tmp_path):
    result = runner.invoke(cli, ["run", "--output", str(tmp_path / "out")])
    assert result.exit_code == EXIT_VALIDATION


@pytest.mark.parametrize("threshold", ["0", "1.5", "-0.2"])
def test_iou_threshold_out_of_range_exits_with_one(cli, runner, static_root, threshold):
    result = runner.invoke(cli, ["eval", "--pred", str(static_root), "--gt", str(static_root),
                                 "--iou-threshold", threshold])
    assert result.exit_code == EXIT_VALIDATION
