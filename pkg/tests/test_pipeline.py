# tests/test_pipeline.py
import io
import json

import numpy as np
import pytest
from PIL import Image

from rgbdt_segment.evaluation import SynthParams, synth_sequence, write_sequence
from rgbdt_segment.models import (
    FrameMismatchError, ForegroundMask, PipelineConfig, RegionOfInterest, SequenceIOError, ValidationError,
)
from rgbdt_segment.pipeline import (
    MANIFEST_NAME, REPORT_NAME, ROIS_NAME, SequenceManifest, bandwidth_prefix_length, load_manifest,
    load_sequence, run,
)
from rgbdt_segment.utils import read_mask, read_rois, write_mask, write_rois


@pytest.fixture
def small_sequence():
    return synth_sequence(SynthParams(width=16, height=12, frame_count=6, ado_speckle_rate=0.05,
                                      object_size=4, trajectory=((4, 2, 2), (5, 8, 6))), seed=11)


@pytest.fixture
def small_root(tmp_path, small_sequence):
    root = tmp_path / "sequence"
    write_sequence(small_sequence, root)
    return root


# --- Loading ---

def test_load_sequence_round_trip(small_root, small_sequence):
    manifest = load_manifest(small_root)
    assert manifest.frame_count == 6
    frames = list(load_sequence(manifest))
    assert [frame.frame_index for frame in frames] == list(range(6))
    for loaded, original in zip(frames, small_sequence.frames):
        assert np.array_equal(loaded.rgb, original.rgb)
        assert np.array_equal(loaded.depth, original.depth)
        assert np.array_equal(loaded.thermal, original.thermal)


def test_manifest_is_discovered_without_file(small_root):
    (small_root / MANIFEST_NAME).unlink()
    manifest = load_manifest(small_root)
    assert manifest.frame_count == 6
    assert len(list(load_sequence(manifest))) == 6


def test_missing_plane_names_the_frame(small_root):
    (small_root / "depth" / "000001.png").unlink()
    manifest = load_manifest(small_root)
    with pytest.raises(SequenceIOError, match="Frame 1"):
        list(load_sequence(manifest))


def test_missing_directory_is_an_io_error(tmp_path):
    with pytest.raises(SequenceIOError):
        load_manifest(tmp_path / "nowhere")


def test_mismatched_plane_sizes(tmp_path):
    manifest = SequenceManifest(root=tmp_path, frame_count=1)
    for modality in ("rgb", "depth", "thermal"):
        (tmp_path / modality).mkdir()
    Image.fromarray(np.zeros((480, 640, 3), dtype=np.uint8)).save(manifest.frame_path("rgb", 0))
    Image.fromarray(np.full((240, 320), 1000, dtype=np.uint16)).save(manifest.frame_path("depth", 0))
    Image.fromarray(np.zeros((480, 640), dtype=np.uint8)).save(manifest.frame_path("thermal", 0))
    with pytest.raises(FrameMismatchError):
        list(load_sequence(manifest))


def test_bandwidth_prefix_length():
    config = PipelineConfig(window_n=100)
    assert bandwidth_prefix_length(config, 300) == 75
    assert bandwidth_prefix_length(config, 1000) == 100
    assert bandwidth_prefix_length(config, 5) == 2
    assert bandwidth_prefix_length(config, 1) == 1


# --- Output files ---

@pytest.mark.parametrize("mask_format, suffix", [("png", ".png"), ("pgm", ".pgm")])
def test_mask_round_trip(tmp_path, rng, mask_format, suffix):
    mask = ForegroundMask(rng.random((9, 13)) < 0.5)
    path = write_mask(mask, tmp_path / f"mask{suffix}", mask_format)
    with Image.open(path) as image:
        assert image.mode == "L"
        assert set(np.unique(np.asarray(image)).tolist()) <= {0, 255}
    assert read_mask(path) == mask


def test_unknown_mask_format(tmp_path):
    with pytest.raises(ValidationError):
        write_mask(ForegroundMask.empty(2, 2), tmp_path / "mask.bmp", "bmp")


def test_roi_lines_follow_schema():
    stream = io.StringIO()
    write_rois([], 5, stream)
    write_rois([RegionOfInterest(10, 10, 21, 21, 144, blob_id=2)], 6, stream)
    lines = stream.getvalue().splitlines()
    assert json.loads(lines[0]) == {"frame_index": 5, "rois": []}
    record = json.loads(lines[1])["rois"][0]
    assert record == {"blob_id": 2, "x_min": 10, "y_min": 10, "x_max": 21, "y_max": 21, "area": 144}
    stream.seek(0)
    assert [index for index, _ in read_rois(stream)] == [5, 6]


def test_malformed_roi_line():
    with pytest.raises(ValidationError, match="line 1"):
        list(read_rois(io.StringIO("{not json}\n")))


# --- run ---

def test_empty_sequence_writes_nothing(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    out = tmp_path / "out"
    report = run(PipelineConfig(window_n=5), load_manifest(root), out)
    assert report.frame_count == 0 and report.frames_written == 0
    assert not out.exists()


def test_run_writes_every_frame(tmp_path, small_root):
    out = tmp_path / "out"
    config = PipelineConfig(window_n=3, min_blob_area=4)
    report = run(config, load_manifest(small_root), out, mask_format="pgm", overlays=True)
    assert report.frames_written == 6 and not report.partial
    assert sorted(p.name for p in (out / "masks").iterdir()) == [f"{i:06d}.pgm" for i in range(6)]
    assert len(list((out / "overlays").iterdir())) == 6
    with open(out / ROIS_NAME, encoding="utf-8") as stream:
        assert [index for index, _ in read_rois(stream)] == list(range(6))
    with open(out / REPORT_NAME, encoding="utf-8") as stream:
        saved = json.load(stream)
    assert saved["frames_written"] == 6
    assert set(saved["bandwidths"]) == {"sigma_r", "sigma_g", "sigma_depth", "sigma_thermal"}
    assert len(saved["frame_seconds"]) == 6


def test_single_frame_run_uses_floor_bandwidths(tmp_path):
    root = tmp_path / "one"
    write_sequence(synth_sequence(SynthParams(width=8, height=8, frame_count=1, object_size=2)), root)
    report = run(PipelineConfig(window_n=4), load_manifest(root), tmp_path / "out")
    assert report.frames_written == 1
    assert report.bandwidths["sigma_r"] == pytest.approx(0.005)


def test_run_is_deterministic(tmp_path, small_root):
    config = PipelineConfig(window_n=3, min_blob_area=4)
    first = tmp_path / "first"
    second = tmp_path / "second"
    run(config, load_manifest(small_root), first)
    run(config, load_manifest(small_root), second, threads=2)
    for index in range(6):
        name = f"{index:06d}.png"
        assert (first / "masks" / name).read_bytes() == (second / "masks" / name).read_bytes()
    assert (first / ROIS_NAME).read_text() == (second / ROIS_NAME).read_text()


def test_write_failure_leaves_partial_report(tmp_path, small_root, mocker):
    calls = {"count": 0}
    real_write_mask = write_mask

    def failing_write_mask(mask, path, mask_format="png"):
        calls["count"] += 1
        if calls["count"] == 3:
            raise SequenceIOError("disk full")
        return real_write_mask(mask, path, mask_format)

    mocker.patch("rgbdt_segment.pipeline.write_mask", side_effect=failing_write_mask)
    out = tmp_path / "out"
    with pytest.raises(SequenceIOError, match="disk full"):
        run(PipelineConfig(window_n=3), load_manifest(small_root), out)
    with open(out / REPORT_NAME, encoding="utf-8") as stream:
        saved = json.load(stream)
    print(f"\nPartial report: {saved['frames_written']} frames, error={saved['error']!r}")
    assert saved["partial"] is True
    assert saved["frames_written"] == 2
    assert "disk full" in saved["error"]



def test_corrupt_frame_during_bandwidth_estimation_leaves_partial_report(tmp_path, small_root):
    (small_root / "thermal" / "000001.png").write_bytes(b"not a png")
    out = tmp_path / "out"
    with pytest.raises(SequenceIOError, match="Frame 1"):
        run(PipelineConfig(window_n=4), load_manifest(small_root), out)
    with open(out / REPORT_NAME, encoding="utf-8") as stream:
        saved = json.load(stream)
    assert saved["partial"] is True
    assert saved["frames_written"] == 0
    assert saved["bandwidths"] is None
    assert "Frame 1" in saved["error"]

def test_invalid_config_is_rejected_before_io(tmp_path, small_root):
    with pytest.raises(ValidationError, match="window_n"):
        run(PipelineConfig(window_n=1), load_manifest(small_root), tmp_path / "out")
    assert not (tmp_path / "out").exists()
