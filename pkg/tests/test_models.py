# tests/test_models.py
from collections import deque

import numpy as np
import pytest

from rgbdt_segment.models import (
    BandwidthVector, FrameMismatchError, FrameStack, ForegroundMask, ObservationVector, PipelineConfig,
    PixelModel, RegionOfInterest, ValidationError, validate_config,
)


# --- validate_config ---

def test_defaults_are_accepted():
    config = PipelineConfig()
    assert validate_config(config) is config
    assert (config.window_n, config.foreground_threshold, config.thermal_bandwidth_factor,
            config.min_blob_area, config.opening_radius) == (100, 1e-4, 8.0, 50, 1)


def test_window_n_boundary():
    with pytest.raises(ValidationError, match="window_n ≥ 2"):
        validate_config(PipelineConfig(window_n=0))
    with pytest.raises(ValidationError, match="window_n"):
        validate_config(PipelineConfig(window_n=1))
    assert validate_config(PipelineConfig(window_n=2)).window_n == 2


@pytest.mark.parametrize("field_name, value", [
    ("sigma_floor", -0.1),
    ("foreground_threshold", 0.0),
    ("depth_max", -8000.0),
    ("min_blob_area", 0),
    ("opening_radius", 0),
])
def test_non_positive_fields_are_rejected(field_name, value):
    with pytest.raises(ValidationError, match=field_name):
        validate_config(PipelineConfig(**{field_name: value}))


def test_thermal_factor_below_one_and_bad_cues_are_rejected():
    with pytest.raises(ValidationError, match="thermal_bandwidth_factor"):
        validate_config(PipelineConfig(thermal_bandwidth_factor=0.5))
    with pytest.raises(ValidationError, match="cues"):
        validate_config(PipelineConfig(cues=("chroma", "sonar")))
    with pytest.raises(ValidationError, match="cues"):
        validate_config(PipelineConfig(cues=()))


def test_warmup_defaults_to_window():
    assert PipelineConfig(window_n=30).effective_warmup == 30
    assert PipelineConfig(window_n=30, warmup_frames=0).effective_warmup == 0


# --- FrameStack / ObservationVector ---

def test_frame_planes_must_share_size():
    rgb = np.zeros((480, 640, 3), dtype=np.uint8)
    with pytest.raises(FrameMismatchError, match="depth"):
        FrameStack(rgb=rgb, depth=np.zeros((240, 320), dtype=np.uint16), thermal=np.zeros((480, 640), np.uint8))
    with pytest.raises(FrameMismatchError, match="thermal"):
        FrameStack(rgb=rgb, depth=np.zeros((480, 640), dtype=np.uint16), thermal=np.zeros((240, 320), np.uint8))


def test_thermal_bit_depth_follows_dtype(make_frame):
    assert make_frame().thermal_bit_depth == 8
    assert make_frame(thermal_dtype=np.uint16).thermal_bit_depth == 16


def test_observation_ado_flag_must_match_depth():
    with pytest.raises(ValidationError):
        ObservationVector(r=0.2, g=0.2, depth=None, thermal=0.1, ado=False)
    with pytest.raises(ValidationError):
        ObservationVector(r=0.2, g=0.2, depth=0.5, thermal=0.1, ado=True)
    with pytest.raises(ValidationError):
        ObservationVector(r=0.7, g=0.7, depth=0.5, thermal=0.1)
    obs = ObservationVector(r=0.2, g=0.3, depth=None, thermal=0.4, ado=True)
    assert obs.as_array().tolist() == [0.2, 0.3, 0.0, 0.4]


# --- PixelModel ---

def _obs(value, ado=False):
    return ObservationVector(r=0.1, g=0.1, depth=None if ado else value, thermal=value, ado=ado)


def test_pixel_model_counts_and_eviction():
    model = PixelModel(3)
    model.append(_obs(0.1))
    assert model.count == 1, "empty model + obs should hold one sample"
    for value in (0.2, 0.3, 0.4):
        model.append(_obs(value))
    assert model.count == 3
    assert model.samples()[:, 3].tolist() == [0.2, 0.3, 0.4], "oldest sample should be evicted"


def test_pixel_model_keeps_last_n_in_order(rng):
    capacity = 7
    for extra in (0, 1, 5, 13):
        model = PixelModel(capacity)
        reference = deque(maxlen=capacity)
        for _ in range(capacity + extra):
            value = float(rng.random())
            ado = bool(rng.random() < 0.3)
            model.append(_obs(value, ado))
            reference.append((value, ado))
        assert model.count == capacity
        assert model.samples()[:, 3].tolist() == [value for value, _ in reference]
        assert model.ado_flags().tolist() == [ado for _, ado in reference]
        assert model.ado_count == sum(ado for _, ado in reference)


def test_ado_count_drains_after_valid_observations():
    model = PixelModel(5)
    for _ in range(5):
        model.append(_obs(0.5, ado=True))
    assert model.ado_count == 5
    for _ in range(5):
        model.append(_obs(0.5))
    assert model.ado_count == 0
    assert 0 <= model.ado_count <= model.count <= model.capacity


def test_pixel_model_observations_round_trip():
    model = PixelModel(4)
    originals = [_obs(0.25), _obs(0.5, ado=True), _obs(0.75)]
    for obs in originals:
        model.append(obs)
    assert model.observations() == originals


# --- Bandwidths, masks, ROIs ---

def test_bandwidth_floor_check():
    BandwidthVector(0.01, 0.01, 0.02, 0.08).check_floor(0.01)
    with pytest.raises(ValidationError, match="sigma_g"):
        BandwidthVector(0.01, 0.001, 0.02, 0.08).check_floor(0.005)


def test_mask_helpers():
    mask = ForegroundMask.empty(5, 4)
    assert (mask.width, mask.height, mask.foreground_count) == (5, 4, 0)
    bits = np.zeros((4, 5), dtype=bool)
    bits[1, 2] = True
    assert ForegroundMask(bits).foreground_fraction == pytest.approx(1 / 20)
    assert ForegroundMask(bits) == ForegroundMask(bits.copy())
    assert ForegroundMask(bits) != mask


def test_roi_record_round_trip_and_invariants():
    roi = RegionOfInterest(x_min=10, y_min=10, x_max=21, y_max=21, area=144, blob_id=3)
    record = roi.to_record()
    assert set(record) == {"blob_id", "x_min", "y_min", "x_max", "y_max", "area"}
    assert RegionOfInterest.from_record(record) == roi
    assert (roi.width, roi.height, roi.box_area) == (12, 12, 144)
    with pytest.raises(ValidationError):
        RegionOfInterest(x_min=5, y_min=0, x_max=4, y_max=0, area=1)
    with pytest.raises(ValidationError):
        RegionOfInterest.from_record({"x_min": 0})
