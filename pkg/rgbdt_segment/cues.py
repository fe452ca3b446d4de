# --- rgbdt_segment/cues.py ---
"""Raw sensor planes to normalised observation channels."""

import numpy as np

from .models import FrameStack, ObservationVector, PipelineConfig, ValidationError

NEUTRAL_CHROMA = 1.0 / 3.0
THERMAL_BIT_DEPTHS = (8, 16)


def to_chromaticity(rgb) -> tuple[float, float]:
    """Returns (r, g) = (R/S, G/S) with S = R+G+B; black maps to (1/3, 1/3)."""
    red, green, blue = (int(c) for c in rgb)
    total = red + green + blue
    if total == 0:
        return NEUTRAL_CHROMA, NEUTRAL_CHROMA
    return red / total, green / total


def normalize_depth(raw, depth_max: float) -> float | None:
    """Maps raw depth to [0, 1]; the sensor sentinel 0 becomes None (absent)."""
    if depth_max <= 0:
        raise ValidationError(f"depth_max must be positive, got {depth_max}")
    if raw == 0:
        return None
    return min(float(raw) / depth_max, 1.0)


def normalize_thermal(raw, bit_depth: int) -> float:
    """Scales raw thermal to [0, 1] by the full scale of its bit depth; out-of-range raw is rejected."""
    if bit_depth not in THERMAL_BIT_DEPTHS:
        raise ValidationError(f"thermal bit_depth must be 8 or 16, got {bit_depth}")
    full_scale = (1 << bit_depth) - 1  # 255 or 65535
    if raw < 0 or raw > full_scale:
        raise ValidationError(f"thermal value {raw} outside [0, {full_scale}] for {bit_depth}-bit data")
    return float(raw) / full_scale


def build_observation(frame: FrameStack, x: int, y: int, config: PipelineConfig) -> ObservationVector:
    """Composes the three transforms for pixel (x, y) of frame."""
    if not (0 <= x < frame.width and 0 <= y < frame.height):
        raise ValidationError(f"pixel ({x}, {y}) outside {frame.width}x{frame.height} frame {frame.frame_index}")
    r, g = to_chromaticity(frame.rgb[y, x])
    depth = normalize_depth(int(frame.depth[y, x]), config.depth_max)
    thermal = normalize_thermal(int(frame.thermal[y, x]), frame.thermal_bit_depth)
    return ObservationVector(r=r, g=g, depth=depth, thermal=thermal, ado=depth is None)


def chromaticity_planes(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised to_chromaticity over an (H, W, 3) uint8 array; black pixels get (1/3, 1/3)."""
    # Widen so R+G+B cannot overflow uint8
    channels = rgb.astype(np.int64)
    total = channels.sum(axis=-1)
    dark = total == 0
    # Divide by 1 where the sum is zero, then overwrite those pixels
    safe_total = np.where(dark, 1, total).astype(np.float64)
    r = np.where(dark, NEUTRAL_CHROMA, channels[..., 0] / safe_total)
    g = np.where(dark, NEUTRAL_CHROMA, channels[..., 1] / safe_total)
    return r, g


def frame_observations(frame: FrameStack, config: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised build_observation for a whole frame.

    Returns (values, ado): values is float64 (H, W, 4) in channel order
    r, g, depth, thermal with absent depth stored as 0; ado is bool (H, W).
    """
    values = np.empty((frame.height, frame.width, 4), dtype=np.float64)
    values[..., 0], values[..., 1] = chromaticity_planes(frame.rgb)

    # Sentinel 0 is absent depth, stored as 0 with the ADO flag set
    raw_depth = frame.depth.astype(np.float64)
    ado = frame.depth == 0
    values[..., 2] = np.where(ado, 0.0, np.minimum(raw_depth / config.depth_max, 1.0))

    # Thermal is scaled by the full range of its bit depth
    full_scale = (1 << frame.thermal_bit_depth) - 1
    values[..., 3] = frame.thermal.astype(np.float64) / full_scale
    return values, ado
