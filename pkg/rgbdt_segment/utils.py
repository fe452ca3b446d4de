# --- rgbdt_segment/utils.py ---
import json
import logging
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .models import ForegroundMask, RegionOfInterest, SequenceIOError, ValidationError

logger = logging.getLogger(__name__)

# Pillow writes binary PGM (P5) through its PPM encoder
MASK_FORMATS = {"png": ("PNG", ".png"), "pgm": ("PPM", ".pgm")}
OVERLAY_COLOUR = (255, 255, 0)


def mask_suffix(mask_format: str) -> str:
    """File suffix for a mask format name; unknown formats raise ValidationError."""
    if mask_format not in MASK_FORMATS:
        raise ValidationError(f"mask format must be one of {', '.join(MASK_FORMATS)}, got {mask_format!r}")
    return MASK_FORMATS[mask_format][1]


def write_mask(mask: ForegroundMask, path, mask_format: str = "png") -> Path:
    """Writes mask as an 8-bit single-channel image: 0 background, 255 foreground."""
    mask_suffix(mask_format)  # Validates the format name
    pil_format = MASK_FORMATS[mask_format][0]
    path = Path(path)
    image = Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8))
    try:
        image.save(path, format=pil_format)
    except OSError as e:
        logger.error(f"Failed to write mask {path}: {e}")
        raise SequenceIOError(f"Could not write mask {path}: {e}") from e
    return path


def read_mask(path) -> ForegroundMask:
    """Reads a mask written by write_mask (any non-zero pixel above mid-grey is foreground)."""
    path = Path(path)
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L"))
    except FileNotFoundError as e:
        raise SequenceIOError(f"Mask file not found: {path}") from e
    except (UnidentifiedImageError, OSError) as e:
        raise SequenceIOError(f"Could not decode mask {path}: {e}") from e
    return ForegroundMask(pixels > 127)


def roi_record(rois: Iterable[RegionOfInterest], frame_index: int) -> dict:
    """One rois.jsonl line as a dict."""
    return {"frame_index": int(frame_index), "rois": [roi.to_record() for roi in rois]}


def write_rois(rois: Iterable[RegionOfInterest], frame_index: int, stream: IO[str]) -> None:
    """Appends one JSON line {frame_index, rois: [...]} for the frame, even when rois is empty."""
    try:
        stream.write(json.dumps(roi_record(rois, frame_index)) + "\n")
    except OSError as e:
        logger.error(f"Failed to write ROI record for frame {frame_index}: {e}")
        raise SequenceIOError(f"Could not write ROI record for frame {frame_index}: {e}") from e


def read_rois(stream: IO[str]) -> Iterator[tuple[int, list[RegionOfInterest]]]:
    """Yields (frame_index, rois) for every line written by write_rois."""
    for line_number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            rois = [RegionOfInterest.from_record(item) for item in record["rois"]]
            yield int(record["frame_index"]), rois
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ValidationError(f"Malformed ROI record on line {line_number}: {e}") from e


def draw_overlay(rgb: np.ndarray, rois: Iterable[RegionOfInterest], path) -> Path:
    """Saves the RGB frame with every ROI outlined."""
    path = Path(path)
    image = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8))
    draw = ImageDraw.Draw(image)
    # Outline only, so the pixels inside stay visible
    for roi in rois:
        draw.rectangle((roi.x_min, roi.y_min, roi.x_max, roi.y_max), outline=OVERLAY_COLOUR)
    try:
        image.save(path, format="PNG")
    except OSError as e:
        raise SequenceIOError(f"Could not write overlay {path}: {e}") from e
    return path
