# --- rgbdt_segment/pipeline.py ---
"""Sequence loading and the end-to-end segmentation run."""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from itertools import islice
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from .models import FrameStack, PipelineConfig, SequenceIOError, ValidationError, validate_config
from .postprocess import segment_regions
from .scene import SceneModel, estimate_bandwidths, floor_bandwidths
from .utils import draw_overlay, mask_suffix, write_mask, write_rois

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.json"
ROIS_NAME = "rois.jsonl"
MASKS_DIR = "masks"
OVERLAYS_DIR = "overlays"
FRAME_NAME = "{index:06d}"
MODALITIES = ("rgb", "depth", "thermal")


# --- Manifest ---

@dataclass(frozen=True)
class SequenceManifest:
    """Where the frames of one sequence live and how they are encoded."""
    root: Path
    frame_count: int
    rgb_dir: str = "rgb"
    depth_dir: str = "depth"
    thermal_dir: str = "thermal"
    pattern: str = FRAME_NAME + ".png"
    depth_bit_depth: int = 16
    thermal_bit_depth: int = 8

    def frame_path(self, modality: str, index: int) -> Path:
        """Path of one modality plane of frame `index`."""
        directory = {"rgb": self.rgb_dir, "depth": self.depth_dir, "thermal": self.thermal_dir}[modality]
        return Path(self.root) / directory / self.pattern.format(index=index)

    def validate(self) -> "SequenceManifest":
        """Checks the fields and that every frame index resolves to a file per modality."""
        # Encoding fields
        if self.frame_count < 0:
            raise ValidationError(f"frame_count must be >= 0, got {self.frame_count}")
        if self.depth_bit_depth not in (8, 16):
            raise ValidationError(f"depth_bit_depth must be 8 or 16, got {self.depth_bit_depth}")
        if self.thermal_bit_depth not in (8, 16):
            raise ValidationError(f"thermal_bit_depth must be 8 or 16, got {self.thermal_bit_depth}")
        # Every plane of every frame must exist before streaming starts
        for index in range(self.frame_count):
            for modality in MODALITIES:
                path = self.frame_path(modality, index)
                if not path.is_file():
                    raise SequenceIOError(f"Frame {index}: missing {modality} file {path}")
        return self

    def to_record(self) -> dict:
        """JSON form for manifest.json; the root is wherever the file lives."""
        record = asdict(self)
        record.pop("root")
        return record


def write_manifest(manifest: SequenceManifest) -> Path:
    """Writes manifest.json into the sequence root and returns its path."""
    path = Path(manifest.root) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(manifest.to_record(), stream, indent=2)
    return path


def load_manifest(root) -> SequenceManifest:
    """Reads root/manifest.json, or counts consecutive rgb frames when there is none."""
    root = Path(root)
    if not root.is_dir():
        raise SequenceIOError(f"Sequence directory not found: {root}")
    path = root / MANIFEST_NAME
    # Explicit manifest wins
    if path.is_file():
        try:
            with open(path, encoding="utf-8") as stream:
                record = json.load(stream)
            return SequenceManifest(root=root, **record)
        except (json.JSONDecodeError, TypeError) as e:
            raise ValidationError(f"Invalid manifest {path}: {e}") from e

    # Otherwise count rgb frames 0, 1, 2, ... until the first gap
    layout = SequenceManifest(root=root, frame_count=0)
    count = 0
    while layout.frame_path("rgb", count).is_file():
        count += 1
    logger.info(f"No {MANIFEST_NAME} in {root}; discovered {count} frames")
    return SequenceManifest(root=root, frame_count=count)


# --- Frame decoding ---

def _open_plane(path: Path, index: int, modality: str) -> Image.Image:
    """Opens and fully decodes one image file, naming the frame on failure."""
    if not path.is_file():
        raise SequenceIOError(f"Frame {index}: missing {modality} file {path}")
    try:
        image = Image.open(path)
        image.load()  # Decode now so corrupt files fail here
        return image
    except (UnidentifiedImageError, OSError) as e:
        raise SequenceIOError(f"Frame {index}: cannot decode {modality} file {path}: {e}") from e


def _single_channel(image: Image.Image, bit_depth: int, index: int, modality: str) -> np.ndarray:
    """Checks a depth or thermal plane is single-channel and within its bit depth."""
    if image.mode not in ("L", "I", "I;16", "I;16B", "I;16L"):
        raise SequenceIOError(f"Frame {index}: {modality} image must be single-channel, got mode {image.mode}")
    pixels = np.asarray(image)
    # Mode "I" decodes to int32, so check the range before narrowing
    limit = (1 << bit_depth) - 1
    if pixels.size and (pixels.min() < 0 or pixels.max() > limit):
        raise ValidationError(f"Frame {index}: {modality} values exceed {bit_depth}-bit range")
    return pixels.astype(np.uint8 if bit_depth == 8 else np.uint16)


def read_frame(manifest: SequenceManifest, index: int) -> FrameStack:
    """Decodes the three planes of frame `index` into a FrameStack."""
    rgb_image = _open_plane(manifest.frame_path("rgb", index), index, "rgb")
    if rgb_image.mode != "RGB":
        raise SequenceIOError(f"Frame {index}: rgb image must be 8-bit RGB, got mode {rgb_image.mode}")
    rgb = np.asarray(rgb_image, dtype=np.uint8)
    depth = _single_channel(_open_plane(manifest.frame_path("depth", index), index, "depth"),
                            manifest.depth_bit_depth, index, "depth")
    thermal = _single_channel(_open_plane(manifest.frame_path("thermal", index), index, "thermal"),
                              manifest.thermal_bit_depth, index, "thermal")
    # FrameStack raises FrameMismatchError on size disagreement
    return FrameStack(rgb=rgb, depth=depth, thermal=thermal, frame_index=index)


def load_sequence(manifest: SequenceManifest) -> Iterator[FrameStack]:
    """Yields the frames of manifest in index order, one at a time."""
    manifest.validate()
    for index in range(manifest.frame_count):
        yield read_frame(manifest, index)


# --- Run ---

@dataclass
class RunReport:
    """Summary written to report.json; partial is set when a run stops early."""
    frame_count: int = 0
    frames_written: int = 0
    mean_foreground_fraction: float = 0.0
    warmup_frames: int = 0
    frame_seconds: list[float] = field(default_factory=list)
    bandwidths: dict | None = None
    partial: bool = False
    error: str | None = None

    def to_record(self) -> dict:
        return asdict(self)


def bandwidth_prefix_length(config: PipelineConfig, frame_count: int) -> int:
    """Frames used for bandwidth estimation: min(window_n, frame_count // 4), at least 2 when available."""
    prefix = min(config.window_n, frame_count // 4)
    return min(max(prefix, 2), frame_count)


def _write_report(report: RunReport, output_dir: Path) -> None:
    """Writes report.json (also used for partial reports)."""
    with open(output_dir / REPORT_NAME, "w", encoding="utf-8") as stream:
        json.dump(report.to_record(), stream, indent=2)


def run(config: PipelineConfig, manifest: SequenceManifest, output_dir, mask_format: str = "png",
        threads: int = 1, overlays: bool = False) -> RunReport:
    """Estimates bandwidths on a prefix, then streams every frame through model and post-processing.

    Writes masks/<index>, rois.jsonl and report.json under output_dir. An empty
    sequence returns an empty report and writes nothing.
    """
    # Validate everything before touching the output directory
    validate_config(config)
    suffix = mask_suffix(mask_format)
    manifest.validate()

    report = RunReport(frame_count=manifest.frame_count, warmup_frames=config.effective_warmup)
    if manifest.frame_count == 0:
        logger.info(f"Sequence {manifest.root} is empty; nothing to do")
        return report

    # Output layout
    output_dir = Path(output_dir)
    masks_dir = output_dir / MASKS_DIR
    overlays_dir = output_dir / OVERLAYS_DIR
    try:
        masks_dir.mkdir(parents=True, exist_ok=True)
        if overlays:
            overlays_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SequenceIOError(f"Cannot create output directory {output_dir}: {e}") from e

    logger.info(f"Run starting: {manifest.frame_count} frames from {manifest.root} -> {output_dir}")

    fractions = []
    scene = None
    try:
        # Phase 1: bandwidths from a prefix of the sequence
        prefix = bandwidth_prefix_length(config, manifest.frame_count)
        if prefix >= 2:
            history = list(islice(load_sequence(manifest), prefix))
            bandwidths = estimate_bandwidths(history, config)
            del history  # Free the prefix frames before streaming
        else:
            logger.warning(f"Only {manifest.frame_count} frame(s); using floor bandwidths")
            bandwidths = floor_bandwidths(config)
        report.bandwidths = bandwidths.to_record()

        # Phase 2: classify, update, post-process and write every frame
        with open(output_dir / ROIS_NAME, "w", encoding="utf-8") as roi_stream:
            for frame in load_sequence(manifest):
                started = time.perf_counter()
                # Model size comes from the first decoded frame
                if scene is None:
                    scene = SceneModel(frame.width, frame.height, bandwidths, config, threads=threads)
                raw = scene.process_frame(frame)
                opened, rois = segment_regions(raw, config)

                # Outputs for this frame
                name = FRAME_NAME.format(index=frame.frame_index)
                write_mask(opened, masks_dir / f"{name}{suffix}", mask_format)
                write_rois(rois, frame.frame_index, roi_stream)
                if overlays:
                    draw_overlay(frame.rgb, rois, overlays_dir / f"{name}.png")

                report.frame_seconds.append(time.perf_counter() - started)
                report.frames_written += 1
                # Warm-up frames are written but not averaged
                if frame.frame_index >= config.effective_warmup:
                    fractions.append(opened.foreground_fraction)
    except Exception as e:
        # Flag whatever was written so far, then re-raise
        report.partial = True
        report.error = str(e)
        logger.error(f"Run stopped after {report.frames_written} frames: {e}")
        _write_report(report, output_dir)
        raise
    finally:
        if scene is not None:
            scene.close()

    report.mean_foreground_fraction = float(np.mean(fractions)) if fractions else 0.0
    _write_report(report, output_dir)
    logger.info(f"Run finished: {report.frames_written} frames, "
                f"mean foreground fraction {report.mean_foreground_fraction:.5f}")
    return report
