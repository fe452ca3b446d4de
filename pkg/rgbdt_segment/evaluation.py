# --- rgbdt_segment/evaluation.py ---
"""Synthetic RGBDT sequences with exact ground truth, and mask / ROI scoring."""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np
from PIL import Image

from .models import FrameMismatchError, FrameStack, ForegroundMask, RegionOfInterest, SequenceIOError, ValidationError
from .pipeline import MASKS_DIR, ROIS_NAME, FRAME_NAME, SequenceManifest, write_manifest
from .utils import read_mask, read_rois, write_mask, write_rois

logger = logging.getLogger(__name__)

GT_DIR = "gt"
GT_BOXES_NAME = "gt_boxes.jsonl"


# --- Synthetic sequences ---

@dataclass(frozen=True)
class SynthParams:
    """Scene description for synth_sequence.

    Channel values are raw (8-bit RGB, depth in sensor units, thermal in
    thermal_bit_depth units). Noise std values are fractions of full scale
    (depth full scale is depth_max). Each trajectory waypoint (frame, x, y)
    places the object's top-left corner in that frame; frames without a
    waypoint have no object.
    """
    width: int = 64
    height: int = 64
    frame_count: int = 300
    background_rgb: tuple[int, int, int] = (90, 110, 130)
    background_depth: int = 5000
    background_thermal: int = 80
    noise_rgb: float = 2 / 255
    noise_depth: float = 2 / 255
    noise_thermal: float = 2 / 255
    object_size: int = 12
    object_rgb: tuple[int, int, int] = (200, 60, 40)
    object_depth: int = 2000
    object_thermal: int = 200
    trajectory: tuple[tuple[int, int, int], ...] = ()
    ado_speckle_rate: float = 0.0
    depth_max: float = 8000.0
    thermal_bit_depth: int = 8

    def validate(self) -> "SynthParams":
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"frame size must be positive, got {self.width}x{self.height}")
        if self.frame_count < 0:
            raise ValidationError(f"frame_count must be >= 0, got {self.frame_count}")
        if self.object_size < 1:
            raise ValidationError(f"object_size must be >= 1, got {self.object_size}")
        if not 0.0 <= self.ado_speckle_rate <= 1.0:
            raise ValidationError(f"ado_speckle_rate must be in [0, 1], got {self.ado_speckle_rate}")
        if min(self.noise_rgb, self.noise_depth, self.noise_thermal) < 0:
            raise ValidationError("noise std values must be non-negative")
        if self.thermal_bit_depth not in (8, 16):
            raise ValidationError(f"thermal_bit_depth must be 8 or 16, got {self.thermal_bit_depth}")
        seen = set()
        for frame, x, y in self.trajectory:
            if not 0 <= frame < self.frame_count:
                raise ValidationError(f"trajectory frame {frame} outside [0, {self.frame_count})")
            if frame in seen:
                raise ValidationError(f"trajectory lists frame {frame} twice")
            seen.add(frame)
            if x < 0 or y < 0 or x + self.object_size > self.width or y + self.object_size > self.height:
                raise ValidationError(f"object at ({x}, {y}) in frame {frame} does not fit the frame")
        return self

    def waypoints(self) -> dict[int, tuple[int, int]]:
        return {frame: (x, y) for frame, x, y in self.trajectory}


@dataclass
class SynthSequence:
    frames: list[FrameStack] = field(default_factory=list)
    gt_masks: list[ForegroundMask] = field(default_factory=list)
    gt_boxes: list[list[RegionOfInterest]] = field(default_factory=list)
    thermal_bit_depth: int = 8


def linear_trajectory(first_frame: int, frames: int, start: tuple[int, int],
                      end: tuple[int, int]) -> tuple[tuple[int, int, int], ...]:
    """Waypoints moving the object from start to end over `frames` frames."""
    if frames < 1:
        return ()
    steps = max(frames - 1, 1)
    return tuple(
        (first_frame + i,
         int(round(start[0] + (end[0] - start[0]) * i / steps)),
         int(round(start[1] + (end[1] - start[1]) * i / steps)))
        for i in range(frames)
    )


def tiled_trajectory(first_frame: int, frames: int, width: int, height: int, size: int,
                     margin: int = 2) -> tuple[tuple[int, int, int], ...]:
    """Waypoints jumping row-major through non-overlapping size x size slots, cycling."""
    xs = list(range(margin, width - margin - size + 1, size))
    ys = list(range(margin, height - margin - size + 1, size))
    slots = [(x, y) for y in ys for x in xs]
    if not slots:
        raise ValidationError(f"a {size}px object does not fit a {width}x{height} frame")
    return tuple((first_frame + i, *slots[i % len(slots)]) for i in range(frames))


def _noisy(rng: np.random.Generator, base, std: float, shape) -> np.ndarray:
    """base plus Gaussian noise of the given std, as float64 before rounding."""
    return np.asarray(base, dtype=np.float64) + rng.normal(0.0, std, size=shape)


def synth_sequence(params: SynthParams, seed: int = 0) -> SynthSequence:
    """Deterministic (given seed) sequence with ground-truth masks and boxes."""
    params.validate()
    rng = np.random.default_rng(seed)
    # Noise scales in raw sensor units
    shape = (params.height, params.width)
    thermal_max = (1 << params.thermal_bit_depth) - 1
    thermal_dtype = np.uint8 if params.thermal_bit_depth == 8 else np.uint16
    rgb_std = params.noise_rgb * 255
    depth_std = params.noise_depth * params.depth_max
    thermal_std = params.noise_thermal * thermal_max
    size = params.object_size
    waypoints = params.waypoints()
    # One generator drives every frame, so a seed fixes the whole sequence

    sequence = SynthSequence(thermal_bit_depth=params.thermal_bit_depth)
    for index in range(params.frame_count):
        # Static background with sensor noise
        rgb = _noisy(rng, params.background_rgb, rgb_std, shape + (3,))
        depth = _noisy(rng, params.background_depth, depth_std, shape)
        thermal = _noisy(rng, params.background_thermal, thermal_std, shape)
        gt = np.zeros(shape, dtype=bool)
        boxes = []

        if index in waypoints:
            x, y = waypoints[index]
            # The object overwrites every plane inside its square
            region = (slice(y, y + size), slice(x, x + size))
            rgb[region] = _noisy(rng, params.object_rgb, rgb_std, (size, size, 3))
            depth[region] = _noisy(rng, params.object_depth, depth_std, (size, size))
            thermal[region] = _noisy(rng, params.object_thermal, thermal_std, (size, size))
            gt[region] = True
            boxes.append(RegionOfInterest(x_min=x, y_min=y, x_max=x + size - 1, y_max=y + size - 1,
                                          area=size * size, blob_id=1))

        # valid readings never collapse onto the ADO sentinel
        depth = np.clip(np.rint(depth), 1, 65535)
        # Random dropouts read as absent depth
        speckle = rng.random(shape) < params.ado_speckle_rate
        depth[speckle] = 0

        # Quantise to the sensor dtypes
        sequence.frames.append(FrameStack(
            rgb=np.clip(np.rint(rgb), 0, 255).astype(np.uint8),
            depth=depth.astype(np.uint16),
            thermal=np.clip(np.rint(thermal), 0, thermal_max).astype(thermal_dtype),
            frame_index=index,
        ))
        sequence.gt_masks.append(ForegroundMask(gt))
        sequence.gt_boxes.append(boxes)
    return sequence


def write_sequence(sequence: SynthSequence, root) -> SequenceManifest:
    """Writes frames, manifest.json, gt/ masks and gt_boxes.jsonl under root."""
    root = Path(root)
    manifest = SequenceManifest(root=root, frame_count=len(sequence.frames),
                                thermal_bit_depth=sequence.thermal_bit_depth)
    try:
        for directory in (manifest.rgb_dir, manifest.depth_dir, manifest.thermal_dir, GT_DIR):
            (root / directory).mkdir(parents=True, exist_ok=True)
        with open(root / GT_BOXES_NAME, "w", encoding="utf-8") as box_stream:
            for frame, gt_mask, boxes in zip(sequence.frames, sequence.gt_masks, sequence.gt_boxes):
                index = frame.frame_index
                Image.fromarray(frame.rgb).save(manifest.frame_path("rgb", index), format="PNG")
                Image.fromarray(frame.depth).save(manifest.frame_path("depth", index), format="PNG")
                Image.fromarray(frame.thermal).save(manifest.frame_path("thermal", index), format="PNG")
                write_mask(gt_mask, root / GT_DIR / f"{FRAME_NAME.format(index=index)}.png")
                write_rois(boxes, index, box_stream)
        write_manifest(manifest)
    except OSError as e:
        logger.error(f"Failed to write synthetic sequence to {root}: {e}")
        raise SequenceIOError(f"Could not write synthetic sequence to {root}: {e}") from e
    logger.info(f"Wrote {manifest.frame_count} synthetic frames to {root}")
    return manifest


PRESETS = ("static", "moving-square", "halting-square")


def preset_params(name: str, window_n: int = 100) -> SynthParams:
    """Named scenes: a static room, a square jumping between slots, and one that stops."""
    base = SynthParams()
    if name == "static":
        return SynthParams(frame_count=200, ado_speckle_rate=0.01)
    if name == "moving-square":
        trajectory = tiled_trajectory(200, 100, base.width, base.height, base.object_size)
        return SynthParams(frame_count=300, trajectory=trajectory, ado_speckle_rate=0.01)
    if name == "halting-square":
        moving = tiled_trajectory(200, 30, base.width, base.height, base.object_size)
        _, x, y = moving[-1]
        halted = tuple((200 + 30 + i, x, y) for i in range(2 * window_n))
        return SynthParams(frame_count=200 + 30 + 2 * window_n, trajectory=moving + halted,
                           ado_speckle_rate=0.01)
    raise ValidationError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")


# --- Scoring ---

def mask_metrics(pred: ForegroundMask, gt: ForegroundMask) -> tuple[float, float, float]:
    """(precision, recall, F-measure); two empty masks score 1, one empty mask scores 0."""
    if pred.bits.shape != gt.bits.shape:
        raise FrameMismatchError(f"mask sizes differ: {pred.bits.shape} vs {gt.bits.shape}")
    p, g = pred.bits, gt.bits
    # Nothing to find and nothing found is a perfect score
    if not p.any() and not g.any():
        return 1.0, 1.0, 1.0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f_measure = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f_measure


def box_iou(a: RegionOfInterest, b: RegionOfInterest) -> float:
    """Intersection over union of two inclusive pixel boxes."""
    width = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    height = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (a.box_area + b.box_area - intersection)


def roi_match(pred: Sequence[RegionOfInterest], gt_boxes: Sequence[RegionOfInterest],
              iou_threshold: float = 0.5) -> list[bool]:
    """Greedy matching by descending IoU; returns one hit flag per gt box."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    candidates = []
    for gi, gt_box in enumerate(gt_boxes):
        for pi, pred_box in enumerate(pred):
            iou = box_iou(pred_box, gt_box)
            if iou >= iou_threshold:
                candidates.append((-iou, gi, pi))
    candidates.sort()  # Highest IoU first, ties by gt then pred index

    # Each gt box and each predicted box is used at most once
    hits = [False] * len(gt_boxes)
    used = set()
    for _, gi, pi in candidates:
        if hits[gi] or pi in used:
            continue
        hits[gi] = True
        used.add(pi)
    return hits


@dataclass(frozen=True)
class FrameScore:
    frame_index: int
    precision: float
    recall: float
    f_measure: float
    box_hits: tuple[bool, ...] | None = None


def _mask_files(directory: Path) -> dict[int, Path]:
    """Mask files named by frame index; other files are ignored."""
    files = {}
    for path in sorted(directory.iterdir()):
        if path.suffix in (".png", ".pgm") and path.stem.isdigit():
            files[int(path.stem)] = path
    return files


def _load_boxes(path: Path) -> dict[int, list[RegionOfInterest]]:
    with open(path, encoding="utf-8") as stream:
        return dict(read_rois(stream))


def score_sequence(pred_dir, gt_dir, iou_threshold: float = 0.5) -> list[FrameScore]:
    """Scores every ground-truth frame against the run output in pred_dir."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    # Accept either a run or sequence root or the mask directory itself
    pred_masks_dir = pred_dir / MASKS_DIR if (pred_dir / MASKS_DIR).is_dir() else pred_dir
    gt_masks_dir = gt_dir / GT_DIR if (gt_dir / GT_DIR).is_dir() else gt_dir
    for directory in (pred_masks_dir, gt_masks_dir):
        if not directory.is_dir():
            raise SequenceIOError(f"Mask directory not found: {directory}")

    pred_files = _mask_files(pred_masks_dir)
    gt_files = _mask_files(gt_masks_dir)
    # Boxes are scored only when both sides have them
    pred_box_file, gt_box_file = pred_dir / ROIS_NAME, gt_dir / GT_BOXES_NAME
    with_boxes = pred_box_file.is_file() and gt_box_file.is_file()
    pred_boxes = _load_boxes(pred_box_file) if with_boxes else {}
    gt_boxes = _load_boxes(gt_box_file) if with_boxes else {}

    scores = []
    for index, gt_path in gt_files.items():
        # Every ground-truth frame needs a prediction
        if index not in pred_files:
            raise SequenceIOError(f"Frame {index}: no predicted mask in {pred_masks_dir}")
        precision, recall, f_measure = mask_metrics(read_mask(pred_files[index]), read_mask(gt_path))
        hits = None  # No box data
        if with_boxes:
            hits = tuple(roi_match(pred_boxes.get(index, []), gt_boxes.get(index, []), iou_threshold))
        scores.append(FrameScore(index, precision, recall, f_measure, hits))
    return scores


def box_recall(scores: Sequence[FrameScore]) -> float | None:
    """Fraction of ground-truth boxes hit over all frames; None without box data or boxes."""
    flags = [hit for score in scores if score.box_hits is not None for hit in score.box_hits]
    return sum(flags) / len(flags) if flags else None


def write_scores_csv(scores: Sequence[FrameScore], stream: IO[str]) -> None:
    """frame_index,precision,recall,f_measure rows plus a final `mean` row."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["frame_index", "precision", "recall", "f_measure"])
    for score in scores:
        writer.writerow([score.frame_index, f"{score.precision:.6f}", f"{score.recall:.6f}", f"{score.f_measure:.6f}"])
    if scores:
        means = [float(np.mean([getattr(s, name) for s in scores])) for name in ("precision", "recall", "f_measure")]
        writer.writerow(["mean"] + [f"{value:.6f}" for value in means])
