# --- rgbdt_segment/commands.py ---

import json
import logging
import sys

import click

from . import pipeline
from .config import Config, load_pipeline_config
from .decorators import exit_codes
from .evaluation import PRESETS, box_recall, preset_params, score_sequence, synth_sequence, write_scores_csv, write_sequence
from .models import SequenceIOError
from .pipeline import load_manifest
from .utils import MASK_FORMATS

logger = logging.getLogger(__name__)


# --- run ---

@click.command("run")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="KEY=VALUE file with PipelineConfig fields.")
@click.option("--input", "input_dir", type=click.Path(file_okay=False), required=True,
              help="Sequence root with rgb/, depth/ and thermal/.")
@click.option("--output", "output_dir", type=click.Path(file_okay=False), required=True)
@click.option("--mask-format", type=click.Choice(sorted(MASK_FORMATS)), default=Config.MASK_FORMAT, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=Config.THREADS, show_default=True)
@click.option("--overlays", is_flag=True, help="Also write RGB frames with ROI boxes drawn.")
# Overrides for config file values
@click.option("--window-n", type=int)
@click.option("--threshold", "foreground_threshold", type=float)
@click.option("--sigma-floor", type=float)
@click.option("--thermal-factor", "thermal_bandwidth_factor", type=float)
@click.option("--min-blob-area", type=int)
@click.option("--opening-radius", type=int)
@click.option("--depth-max", type=float)
@click.option("--warmup-frames", type=int)
@click.option("--cues", type=str, help="Comma-separated subset of chroma,depth,thermal.")
@exit_codes
def run_command(config_path, input_dir, output_dir, mask_format, threads, overlays, **overrides):
    """Segment a sequence and write masks, ROI records and a run report."""
    # File values first, then any flags given on the command line
    config = load_pipeline_config(config_path, overrides)
    manifest = load_manifest(input_dir)
    report = pipeline.run(config, manifest, output_dir, mask_format=mask_format,
                          threads=threads, overlays=overlays)
    # One-line summary on stdout; the full report is in report.json
    click.echo(json.dumps({
        "frame_count": report.frame_count,
        "frames_written": report.frames_written,
        "mean_foreground_fraction": report.mean_foreground_fraction,
    }))


# --- synth ---

@click.command("synth")
@click.option("--preset", type=click.Choice(PRESETS), required=True)
@click.option("--output", "output_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--window-n", type=click.IntRange(min=2), default=100, show_default=True,
              help="Window the halting preset stays still for twice.")
@exit_codes
def synth_command(preset, output_dir, seed, window_n):
    """Write a synthetic RGBDT sequence with ground truth."""
    params = preset_params(preset, window_n=window_n)
    manifest = write_sequence(synth_sequence(params, seed=seed), output_dir)
    click.echo(f"Wrote {manifest.frame_count} frames to {output_dir}")


# --- eval ---

@click.command("eval")
@click.option("--pred", "pred_dir", type=click.Path(file_okay=False), required=True,
              help="Run output directory (or a directory of mask images).")
@click.option("--gt", "gt_dir", type=click.Path(file_okay=False), required=True,
              help="Synthetic sequence root (or a directory of ground-truth masks).")
@click.option("--iou-threshold", type=click.FloatRange(0, 1, min_open=True), default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="CSV destination; stdout when omitted.")
@exit_codes
def eval_command(pred_dir, gt_dir, iou_threshold, out_path):
    """Score predicted masks against ground truth as per-frame CSV."""
    scores = score_sequence(pred_dir, gt_dir, iou_threshold=iou_threshold)
    # CSV goes to stdout unless --out is given
    if out_path is None:
        write_scores_csv(scores, sys.stdout)
    else:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as stream:
                write_scores_csv(scores, stream)
        except OSError as e:
            raise SequenceIOError(f"Could not write scores to {out_path}: {e}") from e
    recall = box_recall(scores)
    # Only sequences with box files get a recall line
    if recall is not None:
        logger.info(f"Box recall at IoU >= {iou_threshold}: {recall:.4f}")
    logger.info(f"Scored {len(scores)} frames")


COMMANDS = (run_command, synth_command, eval_command)
