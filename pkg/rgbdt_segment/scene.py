# --- rgbdt_segment/scene.py ---
"""Per-pixel kernel density scene model.

Every pixel keeps the last n observations. The density of a new observation
is a product of per-channel Normal kernels averaged over the buffered samples
(diagonal bandwidth). Samples without a depth reading (ADO) form their own
branch: an ADO observation is scored against the ADO samples on r, g and
thermal only, a valid observation against the valid samples on all four
channels. Both branches share the 1/n weight, so the probability mass splits
as (ado_count/n, valid_count/n).
"""
import enum
import logging
import math
from multiprocessing.dummy import Pool as ThreadPool
from typing import Sequence

import numpy as np

from .cues import frame_observations
from .models import (
    CUE_CHANNELS, CUES, BandwidthVector, FrameMismatchError, FrameStack, ForegroundMask,
    ObservationVector, PipelineConfig, PixelModel, ValidationError, channel_mask, validate_config,
)

logger = logging.getLogger(__name__)

DEPTH = CUE_CHANNELS["depth"][0]
# Median absolute difference of two N(0, s^2) draws is 0.68 * sqrt(2) * s
MAD_TO_SIGMA = 1.0 / (0.68 * math.sqrt(2.0))
# Samples held in one tile's temporaries (rows * width * n)
TILE_SAMPLE_BUDGET = 1 << 20


class PixelClass(enum.Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


def _kernel_norm(sigmas: np.ndarray) -> float:
    """Product of the Normal peak heights 1/sqrt(2*pi*sigma^2)."""
    return float(np.prod(1.0 / np.sqrt(2.0 * math.pi * sigmas ** 2)))


def _branch_channels(active: np.ndarray, ado_branch: bool) -> np.ndarray:
    if not ado_branch:
        return active
    restricted = active.copy()
    restricted[DEPTH] = False
    return restricted


def kde_density(obs: ObservationVector, model: PixelModel, bw: BandwidthVector,
                cues: Sequence[str] = CUES) -> float:
    """Kernel density of obs under model's samples.

    Valid observations are scored against the valid samples over all enabled
    channels, ADO observations against the ADO samples without the depth
    channel. The sum is divided by model.count in both branches. With the
    depth cue disabled every sample counts and the ADO flag is ignored.
    """
    if model.count == 0:
        raise ValidationError("kde_density needs a model with at least one sample")

    active = channel_mask(cues)
    samples = model.samples()
    flags = model.ado_flags()
    if active[DEPTH]:
        channels = _branch_channels(active, obs.ado)
        subset = samples[flags] if obs.ado else samples[~flags]
    else:
        channels = active
        subset = samples

    if len(subset) == 0:
        return 0.0

    sigmas = bw.as_array()[channels]
    z = (obs.as_array()[channels] - subset[:, channels]) / sigmas
    kernels = _kernel_norm(sigmas) * np.exp(-0.5 * np.sum(z * z, axis=1))
    # fsum keeps the result independent of sample order
    return math.fsum(kernels.tolist()) / model.count


def classify(obs: ObservationVector, model: PixelModel, bw: BandwidthVector, threshold: float,
             cues: Sequence[str] = CUES) -> PixelClass:
    """Foreground iff the density is strictly below threshold; empty models are Background."""
    if model.count == 0:
        return PixelClass.BACKGROUND
    density = kde_density(obs, model, bw, cues)
    return PixelClass.FOREGROUND if density < threshold else PixelClass.BACKGROUND


def update(model: PixelModel, obs: ObservationVector) -> None:
    """Blind update: obs always enters the window."""
    model.append(obs)


def estimate_bandwidths(history: Sequence[FrameStack], config: PipelineConfig) -> BandwidthVector:
    """Per-channel sigma from the median absolute frame-to-frame difference.

    Depth pairs where either side is ADO are skipped. Each sigma is floored at
    config.sigma_floor, then the thermal one is multiplied by
    config.thermal_bandwidth_factor.
    """
    if len(history) < 2:
        raise ValidationError(f"estimate_bandwidths needs at least 2 frames, got {len(history)}")

    differences = [[] for _ in range(4)]
    prev_values, prev_ado = frame_observations(history[0], config)
    for frame in history[1:]:
        if (frame.width, frame.height) != (history[0].width, history[0].height):
            raise FrameMismatchError(f"Frame {frame.frame_index} size differs from frame {history[0].frame_index}")
        values, ado = frame_observations(frame, config)
        delta = np.abs(values - prev_values)
        for channel in (0, 1, 3):
            differences[channel].append(delta[..., channel].ravel())
        both_valid = ~(ado | prev_ado)
        differences[DEPTH].append(delta[..., DEPTH][both_valid])
        prev_values, prev_ado = values, ado

    sigmas = []
    for channel, chunks in enumerate(differences):
        pooled = np.concatenate(chunks)
        median = float(np.median(pooled)) if pooled.size else 0.0
        sigmas.append(max(median * MAD_TO_SIGMA, config.sigma_floor))
    sigmas[3] *= config.thermal_bandwidth_factor

    bandwidths = BandwidthVector(*sigmas)
    logger.info(f"Estimated bandwidths from {len(history)} frames: {bandwidths.to_record()}")
    return bandwidths


def floor_bandwidths(config: PipelineConfig) -> BandwidthVector:
    """Bandwidths of a perfectly static history: every sigma at the floor."""
    floor = config.sigma_floor
    return BandwidthVector(floor, floor, floor, floor * config.thermal_bandwidth_factor)


class SceneModel:
    """One sample window per pixel, stored as a single (H, W, n, 4) ring buffer.

    All pixels are updated together, so the fill count and write slot are
    shared; ADO flags are per pixel and per slot.
    """

    def __init__(self, width: int, height: int, bandwidths: BandwidthVector, config: PipelineConfig,
                 threads: int = 1):
        validate_config(config)
        bandwidths.check_floor(config.sigma_floor)
        if width < 1 or height < 1:
            raise ValidationError(f"scene size must be positive, got {width}x{height}")
        self.width = width
        self.height = height
        self.bandwidths = bandwidths
        self.config = config
        self.capacity = config.window_n
        self.count = 0
        self._head = 0
        # Samples are stored as float32 and widened to float64 per tile
        self._values = np.zeros((height, width, self.capacity, 4), dtype=np.float32)
        self._ado = np.zeros((height, width, self.capacity), dtype=bool)

        # Channel sets and kernel normalisers of the two branches
        self._active = config.channel_mask()
        sigmas = bandwidths.as_array()
        self._sigmas = sigmas
        self._valid_channels = np.flatnonzero(self._active)
        self._ado_channels = np.flatnonzero(_branch_channels(self._active, True))
        self._valid_norm = _kernel_norm(sigmas[self._valid_channels])
        self._ado_norm = _kernel_norm(sigmas[self._ado_channels])

        # Rows per tile so one tile holds about TILE_SAMPLE_BUDGET samples
        self.tile_rows = max(1, TILE_SAMPLE_BUDGET // (width * self.capacity))
        self.threads = max(1, int(threads))
        self._pool = ThreadPool(self.threads) if self.threads > 1 else None
        logger.debug(f"SceneModel {width}x{height}, n={self.capacity}, tile_rows={self.tile_rows}, threads={self.threads}")

    # --- lifecycle ---

    def close(self):
        """Shuts down the tile thread pool, if any."""
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- per-pixel views ---

    def _slot_order(self) -> np.ndarray:
        """Ring slots from oldest to newest sample."""
        if self.count < self.capacity:
            return np.arange(self.count)
        return (np.arange(self.capacity) + self._head) % self.capacity

    def pixel_model(self, x: int, y: int) -> PixelModel:
        """Snapshot of pixel (x, y) as a standalone PixelModel, oldest sample first."""
        order = self._slot_order()
        values = self._values[y, x, order].astype(np.float64)
        return PixelModel.from_arrays(self.capacity, values, self._ado[y, x, order])

    # --- density ---

    def _tile_density(self, rows: slice, values: np.ndarray, ado: np.ndarray) -> np.ndarray:
        """Densities for one band of rows; filled slots only, in any order."""
        samples = self._values[rows, :, :self.count].astype(np.float64)
        # Standardised distance per channel, shape (rows, W, count, 4)
        z = (values[rows, :, None, :] - samples) / self._sigmas
        squared = z * z
        # Without the depth cue every sample counts on the enabled channels
        if not self._active[DEPTH]:
            total = squared[..., self._valid_channels].sum(axis=-1)
            return (self._valid_norm * np.exp(-0.5 * total)).sum(axis=-1) / self.count

        flags = self._ado[rows, :, :self.count]
        # Shared part of both branches (r, g, thermal), then depth for valid samples
        partial = squared[..., self._ado_channels].sum(axis=-1)
        valid_kernels = self._valid_norm * np.exp(-0.5 * (partial + squared[..., DEPTH]))
        ado_kernels = self._ado_norm * np.exp(-0.5 * partial)
        # Each observation only sees samples of its own kind
        valid_sum = np.where(flags, 0.0, valid_kernels).sum(axis=-1)
        ado_sum = np.where(flags, ado_kernels, 0.0).sum(axis=-1)
        # Both branches share the 1/count weight
        return np.where(ado[rows], ado_sum, valid_sum) / self.count

    def _tiles(self) -> list[slice]:
        """Row bands of at most tile_rows rows covering the frame."""
        return [slice(start, min(start + self.tile_rows, self.height))
                for start in range(0, self.height, self.tile_rows)]

    def grid_density(self, values: np.ndarray, ado: np.ndarray) -> np.ndarray:
        """Density of every pixel's observation under its own window, shape (H, W)."""
        if self.count == 0:
            raise ValidationError("grid_density needs at least one buffered frame")
        tiles = self._tiles()
        # Tiles only read the grid, so they can run concurrently
        if self._pool is not None and len(tiles) > 1:
            parts = self._pool.map(lambda rows: self._tile_density(rows, values, ado), tiles)
        else:
            parts = [self._tile_density(rows, values, ado) for rows in tiles]
        return np.concatenate(parts, axis=0)

    def classify_frame(self, values: np.ndarray, ado: np.ndarray) -> np.ndarray:
        """Foreground bits for a frame's observations; an empty model gives all Background."""
        if self.count == 0:
            return np.zeros((self.height, self.width), dtype=bool)
        # Strict inequality: density equal to the threshold is Background
        return self.grid_density(values, ado) < self.config.foreground_threshold

    # --- update ---

    def update(self, values: np.ndarray, ado: np.ndarray) -> None:
        """Blind update of every pixel's window with the frame's observations."""
        # The oldest slot is overwritten once the window is full
        self._values[:, :, self._head] = values
        self._ado[:, :, self._head] = ado
        self._head = (self._head + 1) % self.capacity
        if self.count < self.capacity:
            self.count += 1

    def process_frame(self, frame: FrameStack) -> ForegroundMask:
        """Classifies every pixel against its current window, then inserts the frame."""
        if (frame.width, frame.height) != (self.width, self.height):
            raise FrameMismatchError(
                f"Frame {frame.frame_index} is {frame.width}x{frame.height}, scene is {self.width}x{self.height}")
        values, ado = frame_observations(frame, self.config)
        # Classify first so a frame never scores against itself
        bits = self.classify_frame(values, ado)
        self.update(values, ado)
        logger.debug(f"Frame {frame.frame_index}: {int(bits.sum())} raw foreground pixels")
        return ForegroundMask(bits)
