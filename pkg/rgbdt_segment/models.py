# --- rgbdt_segment/models.py ---
import math
from dataclasses import dataclass, field

import numpy as np

CHANNELS = ("r", "g", "depth", "thermal")
CUES = ("chroma", "depth", "thermal")
# Column indices of each cue inside a 4-channel observation array
CUE_CHANNELS = {"chroma": (0, 1), "depth": (2,), "thermal": (3,)}
CHROMA_TOLERANCE = 1e-9


def channel_mask(cues) -> np.ndarray:
    """Boolean mask over the 4 observation channels enabled by the named cues."""
    mask = np.zeros(len(CHANNELS), dtype=bool)
    for cue in cues:
        mask[list(CUE_CHANNELS[cue])] = True
    return mask


# --- Errors ---

class ValidationError(ValueError):
    """A value, parameter or config field violates an invariant."""


class FrameMismatchError(ValidationError):
    """Planes of one frame (or a frame and a model) disagree in size."""


class SequenceIOError(OSError):
    """A frame or output file is missing, unreadable or unwritable."""


# --- Frames and observations ---

@dataclass(frozen=True, eq=False)
class FrameStack:
    """One pixel-aligned RGB / Depth / Thermal frame.

    rgb is uint8 (H, W, 3); depth is raw sensor units (H, W) with 0 meaning no
    reading; thermal is uint8 or uint16 (H, W).
    """
    rgb: np.ndarray
    depth: np.ndarray
    thermal: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise FrameMismatchError(f"Frame {self.frame_index}: rgb plane must be (H, W, 3), got {self.rgb.shape}")
        size = self.rgb.shape[:2]
        if self.depth.shape != size:
            raise FrameMismatchError(
                f"Frame {self.frame_index}: depth plane {self.depth.shape[::-1]} does not match rgb {size[::-1]}")
        if self.thermal.shape != size:
            raise FrameMismatchError(
                f"Frame {self.frame_index}: thermal plane {self.thermal.shape[::-1]} does not match rgb {size[::-1]}")
        if self.frame_index < 0:
            raise ValidationError(f"frame_index must be >= 0, got {self.frame_index}")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def thermal_bit_depth(self) -> int:
        return 8 if self.thermal.dtype.itemsize == 1 else 16


@dataclass(frozen=True)
class ObservationVector:
    """One pixel's fused (r, g, depth, thermal) measurement.

    depth is None exactly when the sensor returned no reading (ado=True).
    """
    r: float
    g: float
    depth: float | None
    thermal: float
    ado: bool = False

    def __post_init__(self):
        if self.ado != (self.depth is None):
            raise ValidationError("ado must be set iff depth is absent")
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.g <= 1.0):
            raise ValidationError(f"chromaticity out of [0, 1]: r={self.r}, g={self.g}")
        if self.r + self.g > 1.0 + CHROMA_TOLERANCE:
            raise ValidationError(f"r + g exceeds 1: {self.r + self.g}")

    def as_array(self) -> np.ndarray:
        """Returns [r, g, depth, thermal] with an absent depth stored as 0."""
        return np.array([self.r, self.g, 0.0 if self.ado else self.depth, self.thermal], dtype=np.float64)


# --- Per-pixel sample window ---

class PixelModel:
    """Ring buffer of the last `capacity` observations of one pixel."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValidationError(f"PixelModel capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._values = np.zeros((capacity, len(CHANNELS)), dtype=np.float64)
        self._ado = np.zeros(capacity, dtype=bool)
        self._head = 0  # next slot to write
        self.count = 0

    @property
    def ado_count(self) -> int:
        # unfilled slots are never flagged
        return int(self._ado.sum())

    def append(self, obs: ObservationVector) -> None:
        """Inserts obs, evicting the oldest sample when full."""
        self.append_raw(obs.as_array(), obs.ado)

    def append_raw(self, values: np.ndarray, ado: bool) -> None:
        """Inserts a raw [r, g, depth, thermal] row; absent depth is stored as 0."""
        self._values[self._head] = values
        if ado:
            self._values[self._head, 2] = 0.0
        self._ado[self._head] = ado
        self._head = (self._head + 1) % self.capacity  # Wraps onto the oldest slot
        if self.count < self.capacity:
            self.count += 1

    def _order(self) -> np.ndarray:
        # Until the buffer wraps, slot order is insertion order
        if self.count < self.capacity:
            return np.arange(self.count)
        return (np.arange(self.capacity) + self._head) % self.capacity

    def samples(self) -> np.ndarray:
        """Buffered samples, oldest first, shape (count, 4)."""
        return self._values[self._order()].copy()

    def ado_flags(self) -> np.ndarray:
        return self._ado[self._order()].copy()

    def observations(self) -> list[ObservationVector]:
        result = []
        for values, ado in zip(self.samples(), self.ado_flags()):
            result.append(ObservationVector(
                r=float(values[0]), g=float(values[1]),
                depth=None if ado else float(values[2]),
                thermal=float(values[3]), ado=bool(ado)))
        return result

    @classmethod
    def from_arrays(cls, capacity: int, values: np.ndarray, ado: np.ndarray) -> "PixelModel":
        """Builds a model holding `values` (oldest first); only the last `capacity` survive."""
        model = cls(capacity)
        for row, flag in zip(np.asarray(values, dtype=np.float64), np.asarray(ado, dtype=bool)):
            model.append_raw(row, bool(flag))
        return model

    def __len__(self):
        return self.count

    def __repr__(self):
        return f"PixelModel(capacity={self.capacity}, count={self.count}, ado_count={self.ado_count})"


# --- Bandwidths ---

@dataclass(frozen=True)
class BandwidthVector:
    """Per-channel kernel standard deviations (diagonal of H is sigma**2)."""
    sigma_r: float
    sigma_g: float
    sigma_depth: float
    sigma_thermal: float

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_r, self.sigma_g, self.sigma_depth, self.sigma_thermal], dtype=np.float64)

    def check_floor(self, sigma_min: float) -> "BandwidthVector":
        # `not >=` also rejects NaN
        for name, value in zip(CHANNELS, self.as_array()):
            if not value >= sigma_min:
                raise ValidationError(f"sigma_{name}={value} is below the floor {sigma_min}")
        return self

    @classmethod
    def uniform(cls, sigma: float) -> "BandwidthVector":
        return cls(sigma, sigma, sigma, sigma)

    def to_record(self) -> dict:
        return {f"sigma_{name}": float(value) for name, value in zip(CHANNELS, self.as_array())}


# --- Masks and regions ---

@dataclass(frozen=True, eq=False)
class ForegroundMask:
    """Binary per-pixel classification of one frame (True = foreground)."""
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {self.bits.shape}")
        # Frozen dataclass, so coerce through object.__setattr__
        if self.bits.dtype != bool:
            object.__setattr__(self, "bits", self.bits.astype(bool))

    @classmethod
    def empty(cls, width: int, height: int) -> "ForegroundMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def foreground_count(self) -> int:
        return int(self.bits.sum())

    @property
    def foreground_fraction(self) -> float:
        return self.foreground_count / self.bits.size if self.bits.size else 0.0

    def __eq__(self, other):
        if not isinstance(other, ForegroundMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))


ROI_FIELDS = ("blob_id", "x_min", "y_min", "x_max", "y_max", "area")


@dataclass(frozen=True)
class RegionOfInterest:
    """Tight bounding box (inclusive coordinates) of one foreground blob."""
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    area: int
    blob_id: int = 1

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"inverted ROI box: ({self.x_min},{self.y_min})-({self.x_max},{self.y_max})")
        if self.x_min < 0 or self.y_min < 0:
            raise ValidationError(f"ROI box starts outside the frame: ({self.x_min},{self.y_min})")
        if self.blob_id < 1:
            raise ValidationError(f"blob_id must be positive, got {self.blob_id}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def box_area(self) -> int:
        return self.width * self.height

    def to_record(self) -> dict:
        return {name: int(getattr(self, name)) for name in ROI_FIELDS}

    @classmethod
    def from_record(cls, record: dict) -> "RegionOfInterest":
        missing = [name for name in ROI_FIELDS if name not in record]
        if missing:
            raise ValidationError(f"ROI record missing fields: {', '.join(missing)}")
        return cls(**{name: int(record[name]) for name in ROI_FIELDS})


# --- Pipeline configuration ---

@dataclass(frozen=True)
class PipelineConfig:
    """Algorithm parameters. Defaults are engineering choices, see DESIGN.md."""
    window_n: int = 100
    foreground_threshold: float = 1e-4
    sigma_floor: float = 0.005
    thermal_bandwidth_factor: float = 8.0
    min_blob_area: int = 50
    opening_radius: int = 1
    depth_max: float = 8000.0
    warmup_frames: int | None = None
    cues: tuple[str, ...] = field(default=CUES)

    @property
    def effective_warmup(self) -> int:
        return self.window_n if self.warmup_frames is None else self.warmup_frames

    def channel_mask(self) -> np.ndarray:
        return channel_mask(self.cues)

    @property
    def uses_depth(self) -> bool:
        return "depth" in self.cues


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def validate_config(config: PipelineConfig) -> PipelineConfig:
    """Returns config unchanged iff every invariant holds; raises naming the first bad field."""
    if not isinstance(config.window_n, (int, np.integer)) or config.window_n < 2:
        raise ValidationError(f"window_n ≥ 2 required, got {config.window_n!r}")

    # Numeric fields that must be finite and > 0
    positive = ("foreground_threshold", "sigma_floor", "thermal_bandwidth_factor",
                "min_blob_area", "opening_radius", "depth_max")
    for name in positive:
        value = getattr(config, name)
        if not _is_number(value) or not math.isfinite(value) or value <= 0:
            raise ValidationError(f"{name} must be a positive number, got {value!r}")

    if config.thermal_bandwidth_factor < 1:
        raise ValidationError(f"thermal_bandwidth_factor must be ≥ 1, got {config.thermal_bandwidth_factor}")
    for name in ("min_blob_area", "opening_radius"):
        if not isinstance(getattr(config, name), (int, np.integer)):
            raise ValidationError(f"{name} must be an integer, got {getattr(config, name)!r}")
    if config.warmup_frames is not None and (
            not isinstance(config.warmup_frames, (int, np.integer)) or config.warmup_frames < 0):
        raise ValidationError(f"warmup_frames must be a non-negative integer, got {config.warmup_frames!r}")

    # Cues
    if not config.cues:
        raise ValidationError("cues must name at least one of: " + ", ".join(CUES))
    unknown = [cue for cue in config.cues if cue not in CUES]
    if unknown:
        raise ValidationError(f"cues: unknown cue(s) {', '.join(unknown)}")
    return config
