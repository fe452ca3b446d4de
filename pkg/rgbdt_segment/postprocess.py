# --- rgbdt_segment/postprocess.py ---
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .models import ForegroundMask, PipelineConfig, RegionOfInterest, ValidationError

logger = logging.getLogger(__name__)

# 8-connectivity
NEIGHBOURHOOD = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class StructuringElement:
    """Square structuring element of side 2*radius + 1."""
    radius: int = 1
    shape: str = "square"

    def __post_init__(self):
        if not isinstance(self.radius, (int, np.integer)) or self.radius < 1:
            raise ValidationError(f"structuring element radius must be an integer >= 1, got {self.radius!r}")
        if self.shape != "square":
            raise ValidationError(f"unsupported structuring element shape: {self.shape}")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def footprint(self) -> np.ndarray:
        return np.ones((self.side, self.side), dtype=bool)


@dataclass(frozen=True)
class Blob:
    """One 8-connected foreground component."""
    label: int
    area: int
    x_min: int
    y_min: int
    x_max: int
    y_max: int


def open_mask(mask: ForegroundMask, se: StructuringElement) -> ForegroundMask:
    """Morphological opening (erosion then dilation); pixels outside the frame are background."""
    # Nothing to open
    if not mask.bits.any():
        return ForegroundMask(mask.bits.copy())
    opened = ndimage.binary_opening(mask.bits, structure=se.footprint(), border_value=0)
    return ForegroundMask(opened)


def connected_components(mask: ForegroundMask) -> list[Blob]:
    """8-connected labelling; labels are 1..k in raster order of each blob's first pixel."""
    labels, count = ndimage.label(mask.bits, structure=NEIGHBOURHOOD)
    if count == 0:
        return []
    # Pixel count per label; index 0 is background
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    blobs = []
    for label, window in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = window
        # Slices are half-open, boxes are inclusive
        blobs.append(Blob(
            label=label, area=int(areas[label]),
            x_min=cols.start, y_min=rows.start, x_max=cols.stop - 1, y_max=rows.stop - 1,
        ))
    return blobs


def label_image(mask: ForegroundMask) -> np.ndarray:
    """Label array matching connected_components (0 = background)."""
    labels, _ = ndimage.label(mask.bits, structure=NEIGHBOURHOOD)
    return labels


def extract_rois(blobs: list[Blob], min_blob_area: int) -> list[RegionOfInterest]:
    """Bounding boxes of blobs with area >= min_blob_area, ordered by y_min, x_min, then larger area."""
    rois = [
        RegionOfInterest(x_min=b.x_min, y_min=b.y_min, x_max=b.x_max, y_max=b.y_max, area=b.area, blob_id=b.label)
        for b in blobs if b.area >= min_blob_area
    ]
    # Area descending, then blob id, breaks ties between boxes with the same corner
    rois.sort(key=lambda roi: (roi.y_min, roi.x_min, -roi.area, roi.blob_id))
    return rois


def segment_regions(mask: ForegroundMask, config: PipelineConfig) -> tuple[ForegroundMask, list[RegionOfInterest]]:
    """Opening, labelling and area filtering with the config's radius and min area."""
    opened = open_mask(mask, StructuringElement(radius=config.opening_radius))
    blobs = connected_components(opened)
    rois = extract_rois(blobs, config.min_blob_area)
    logger.debug(f"{mask.foreground_count} raw -> {opened.foreground_count} opened pixels, "
                 f"{len(blobs)} blobs, {len(rois)} ROIs")
    return opened, rois
