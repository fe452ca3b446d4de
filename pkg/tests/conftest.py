# tests/conftest.py
import numpy as np
import pytest

from rgbdt_segment.evaluation import synth_sequence, preset_params, write_sequence
from rgbdt_segment.models import FrameStack, PipelineConfig


@pytest.fixture
def rng():
    """Seeded generator so every randomised test is reproducible."""
    return np.random.default_rng(20240611)


@pytest.fixture
def default_config():
    return PipelineConfig()


@pytest.fixture
def make_frame():
    """Builds a constant FrameStack; individual pixels can be edited on the returned arrays."""
    def _make(width=4, height=3, rgb=(100, 100, 100), depth=4000, thermal=128, index=0,
              thermal_dtype=np.uint8):
        return FrameStack(
            rgb=np.tile(np.array(rgb, dtype=np.uint8), (height, width, 1)),
            depth=np.full((height, width), depth, dtype=np.uint16),
            thermal=np.full((height, width), thermal, dtype=thermal_dtype),
            frame_index=index,
        )
    return _make


@pytest.fixture(scope="session")
def moving_square_root(tmp_path_factory):
    """The moving-square preset written to disk once for the session."""
    root = tmp_path_factory.mktemp("moving_square")
    sequence = synth_sequence(preset_params("moving-square"), seed=7)
    write_sequence(sequence, root)
    print(f"\nWrote moving-square sequence to {root}")
    return root
