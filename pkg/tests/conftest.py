import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from foodplay.synthgen import SynthSpec, generate_dataset  # noqa: E402


@pytest.fixture(scope="session")
def tiny_dataset():
    """3 categories x 5 samples with 16-pixel images."""
    return generate_dataset(SynthSpec(3, 5, seed=3, image_size=16))


@pytest.fixture(scope="session")
def small_dataset():
    """6 categories x 10 samples with 16-pixel images."""
    return generate_dataset(SynthSpec(6, 10, seed=11, image_size=16))
