import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lfsal.tensor import set_default_dtype


@pytest.fixture(autouse=True)
def float64_mode():
    """Oracle and gradient work runs in 64-bit; tests opt into float32 locally."""
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)
