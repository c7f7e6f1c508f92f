"""cesdet: adaptive detection statistics for complex elliptically
symmetric data, misspecified-ML asymptotics, and CFAR Monte Carlo
verification."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
from .detectors import DetectorOutput, amf, kelly, mglrt, wald  # noqa: F401
from .linalg import Dataset, NotPositiveDefiniteError  # noqa: F401
from .models import CesModel, SignalScenario, sample_ces  # noqa: F401
