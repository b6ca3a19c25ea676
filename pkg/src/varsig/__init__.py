"""varsig: multi-instance signal retrieval against known measurement forward models.

The package couples three simulated measurement systems (attosecond streaking,
coded-aperture video compressive sensing, in-line Fresnel holography) with a
recurrent conditional variational generative model that keeps the measurement
operator inside the training loop, plus deterministic-inversion and iterative
TV-MAP baselines for comparison.
"""

__version__ = "0.1.0"

from .core import (
    SystemId,
    SignalVec,
    MeasurementVec,
    DatasetRecord,
    ForwardModel,
    flatten,
    unflatten,
)

__all__ = [
    "SystemId",
    "SignalVec",
    "MeasurementVec",
    "DatasetRecord",
    "ForwardModel",
    "flatten",
    "unflatten",
    "__version__",
]
