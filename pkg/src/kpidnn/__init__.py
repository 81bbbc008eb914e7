"""KPI anomaly detection with a small feedforward network on joint windows."""
from .core import ConfusionMatrix, Dataset, Label, TimeSeries, WindowSample
from .windowing import WindowSpec, extract, normalize, sliding_extract

__all__ = [
    "ConfusionMatrix", "Dataset", "Label", "TimeSeries", "WindowSample",
    "WindowSpec", "extract", "normalize", "sliding_extract",
]
__version__ = "0.1.0"
