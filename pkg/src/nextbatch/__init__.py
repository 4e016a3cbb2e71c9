"""Sliding-window evaluation harness for next-batch recommendation.

Releases interaction data in controlled phases across equal-width time
windows, collects top-k predictions per masked request, and reports hit
rate, NDCG, precision, and recall at user, window, macro, and micro levels.
"""

from .errors import HarnessError
from .interactions import DatasetDescriptor, Interaction, InteractionLog, ingest
from .metrics import MetricReport
from .protocol import EvaluationEngine, Phase, PredictionSubmission
from .splitting import EvaluationWindow, PredictionRequest, SplitConfig

__version__ = "1.0.0"

__all__ = [
    "DatasetDescriptor",
    "EvaluationEngine",
    "EvaluationWindow",
    "HarnessError",
    "Interaction",
    "InteractionLog",
    "MetricReport",
    "Phase",
    "PredictionRequest",
    "PredictionSubmission",
    "SplitConfig",
    "ingest",
    "__version__",
]
