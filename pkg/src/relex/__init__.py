"""Relation extraction experiment pipeline: ingest, prompt, retrieve, generate, score."""

__version__ = "0.1.0"

from relex.data import DatasetBundle, RelationInstance, RelationSchema
from relex.normalize import UNPARSEABLE, PredictionRecord
from relex.metrics import MetricsReport

__all__ = [
    "DatasetBundle",
    "RelationInstance",
    "RelationSchema",
    "PredictionRecord",
    "MetricsReport",
    "UNPARSEABLE",
    "__version__",
]
