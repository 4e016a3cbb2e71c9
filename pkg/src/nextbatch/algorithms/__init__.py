"""Built-in incremental recommenders used to exercise the harness end to end."""

from .base import Model, ModelContext, available_models, create_model
from .item_knn import ItemKNNIncremental
from .popularity import DecayPopularity, RecentPopularity

__all__ = [
    "Model",
    "ModelContext",
    "available_models",
    "create_model",
    "RecentPopularity",
    "DecayPopularity",
    "ItemKNNIncremental",
]
