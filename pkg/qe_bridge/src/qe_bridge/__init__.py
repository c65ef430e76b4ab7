"""Batch scoring service for translation quality metrics."""

from .metrics import CharFModel, ScoringModel, load_model
from .schema import ScoreItem, ScoreRequest, ScoreResponse
from .service import create_app

__all__ = [
    "CharFModel",
    "ScoreItem",
    "ScoreRequest",
    "ScoreResponse",
    "ScoringModel",
    "create_app",
    "load_model",
]
