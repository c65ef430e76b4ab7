"""Wire types for the scoring endpoint."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Metric = Literal["ref_based", "qe", "context_ref_based"]


class ScoreItem(BaseModel):
    """One translation to score; ref and context are metric-dependent."""

    model_config = ConfigDict(extra="forbid")

    src: str
    mt: str
    ref: str | None = None
    context: list[tuple[str, str]] | None = None


class ScoreRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    metric: Metric
    items: list[ScoreItem] = Field(min_length=1)

    # ref is required exactly when the metric uses one; a qe item carrying a
    # ref is a caller bug, not something to silently ignore.
    @model_validator(mode="after")
    def _refs_match_metric(self) -> ScoreRequest:
        for i, item in enumerate(self.items):
            if self.metric == "qe":
                if item.ref is not None:
                    raise ValueError(f"items[{i}]: metric 'qe' is reference-free; remove 'ref'")
            elif item.ref is None:
                raise ValueError(f"items[{i}]: metric {self.metric!r} requires 'ref'")
        return self


# protected_namespaces is cleared so the wire field can be named model_id.
class ScoreResponse(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    scores: list[float]
    model_id: str


class HealthResponse(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    ok: bool
    model_id: str
    uptime: float
