"""Request and response bodies of the backend wire protocol."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class GenerateRequest(BaseModel):
    prompt: str = Field(min_length=1)
    max_tokens: int = Field(default=256, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)
    seed: Optional[int] = None


class GenerateResponse(BaseModel):
    text: str


class ScoreRequest(BaseModel):
    statement: str = Field(min_length=1)


class ScoreResponse(BaseModel):
    score: float = Field(ge=0.0, le=1.0)


class EmbedRequest(BaseModel):
    text: str = Field(min_length=1)


class EmbedResponse(BaseModel):
    vector: list[float]
