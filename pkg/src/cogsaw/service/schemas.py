"""Request, response, and wire-message shapes for the round service."""

from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from ..model import EdgeLabel, LabeledEdge

ROUND_ID_PATTERN = r"^[A-Za-z0-9_-]{1,64}$"
TOKEN_PATTERN = r"^[A-Za-z0-9_.:-]{1,64}$"


class EdgeModel(BaseModel):
    label: Literal["LR", "TB"]
    first: int = Field(ge=0)
    second: int = Field(ge=0)

    def to_edge(self) -> LabeledEdge:
        return LabeledEdge(EdgeLabel(self.label), self.first, self.second)

    @classmethod
    def from_edge(cls, e: LabeledEdge) -> "EdgeModel":
        return cls(label=e.label.value, first=e.first, second=e.second)


class CreateRoundRequest(BaseModel):
    rows: Optional[int] = Field(default=None, ge=1, le=32)
    cols: Optional[int] = Field(default=None, ge=1, le=32)
    grid: Optional[List[List[int]]] = None   # explicit layout, admin use
    group_size: Optional[int] = Field(default=None, ge=1, le=64)
    phi: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    epsilon: Optional[float] = Field(default=None, ge=0.0)
    stagnation_period: Optional[float] = Field(default=None, gt=0.0)
    seed: Optional[str] = Field(default=None, max_length=64)
    round_id: Optional[str] = Field(default=None, pattern=ROUND_ID_PATTERN)

    @model_validator(mode="after")
    def _dims_or_grid(self) -> "CreateRoundRequest":
        if self.grid is None and (self.rows is None or self.cols is None):
            raise ValueError("provide rows and cols, or an explicit grid")
        return self


class CreateRoundResponse(BaseModel):
    round_id: str
    rows: int
    cols: int
    piece_count: int
    edge_total: int
    group_size: int
    manifest_url: str
    ws_url: str


class RoundStatusResponse(BaseModel):
    round_id: str
    rows: int
    cols: int
    state: Literal["open", "solved"]
    players: List[str]
    active_players: List[str]
    seq: int
    winner: Optional[str]
    start: float
    solved_at: Optional[float]
    group_size: int


class MetricsResponse(BaseModel):
    winner: str
    completion_seconds: float
    feedback_ratio: float
    feedback_precision: Optional[float]
    progress_samples: List[List[float]]
    entry_count: int


class SweepResponse(BaseModel):
    dispatched: int
    solved: bool


# client -> server wire messages; "type" selects the shape

class JoinMsg(BaseModel):
    type: Literal["join"]
    round_id: str = Field(alias="roundId", pattern=ROUND_ID_PATTERN)
    token: str = Field(pattern=TOKEN_PATTERN)
    model_config = {"populate_by_name": True}


class ConnectMsg(BaseModel):
    type: Literal["connect"]
    edge: EdgeModel


class DisconnectMsg(BaseModel):
    type: Literal["disconnect"]
    piece: int = Field(ge=0)


class AcceptHintMsg(BaseModel):
    type: Literal["accept_hint"]
    edges: List[EdgeModel] = Field(min_length=1)


class HeartbeatMsg(BaseModel):
    type: Literal["heartbeat"]


CLIENT_MESSAGES = {
    "join": JoinMsg,
    "connect": ConnectMsg,
    "disconnect": DisconnectMsg,
    "accept_hint": AcceptHintMsg,
    "heartbeat": HeartbeatMsg,
}
