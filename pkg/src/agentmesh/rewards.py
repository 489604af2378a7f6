"""Reward values, feedback interpretation, and credit-split arithmetic.

A reward is a signed value in [-1, 1] tagged with the request it concerns.
Each agent on the recorded dispatch path keeps a configurable share and
forwards the rest to the agent that handed it the request, so credit decays
geometrically along the path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .messages import RequestId


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class Reward:
    value: float
    request: RequestId
    user: str
    origin: str = "explicit-user"  # or "feedback-agent"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise RewardError("reward value must be finite")
        if not -1.0 <= self.value <= 1.0:
            raise RewardError(f"reward {self.value} outside [-1, 1]")


@dataclass(frozen=True)
class UserEvent:
    """One observed user behavior, pre-classified by the session driver."""

    kind: str  # "repeat-of-command" | "praise-remark" | "complaint-remark" | "pause" | "remark" | "other"
    text: str = ""
    seconds: float = 0.0
    request: RequestId | None = None
    user: str = ""


@dataclass
class RewardConfig:
    """Feedback magnitudes and the keep-share for propagation."""

    keep_share: float = 0.5
    repeat_value: float = -0.5
    praise_value: float = 1.0
    complaint_value: float = -1.0
    pause_value: float = 0.25
    pause_threshold: float = 5.0
    positive_phrases: tuple[str, ...] = ("thanks", "great", "good")
    negative_phrases: tuple[str, ...] = ("no", "wrong", "that's wrong", "bad")

    def __post_init__(self):
        if not 0.0 < self.keep_share <= 1.0:
            raise RewardError("keep_share must be in (0, 1]")


def classify_remark(text: str, config: RewardConfig) -> str:
    """Fixed-phrase sentiment: 'praise-remark', 'complaint-remark', or 'other'."""
    lowered = text.lower().strip()
    if any(p in lowered for p in config.negative_phrases):
        return "complaint-remark"
    if any(p in lowered for p in config.positive_phrases):
        return "praise-remark"
    return "other"


def interpret_feedback(event: UserEvent, config: RewardConfig | None = None) -> Reward | None:
    """Translate one user behavior into a reward, or None when it carries none.

    Raw remarks (kind "remark") are classified against the fixed phrase lists
    first; pauses reward tacit acceptance only past the threshold.
    """
    config = config or RewardConfig()
    kind = event.kind
    if kind == "remark":
        kind = classify_remark(event.text, config)
    if event.request is None:
        return None
    if kind == "repeat-of-command":
        value = config.repeat_value
    elif kind == "praise-remark":
        value = config.praise_value
    elif kind == "complaint-remark":
        value = config.complaint_value
    elif kind == "pause":
        if event.seconds < config.pause_threshold:
            return None
        value = config.pause_value
    else:
        return None
    return Reward(value=value, request=event.request, user=event.user, origin="feedback-agent")


def split_reward(value: float, keep_share: float) -> tuple[float, float]:
    """(applied locally, forwarded to the requester)."""
    return keep_share * value, (1.0 - keep_share) * value


def clamp_confidence(value: float) -> float:
    return min(1.0, max(0.0, value))


@dataclass
class AddressConfidence:
    """Per-community confidence accumulator; the last tie-break in routing."""

    values: dict[str, float] = field(default_factory=dict)
    initial: float = 0.5

    def get(self, community: str) -> float:
        return self.values.get(community, self.initial)

    def update(self, community: str, delta: float) -> None:
        self.values[community] = clamp_confidence(self.get(community) + delta)
