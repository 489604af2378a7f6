"""Adaptive multi-agent runtime with community routing and per-user learning."""

from .messages import (
    DecodeError,
    Message,
    MessageError,
    Performative,
    ProtocolVersionError,
    RequestId,
    RequestIdCounter,
    decode_message,
    encode_message,
)
from .learning import LearningConfig, PolicyEntry, PolicyStore, Resolution
from .rewards import Reward, RewardConfig, UserEvent, interpret_feedback
from .runtime import AgentSpec, LivelockError, Runtime, SpawnError, TraceEvent
from .whitebox import WhiteBoxAgent, WhiteBoxConfig
from .mapdemo import Demo, MapState, Place, build_demo_topology

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "Demo",
    "DecodeError",
    "LearningConfig",
    "LivelockError",
    "MapState",
    "Message",
    "MessageError",
    "Performative",
    "Place",
    "PolicyEntry",
    "PolicyStore",
    "ProtocolVersionError",
    "RequestId",
    "RequestIdCounter",
    "Resolution",
    "Reward",
    "RewardConfig",
    "Runtime",
    "SpawnError",
    "TraceEvent",
    "UserEvent",
    "WhiteBoxAgent",
    "WhiteBoxConfig",
    "build_demo_topology",
    "decode_message",
    "encode_message",
    "interpret_feedback",
]
