"""Swarm optimization with prompt-valued velocities and chat-model updates."""

from .backend import (
    BackendUnavailable,
    ChatBackend,
    ChatMessage,
    HttpBackend,
    MetaPrompt,
    MockBackend,
    SamplingParams,
    ScriptRule,
    default_params,
    validate_meta_prompt,
)
from .swarm import (
    AdapterInitFailure,
    Candidate,
    ConstraintViolation,
    EvaluationError,
    ParseFailure,
    Particle,
    ParticleEvent,
    ProbeFailure,
    ProblemAdapter,
    RunTrace,
    SwarmConfig,
    VelocityPrompt,
    acquire_position,
    cost_model,
    run,
    substream,
    substream_seed,
    update_bests,
)

__all__ = [
    "AdapterInitFailure",
    "BackendUnavailable",
    "Candidate",
    "ChatBackend",
    "ChatMessage",
    "ConstraintViolation",
    "EvaluationError",
    "HttpBackend",
    "MetaPrompt",
    "MockBackend",
    "ParseFailure",
    "Particle",
    "ParticleEvent",
    "ProbeFailure",
    "ProblemAdapter",
    "RunTrace",
    "SamplingParams",
    "ScriptRule",
    "SwarmConfig",
    "VelocityPrompt",
    "acquire_position",
    "cost_model",
    "default_params",
    "run",
    "substream",
    "substream_seed",
    "update_bests",
    "validate_meta_prompt",
]

__version__ = "0.1.0"
