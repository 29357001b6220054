"""Swarm engine: particles whose velocity is a prompt and whose position
updates come from a chat model.

The loop per iteration and particle: evaluate the current position, update
the personal best and the global best, construct the next velocity from the
personal/global bests, render the four-turn meta-prompt, query the backend,
then accept the reply, retry, or reinitialize the position randomly once the
retry budget is spent. The engine always minimizes unless configured
otherwise; adapters are expected to sign-normalize their objectives.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .backend import ChatBackend, ChatMessage, MetaPrompt, SamplingParams, validate_meta_prompt

DEFAULT_BOOTSTRAP_VELOCITY = "Generate a position randomly"


class CandidateRejected(Exception):
    """Base for structured validation failures of a model reply."""


class ParseFailure(CandidateRejected):
    """The reply text could not be decoded into a solution at all."""


class ConstraintViolation(CandidateRejected):
    """The reply decoded but the solution breaks a problem constraint."""


class ProbeFailure(CandidateRejected):
    """The solution decoded but failed its cheap pre-evaluation probe."""


class EvaluationError(Exception):
    """Scoring infrastructure failed; the candidate is dropped, not the run."""


class AdapterInitFailure(Exception):
    """The adapter could not produce a valid initial position within budget."""


@dataclass(frozen=True)
class Candidate:
    """One candidate solution: raw reply text, decoded form, objective score."""

    text: str
    decoded: Any
    score: float

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("candidate text must be non-empty")
        if self.decoded is not None and not math.isfinite(self.score):
            raise ValueError("decoded candidate must carry a finite score")


@dataclass(frozen=True)
class VelocityPrompt:
    """Instruction describing how the next position should be generated."""

    text: str


@dataclass
class Particle:
    id: int
    position: Candidate
    velocity: VelocityPrompt
    pbest: Candidate
    history: list[tuple[int, float]] = field(default_factory=list)
    # transient: prompt rendered for the current iteration's query
    pending_prompt: Optional[MetaPrompt] = None


@dataclass(frozen=True)
class SwarmConfig:
    num_particles: int
    max_iterations: int
    retry_limit: int = 3
    rng_seed: int = 0
    minimize: bool = True

    def __post_init__(self) -> None:
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")


@dataclass(frozen=True)
class ParticleEvent:
    particle: int
    kind: str  # accepted | retried | reinitialized | evaluation_error
    retries: int

    def to_dict(self) -> dict:
        return {"particle": self.particle, "kind": self.kind, "retries": self.retries}


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    gbest_score: float
    gbest_text: str
    events: tuple[ParticleEvent, ...]


@dataclass
class RunTrace:
    """Per-iteration record of the global best and per-particle outcomes."""

    per_iteration: list[IterationRecord] = field(default_factory=list)

    def gbest_scores(self) -> list[float]:
        return [rec.gbest_score for rec in self.per_iteration]

    def to_jsonl(self) -> str:
        lines = []
        for rec in self.per_iteration:
            lines.append(json.dumps({
                "iter": rec.iteration,
                "gbest_score": rec.gbest_score,
                "gbest_text": rec.gbest_text,
                "events": [e.to_dict() for e in rec.events],
            }))
        return "\n".join(lines) + ("\n" if lines else "")

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "RunTrace":
        trace = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            events = tuple(
                ParticleEvent(e["particle"], e["kind"], e["retries"]) for e in obj["events"]
            )
            trace.per_iteration.append(
                IterationRecord(obj["iter"], obj["gbest_score"], obj["gbest_text"], events)
            )
        return trace

    @classmethod
    def read_jsonl(cls, path) -> "RunTrace":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


class ProblemAdapter:
    """Contract a problem must implement to be searched by the swarm.

    ``parse_and_validate`` must never crash on arbitrary reply text: it either
    returns a decoded solution or raises a CandidateRejected subclass.
    """

    bootstrap_velocity: str = DEFAULT_BOOTSTRAP_VELOCITY

    def describe(self) -> str:
        """System-message text describing the optimization task."""
        raise NotImplementedError

    def initial_position(self, rng: random.Random) -> Candidate:
        raise NotImplementedError

    def construct_velocity(self, pbest: Candidate, gbest: Candidate) -> VelocityPrompt:
        raise NotImplementedError

    def parse_and_validate(self, text: str) -> Any:
        raise NotImplementedError

    def evaluate(self, decoded: Any) -> float:
        raise NotImplementedError

    def format_position(self, candidate: Candidate) -> str:
        """Canonical text for the assistant turn carrying the current position."""
        return candidate.text

    def render(self, velocity: VelocityPrompt, position: Candidate,
               next_velocity: VelocityPrompt) -> MetaPrompt:
        """Build the four-turn meta-prompt: task description, inertia turn,
        current position, next-position directive."""
        return MetaPrompt([
            ChatMessage("system", self.describe()),
            ChatMessage("user", velocity.text),
            ChatMessage("assistant", self.format_position(position)),
            ChatMessage("user", next_velocity.text),
        ])


@dataclass
class Swarm:
    particles: list[Particle]
    gbest: Candidate
    minimize: bool = True

    def better(self, a: float, b: float) -> bool:
        return a < b if self.minimize else a > b


def substream_seed(root_seed: int, name: str) -> int:
    """Platform-stable 64-bit seed for the named substream of a root seed."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def substream(root_seed: int, name: str) -> random.Random:
    """Named, platform-stable RNG substream derived from one root seed."""
    return random.Random(substream_seed(root_seed, name))


def cost_model(num_particles: int, max_iterations: int, per_query_cost: float = 1.0) -> int:
    """Base backend-query count N*G; per-query inference cost is not counted."""
    if num_particles < 1 or max_iterations < 1 or per_query_cost <= 0:
        raise ValueError("all cost-model inputs must be positive")
    return num_particles * max_iterations


def update_bests(swarm: Swarm, candidate: Candidate, i: int) -> tuple[bool, bool]:
    """Replace pbest_i/gbest by a strictly better candidate; ties keep the incumbent."""
    particle = swarm.particles[i]
    pbest_changed = swarm.better(candidate.score, particle.pbest.score)
    gbest_changed = False
    if pbest_changed:
        particle.pbest = candidate
        if swarm.better(particle.pbest.score, swarm.gbest.score):
            swarm.gbest = particle.pbest
            gbest_changed = True
    return pbest_changed, gbest_changed


def _initial_candidate(adapter: ProblemAdapter, rng: random.Random, retry_limit: int,
                       particle_id: int) -> Candidate:
    attempts = retry_limit + 1
    last: Optional[Exception] = None
    for _ in range(attempts):
        try:
            return adapter.initial_position(rng)
        except (CandidateRejected, EvaluationError) as exc:
            last = exc
    raise AdapterInitFailure(
        f"particle {particle_id}: no valid initial position in {attempts} attempts: {last}"
    )


def acquire_position(
    adapter: ProblemAdapter,
    backend: ChatBackend,
    particle: Particle,
    retry_limit: int,
    rng: random.Random,
    params: Optional[SamplingParams] = None,
) -> tuple[Candidate, list[ParticleEvent]]:
    """Query the backend for the next position, retrying invalid replies.

    Returns the first valid candidate within 1+retry_limit queries together
    with its event list (terminal event last); when every query fails, falls
    back to a fresh adapter-generated position with a `reinitialized` event.
    BackendUnavailable propagates: it is an infrastructure failure, not an
    invalid candidate.
    """
    if particle.pending_prompt is None:
        raise ValueError(f"particle {particle.id} has no rendered meta-prompt")
    events: list[ParticleEvent] = []
    for attempt in range(retry_limit + 1):
        text = backend.complete(particle.pending_prompt, params)
        try:
            decoded = adapter.parse_and_validate(text)
            score = adapter.evaluate(decoded)
        except CandidateRejected:
            continue
        except EvaluationError:
            events.append(ParticleEvent(particle.id, "evaluation_error", attempt))
            continue
        kind = "accepted" if attempt == 0 else "retried"
        events.append(ParticleEvent(particle.id, kind, attempt))
        return Candidate(text=text, decoded=decoded, score=score), events
    if retry_limit > 0:
        events.append(ParticleEvent(particle.id, "retried", retry_limit))
    events.append(ParticleEvent(particle.id, "reinitialized", retry_limit))
    fallback = _initial_candidate(adapter, rng, retry_limit, particle.id)
    return fallback, events


def run(
    adapter: ProblemAdapter,
    backend: ChatBackend,
    cfg: SwarmConfig,
    params: Optional[SamplingParams] = None,
    max_workers: int = 1,
    on_iteration: Optional[Callable[[int, "Swarm"], None]] = None,
) -> tuple[Candidate, RunTrace]:
    """Run the full optimization loop and return (global best, trace).

    The trace covers exactly max_iterations rows. Position acquisition may run
    concurrently across particles (max_workers > 1); best-updates, velocity
    construction and result installation always happen in particle-id order,
    so runs with a scripted backend are deterministic in both modes. The
    optional on_iteration hook sees the swarm after each best-update phase.
    """
    rngs = [substream(cfg.rng_seed, f"particle:{i}") for i in range(cfg.num_particles)]

    particles: list[Particle] = []
    for i in range(cfg.num_particles):
        pos = _initial_candidate(adapter, rngs[i], cfg.retry_limit, i)
        particles.append(Particle(
            id=i,
            position=pos,
            velocity=VelocityPrompt(adapter.bootstrap_velocity),
            pbest=pos,
        ))
    gbest = particles[0].pbest
    swarm = Swarm(particles, gbest, minimize=cfg.minimize)
    for p in particles[1:]:
        if swarm.better(p.pbest.score, swarm.gbest.score):
            swarm.gbest = p.pbest

    trace = RunTrace()
    for t in range(1, cfg.max_iterations + 1):
        next_velocities: list[VelocityPrompt] = []
        for p in swarm.particles:
            # evaluate the current position into pbest/gbest, then build the
            # next velocity and prompt; gbest updates propagate within the pass
            p.history.append((t, p.position.score))
            update_bests(swarm, p.position, p.id)
            v_next = adapter.construct_velocity(p.pbest, swarm.gbest)
            prompt = adapter.render(p.velocity, p.position, v_next)
            validate_meta_prompt(prompt)
            p.pending_prompt = prompt
            next_velocities.append(v_next)
        if on_iteration is not None:
            on_iteration(t, swarm)

        # query/accept/retry/reinitialize, independently per particle
        def _acquire(p: Particle) -> tuple[Candidate, list[ParticleEvent]]:
            return acquire_position(adapter, backend, p, cfg.retry_limit, rngs[p.id], params)

        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(_acquire, swarm.particles))
        else:
            results = [_acquire(p) for p in swarm.particles]

        events: list[ParticleEvent] = []
        for p, (candidate, p_events) in zip(swarm.particles, results):
            p.position = candidate
            p.velocity = next_velocities[p.id]
            p.pending_prompt = None
            events.extend(p_events)

        trace.per_iteration.append(IterationRecord(
            iteration=t,
            gbest_score=swarm.gbest.score,
            gbest_text=swarm.gbest.text,
            events=tuple(events),
        ))

    # Positions acquired in the final iteration were scored but never passed
    # through the best-update step; fold them in so the returned candidate is
    # the best ever seen. The trace itself stays at max_iterations rows.
    for p in swarm.particles:
        p.history.append((cfg.max_iterations + 1, p.position.score))
        update_bests(swarm, p.position, p.id)

    return swarm.gbest, trace
