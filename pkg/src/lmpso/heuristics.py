"""Heuristic improvement: candidate solutions are whole heuristic programs.

Scoring runs out-of-process: an evaluator subprocess executes each candidate's
``solve(coords)`` against the benchmark instances and reports tour lengths
over a newline-delimited JSON protocol. New candidates must first pass a
cheap probe evaluation on a small instance before earning the full run.
"""

from __future__ import annotations

import itertools
import json
import os
import queue
import random
import re
import select
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .swarm import (
    Candidate,
    EvaluationError,
    ParseFailure,
    ProbeFailure,
    ProblemAdapter,
    VelocityPrompt,
    substream,
)
from .tsp import TspInstance, generate_instance, instance_to_json

PROTOCOL_VERSION = 1

PROBE_TIMEOUT_S = 5.0
FULL_TIMEOUT_S = 30.0

# Small fixed instance used to reject broken programs before the full run.
PROBE_INSTANCE = TspInstance(
    [(0, 0), (10, 5), (20, 10), (35, 5), (50, 0), (60, 20), (45, 40), (25, 45), (10, 35), (5, 15)],
    name="probe-10",
)


def benchmark_instances(seed: int = 0, count: int = 5, n: int = 100) -> list[TspInstance]:
    """The fixed benchmark layouts heuristics are scored on; stable per seed."""
    return [
        generate_instance(n, substream(seed, f"heuristic-instance:{k}"), name=f"bench-{n}-{k}")
        for k in range(count)
    ]


class EvaluatorDown(Exception):
    """The evaluator subprocess cannot be started or spoken to."""


class ProtocolError(Exception):
    """The evaluator emitted something that is not a valid frame."""


@dataclass(frozen=True)
class HeuristicCandidate:
    source: str
    language_tag: str = "python"
    origin: str = "generated"

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValueError("candidate source must be non-empty")


@dataclass(frozen=True)
class EvalRequest:
    id: int
    source: str
    instances: tuple[TspInstance, ...]
    timeout_s: float

    def to_frame(self) -> dict:
        return {
            "type": "eval_request",
            "version": PROTOCOL_VERSION,
            "id": self.id,
            "source": self.source,
            "instances": [instance_to_json(inst) for inst in self.instances],
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class EvalResponse:
    id: int
    lengths: Optional[tuple[float, ...]] = None
    tours: Optional[tuple[tuple[int, ...], ...]] = None
    error: Optional[dict] = None

    @classmethod
    def from_frame(cls, frame: dict) -> "EvalResponse":
        if frame.get("type") != "eval_response" or "id" not in frame:
            raise ProtocolError(f"not an eval_response frame: {frame!r}")
        lengths = frame.get("lengths")
        tours = frame.get("tours")
        return cls(
            id=frame["id"],
            lengths=tuple(float(x) for x in lengths) if lengths is not None else None,
            tours=tuple(tuple(int(c) for c in t) for t in tours) if tours is not None else None,
            error=frame.get("error"),
        )


class EvaluatorClient:
    """Owns one evaluator subprocess; requests are strictly serialized.

    The subprocess is (re)started lazily, so an evaluator crash degrades into
    a failed evaluation rather than killing the run; the next call respawns.
    """

    def __init__(self, cmd: Sequence[str], startup_timeout_s: float = 10.0,
                 response_margin_s: float = 15.0):
        self.cmd = list(cmd)
        self.startup_timeout_s = startup_timeout_s
        self.response_margin_s = response_margin_s
        self._proc: Optional[subprocess.Popen] = None
        self._buf = b""
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    # -- subprocess management ------------------------------------------------

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
            self._proc = None
        self._buf = b""

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = None
        self._buf = b""
        try:
            self._proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise EvaluatorDown(f"cannot launch evaluator {self.cmd!r}: {exc}") from exc
        try:
            self._send({"type": "hello", "version": PROTOCOL_VERSION})
            reply = self._recv_frame(self.startup_timeout_s)
        except (EvaluatorDown, ProtocolError) as exc:
            self._kill()
            raise EvaluatorDown(f"evaluator handshake failed: {exc}") from exc
        if reply.get("type") != "hello" or reply.get("version") != PROTOCOL_VERSION:
            self._kill()
            raise EvaluatorDown(f"evaluator handshake mismatch: {reply!r}")

    def _send(self, frame: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(frame).encode() + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._kill()
            raise EvaluatorDown(f"evaluator pipe broken: {exc}") from exc

    def _recv_frame(self, timeout_s: float) -> dict:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + timeout_s
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._kill()
                raise EvaluatorDown(f"no evaluator reply within {timeout_s:.0f}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                self._kill()
                raise EvaluatorDown("evaluator closed its output stream")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        try:
            frame = json.loads(line)
        except ValueError as exc:
            self._kill()  # desync: restart so the next request succeeds
            raise ProtocolError(f"malformed frame {line[:120]!r}") from exc
        if not isinstance(frame, dict):
            self._kill()
            raise ProtocolError(f"frame is not an object: {frame!r}")
        return frame

    # -- public API -----------------------------------------------------------

    def call(self, source: str, instances: Sequence[TspInstance], timeout_s: float) -> EvalResponse:
        """Send one eval request and wait for its matching response."""
        req = EvalRequest(
            id=next(self._ids), source=source,
            instances=tuple(instances), timeout_s=timeout_s,
        )
        with self._lock:
            self._ensure_started()
            self._send(req.to_frame())
            # generous client-side deadline; the evaluator enforces per-instance walls
            budget = timeout_s * len(instances) + self.response_margin_s
            frame = self._recv_frame(budget)
            resp = EvalResponse.from_frame(frame)
            if resp.id != req.id:
                self._kill()
                raise ProtocolError(f"response id {resp.id} does not match request id {req.id}")
            if resp.error is None and resp.lengths is not None and len(resp.lengths) != len(instances):
                self._kill()
                raise ProtocolError(
                    f"expected {len(instances)} lengths, got {len(resp.lengths)}")
            if resp.tours is not None:
                # defense in depth: re-check the permutation property client-side
                for inst, tour in zip(instances, resp.tours):
                    if sorted(tour) != list(range(inst.n)):
                        self._kill()
                        raise ProtocolError(f"evaluator returned a non-tour for {inst.name!r}")
            return resp

    def shutdown(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    self._send({"type": "shutdown", "version": PROTOCOL_VERSION})
                    self._proc.wait(timeout=5)
                except Exception:
                    pass
            self._kill()

    def __enter__(self) -> "EvaluatorClient":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


class EvaluatorPool:
    """A fixed set of evaluator subprocesses for concurrent particle scoring.

    Size the pool to the engine's particle concurrency; each call borrows one
    client, so requests on any single subprocess stay strictly serialized.
    """

    def __init__(self, cmd: Sequence[str], size: int = 1, **client_kwargs):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self._clients: "queue.Queue[EvaluatorClient]" = queue.Queue()
        for _ in range(size):
            self._clients.put(EvaluatorClient(cmd, **client_kwargs))
        self.size = size

    def call(self, source: str, instances: Sequence[TspInstance], timeout_s: float) -> EvalResponse:
        client = self._clients.get()
        try:
            return client.call(source, instances, timeout_s)
        finally:
            self._clients.put(client)

    def shutdown(self) -> None:
        for _ in range(self.size):
            self._clients.get().shutdown()

    def __enter__(self) -> "EvaluatorPool":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


# ---------------------------------------------------------------------------
# Swarm adapter

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)

VELOCITY_TEMPLATE = (
    "Your best heuristic so far achieves a total distance of {pbest_score:.2f} "
    "over the benchmark instances:\n```python\n{pbest}\n```\n"
    "The best heuristic found by the swarm achieves {gbest_score:.2f}:\n"
    "```python\n{gbest}\n```\n"
    "Write an improved heuristic influenced by both that achieves a lower total "
    "distance. Reply with one complete Python program in a fenced code block "
    "defining solve(coords)."
)


def extract_code(text: str) -> str:
    """Largest fenced code block, else the whole reply."""
    blocks = [m.group(1) for m in _FENCE.finditer(text)]
    if blocks:
        return max(blocks, key=len)
    return text


class HeuristicAdapter(ProblemAdapter):
    """Evolves TSP construction heuristics as program text."""

    def __init__(
        self,
        instances: Sequence[TspInstance],
        evaluator: "EvaluatorClient | EvaluatorPool",
        seeds: dict[str, str],
        probe_instance: TspInstance = PROBE_INSTANCE,
        probe_timeout_s: float = PROBE_TIMEOUT_S,
        timeout_s: float = FULL_TIMEOUT_S,
        velocity_template: str = VELOCITY_TEMPLATE,
    ):
        if not seeds:
            raise ValueError("need at least one seed heuristic")
        self.instances = list(instances)
        self.evaluator = evaluator
        self.seeds = dict(seeds)
        self.probe_instance = probe_instance
        self.probe_timeout_s = probe_timeout_s
        self.timeout_s = timeout_s
        self.velocity_template = velocity_template

    def describe(self) -> str:
        return (
            "You are improving a construction heuristic for the Traveling Salesman "
            "Problem. A heuristic is a complete Python program defining a function "
            "solve(coords) that takes a list of (x, y) city coordinates and returns "
            "a tour visiting every city exactly once, as a list of city indices. "
            f"Heuristics are scored by the total tour distance over {len(self.instances)} "
            "benchmark instances; lower is better. Always reply with one complete "
            "Python program in a fenced code block."
        )

    def initial_position(self, rng: random.Random) -> Candidate:
        name = sorted(self.seeds)[rng.randrange(len(self.seeds))]
        source = self.seeds[name]
        decoded = HeuristicCandidate(source=source, origin=f"seed:{name}")
        return Candidate(text=source, decoded=decoded, score=self.evaluate(decoded))

    def construct_velocity(self, pbest: Candidate, gbest: Candidate) -> VelocityPrompt:
        return VelocityPrompt(self.velocity_template.format(
            pbest=pbest.decoded.source.strip(), pbest_score=pbest.score,
            gbest=gbest.decoded.source.strip(), gbest_score=gbest.score,
        ))

    def format_position(self, candidate: Candidate) -> str:
        return f"```python\n{candidate.decoded.source.strip()}\n```"

    def parse_and_validate(self, text: str) -> HeuristicCandidate:
        source = extract_code(text)
        if not source.strip():
            raise ParseFailure("reply contains no code")
        try:
            resp = self.evaluator.call(source, [self.probe_instance], self.probe_timeout_s)
        except (EvaluatorDown, ProtocolError) as exc:
            raise EvaluationError(f"probe evaluation failed: {exc}") from exc
        if resp.error is not None:
            kind = resp.error.get("kind", "error")
            raise ProbeFailure(f"probe rejected candidate: {kind}: {resp.error.get('message', '')}")
        return HeuristicCandidate(source=source, origin="generated")

    def evaluate(self, decoded: HeuristicCandidate) -> float:
        try:
            resp = self.evaluator.call(decoded.source, self.instances, self.timeout_s)
        except (EvaluatorDown, ProtocolError) as exc:
            raise EvaluationError(f"evaluation failed: {exc}") from exc
        if resp.error is not None:
            kind = resp.error.get("kind", "error")
            raise EvaluationError(f"candidate evaluation error: {kind}: {resp.error.get('message', '')}")
        assert resp.lengths is not None
        return sum(resp.lengths)


def heuristic_adapter(instances: Sequence[TspInstance], evaluator: "EvaluatorClient | EvaluatorPool",
                      seeds: dict[str, str], **kwargs) -> HeuristicAdapter:
    return HeuristicAdapter(instances, evaluator, seeds, **kwargs)
