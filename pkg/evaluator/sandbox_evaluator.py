"""Sandboxed evaluator for candidate heuristic programs.

Speaks newline-delimited JSON frames (hello / eval_request / eval_response /
shutdown, protocol version 1) on stdin/stdout. Each request's source text is
executed in a fresh child process under a policy: wall-clock timeout per
instance, an address-space cap, a builtins whitelist, and an import whitelist
with no process, file, or network primitives. The supervising process owns
the timeouts, so candidate code cannot disable them, and it re-validates
every returned tour before reporting lengths.

Security model: this is a guard against accidents and runaway code, not a
boundary against a determined adversary; run it with OS-level isolation if
the input is hostile.

Launch: sandbox_evaluator.py POLICY_JSON
"""

from __future__ import annotations

import builtins
import json
import math
import multiprocessing
import os
import resource
import sys

PROTOCOL_VERSION = 1

DEFAULT_ALLOWED_MODULES = [
    "math", "random", "itertools", "heapq", "functools", "collections",
    "bisect", "operator", "statistics",
]

DEFAULT_ALLOWED_BUILTINS = [
    "abs", "all", "any", "bool", "callable", "chr", "dict", "divmod",
    "enumerate", "filter", "float", "format", "frozenset", "hash", "int",
    "isinstance", "issubclass", "iter", "len", "list", "map", "max", "min",
    "next", "object", "ord", "pow", "print", "range", "repr", "reversed",
    "round", "set", "slice", "sorted", "str", "sum", "tuple", "zip",
    "__build_class__",
    # exception types so candidate try/except blocks work
    "BaseException", "Exception", "ArithmeticError", "AttributeError",
    "FloatingPointError", "ImportError", "IndexError", "KeyError",
    "LookupError", "MemoryError", "NameError", "OverflowError",
    "RecursionError", "RuntimeError", "StopIteration", "TypeError",
    "ValueError", "ZeroDivisionError",
]

# never allowed regardless of the policy file: process/file/network reach
FORBIDDEN_BUILTINS = {
    "open", "exec", "eval", "compile", "input", "globals", "locals", "vars",
    "getattr", "setattr", "delattr", "breakpoint", "exit", "quit", "help",
    "memoryview", "__import__",
}

FORBIDDEN_MODULES = {
    "os", "sys", "subprocess", "socket", "pathlib", "shutil", "io", "ctypes",
    "multiprocessing", "threading", "signal", "importlib", "builtins", "time",
}


class PolicyError(Exception):
    pass


class Policy:
    def __init__(self, wall_timeout_s: float, memory_cap_mb: int,
                 allowed_modules: list, allowed_builtins: list):
        if wall_timeout_s <= 0:
            raise PolicyError("wall_timeout_s must be positive")
        if memory_cap_mb < 64:
            raise PolicyError("memory_cap_mb must be at least 64")
        bad = set(allowed_builtins) & FORBIDDEN_BUILTINS
        if bad:
            raise PolicyError(f"builtins whitelist may not contain {sorted(bad)}")
        bad = set(allowed_modules) & FORBIDDEN_MODULES
        if bad:
            raise PolicyError(f"module whitelist may not contain {sorted(bad)}")
        self.wall_timeout_s = float(wall_timeout_s)
        self.memory_cap_mb = int(memory_cap_mb)
        self.allowed_modules = list(allowed_modules)
        self.allowed_builtins = list(allowed_builtins)

    @classmethod
    def from_file(cls, path: str) -> "Policy":
        with open(path) as fh:
            obj = json.load(fh)
        return cls(
            wall_timeout_s=obj.get("wall_timeout_s", 30.0),
            memory_cap_mb=obj.get("memory_cap_mb", 512),
            allowed_modules=obj.get("allowed_modules", DEFAULT_ALLOWED_MODULES),
            allowed_builtins=obj.get("allowed_builtins", DEFAULT_ALLOWED_BUILTINS),
        )

    def as_dict(self) -> dict:
        return {
            "wall_timeout_s": self.wall_timeout_s,
            "memory_cap_mb": self.memory_cap_mb,
            "allowed_modules": self.allowed_modules,
            "allowed_builtins": self.allowed_builtins,
        }


def _guarded_import(allowed: frozenset):
    def guarded(name, globals=None, locals=None, fromlist=(), level=0):
        if level != 0 or name.split(".")[0] not in allowed:
            raise ImportError(f"module {name!r} is not permitted in the sandbox")
        return builtins.__import__(name, globals, locals, fromlist, level)

    return guarded


def _worker(conn, source: str, coord_lists: list, policy: dict) -> None:
    """Runs in a fresh child per request; reports through the pipe only."""
    # candidate prints or warnings must never reach the frame stream
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    cap = policy["memory_cap_mb"] * 1024 * 1024
    try:
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))
    except (ValueError, OSError):
        pass  # cap below current usage; the wall clock still guards us

    safe = {name: getattr(builtins, name) for name in policy["allowed_builtins"]
            if hasattr(builtins, name)}
    safe["__import__"] = _guarded_import(frozenset(policy["allowed_modules"]))
    namespace = {"__builtins__": safe, "__name__": "__candidate__"}

    try:
        code = compile(source, "<candidate>", "exec")
    except SyntaxError as exc:
        conn.send(("fatal", {"kind": "syntax_error", "message": str(exc)}))
        return
    try:
        exec(code, namespace)
    except BaseException as exc:  # candidate module body may raise anything
        conn.send(("fatal", {"kind": "runtime_error", "message": f"{type(exc).__name__}: {exc}"}))
        return
    solve = namespace.get("solve")
    if not callable(solve):
        conn.send(("fatal", {"kind": "missing_entry",
                             "message": "program defines no callable solve(coords)"}))
        return
    conn.send(("ready", None))

    for coords in coord_lists:
        try:
            tour = solve([tuple(c) for c in coords])
            tour = [int(c) for c in tour]
        except BaseException as exc:
            conn.send(("fatal", {"kind": "runtime_error",
                                 "message": f"{type(exc).__name__}: {exc}"}))
            return
        if sorted(tour) != list(range(len(coords))):
            conn.send(("fatal", {"kind": "invalid_tour",
                                 "message": f"not a permutation of 0..{len(coords) - 1}"}))
            return
        conn.send(("tour", tour))
    conn.send(("done", None))


def _edge_length(coords, tour) -> float:
    total = 0.0
    for i in range(len(tour)):
        ax, ay = coords[tour[i]]
        bx, by = coords[tour[(i + 1) % len(tour)]]
        dx = ax - bx
        dy = ay - by
        total += math.sqrt(dx * dx + dy * dy)
    return total


class _Supervisor:
    def __init__(self, policy: Policy):
        self.policy = policy
        self.ctx = multiprocessing.get_context("fork")

    def _receive(self, conn, proc, timeout_s: float):
        if not conn.poll(timeout_s):
            return ("timeout", None)
        try:
            return conn.recv()
        except (EOFError, OSError):
            return ("died", None)

    def evaluate(self, source: str, instances: list, timeout_s: float) -> dict:
        """Run one candidate over all instances; returns the response payload."""
        effective = min(self.policy.wall_timeout_s, timeout_s) if timeout_s > 0 \
            else self.policy.wall_timeout_s
        coord_lists = [inst["coords"] for inst in instances]
        parent_conn, child_conn = self.ctx.Pipe(duplex=False)
        proc = self.ctx.Process(
            target=_worker,
            args=(child_conn, source, coord_lists, self.policy.as_dict()),
            daemon=True,
        )
        proc.start()
        child_conn.close()
        try:
            tours = []
            kind, payload = self._receive(parent_conn, proc, effective)
            if kind == "fatal":
                return {"error": payload}
            if kind == "timeout":
                return {"error": {"kind": "timeout",
                                  "message": f"no result within {effective:.1f}s"}}
            if kind == "died":
                return {"error": {"kind": "runtime_error", "message": "worker died"}}
            assert kind == "ready"
            for coords in coord_lists:
                kind, payload = self._receive(parent_conn, proc, effective)
                if kind == "fatal":
                    return {"error": payload}
                if kind == "timeout":
                    return {"error": {"kind": "timeout",
                                      "message": f"instance exceeded {effective:.1f}s"}}
                if kind == "died":
                    return {"error": {"kind": "runtime_error", "message": "worker died"}}
                assert kind == "tour"
                # validity is re-checked here before any length is reported
                if sorted(payload) != list(range(len(coords))):
                    return {"error": {"kind": "invalid_tour",
                                      "message": "supervisor rejected the echoed tour"}}
                tours.append(payload)
            lengths = [_edge_length(coords, tour)
                       for coords, tour in zip(coord_lists, tours)]
            return {"lengths": lengths, "tours": tours}
        finally:
            parent_conn.close()
            if proc.is_alive():
                proc.terminate()
                proc.join(timeout=2.0)
                if proc.is_alive():
                    proc.kill()
                    proc.join(timeout=2.0)


def serve(stdin, stdout, policy: Policy) -> int:
    """Frame loop: handshake, then one request at a time until shutdown."""

    def emit(frame: dict) -> None:
        stdout.write((json.dumps(frame) + "\n").encode())
        stdout.flush()

    def next_frame():
        line = stdin.readline()
        if not line:
            return None
        try:
            frame = json.loads(line)
        except ValueError:
            sys.exit(2)  # malformed input; abort without polluting the stream
        if not isinstance(frame, dict):
            sys.exit(2)
        return frame

    frame = next_frame()
    if frame is None:
        return 0
    if frame.get("type") != "hello" or frame.get("version") != PROTOCOL_VERSION:
        sys.exit(2)  # version mismatch aborts the run
    emit({"type": "hello", "version": PROTOCOL_VERSION})

    supervisor = _Supervisor(policy)
    while True:
        frame = next_frame()
        if frame is None or frame.get("type") == "shutdown":
            return 0
        kind = frame.get("type")
        if kind == "hello":
            emit({"type": "hello", "version": PROTOCOL_VERSION})
            continue
        if kind != "eval_request":
            sys.exit(2)
        source = frame.get("source")
        instances = frame.get("instances")
        if not isinstance(source, str) or not isinstance(instances, list):
            sys.exit(2)
        result = supervisor.evaluate(source, instances,
                                     float(frame.get("timeout_s") or 0.0))
        response = {"type": "eval_response", "id": frame.get("id")}
        response.update(result)
        emit(response)


def main() -> int:
    if len(sys.argv) != 2:
        print("usage: sandbox_evaluator.py POLICY_JSON", file=sys.stderr)
        return 2
    try:
        policy = Policy.from_file(sys.argv[1])
    except (OSError, ValueError, PolicyError) as exc:
        print(f"bad policy file: {exc}", file=sys.stderr)
        return 2
    return serve(sys.stdin.buffer, sys.stdout.buffer, policy)


if __name__ == "__main__":
    sys.exit(main())
