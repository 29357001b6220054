"""Protocol behavior, policy enforcement, and execution semantics."""

import json
import math
import time

import pytest

from driver import Driver, instance

SQUARE = [(0, 0), (0, 10), (10, 10), (10, 0)]

IDENTITY = "def solve(coords):\n    return list(range(len(coords)))\n"

NN_SEED = '''
import math


def solve(coords):
    n = len(coords)

    def dist(a, b):
        dx = coords[a][0] - coords[b][0]
        dy = coords[a][1] - coords[b][1]
        return math.sqrt(dx * dx + dy * dy)

    start = 0
    tour = [start]
    unvisited = [c for c in range(n) if c != start]
    current = start
    while unvisited:
        best = min(unvisited, key=lambda c: dist(current, c))
        tour.append(best)
        unvisited.remove(best)
        current = best
    return tour
'''


@pytest.fixture(scope="module")
def policy_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("policy") / "policy.json"
    path.write_text(json.dumps({"wall_timeout_s": 5.0, "memory_cap_mb": 512}))
    return path


@pytest.fixture
def evaluator(policy_file):
    with Driver(policy_file) as d:
        assert d.recv() == {"type": "hello", "version": 1}
        yield d


def test_handshake_version_mismatch_aborts(policy_file):
    with Driver(policy_file, version=2) as d:
        assert d.recv(5.0) is None  # process exits without replying
    assert d.proc.returncode == 2


def test_identity_program_valid_tour(evaluator):
    resp = evaluator.call(IDENTITY, [instance(SQUARE)])
    assert resp["id"] == 1
    assert "error" not in resp
    assert resp["lengths"] == [pytest.approx(40.0)]
    assert resp["tours"] == [[0, 1, 2, 3]]


def test_nearest_neighbor_seed_on_square(evaluator):
    resp = evaluator.call(NN_SEED, [instance(SQUARE)])
    assert resp["lengths"] == [pytest.approx(40.0)]


def test_multiple_instances_in_one_request(evaluator):
    insts = [instance(SQUARE, "a"), instance([(0, 0), (3, 4)], "b")]
    resp = evaluator.call(IDENTITY, insts)
    assert len(resp["lengths"]) == 2
    assert resp["lengths"][1] == pytest.approx(10.0)


def test_syntax_error(evaluator):
    resp = evaluator.call("def solve(:", [instance(SQUARE)])
    assert resp["error"]["kind"] == "syntax_error"


def test_runtime_error(evaluator):
    resp = evaluator.call("def solve(coords):\n    raise ValueError('nope')\n",
                          [instance(SQUARE)])
    assert resp["error"]["kind"] == "runtime_error"
    assert "nope" in resp["error"]["message"]


def test_missing_entry(evaluator):
    resp = evaluator.call("helper = 42\n", [instance(SQUARE)])
    assert resp["error"]["kind"] == "missing_entry"


def test_invalid_tour(evaluator):
    resp = evaluator.call("def solve(coords):\n    return [0] * len(coords)\n",
                          [instance(SQUARE)])
    assert resp["error"]["kind"] == "invalid_tour"


def test_non_integer_tour_is_runtime_error(evaluator):
    resp = evaluator.call("def solve(coords):\n    return ['a', 'b', 'c', 'd']\n",
                          [instance(SQUARE)])
    assert resp["error"]["kind"] == "runtime_error"


def test_infinite_loop_in_solve_times_out(evaluator):
    source = "def solve(coords):\n    while True:\n        pass\n"
    t0 = time.monotonic()
    resp = evaluator.call(source, [instance(SQUARE)], timeout_s=30.0, wait_s=30.0)
    assert resp["error"]["kind"] == "timeout"
    assert time.monotonic() - t0 < 5.0 + 2.0  # policy wall is the cap


def test_infinite_loop_at_module_level_times_out(evaluator):
    resp = evaluator.call("while True:\n    pass\n", [instance(SQUARE)], wait_s=30.0)
    assert resp["error"]["kind"] == "timeout"


def test_request_timeout_can_tighten_policy(evaluator):
    source = "def solve(coords):\n    while True:\n        pass\n"
    t0 = time.monotonic()
    resp = evaluator.call(source, [instance(SQUARE)], timeout_s=1.0, wait_s=30.0)
    assert resp["error"]["kind"] == "timeout"
    assert time.monotonic() - t0 < 3.0


def test_import_whitelist_allows_math_blocks_everything_else(evaluator):
    ok = "import math\ndef solve(coords):\n    return list(range(len(coords)))\n"
    assert "error" not in evaluator.call(ok, [instance(SQUARE)])
    for module in ("os", "socket", "subprocess", "time"):
        source = f"import {module}\ndef solve(coords):\n    return list(range(len(coords)))\n"
        resp = evaluator.call(source, [instance(SQUARE)])
        assert resp["error"]["kind"] == "runtime_error"
        assert "not permitted" in resp["error"]["message"]


def test_file_access_blocked(evaluator):
    source = "def solve(coords):\n    open('/etc/passwd')\n    return list(range(len(coords)))\n"
    resp = evaluator.call(source, [instance(SQUARE)])
    assert resp["error"]["kind"] == "runtime_error"


def test_prints_are_harmless_and_stream_stays_clean(evaluator):
    source = "print('hello from candidate')\ndef solve(coords):\n    print('solving')\n    return list(range(len(coords)))\n"
    resp = evaluator.call(source, [instance(SQUARE)])
    assert "error" not in resp
    # a second round trip proves no stray bytes desynced the stream
    resp = evaluator.call(IDENTITY, [instance(SQUARE)], req_id=2)
    assert resp["id"] == 2 and "error" not in resp


def test_memory_cap_enforced(evaluator):
    source = "def solve(coords):\n    x = [0] * (10 ** 9)\n    return list(range(len(coords)))\n"
    resp = evaluator.call(source, [instance(SQUARE)], wait_s=30.0)
    assert resp["error"]["kind"] == "runtime_error"


def test_recursion_bomb_is_contained(evaluator):
    source = "def solve(coords):\n    def f(): return f()\n    f()\n    return []\n"
    resp = evaluator.call(source, [instance(SQUARE)], wait_s=30.0)
    assert resp["error"]["kind"] == "runtime_error"


def test_garbage_input_produces_no_nonframe_output(policy_file):
    with Driver(policy_file) as d:
        assert d.recv() == {"type": "hello", "version": 1}
        d.send_raw(b"this is not json\n")
        leftovers = d.drain_stdout()
    for line in leftovers.splitlines():
        if line.strip():
            json.loads(line)  # every byte on stdout is part of a frame
    assert d.proc.returncode == 2


@pytest.mark.parametrize("payload", [
    b"\x00\xff\xfe garbage bytes\n",
    b"[1, 2, 3]\n",                      # valid JSON, not an object
    b'"just a string"\n',
    b"{\n",                              # truncated object
    b'{"type": "eval_response", "id": 1}\n',  # frame type the server never accepts
    b'{"no": "type"}\n',
])
def test_fuzzed_frames_never_desync_the_stream(policy_file, payload):
    with Driver(policy_file) as d:
        assert d.recv() == {"type": "hello", "version": 1}
        d.send_raw(payload)
        leftovers = d.drain_stdout()
    for line in leftovers.splitlines():
        if line.strip():
            json.loads(line)
    assert d.proc.returncode == 2


def test_unknown_frame_type_aborts(policy_file):
    with Driver(policy_file) as d:
        assert d.recv() == {"type": "hello", "version": 1}
        d.send({"type": "mystery"})
        leftovers = d.drain_stdout()
    assert leftovers.strip() == b""
    assert d.proc.returncode == 2


def test_shutdown_frame_exits_cleanly(policy_file):
    d = Driver(policy_file)
    assert d.recv() == {"type": "hello", "version": 1}
    d.send({"type": "shutdown"})
    d.proc.wait(timeout=5)
    assert d.proc.returncode == 0
    d.close()


def test_policy_rejects_forbidden_entries(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"wall_timeout_s": 5, "allowed_builtins": ["open", "len"]}))
    with Driver(bad, handshake=False) as d:
        d.proc.wait(timeout=5)
        assert d.proc.returncode == 2

    bad.write_text(json.dumps({"wall_timeout_s": 5, "allowed_modules": ["os"]}))
    with Driver(bad, handshake=False) as d:
        d.proc.wait(timeout=5)
        assert d.proc.returncode == 2


def test_lengths_match_reference_formula(evaluator):
    coords = [(0, 0), (3, 4), (10, 0), (7, 8)]
    resp = evaluator.call(IDENTITY, [instance(coords)])
    tour = resp["tours"][0]
    expected = 0.0
    for i in range(len(tour)):
        ax, ay = coords[tour[i]]
        bx, by = coords[tour[(i + 1) % len(tour)]]
        expected += math.hypot(ax - bx, ay - by)
    assert resp["lengths"][0] == pytest.approx(expected, abs=1e-9)
