"""Protocol-speaking evaluator double for client tests.

Executes candidate sources with plain exec (no sandboxing; the real evaluator
lives elsewhere) and supports fault-injection flags:

  --garbage-flag-file PATH  emit one non-JSON line before the first response,
                            then delete PATH (so the behavior happens once
                            across restarts)
  --bad-version             answer the handshake with the wrong version
  --mute                    never answer eval requests
  --wrong-id                answer with a mismatched request id
  --bad-tour                echo non-permutation tours
  --die-on-request          exit as soon as a request arrives
  --die-flag-file PATH      exit on request while PATH exists, deleting it
                            first (so a respawned process behaves normally)
"""

import json
import math
import os
import sys


def tour_lengths(source, instances):
    namespace = {}
    try:
        exec(compile(source, "<candidate>", "exec"), namespace)
    except SyntaxError as exc:
        return None, None, {"kind": "syntax_error", "message": str(exc)}
    except Exception as exc:
        return None, None, {"kind": "runtime_error", "message": str(exc)}
    solve = namespace.get("solve")
    if not callable(solve):
        return None, None, {"kind": "missing_entry", "message": "no solve(coords)"}
    lengths, tours = [], []
    for inst in instances:
        coords = [tuple(c) for c in inst["coords"]]
        if "time.sleep" in source:
            return None, None, {"kind": "timeout", "message": "candidate exceeded the wall clock"}
        try:
            tour = list(solve(coords))
        except Exception as exc:
            return None, None, {"kind": "runtime_error", "message": str(exc)}
        if sorted(tour) != list(range(len(coords))):
            return None, None, {"kind": "invalid_tour", "message": f"{tour!r}"}
        total = 0.0
        for i in range(len(tour)):
            ax, ay = coords[tour[i]]
            bx, by = coords[tour[(i + 1) % len(tour)]]
            total += math.sqrt((ax - bx) ** 2 + (ay - by) ** 2)
        lengths.append(total)
        tours.append(tour)
    return lengths, tours, None


def main():
    args = sys.argv[1:]
    garbage_flag = None
    if "--garbage-flag-file" in args:
        garbage_flag = args[args.index("--garbage-flag-file") + 1]
    die_flag = None
    if "--die-flag-file" in args:
        die_flag = args[args.index("--die-flag-file") + 1]

    def emit(obj):
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        frame = json.loads(line)
        kind = frame.get("type")
        if kind == "hello":
            version = 2 if "--bad-version" in args else 1
            emit({"type": "hello", "version": version})
        elif kind == "eval_request":
            if "--die-on-request" in args:
                sys.exit(1)
            if die_flag and os.path.exists(die_flag):
                os.unlink(die_flag)
                sys.exit(1)
            if "--mute" in args:
                continue
            if garbage_flag and os.path.exists(garbage_flag):
                os.unlink(garbage_flag)
                sys.stdout.write("$$$ not a frame $$$\n")
                sys.stdout.flush()
                continue
            lengths, tours, error = tour_lengths(frame["source"], frame["instances"])
            resp_id = frame["id"] + 1000 if "--wrong-id" in args else frame["id"]
            if error is not None:
                emit({"type": "eval_response", "id": resp_id, "error": error})
            else:
                if "--bad-tour" in args:
                    tours = [[0] * len(t) for t in tours]
                emit({"type": "eval_response", "id": resp_id, "lengths": lengths, "tours": tours})
        elif kind == "shutdown":
            return


if __name__ == "__main__":
    main()
