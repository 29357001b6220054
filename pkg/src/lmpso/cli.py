"""Experiment driver: run the swarm and the classical baselines on each
problem, emit JSONL traces and CSV reports, and expose the exact-solver
oracle for instance files.

Configuration is one JSON file plus a flags-override layer; every problem
kind preloads its standard settings (iterations, swarm size, token cap),
and all randomness flows from one root seed through named substreams.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import backend as bk
from . import heuristics as hx
from . import symreg as sr
from . import tsp
from .expr import to_text
from .seeds import load_seeds
from .swarm import RunTrace, SwarmConfig, cost_model, run, substream, substream_seed

PROBLEM_KINDS = ("tsp10", "tsp20", "tsp30", "heuristic", "symreg")

# (max_iterations, num_particles) per problem kind; token caps live in backend.
_KIND_SCHEDULE = {
    "tsp10": (100, 10),
    "tsp20": (100, 10),
    "tsp30": (100, 10),
    "heuristic": (40, 25),
    "symreg": (50, 80),
}


def table_defaults(kind: str) -> dict:
    """Standard run settings per problem kind: iterations, swarm size, sampling."""
    if kind not in _KIND_SCHEDULE:
        raise bk.UnknownKind(f"unknown problem kind {kind!r}")
    iters, particles = _KIND_SCHEDULE[kind]
    params = bk.default_params(kind)
    return {
        "iters": iters,
        "particles": particles,
        "max_tokens": params.max_new_tokens,
        "temperature": params.temperature,
    }


@dataclass
class RunConfig:
    problem: str = "tsp10"
    seed: int = 0
    iters: int = 100
    particles: int = 10
    retry_limit: int = 3
    temperature: float = 0.9
    max_tokens: int = 50
    model: str = ""
    backend: str = "mock"  # mock | http
    mock_script: Optional[str] = None
    out: str = "out"
    # tsp
    n: Optional[int] = None
    layouts: int = 5
    methods: list[str] = field(default_factory=lambda: ["nn", "ni", "fi", "ri"])
    no_gap: bool = False
    instances: Optional[list[str]] = None  # instance files instead of generated layouts
    # symreg
    dataset: Optional[str] = None
    # heuristic
    evaluator_cmd: Optional[list[str]] = None
    bench_count: int = 5
    bench_cities: int = 100
    seeds_only: bool = False

    def sampling(self) -> bk.SamplingParams:
        return bk.SamplingParams(self.temperature, self.max_tokens, self.model)

    def swarm_config(self, name: str) -> SwarmConfig:
        return SwarmConfig(
            num_particles=self.particles,
            max_iterations=self.iters,
            retry_limit=self.retry_limit,
            rng_seed=substream_seed(self.seed, name),
        )


def load_config(kind: str, config_path: Optional[str], overrides: dict) -> RunConfig:
    """Table defaults for the kind, then the config file, then CLI flags."""
    merged = {"problem": kind, **table_defaults(kind)}
    if config_path:
        with open(config_path) as fh:
            merged.update(json.load(fh))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in RunConfig.__dataclass_fields__.values()}
    unknown = set(merged) - known
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**merged)


def load_mock_script(path) -> bk.MockBackend:
    """Mock script file: {"replies": [...], "cycle": bool, "rules": [{"contains", "replies", "cycle"}]}."""
    with open(path) as fh:
        obj = json.load(fh)
    rules = [bk.ScriptRule(r["contains"], list(r["replies"]), bool(r.get("cycle", False)))
             for r in obj.get("rules", [])]
    return bk.MockBackend(obj.get("replies", []), cycle=bool(obj.get("cycle", False)), rules=rules)


def build_backend(cfg: RunConfig) -> bk.ChatBackend:
    if cfg.backend == "mock":
        if not cfg.mock_script:
            raise SystemExit("mock backend needs --mock-script PATH")
        return load_mock_script(cfg.mock_script)
    if cfg.backend == "http":
        return bk.HttpBackend(default_params=cfg.sampling())
    raise SystemExit(f"unknown backend {cfg.backend!r}")


# ---------------------------------------------------------------------------
# Reports are pure functions of traces, so they can be regenerated offline
# from the stored JSONL byte-for-byte.


def tsp_iteration_report(trace: RunTrace, optimum: Optional[float] = None) -> str:
    if optimum is None:
        lines = ["iter,gbest_length"]
        lines += [f"{r.iteration},{r.gbest_score!r}" for r in trace.per_iteration]
    else:
        lines = ["iter,gbest_length,gap_frac,gap_pct"]
        for r in trace.per_iteration:
            frac = tsp.optimality_gap(r.gbest_score, optimum)
            lines.append(f"{r.iteration},{r.gbest_score!r},{frac!r},{100.0 * frac!r}")
    return "\n".join(lines) + "\n"


def symreg_iteration_report(trace: RunTrace, dataset: sr.Dataset) -> str:
    lines = ["iter,best_mae,best_r2,best_length,best_expr"]
    for r in trace.per_iteration:
        expr = sr.extract_expr(r.gbest_text, dataset.dim)
        rep = sr.fit_metrics(expr, dataset)
        r2 = "" if rep.r2 is None else repr(rep.r2)
        lines.append(f"{r.iteration},{r.gbest_score!r},{r2},{rep.length},\"{to_text(expr)}\"")
    return "\n".join(lines) + "\n"


def symreg_best_table(trace: RunTrace, dataset: sr.Dataset) -> str:
    lines = ["iter,best_expr"]
    for r in trace.per_iteration:
        expr = sr.extract_expr(r.gbest_text, dataset.dim)
        lines.append(f"{r.iteration},\"{to_text(expr)}\"")
    return "\n".join(lines) + "\n"


def heuristic_iteration_report(trace: RunTrace) -> str:
    lines = ["iter,best_total_distance"]
    lines += [f"{r.iteration},{r.gbest_score!r}" for r in trace.per_iteration]
    return "\n".join(lines) + "\n"


def gap_table(rows: dict[str, list[float]], value_name: str) -> str:
    """Per-method mean and population std over layouts."""
    lines = [f"method,mean_{value_name},std_{value_name}"]
    for method, values in rows.items():
        mean = statistics.fmean(values)
        std = statistics.pstdev(values) if len(values) > 1 else 0.0
        lines.append(f"{method},{mean!r},{std!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_tsp(cfg: RunConfig) -> int:
    n = cfg.n or {"tsp10": 10, "tsp20": 20, "tsp30": 30}.get(cfg.problem)
    if n is None:
        raise SystemExit("tsp needs --kind tsp10|tsp20|tsp30 or --n")
    out = _outdir(cfg)
    if cfg.instances:
        instances = [tsp.load_instance(path) for path in cfg.instances]
        n = instances[0].n
    else:
        instances = [
            tsp.generate_instance(n, substream(cfg.seed, f"instance:{n}:{k}"), name=f"layout-{k}")
            for k in range(cfg.layouts)
        ]

    optima: list[Optional[float]] = []
    for inst in instances:
        if cfg.no_gap:
            optima.append(None)
        else:
            try:
                optima.append(tsp.resolve_optimum(inst))
            except tsp.MissingOptimum as exc:
                raise SystemExit(f"{exc}\n(pass --no-gap to report raw lengths instead)") from exc

    gap_rows: dict[str, list[float]] = {}
    raw_lines = ["method,layout,length,optimum,gap_frac,gap_pct"]

    def record(method: str, k: int, length: float) -> None:
        opt = optima[k]
        if opt is None:
            gap_rows.setdefault(method, []).append(length)
            raw_lines.append(f"{method},{k},{length!r},,,")
        else:
            frac = tsp.optimality_gap(length, opt)
            gap_rows.setdefault(method, []).append(100.0 * frac)
            raw_lines.append(f"{method},{k},{length!r},{opt!r},{frac!r},{100.0 * frac!r}")

    for k, inst in enumerate(instances):
        for method in cfg.methods:
            if method == "nn":
                record(method, k, tsp.tour_length(inst, tsp.nearest_neighbor(inst)))
            elif method in ("ni", "fi", "ri"):
                mode = {"ni": "nearest", "fi": "farthest", "ri": "random"}[method]
                rng = substream(cfg.seed, f"{method}:{n}:{k}")
                record(method, k, tsp.tour_length(inst, tsp.insertion_heuristic(inst, mode, rng)))
            elif method == "pso":
                rng = substream(cfg.seed, f"pso:{n}:{k}")
                best, trace = tsp.swap_pso(inst, cfg.particles, cfg.iters, rng)
                record(method, k, tsp.tour_length(inst, best))
                trace.write_jsonl(out / f"trace_pso_layout{k}.jsonl")
                (out / f"report_pso_layout{k}.csv").write_text(
                    tsp_iteration_report(trace, optima[k]))
            elif method == "lmpso":
                adapter = tsp.TspAdapter(inst)
                chat = build_backend(cfg)
                gbest, trace = run(adapter, chat, cfg.swarm_config(f"swarm:{n}:{k}"),
                                   params=cfg.sampling())
                record(method, k, gbest.score)
                trace.write_jsonl(out / f"trace_lmpso_layout{k}.jsonl")
                (out / f"report_lmpso_layout{k}.csv").write_text(
                    tsp_iteration_report(trace, optima[k]))
            else:
                raise SystemExit(f"unknown method {method!r}")

    value_name = "length" if cfg.no_gap else "gap_pct"
    (out / "gap_table.csv").write_text(gap_table(gap_rows, value_name))
    (out / "raw_results.csv").write_text("\n".join(raw_lines) + "\n")
    print(f"wrote {out}/gap_table.csv over {cfg.layouts} layouts, n={n}")
    for method, values in gap_rows.items():
        mean = statistics.fmean(values)
        std = statistics.pstdev(values) if len(values) > 1 else 0.0
        print(f"  {method}: {value_name} {mean:.4f} +/- {std:.4f}")
    return 0


def cmd_symreg(cfg: RunConfig) -> int:
    if not cfg.dataset:
        raise SystemExit("symreg needs --dataset PATH (CSV, last column is the target)")
    out = _outdir(cfg)
    dataset = sr.load_csv(cfg.dataset)
    chat = build_backend(cfg)
    adapter = sr.SymregAdapter(dataset, backend=chat, seed=substream_seed(cfg.seed, "adapter"),
                               params=cfg.sampling())
    gbest, trace = run(adapter, chat, cfg.swarm_config("swarm:symreg"), params=cfg.sampling())

    trace.write_jsonl(out / "trace_symreg.jsonl")
    (out / "symreg_metrics.csv").write_text(symreg_iteration_report(trace, dataset))
    (out / "symreg_best_expressions.csv").write_text(symreg_best_table(trace, dataset))
    rep = sr.fit_metrics(gbest.decoded, dataset)
    print(f"best expression: {to_text(gbest.decoded)}")
    print(f"mae={rep.mae!r} r2={rep.r2!r} length={rep.length}")
    print(f"wrote {out}/symreg_metrics.csv")
    return 0


def cmd_heuristic(cfg: RunConfig) -> int:
    if not cfg.evaluator_cmd:
        raise SystemExit("heuristic needs --evaluator-cmd (the sandbox evaluator executable)")
    out = _outdir(cfg)
    instances = hx.benchmark_instances(cfg.seed, cfg.bench_count, cfg.bench_cities)
    seeds = load_seeds()

    with hx.EvaluatorClient(cfg.evaluator_cmd) as client:
        adapter = hx.HeuristicAdapter(instances, client, seeds)
        try:
            if cfg.seeds_only:
                lines = ["seed,total_distance"]
                for name in sorted(seeds):
                    resp = client.call(seeds[name], instances, adapter.timeout_s)
                    if resp.error is not None:
                        raise SystemExit(f"seed {name} failed evaluation: {resp.error}")
                    total = sum(resp.lengths)
                    lines.append(f"{name},{total!r}")
                    print(f"seed {name}: total distance {total:.2f}")
                (out / "seed_scores.csv").write_text("\n".join(lines) + "\n")
                return 0
            chat = build_backend(cfg)
            gbest, trace = run(adapter, chat, cfg.swarm_config("swarm:heuristic"),
                               params=cfg.sampling())
        except hx.EvaluatorDown as exc:
            raise SystemExit(f"evaluator unavailable: {exc}\n(cmd: {cfg.evaluator_cmd})") from exc

    trace.write_jsonl(out / "trace_heuristic.jsonl")
    (out / "heuristic_progress.csv").write_text(heuristic_iteration_report(trace))
    (out / "best_heuristic.py").write_text(gbest.decoded.source)
    print(f"best total distance {gbest.score:.2f} ({gbest.decoded.origin})")
    print(f"wrote {out}/best_heuristic.py")
    return 0


def cmd_oracle(instance_file: str, write_opt: bool = False) -> int:
    inst = tsp.load_instance(instance_file)
    try:
        optimum, tour = tsp.held_karp(inst)
    except tsp.TooLarge as exc:
        raise SystemExit(str(exc)) from exc
    print(f"optimum {optimum!r}")
    print(f"tour {tsp.format_route(tour)}")
    if write_opt:
        with open(instance_file, "a") as fh:
            fh.write(f"OPT {optimum!r}\n")
        print(f"appended OPT line to {instance_file}")
    return 0


def cmd_budget(kind: str) -> int:
    defaults = table_defaults(kind)
    queries = cost_model(defaults["particles"], defaults["iters"])
    print(f"{kind}: {defaults['particles']} particles x {defaults['iters']} iterations "
          f"= {queries} backend queries (excluding retries), "
          f"max tokens {defaults['max_tokens']}, temperature {defaults['temperature']}")
    return 0


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--backend", choices=["http", "mock"], default=None)
    p.add_argument("--mock-script", dest="mock_script", default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--particles", type=int, default=None)
    p.add_argument("--retry-limit", dest="retry_limit", type=int, default=None)
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)


def _overrides(args: argparse.Namespace, *names: str) -> dict:
    common = ["seed", "backend", "mock_script", "iters", "particles",
              "retry_limit", "max_tokens", "temperature", "model", "out"]
    return {name: getattr(args, name) for name in (*common, *names)}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="lmpso", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("tsp", help="route-finding: heuristics, swap-sequence PSO, and the swarm")
    _add_common(p)
    p.add_argument("--kind", choices=["tsp10", "tsp20", "tsp30"], default="tsp10")
    p.add_argument("--n", type=int, default=None, help="override the city count")
    p.add_argument("--layouts", type=int, default=None)
    p.add_argument("--methods", default=None,
                   help="comma list from nn,ni,fi,ri,pso,lmpso (default nn,ni,fi,ri)")
    p.add_argument("--no-gap", dest="no_gap", action="store_const", const=True, default=None,
                   help="report raw lengths instead of optimality gaps")

    p = sub.add_parser("symreg", help="symbolic regression over a CSV dataset")
    _add_common(p)
    p.add_argument("--dataset", default=None)

    p = sub.add_parser("heuristic", help="evolve TSP heuristic programs via the sandbox evaluator")
    _add_common(p)
    p.add_argument("--evaluator-cmd", dest="evaluator_cmd", default=None,
                   help="evaluator launch command (shell-style string)")
    p.add_argument("--bench-count", dest="bench_count", type=int, default=None)
    p.add_argument("--bench-cities", dest="bench_cities", type=int, default=None)
    p.add_argument("--seeds-only", dest="seeds_only", action="store_const", const=True,
                   default=None, help="score the four seed heuristics and exit")

    p = sub.add_parser("oracle", help="exact optimum for an instance file")
    p.add_argument("instance_file")
    p.add_argument("--write-opt", action="store_true")

    p = sub.add_parser("budget", help="print the query budget for a problem kind")
    p.add_argument("kind", choices=list(PROBLEM_KINDS))

    args = parser.parse_args(argv)

    if args.cmd == "oracle":
        return cmd_oracle(args.instance_file, args.write_opt)
    if args.cmd == "budget":
        return cmd_budget(args.kind)

    if args.cmd == "tsp":
        methods = args.methods.split(",") if args.methods else None
        cfg = load_config(args.kind, args.config, {
            **_overrides(args, "n", "layouts", "no_gap"),
            "methods": methods,
        })
        return cmd_tsp(cfg)
    if args.cmd == "symreg":
        cfg = load_config("symreg", args.config, _overrides(args, "dataset"))
        return cmd_symreg(cfg)
    if args.cmd == "heuristic":
        evaluator_cmd = args.evaluator_cmd.split() if args.evaluator_cmd else None
        cfg = load_config("heuristic", args.config, {
            **_overrides(args, "bench_count", "bench_cities", "seeds_only"),
            "evaluator_cmd": evaluator_cmd,
        })
        return cmd_heuristic(cfg)
    raise SystemExit(f"unknown command {args.cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
