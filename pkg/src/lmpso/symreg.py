"""Symbolic regression: datasets, fit metrics, and the swarm adapter.

The objective is mean absolute error over the full dataset; brevity pressure
lives in the prompt only, never in the score. Replies are mined for the last
line that parses as an expression, preferring fenced code blocks.
"""

from __future__ import annotations

import csv
import io
import math
import random
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .backend import ChatBackend, ChatMessage, MetaPrompt, SamplingParams
from .expr import (
    EvalNotes,
    Expr,
    ParseError,
    UnknownFunction,
    UnknownVariable,
    depth,
    eval_expr,
    node_count,
    parse_expr,
    to_text,
)
from .swarm import (
    Candidate,
    ConstraintViolation,
    ParseFailure,
    ProbeFailure,
    ProblemAdapter,
    VelocityPrompt,
)

MAX_DEPTH = 30
MAX_NODES = 500
SAMPLE_SIZE = 20
PROBE_ROWS = 5

# Operator vocabulary advertised in prompts (the parser accepts a few more
# because generated solutions use them, but we never suggest those).
ADVERTISED_OPS = "addition, subtraction, multiplication, division, log, sqrt, abs, neg, inv, max, and min"


class SchemaError(Exception):
    def __init__(self, row: int, col: int, message: str):
        self.row = row
        self.col = col
        super().__init__(f"row {row}, column {col}: {message}")


@dataclass
class Dataset:
    X: list[list[float]]
    y: list[float]
    name: str = ""

    def __post_init__(self) -> None:
        if len(self.X) != len(self.y):
            raise ValueError("X and y must have the same number of rows")
        if not self.X:
            raise ValueError("dataset must not be empty")
        dims = {len(row) for row in self.X}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("all rows must share one feature count >= 1")
        for row in self.X:
            for v in row:
                if not math.isfinite(v):
                    raise ValueError("features must be finite")
        for v in self.y:
            if not math.isfinite(v):
                raise ValueError("targets must be finite")

    @property
    def dim(self) -> int:
        return len(self.X[0])

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class FitReport:
    mae: float
    r2: Optional[float]  # None when the target is constant (undefined)
    length: int


def predictions(expr: Expr, dataset: Dataset) -> list[float]:
    return [eval_expr(expr, row) for row in dataset.X]


def mean_absolute_error(expr: Expr, dataset: Dataset) -> float:
    """May return inf when predictions are astronomically large (still ordered
    worse than every finite score); adapters reject such candidates."""
    total = 0.0
    for row, target in zip(dataset.X, dataset.y):
        total += abs(eval_expr(expr, row) - target)
    return total / len(dataset)


def fit_metrics(expr: Expr, dataset: Dataset) -> FitReport:
    """MAE, coefficient of determination about the target mean, and node count.

    Residual squares are formed by multiplication so extreme predictions
    overflow to inf (r2 -> -inf) instead of raising.
    """
    preds = predictions(expr, dataset)
    n = len(dataset)
    mae = sum(abs(p - t) for p, t in zip(preds, dataset.y)) / n
    mean_y = sum(dataset.y) / n
    ss_tot = 0.0
    for t in dataset.y:
        d = t - mean_y
        ss_tot += d * d
    if ss_tot == 0.0:
        r2: Optional[float] = None
    else:
        ss_res = 0.0
        for p, t in zip(preds, dataset.y):
            d = p - t
            ss_res += d * d
        r2 = 1.0 - ss_res / ss_tot
    return FitReport(mae=mae, r2=r2, length=node_count(expr))


def load_csv(path) -> Dataset:
    """Header row, comma or tab delimited, last column is the target."""
    with open(path, newline="") as fh:
        text = fh.read()
    return parse_csv(text, name=str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0])


def parse_csv(text: str, name: str = "") -> Dataset:
    first_line = text.split("\n", 1)[0]
    delimiter = "\t" if "\t" in first_line else ","
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    rows = [row for row in reader if any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise SchemaError(1, 1, "no data rows below the header")
    width = len(rows[0])
    if width < 2:
        raise SchemaError(1, 1, "need at least one feature column and one target column")
    X: list[list[float]] = []
    y: list[float] = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise SchemaError(r, len(row), f"expected {width} cells, found {len(row)}")
        vals = []
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(r, c, f"non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise SchemaError(r, c, f"non-finite cell {cell!r}")
            vals.append(v)
        X.append(vals[:-1])
        y.append(vals[-1])
    return Dataset(X, y, name=name)


# ---------------------------------------------------------------------------
# Swarm adapter

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_expr(text: str, dim: int) -> Expr:
    """Mine a reply for its expression: last parseable line wins, fenced
    blocks are searched first. Out-of-range variables are a violation, not prose."""
    pools = [m.group(1) for m in _FENCE.finditer(text)]
    pools.append(_FENCE.sub("", text))
    for pool in pools:
        for line in reversed(pool.splitlines()):
            line = line.strip().rstrip(".;")
            # models often write "y = <expr>" or "f(x0, x1) = <expr>"
            m = re.match(r"(?i)(?:y|f\s*\([^)]*\))\s*=\s*(.+)$", line)
            if m:
                line = m.group(1).strip()
            if not line:
                continue
            try:
                return parse_expr(line, dim)
            except UnknownVariable as exc:
                if re.fullmatch(r"[xX]\d+", exc.name):
                    raise ConstraintViolation(str(exc)) from exc
                continue
            except (ParseError, UnknownFunction):
                continue
    raise ParseFailure("no line of the reply parses as an expression")


VELOCITY_TEMPLATE = (
    "Your best expression so far is {pbest} with mean absolute error {pbest_mae:.6g}. "
    "The best expression found by the swarm is {gbest} with mean absolute error {gbest_mae:.6g}. "
    "Generate a new expression influenced by both, with a lower mean absolute error "
    "on the data. Keep it short. Sample data points:\n{sample}\n"
    "Reply with a single mathematical expression."
)


def format_sample(X: Sequence[Sequence[float]], y: Sequence[float]) -> str:
    lines = []
    for row, target in zip(X, y):
        feats = ", ".join(f"x{i}={v:g}" for i, v in enumerate(row))
        lines.append(f"({feats}) -> y={target:g}")
    return "\n".join(lines)


class SymregAdapter(ProblemAdapter):
    """Searches expression space for a low-MAE fit to a dataset.

    Initial positions are produced by prompting the backend with the task
    description alone; iteration prompts embed the personal and global best
    expressions plus a fresh 20-point sample per velocity construction.
    """

    def __init__(
        self,
        dataset: Dataset,
        backend: Optional[ChatBackend] = None,
        seed: int = 0,
        sample_size: int = SAMPLE_SIZE,
        params: Optional[SamplingParams] = None,
        velocity_template: str = VELOCITY_TEMPLATE,
    ):
        self.dataset = dataset
        self.backend = backend
        self.sample_size = min(sample_size, len(dataset))
        self.params = params
        self.velocity_template = velocity_template
        self._describe_rng = random.Random(seed)
        self._sample_rng = random.Random(seed + 1)
        self._describe_sample = self._draw_sample(self._describe_rng)

    def _draw_sample(self, rng: random.Random) -> str:
        idx = rng.sample(range(len(self.dataset)), self.sample_size)
        return format_sample([self.dataset.X[i] for i in idx], [self.dataset.y[i] for i in idx])

    def describe(self) -> str:
        return (
            "You are solving a symbolic regression task: find a mathematical "
            f"expression over the variables x0..x{self.dataset.dim - 1} that fits "
            "the data points below as closely as possible (lowest mean absolute "
            f"error). You may use these operators if necessary: {ADVERTISED_OPS}. "
            "Produce diverse candidate expressions; shorter expressions are "
            f"preferable.\nData points:\n{self._describe_sample}"
        )

    def initial_position(self, rng: random.Random) -> Candidate:
        if self.backend is None:
            raise ValueError("symreg adapter needs a backend to generate initial expressions")
        prompt = MetaPrompt([
            ChatMessage("system", self.describe()),
            ChatMessage("user", "Generate an expression that fits the data points. "
                                "Reply with a single mathematical expression."),
        ])
        text = self.backend.complete(prompt, self.params)
        decoded = self.parse_and_validate(text)
        return Candidate(text=text, decoded=decoded, score=self.evaluate(decoded))

    def construct_velocity(self, pbest: Candidate, gbest: Candidate) -> VelocityPrompt:
        return VelocityPrompt(self.velocity_template.format(
            pbest=to_text(pbest.decoded), pbest_mae=pbest.score,
            gbest=to_text(gbest.decoded), gbest_mae=gbest.score,
            sample=self._draw_sample(self._sample_rng),
        ))

    def format_position(self, candidate: Candidate) -> str:
        return to_text(candidate.decoded)

    def parse_and_validate(self, text: str) -> Expr:
        expr = extract_expr(text, self.dataset.dim)
        if depth(expr) > MAX_DEPTH:
            raise ConstraintViolation(f"expression deeper than {MAX_DEPTH}")
        if node_count(expr) > MAX_NODES:
            raise ConstraintViolation(f"expression larger than {MAX_NODES} nodes")
        probe = self.dataset.X[:PROBE_ROWS]
        clean = 0
        for row in probe:
            notes = EvalNotes()
            eval_expr(expr, row, notes)
            if notes.fallbacks == 0:
                clean += 1
        if probe and clean == 0:
            raise ProbeFailure("every probe evaluation hit a protection fallback")
        return expr

    def evaluate(self, decoded: Expr) -> float:
        mae = mean_absolute_error(decoded, self.dataset)
        if not math.isfinite(mae):
            raise ConstraintViolation("objective overflowed; expression is unusable")
        return mae


def symreg_adapter(dataset: Dataset, backend: Optional[ChatBackend] = None,
                   seed: int = 0, **kwargs) -> SymregAdapter:
    return SymregAdapter(dataset, backend=backend, seed=seed, **kwargs)
