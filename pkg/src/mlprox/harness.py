"""Run configuration, experiment orchestration and history/solution export."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problems import PROBLEMS, make_problem
from .smooth import Counters
from .spg import SPGParams
from .trust_region import CompositeObjective, SolveResult, TRParams, rmntr, solve_single_level

__all__ = [
    "RunConfig",
    "RunReport",
    "HISTORY_COLUMNS",
    "load_config",
    "run",
    "compare",
    "history_csv",
    "write_solution_csv",
    "table_header",
]

HISTORY_COLUMNS = ("level", "k", "h", "delta", "rho", "kind", "class", "F")
_TOP_KEYS = {"problem", "n", "seed", "levels", "options", "tr", "spg", "output"}
_OUTPUT_KEYS = {"dir", "history", "solution"}


@dataclass
class RunConfig:
    problem: str
    levels: int = 1
    seed: int | None = None
    n: int | None = None
    options: dict = field(default_factory=dict)
    tr: dict = field(default_factory=dict)
    spg: dict = field(default_factory=dict)
    out_dir: str | None = None
    history: str = "history.csv"
    solution: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if not isinstance(self.levels, int) or self.levels < 1:
            raise ValueError("levels must be a positive integer")
        # Fail early on bad solver settings.
        self.tr_params()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        extra = set(d) - _TOP_KEYS
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "problem" not in d:
            raise ValueError("config needs a 'problem' entry")
        out = dict(d.get("output", {}))
        bad = set(out) - _OUTPUT_KEYS
        if bad:
            raise ValueError(f"unknown output keys: {sorted(bad)}")
        return cls(
            problem=d["problem"],
            levels=d.get("levels", 1),
            seed=d.get("seed"),
            n=d.get("n"),
            options=dict(d.get("options", {})),
            tr=dict(d.get("tr", {})),
            spg=dict(d.get("spg", {})),
            out_dir=out.get("dir"),
            history=out.get("history", "history.csv"),
            solution=out.get("solution"),
        )

    def to_dict(self) -> dict:
        d = {"problem": self.problem, "levels": self.levels}
        if self.n is not None:
            d["n"] = self.n
        if self.seed is not None:
            d["seed"] = self.seed
        for key in ("options", "tr", "spg"):
            if getattr(self, key):
                d[key] = getattr(self, key)
        out = {"history": self.history}
        if self.out_dir is not None:
            out["dir"] = self.out_dir
        if self.solution is not None:
            out["solution"] = self.solution
        d["output"] = out
        return d

    def problem_options(self) -> dict:
        opts = dict(self.options)
        if self.n is not None:
            opts["n"] = self.n
        if self.seed is not None:
            opts["seed"] = self.seed
        return opts

    def tr_params(self) -> TRParams:
        tr = dict(self.tr)
        if "spg" in tr:
            raise ValueError("put SPG settings in the top-level 'spg' section")
        try:
            return TRParams(**tr, spg=SPGParams(**self.spg))
        except TypeError as err:
            raise ValueError(f"bad solver settings: {err}") from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh))


def table_header() -> str:
    return f"{'Example':<11}{'DoF':>9}{'levels':>8}{'iter':>7}{'fval':>7}{'grad':>7}{'hess':>8}{'phi':>8}{'prox':>8}{'time':>9}"


@dataclass
class RunReport:
    problem: str
    label: str
    dof: int
    levels: int
    iter: int
    fval: int
    grad: int
    hess: int
    phi: int
    prox: int
    time_seconds: float
    status: str
    h: float
    F: float
    history: str
    history_path: str | None = None
    result: SolveResult | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def table_row(self) -> str:
        return (
            f"{self.label:<11}{self.dof:>9,}{self.levels:>8}{self.iter:>7}{self.fval:>7}{self.grad:>7}"
            f"{self.hess:>8}{self.phi:>8}{self.prox:>8}{self.time_seconds:>9.1f}"
        )

    def summary(self) -> dict:
        keys = ("problem", "dof", "levels", "iter", "fval", "grad", "hess", "phi", "prox", "time_seconds", "status", "h", "F")
        return {k: getattr(self, k) for k in keys}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def history_csv(rows) -> str:
    """History table as text: UTF-8 friendly, LF line endings, shortest round-trip floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r.csv_fields()])
    return buf.getvalue()


def write_solution_csv(path, columns: dict):
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def run(config: RunConfig) -> RunReport:
    problem = make_problem(config.problem, **config.problem_options())
    params = config.tr_params()
    counters = Counters()
    stack = problem.build_stack(config.levels, counters)
    top = stack[stack.r]
    x0 = problem.initial_point()
    counters.reset()
    t0 = time.perf_counter()
    if config.levels == 1:
        res = solve_single_level(CompositeObjective(top.smooth, top.phi), x0, params)
    else:
        res = rmntr(stack, x0, params, counters=counters)
    elapsed = time.perf_counter() - t0

    text = history_csv(res.trace.rows)
    hist_path = None
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        hist_path = out / config.history
        hist_path.write_bytes(text.encode("utf-8"))
        if config.solution:
            write_solution_csv(out / config.solution, problem.solution_columns(res.x))
    c = res.counters
    return RunReport(
        problem=config.problem,
        label=problem.label,
        dof=top.dim,
        levels=config.levels,
        iter=res.iterations,
        fval=c.fval,
        grad=c.grad,
        hess=c.hess,
        phi=c.phi,
        prox=c.prox,
        time_seconds=elapsed,
        status=res.status,
        h=res.h,
        F=res.F,
        history=text,
        history_path=str(hist_path) if hist_path else None,
        result=res,
    )


def _fine_history(report: RunReport):
    res = report.result
    top = res.trace.level_rows(report.levels - 1)
    return [(r.k, r.F, r.h) for r in top]


def compare(config_a: RunConfig, config_b: RunConfig) -> dict:
    """Run both configurations and align their fine-level histories by iteration."""
    if config_a.problem != config_b.problem:
        raise ValueError(f"cannot compare different problems: {config_a.problem} vs {config_b.problem}")
    if config_a.problem_options() != config_b.problem_options():
        raise ValueError("configurations must share problem options and seed")
    ra = run(config_a)
    rb = run(config_b)
    ha, hb = _fine_history(ra), _fine_history(rb)
    rows = []
    for k in range(max(len(ha), len(hb))):
        a = ha[k] if k < len(ha) else (k, math.nan, math.nan)
        b = hb[k] if k < len(hb) else (k, math.nan, math.nan)
        rows.append({"k": k, "F_a": a[1], "F_b": b[1], "h_a": a[2], "h_b": b[2]})
    ratio = rb.iter / ra.iter if ra.iter else math.nan
    return {"a": ra, "b": rb, "rows": rows, "ratio": ratio}
