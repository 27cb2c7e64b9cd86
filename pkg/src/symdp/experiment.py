"""Experiment runner and CSV output.

One CSV row per trial for the trial-based planners and one per outer
iteration for value iteration and LAO*. Columns:
``algo,run,trial,cpu_ms,v_start,trial_reward``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .adaptive import DEFAULT_EPSILON, run_asrtdp
from .dp import DEFAULT_TOL, admissible_heuristic, value_iteration
from .generator import generate_problem
from .model import FactoredMdp, ModelError, load_model, validate_model
from .planners import TrialLog, run_lao_star, run_rtdp, run_srtdp

ALGORITHMS = ("vi", "lao", "rtdp", "srtdp-value", "srtdp-reach", "artdp", "asrtdp-value", "asrtdp-reach")
TRIAL_BASED = frozenset(ALGORITHMS) - {"vi", "lao"}
HEADER = ("algo", "run", "trial", "cpu_ms", "v_start", "trial_reward")


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algo: str
    model_path: str | None = None
    generate: tuple[int, int, int, int] | None = None  # seed, nVars, nActions, maxParents
    trials: int = 100
    steps: int = 20
    seed: int = 0
    delta: float | None = None
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    heuristic: str = "bound"
    runs: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ExperimentError(f"unknown algorithm {self.algo!r}; expected one of {', '.join(ALGORITHMS)}")
        if (self.model_path is None) == (self.generate is None):
            raise ExperimentError("give exactly one of a model file or a generator spec")
        if self.algo in TRIAL_BASED and self.steps <= 0:
            raise ExperimentError("steps must be positive")
        if self.trials < 0:
            raise ExperimentError("trials must be non-negative")
        if self.runs < 1:
            raise ExperimentError("runs must be at least 1")
        if self.heuristic not in ("bound", "future"):
            raise ExperimentError(f"unknown heuristic mode {self.heuristic!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ExperimentError("epsilon must lie in [0, 1]")
        if self.delta is not None and self.delta < 0:
            raise ExperimentError("delta must be non-negative")
        if self.tol <= 0:
            raise ExperimentError("tol must be positive")


@dataclass
class Row:
    algo: str
    run: int
    trial: int
    cpu_ms: float
    v_start: float
    trial_reward: float | None = None


def _num(x: float) -> str:
    return f"{x:.6g}"


def log_rows(log: TrialLog, algo: str = "", run: int = 0) -> list[Row]:
    """One row per trial of a trial log; trials are numbered from 1."""
    return [
        Row(algo, run, t + 1, 1000.0 * log.trial_cpu[t], log.trial_v_start[t], log.trial_rewards[t])
        for t in range(log.n_trials)
    ]


def emit_csv(log: TrialLog | Iterable[Row], path, algo: str = "", run: int = 0) -> None:
    """Write a trial log (or ready-made rows) as CSV with LF line endings.

    ``path`` may be a file path or an open text stream.
    """
    rows = log_rows(log, algo, run) if isinstance(log, TrialLog) else list(log)
    if hasattr(path, "write"):
        _write(rows, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write(rows, fh)


def _write(rows: list[Row], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        reward = "" if r.trial_reward is None else _num(r.trial_reward)
        w.writerow((r.algo, r.run, r.trial, _num(r.cpu_ms), _num(r.v_start), reward))


def csv_text(rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    _write(list(rows), buf)
    return buf.getvalue()


def load_problem(config: ExperimentConfig) -> FactoredMdp:
    """A fresh, validated model (and manager) for one run."""
    if config.model_path is None:
        seed, n_vars, n_actions, max_parents = config.generate
        return generate_problem(seed, n_vars, n_actions, max_parents)
    m = load_model(config.model_path)
    report = validate_model(m)
    if not report.ok:
        raise ModelError(f"{config.model_path}: invalid model\n{report}")
    return m


def run_rngs(seed: int, runs: int) -> list[np.random.Generator]:
    """Independent streams; run r's stream does not depend on ``runs``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(runs)]


def run_once(m: FactoredMdp, config: ExperimentConfig, run: int, rng: np.random.Generator) -> list[Row]:
    algo = config.algo
    mgr = m.mgr
    s0 = m.start
    if algo == "vi":
        rows = []
        t0 = time.process_time()

        def record(it, v):
            rows.append(Row(algo, run, it, 1000.0 * (time.process_time() - t0), mgr.eval(v, s0)))

        value_iteration(m, tol=config.tol, callback=record)
        return rows
    if algo == "lao":
        h = admissible_heuristic(m, config.heuristic)
        res = run_lao_star(m, h, s0, tol=config.tol)
        return [Row(algo, run, k + 1, 1000.0 * cpu, v) for k, (cpu, v) in enumerate(res.history)]
    if algo in ("rtdp", "srtdp-value", "srtdp-reach"):
        h = admissible_heuristic(m, config.heuristic)
        if algo == "rtdp":
            _, log = run_rtdp(m, h, s0, config.trials, config.steps, rng)
        else:
            mode = algo.split("-")[1]
            _, log = run_srtdp(m, h, s0, config.trials, config.steps, rng, mode=mode, delta=config.delta)
        return log_rows(log, algo, run)
    mode = {"artdp": "single", "asrtdp-value": "value", "asrtdp-reach": "reach"}[algo]
    _, log = run_asrtdp(m, s0, config.trials, config.steps, config.epsilon, rng, mode=mode, delta=config.delta)
    return log_rows(log, algo, run)


def run_experiment(config: ExperimentConfig) -> list[Row]:
    """Run every replica in run-index order, each on its own model and
    manager, and write the CSV to ``config.out`` when set."""
    rows = []
    for run, rng in enumerate(run_rngs(config.seed, config.runs)):
        rows.extend(run_once(load_problem(config), config, run, rng))
    if config.out is not None:
        emit_csv(rows, config.out)
    return rows


__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "ExperimentError",
    "Row",
    "csv_text",
    "emit_csv",
    "load_problem",
    "log_rows",
    "run_experiment",
    "run_once",
    "run_rngs",
]
