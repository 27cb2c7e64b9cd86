"""RTDP, symbolic RTDP and symbolic LAO*, plus the simulator they act in."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dp import (
    MAX_ITERATIONS,
    ConvergenceError,
    Policy,
    _tie_sets,
    best_action,
    restricted_backup,
    merge_masked,
    state_q_values,
    sup_norm,
)
from .model import FactoredMdp, State, action_relation, reclaim
from .reach import generalize_reach, generalize_single, generalize_value


class GeneralizationError(AssertionError):
    """The abstract state built for s does not contain s."""


@dataclass
class StepRecord:
    trial: int
    step: int
    state: State
    action: int
    reward: float
    value: float  # V(s) right after the update
    v_start: float  # V(s0) right after the update
    cpu: float  # process seconds since the run started
    updated: int = 1  # size of the updated set's diagram (1 for RTDP)


@dataclass
class TrialLog:
    steps: list = field(default_factory=list)
    trial_rewards: list = field(default_factory=list)
    trial_v_start: list = field(default_factory=list)
    trial_cpu: list = field(default_factory=list)

    @property
    def n_trials(self) -> int:
        return len(self.trial_rewards)

    def trace(self) -> list[tuple]:
        return [(r.trial, r.step, r.state, r.action, r.value) for r in self.steps]


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def simulate_step(m: FactoredMdp, s: State, a, rng: np.random.Generator) -> tuple[State, float]:
    """Sample s' bit by bit from the CPTs at s; the reward is R^a(s)."""
    spec = m.actions[m.action_index(a)]
    p = m.mgr.eval_many(spec.cpts, s)
    u = rng.random(m.n)
    nxt = tuple(int(x) for x in (u < p))
    return nxt, m.mgr.eval(spec.reward, s)


class _Clock:
    def __init__(self):
        self.t0 = time.process_time()

    def __call__(self) -> float:
        return time.process_time() - self.t0


def _trials(m_env, m_plan, v, s0, n_trials, n_steps, rng, update, log=None, observe=None):
    """Shared trial loop. ``update(v, s) -> (v, action, updated_size)``;
    ``observe(s, a, s_next)`` sees every simulated transition."""
    if n_steps <= 0 and n_trials > 0:
        raise ValueError("n_steps must be positive")
    mgr = m_plan.mgr
    floor = mgr.node_count
    log = log if log is not None else TrialLog()
    clock = _Clock()
    for trial in range(n_trials):
        s = tuple(s0)
        total = 0.0
        for step in range(n_steps):
            v, a, size = update(v, s)
            vs = mgr.eval(v, s)
            s_next, r = simulate_step(m_env, s, a, rng)
            if observe is not None:
                observe(s, a, s_next)
            total += r
            log.steps.append(StepRecord(trial, step, s, a, r, vs, mgr.eval(v, s0), clock(), size))
            s = s_next
        log.trial_rewards.append(total)
        log.trial_v_start.append(mgr.eval(v, s0))
        log.trial_cpu.append(clock())
        mgr.clear_caches()
        (v,) = reclaim([m_env, m_plan], [v], floor)
    return v, log


def rtdp_update(m: FactoredMdp, v: int, s: State) -> tuple[int, int, int]:
    """Single-state backup at s; every other value is left alone."""
    q = state_q_values(m, v, s)
    a = best_action(q)
    return m.mgr.set_value(v, s, float(q[a])), a, 1


def run_rtdp(m: FactoredMdp, v0: int, s0: State, n_trials: int, n_steps: int, rng) -> tuple[int, TrialLog]:
    return _trials(m, m, v0, s0, n_trials, n_steps, rng, lambda v, s: rtdp_update(m, v, s))


def generalizer(m: FactoredMdp, mode: str, delta: float | None = None):
    """``Generalize(s, V)`` for mode 'value', 'reach' or 'single'."""
    if mode == "value":
        return lambda s, v: generalize_value(m, s, v, delta)
    if mode == "reach":
        return lambda s, v: generalize_reach(m, s)
    if mode == "single":
        return lambda s, v: generalize_single(m, s)
    raise ValueError(f"unknown generalization mode {mode!r}")


def srtdp_update(m: FactoredMdp, v: int, s: State, generalize) -> tuple[int, int, int]:
    """One step of the symbolic loop: abstract state, masked backup, merge."""
    mgr = m.mgr
    chi = generalize(s, v)
    if mgr.eval(chi, s) != 1.0:
        raise GeneralizationError(f"state {s} is not in its own abstract state")
    v_e, qs = restricted_backup(m, v, chi)
    q = mgr.eval_many(qs, s)
    a = best_action(q)
    return merge_masked(m, v, v_e, chi), a, mgr.size(chi)


def run_srtdp(
    m: FactoredMdp,
    v0: int,
    s0: State,
    n_trials: int,
    n_steps: int,
    rng,
    mode: str = "value",
    delta: float | None = None,
) -> tuple[int, TrialLog]:
    gen = generalizer(m, mode, delta)
    return _trials(m, m, v0, s0, n_trials, n_steps, rng, lambda v, s: srtdp_update(m, v, s, gen))


# ---------------------------------------------------------------- LAO*


@dataclass
class LaoResult:
    value: int
    policy: Policy
    envelope: int  # 0/1 diagram of the states updated
    history: list  # (cpu seconds, V(s0)) after each outer iteration
    backups: int


def _policy_image(m: FactoredMdp, v: int, chi: int) -> int:
    """Successors of chi under the greedy actions of V."""
    mgr = m.mgr
    _, qs = restricted_backup(m, v, chi)
    out = mgr.zero
    for a, part in enumerate(_tie_sets(m, qs, chi)):
        if part == mgr.zero:
            continue
        nxt = mgr.and_exists(part, action_relation(m, a), m.unprimed())
        out = mgr.bdd_or(out, mgr.swap_prime(nxt))
    return out


def greedy_envelope(m: FactoredMdp, v: int, s0: State) -> int:
    """States reachable from s0 when always following the greedy action."""
    mgr = m.mgr
    reached = mgr.cube(s0)
    frontier = reached
    while frontier != mgr.zero:
        nxt = _policy_image(m, v, frontier)
        frontier = mgr.bdd_diff(nxt, reached)
        reached = mgr.bdd_or(reached, frontier)
    return reached


def run_lao_star(
    m: FactoredMdp,
    v0: int,
    s0: State,
    tol: float = 1e-6,
    max_outer: int = 1000,
    max_backups: int = MAX_ITERATIONS,
) -> LaoResult:
    """Alternate greedy-envelope expansion and masked value iteration.

    The updated set only grows; the search stops once the greedy envelope of
    the converged values lies inside it. As with :func:`value_iteration`,
    only diagrams made before the call and the returned ones stay valid.
    """
    if m.gamma >= 1.0:
        raise ValueError("symbolic LAO* here needs discount < 1")
    mgr = m.mgr
    clock = _Clock()
    v = v0
    floor = mgr.node_count
    envelope = greedy_envelope(m, v, s0)
    history = []
    backups = 0
    for _ in range(max_outer):
        while True:
            v_e, _ = restricted_backup(m, v, envelope)
            v_next = merge_masked(m, v, v_e, envelope)
            residual = sup_norm(m, mgr.apply("sub", v_next, v))
            v, envelope = reclaim([m], [v_next, envelope], floor)
            backups += 1
            if residual <= tol:
                break
            if backups >= max_backups:
                raise ConvergenceError("masked value iteration hit the backup cap")
        history.append((clock(), mgr.eval(v, s0)))
        mgr.clear_caches()
        reach = greedy_envelope(m, v, s0)
        if mgr.bdd_diff(reach, envelope) == mgr.zero:
            _, qs = restricted_backup(m, v, envelope)
            return LaoResult(v, Policy(_tie_sets(m, qs, envelope)), envelope, history, backups)
        envelope = mgr.bdd_or(envelope, reach)
    raise ConvergenceError(f"envelope still changing after {max_outer} expansions")
