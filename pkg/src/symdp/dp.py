"""Bellman backups on decision diagrams.

Value functions, Q functions and state sets are diagrams (node ids) in the
model's manager. The expectation over next states is taken one next-state
variable at a time: multiply in that variable's transition factor, then sum
it out. Only next-state variables the value function actually depends on are
visited; the others contribute a factor that sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dd import DiagramError
from .model import FactoredMdp, State, action_factor, action_transition, reclaim
from .reach import img, mask

TIE_TOL = 1e-10
DEFAULT_TOL = 1e-6
MAX_ITERATIONS = 100_000


class ConvergenceError(RuntimeError):
    pass


def best_action(q: np.ndarray) -> int:
    """Lowest index whose value is within the tie tolerance of the maximum."""
    qmax = float(np.max(q))
    floor = qmax - TIE_TOL * max(1.0, abs(qmax))
    return int(np.argmax(q >= floor))


def expected_next(m: FactoredMdp, a, vp: int, chi: int | None = None) -> int:
    """sum over X' of P^a(X, X') * vp(X'), where vp is over primed variables.

    With ``chi`` (a set over current-state variables) the result is computed
    only inside the set and is 0 outside it; multiplying the set in first
    keeps the intermediate diagrams small.
    """
    mgr = m.mgr
    if mgr.has_unprimed(vp):
        raise DiagramError("expected_next needs a diagram over next-state variables only")
    w = vp if chi is None else mgr.mul(chi, vp)
    for v in reversed(mgr.support(vp)):
        w = mgr.mul_sum_abstract(action_factor(m, a, v // 2), w, [v])
    return w


def expected_next_monolithic(m: FactoredMdp, a, vp: int) -> int:
    """Same quantity through the full transition diagram (reference route)."""
    return m.mgr.mul_sum_abstract(action_transition(m, a), vp, m.primed())


def _q(m: FactoredMdp, a, vp: int, chi: int | None, monolithic: bool = False, early: bool = False) -> int:
    """Q_a over the whole space, or masked by chi when given.

    ``early`` pushes the mask into the expectation, which pays off when chi
    is small (a cube or close to one) and hurts when it is complicated.
    """
    mgr = m.mgr
    spec = m.actions[m.action_index(a)]
    if monolithic:
        nxt = expected_next_monolithic(m, a, vp)
    else:
        nxt = expected_next(m, a, vp, chi if early else None)
    if chi is None:
        return mgr.add(spec.reward, mgr.scale(nxt, m.gamma))
    if early:
        return mgr.add(mgr.mul(spec.reward, chi), mgr.scale(nxt, m.gamma))
    return mgr.mul(mgr.add(spec.reward, mgr.scale(nxt, m.gamma)), chi)


def _fold_max(m: FactoredMdp, qs: list[int]) -> int:
    v = qs[0]
    for q in qs[1:]:
        v = m.mgr.maximum(v, q)
    return v


def _backup(m: FactoredMdp, vp: int, chi: int | None = None, early: bool = False) -> tuple[int, list[int]]:
    rewards = [spec.reward for spec in m.actions]
    return m.mgr.bellman(vp, rewards, lambda a, v: action_factor(m, a, v // 2), m.gamma, chi, early)


def _backup_reference(m: FactoredMdp, vp: int, chi: int | None = None, early: bool = False, monolithic: bool = False):
    """The same backup one diagram operation at a time."""
    qs = [_q(m, a, vp, chi, monolithic, early) for a in range(len(m.actions))]
    return _fold_max(m, qs), qs


def spudd_backup(m: FactoredMdp, v: int, monolithic: bool = False) -> tuple[int, list[int]]:
    """Full-space Bellman backup. Returns the new value function and the Q
    diagram of every action."""
    vp = m.mgr.swap_prime(v)
    if monolithic:
        return _backup_reference(m, vp, monolithic=True)
    return _backup(m, vp)


def masked_backup(m: FactoredMdp, v: int, chi: int, succ: int | None = None) -> tuple[int, list[int], int]:
    """Backup restricted to the set chi.

    Rewards and Q functions are masked by chi, the successor values by the
    one-step image of chi. Returns (V_E, masked Q diagrams, image); V_E is
    zero outside chi.
    """
    mgr = m.mgr
    if chi == mgr.zero:
        raise ValueError("masked backup over an empty set")
    if succ is None:
        succ = img(m, chi)
    vp = mask(m, mgr.swap_prime(v), succ, primed=True)
    v_e, qs = _backup(m, vp, chi)
    return v_e, qs, succ


def restricted_backup(m: FactoredMdp, v: int, chi: int) -> tuple[int, list[int]]:
    """Same V_E and Q diagrams as :func:`masked_backup`, without the image.

    Inside chi every successor outside the image has probability 0, so the
    successor mask changes nothing; skipping it keeps the successor values
    over the few variables V depends on.
    """
    mgr = m.mgr
    if chi == mgr.zero:
        raise ValueError("masked backup over an empty set")
    return _backup(m, mgr.swap_prime(v), chi, early=mgr.size(chi) <= 2 * m.n + 2)


def merge_masked(m: FactoredMdp, v_old: int, v_e: int, chi: int) -> int:
    """V_E inside chi, the old values outside."""
    mgr = m.mgr
    return mgr.add(v_e, mgr.mul(v_old, mgr.bdd_not(chi)))


def state_q_values(m: FactoredMdp, v: int, s: State) -> np.ndarray:
    """Q_a(s) for every action by direct evaluation at one state."""
    mgr = m.mgr
    n = m.n
    rewards = mgr.eval_many([spec.reward for spec in m.actions], s)
    cpts = [c for spec in m.actions for c in spec.cpts]
    p = mgr.eval_many(cpts, s).reshape(len(m.actions), n)
    probs = np.zeros((len(m.actions), 2 * n + 1))
    probs[:, 0:2 * n:2] = p
    return rewards + m.gamma * mgr.expectation(v, probs)


def greedy_action(m: FactoredMdp, v: int, s: State, qs: list[int] | None = None) -> tuple[int, np.ndarray]:
    """Maximizing action at s (lowest index on ties) and all Q values there.

    Uses the given Q diagrams when present, else evaluates directly.
    """
    if qs is not None:
        q = m.mgr.eval_many(qs, s)
    else:
        q = state_q_values(m, v, s)
    return best_action(q), q


def sup_norm(m: FactoredMdp, f: int) -> float:
    leaves = m.mgr.leaves(f)
    return max(abs(leaves[0]), abs(leaves[-1]))


def value_iteration(
    m: FactoredMdp,
    v0: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_ITERATIONS,
    callback=None,
) -> tuple[int, int]:
    """Repeat full backups until successive values differ by at most tol.

    Returns (V, number of backups). ``callback(iteration, V)`` runs after
    every backup. Diagrams created while this runs may be reclaimed, so
    only ids made before the call (and the result) stay valid.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if m.gamma >= 1.0 and m.absorbing is None:
        raise ValueError("discount 1 needs an absorbing goal state")
    mgr = m.mgr
    v = mgr.zero if v0 is None else v0
    floor = mgr.node_count
    for it in range(1, max_iterations + 1):
        v_new, _ = spudd_backup(m, v)
        residual = sup_norm(m, mgr.apply("sub", v_new, v))
        (v,) = reclaim([m], [v_new], floor)
        if callback is not None:
            callback(it, v)
        if residual <= tol:
            return v, it
    raise ConvergenceError(f"no convergence to {tol} within {max_iterations} backups")


@dataclass
class Policy:
    """One state set per action; the sets are disjoint and cover the domain."""

    sets: list

    def action_at(self, m: FactoredMdp, s: State) -> int:
        for a, chi in enumerate(self.sets):
            if m.mgr.eval(chi, s) == 1.0:
                return a
        raise KeyError(s)


def _tie_sets(m: FactoredMdp, qs: list[int], domain: int) -> list[int]:
    mgr = m.mgr
    best = _fold_max(m, qs)
    mag = mgr.maximum(mgr.maximum(best, mgr.apply("sub", mgr.zero, best)), mgr.one)
    slack = mgr.add(best, mgr.scale(mag, -TIE_TOL))
    remaining = domain
    sets = []
    for q in qs:
        ok = mgr.threshold_to_bdd(mgr.apply("sub", q, slack), 0.0, math.inf)
        pick = mgr.bdd_and(ok, remaining)
        sets.append(pick)
        remaining = mgr.bdd_diff(remaining, pick)
    return sets


def extract_policy(m: FactoredMdp, v: int) -> Policy:
    """Greedy policy of V over the whole state space."""
    _, qs = spudd_backup(m, v)
    return Policy(_tie_sets(m, qs, m.mgr.one))


def admissible_heuristic(m: FactoredMdp, mode: str = "bound") -> int:
    """Constant upper bound on V*.

    ``bound``: r_max / (1 - gamma). ``future``: r_max * gamma / (1 - gamma),
    which drops the immediate reward and can sit below V*. Negative r_max
    is clamped to 0.
    """
    if m.gamma >= 1.0:
        raise ValueError("no constant heuristic for discount 1")
    r_max = max(0.0, max(m.mgr.max_leaf(spec.reward) for spec in m.actions))
    if mode == "bound":
        return m.mgr.const(r_max / (1.0 - m.gamma))
    if mode == "future":
        return m.mgr.const(r_max * m.gamma / (1.0 - m.gamma))
    raise ValueError(f"unknown heuristic mode {mode!r}")
