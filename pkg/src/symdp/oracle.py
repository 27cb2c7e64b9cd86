"""Brute-force tabular value iteration over explicitly enumerated states.

This is the independent reference for the symbolic code: it reads the CPT
and reward *trees* directly and never touches a decision diagram. States are
indexed lexicographically with x1 as the most significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import HAVE_NUMBA, njit
from .dp import TIE_TOL
from .model import FactoredMdp, State, all_states, tree_eval

MAX_VARS = 16


@njit
def _expect_jit(p, v):
    # p[s, i] = P(x_i' = 1 | s); v over next states; returns E[v] per state
    n_states, n = p.shape
    out = np.empty(n_states)
    buf = np.empty(v.shape[0])
    for s in range(n_states):
        buf[:] = v
        size = v.shape[0]
        for i in range(n - 1, -1, -1):
            q = p[s, i]
            half = size // 2
            for k in range(half):
                buf[k] = q * buf[2 * k + 1] + (1.0 - q) * buf[2 * k]
            size = half
        out[s] = buf[0]
    return out


def _expect_numpy(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    n_states, n = p.shape
    w = np.broadcast_to(v, (n_states, v.shape[0])).reshape((n_states,) + (2,) * n)
    for i in range(n - 1, -1, -1):
        q = p[:, i].reshape((n_states,) + (1,) * i)
        w = q * w[..., 1] + (1.0 - q) * w[..., 0]
    return np.asarray(w, dtype=np.float64).reshape(n_states)


def expect_next(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    if HAVE_NUMBA:
        return _expect_jit(p, v)
    return _expect_numpy(p, v)


def tables(m: FactoredMdp) -> tuple[np.ndarray, np.ndarray]:
    """(probs[a, s, i], rewards[a, s]) read straight off the trees."""
    if m.n > MAX_VARS:
        raise ValueError(f"oracle limited to {MAX_VARS} variables, model has {m.n}")
    states = list(all_states(m.n))
    probs = np.array([[[tree_eval(t, s) for t in spec.cpt_trees] for s in states] for spec in m.actions])
    rewards = np.array([[tree_eval(spec.reward_tree, s) for s in states] for spec in m.actions])
    return probs.reshape(len(m.actions), len(states), m.n), rewards


def state_index(s: State) -> int:
    k = 0
    for b in s:
        k = 2 * k + int(b)
    return k


@dataclass
class OracleSolution:
    values: np.ndarray  # V*[state index]
    q: np.ndarray  # Q[a, state index]
    policy: np.ndarray  # greedy action per state, lowest index on ties
    iterations: int

    def value(self, s: State) -> float:
        return float(self.values[state_index(s)])

    def action(self, s: State) -> int:
        return int(self.policy[state_index(s)])


def bellman_q(probs, rewards, v, gamma) -> np.ndarray:
    return np.stack([rewards[a] + gamma * expect_next(probs[a], v) for a in range(len(rewards))])


def greedy(q: np.ndarray) -> np.ndarray:
    qmax = q.max(axis=0)
    floor = qmax - TIE_TOL * np.maximum(1.0, np.abs(qmax))
    return np.argmax(q >= floor, axis=0)


def oracle_value_iteration(
    m: FactoredMdp, residual: float = 1e-12, max_iterations: int = 1_000_000, v0: np.ndarray | None = None
) -> OracleSolution:
    probs, rewards = tables(m)
    v = np.zeros(1 << m.n) if v0 is None else np.array(v0, dtype=np.float64)
    for it in range(1, max_iterations + 1):
        q = bellman_q(probs, rewards, v, m.gamma)
        v_new = q.max(axis=0)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta <= residual:
            break
    else:
        raise RuntimeError("oracle value iteration did not converge")
    q = bellman_q(probs, rewards, v, m.gamma)
    return OracleSolution(v, q, greedy(q), it)


def single_state_backup(m: FactoredMdp, values: np.ndarray, s: State) -> np.ndarray:
    """Q_a(s) for every action from an explicit value table."""
    probs, rewards = tables(m)
    k = state_index(s)
    return np.array([rewards[a, k] + m.gamma * expect_next(probs[a, k:k + 1], values)[0] for a in range(len(m.actions))])


def successors(m: FactoredMdp, s: State) -> set[State]:
    """Every state reachable in one step from s with positive probability."""
    out = set()
    for spec in m.actions:
        p = [tree_eval(t, s) for t in spec.cpt_trees]
        choices = [[b for b in (0, 1) if (p[i] if b else 1.0 - p[i]) > 0.0] for i in range(m.n)]
        stack = [()]
        for c in choices:
            stack = [prefix + (b,) for prefix in stack for b in c]
        out.update(stack)
    return out
