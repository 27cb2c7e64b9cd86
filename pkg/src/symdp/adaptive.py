"""Adaptive RTDP and adaptive symbolic RTDP.

The CPT structure (which variables each CPT tests) and the rewards are taken
from the true model; the CPT probabilities are learned from observed
transitions with add-one smoothing. Planning uses the estimated model, while
simulation and logged rewards always use the true one.
"""

from __future__ import annotations

import numpy as np

from .dp import greedy_action
from .model import FactoredMdp, State, Tree, replace_cpt, replace_cpt_diagrams, tree_vars
from .planners import TrialLog, _trials, generalizer, rtdp_update, srtdp_update

DEFAULT_EPSILON = 0.1


class TransitionCounts:
    """N+(a, i, u) and N(a, i, u) for every action a, variable i and
    assignment u to the parents of x_i' under a.

    u numbers parent assignments with the lowest-indexed parent as the most
    significant bit. Each action keeps its counts in one flat array, variable
    i occupying ``offsets[a][i]`` to ``offsets[a][i + 1]``.
    """

    def __init__(self, parents: list):
        self.parents = parents  # parents[a][i] = sorted parent variable indices
        self.offsets, self.hits, self.totals = [], [], []
        self._cols, self._weights, self._vars, self._var_off = [], [], [], []
        for row in parents:
            n = len(row)
            sizes = np.array([1 << len(p) for p in row], dtype=np.int64)
            off = np.zeros(n + 1, dtype=np.int64)
            off[1:] = np.cumsum(sizes)
            self.offsets.append(off)
            self.hits.append(np.zeros(off[-1], dtype=np.int64))
            self.totals.append(np.zeros(off[-1], dtype=np.int64))
            width = max((len(p) for p in row), default=0)
            # padding reads a constant 0 appended after the state
            cols = np.full((n, width), n, dtype=np.int64)
            weights = np.zeros((n, width), dtype=np.int64)
            for i, p in enumerate(row):
                cols[i, :len(p)] = p
                weights[i, :len(p)] = 1 << np.arange(len(p) - 1, -1, -1)
            self._cols.append(cols)
            self._weights.append(weights)
            self._vars.append(np.array([2 * v for p in row for v in p], dtype=np.int64))
            var_off = np.zeros(n + 1, dtype=np.int64)
            var_off[1:] = np.cumsum([len(p) for p in row])
            self._var_off.append(var_off)

    @classmethod
    def for_model(cls, m: FactoredMdp) -> "TransitionCounts":
        return cls([[sorted(tree_vars(t)) for t in spec.cpt_trees] for spec in m.actions])

    def config(self, a: int, i: int, s: State) -> int:
        u = 0
        for v in self.parents[a][i]:
            u = 2 * u + int(s[v])
        return u

    def slots(self, a: int, s: State) -> np.ndarray:
        """Flat index of (i, config(a, i, s)) for every variable i."""
        ext = np.append(np.asarray(s, dtype=np.int64), 0)
        return self.offsets[a][:-1] + (ext[self._cols[a]] * self._weights[a]).sum(axis=1)

    def action_estimates(self, a: int) -> np.ndarray:
        """Smoothed P(x_i' = 1 | u) for all (i, u) of action a, flat."""
        return (self.hits[a] + 1) / (self.totals[a] + 2)

    def estimates(self, a: int, i: int) -> np.ndarray:
        """Smoothed P(x_i' = 1 | u) for every parent assignment u."""
        lo, hi = self.offsets[a][i], self.offsets[a][i + 1]
        return (self.hits[a][lo:hi] + 1) / (self.totals[a][lo:hi] + 2)

    def estimate(self, a: int, i: int, u: int) -> float:
        return float(self.estimates(a, i)[u])

    def count(self, a: int, i: int, u: int) -> tuple[int, int]:
        """(N+, N) for one parent assignment."""
        k = self.offsets[a][i] + u
        return int(self.hits[a][k]), int(self.totals[a][k])


def record_transition(counts: TransitionCounts, a: int, s: State, s_next: State) -> None:
    k = counts.slots(a, s)
    counts.totals[a][k] += 1
    counts.hits[a][k] += np.asarray(s_next, dtype=np.int64)


def _tree(parents: list, leaves: np.ndarray, depth: int = 0, u: int = 0) -> Tree:
    if depth == len(parents):
        return float(leaves[u])
    return (parents[depth], _tree(parents, leaves, depth + 1, 2 * u + 1), _tree(parents, leaves, depth + 1, 2 * u))


def estimated_tree(counts: TransitionCounts, a: int, i: int) -> Tree:
    """Full decision tree over the parents of x_i' with smoothed leaves."""
    return _tree(counts.parents[a][i], counts.estimates(a, i))


def estimate_cpts(counts: TransitionCounts, m_true: FactoredMdp) -> FactoredMdp:
    """Estimated model: learned CPTs, the true rewards, the same manager."""
    actions = [
        (spec.name, [estimated_tree(counts, a, i) for i in range(m_true.n)], spec.reward_tree)
        for a, spec in enumerate(m_true.actions)
    ]
    return FactoredMdp.from_trees(m_true.names, m_true.gamma, m_true.start, actions, m_true.absorbing, m_true.mgr)


def refresh_estimates(m_hat: FactoredMdp, counts: TransitionCounts, a: int, trees: bool = True) -> None:
    """Rebuild action a's CPTs, the only ones a transition under a touches.

    With ``trees=False`` only the diagrams are rebuilt and m_hat's tree
    copies of action a's CPTs become None.
    """
    off = counts.offsets[a]
    diagrams = m_hat.mgr.full_trees_packed(counts._vars[a], counts._var_off[a], counts.action_estimates(a), off)
    if not trees:
        replace_cpt_diagrams(m_hat, a, diagrams)
        return
    for i, d in enumerate(diagrams):
        replace_cpt(m_hat, a, i, estimated_tree(counts, a, i), int(d))


def _explore(greedy: int, n_actions: int, epsilon: float, rng: np.random.Generator) -> int:
    # one uniform draw decides; no draw at all when epsilon is 0
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return greedy


def epsilon_greedy(m_hat: FactoredMdp, v: int, s: State, epsilon: float, rng: np.random.Generator) -> int:
    """A uniformly random action with probability epsilon, else the greedy
    action of V at s under the model m_hat (lowest index on ties).

    No random numbers are drawn when epsilon is 0.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(m_hat.actions)))
    return greedy_action(m_hat, v, s)[0]


def run_asrtdp(
    m_true: FactoredMdp,
    s0: State,
    n_trials: int,
    n_steps: int,
    epsilon: float,
    rng,
    mode: str = "value",
    delta: float | None = None,
    v0: int | None = None,
    learn: bool = True,
) -> tuple[int, TrialLog]:
    """Adaptive trial loop. ``mode='single'`` is adaptive RTDP.

    With ``learn=False`` the planner uses the true model instead of the
    estimate, which is only useful as a check against :func:`run_srtdp`.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    counts = TransitionCounts.for_model(m_true)
    m_hat = estimate_cpts(counts, m_true) if learn else m_true
    mgr = m_true.mgr
    v = mgr.zero if v0 is None else v0
    gen = None if mode == "single" else generalizer(m_hat, mode, delta)
    n_actions = len(m_true.actions)

    def update(v, s):
        if gen is None:
            v, a, size = rtdp_update(m_hat, v, s)
        else:
            v, a, size = srtdp_update(m_hat, v, s, gen)
        a = _explore(a, n_actions, epsilon, rng)
        return v, a, size

    def observe(s, a, s_next):
        if learn:
            record_transition(counts, a, s, s_next)
            refresh_estimates(m_hat, counts, a, trees=False)

    return _trials(m_true, m_hat, v, s0, n_trials, n_steps, rng, update, observe=observe)
