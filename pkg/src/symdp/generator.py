"""Seeded random factored MDPs.

Each action changes a small random set of variables; every other variable
keeps its value (CPT ``x_i ? 1 : 0``). A changed variable gets a random
decision tree over itself and up to ``max_parents - 1`` lower-indexed
variables, with leaves drawn from {0.1, ..., 0.9}. Rewards are depth <= 2
trees over the first ``reward_scope`` variables with leaves uniform in
[0, 1]. A final pass makes sure every variable is changed by some action.

Because a variable only depends on itself and lower-indexed variables, the
values of the first ``reward_scope`` variables evolve on their own: they are
the part of the state that matters for reward, and the remaining variables
are structure a planner has to see through.
"""

from __future__ import annotations

import numpy as np

from .model import FactoredMdp, Tree, validate_model

PROBABILITIES = tuple(round(0.1 * k, 1) for k in range(1, 10))


def _random_tree(rng: np.random.Generator, parents: list[int], leaf) -> Tree:
    if not parents:
        return leaf()
    v, rest = parents[0], parents[1:]
    return (v, _random_tree(rng, rest, leaf), _random_tree(rng, rest, leaf))


def _identity(i: int) -> Tree:
    return (i, 1.0, 0.0)


def generate_problem(
    seed: int,
    n_vars: int,
    n_actions: int,
    max_parents: int,
    gamma: float = 0.9,
    max_affected: int = 3,
    reward_scope: int = 4,
) -> FactoredMdp:
    if n_vars < 1 or n_actions < 1:
        raise ValueError("need at least one variable and one action")
    if not (1 <= max_parents <= n_vars):
        raise ValueError("max_parents must lie in [1, n_vars]")
    if max_affected < 1:
        raise ValueError("max_affected must be positive")
    rng = np.random.default_rng(seed)
    scope = max(1, min(reward_scope, n_vars))

    def prob():
        return float(PROBABILITIES[rng.integers(len(PROBABILITIES))])

    def cpt(i: int) -> Tree:
        k = int(rng.integers(0, min(max_parents - 1, i) + 1))
        others = sorted(int(x) for x in rng.choice(i, size=k, replace=False)) if k else []
        return _random_tree(rng, sorted(others + [i]), prob)

    affected = []
    for _ in range(n_actions):
        k = int(rng.integers(1, min(max_affected, n_vars) + 1))
        affected.append(set(int(x) for x in rng.choice(n_vars, size=k, replace=False)))
    covered = set().union(*affected)
    for i in range(n_vars):
        if i not in covered:
            affected[int(rng.integers(n_actions))].add(i)

    actions = []
    for a in range(n_actions):
        cpts = [cpt(i) if i in affected[a] else _identity(i) for i in range(n_vars)]
        depth = int(rng.integers(0, min(2, scope) + 1))
        tested = sorted(int(x) for x in rng.choice(scope, size=depth, replace=False)) if depth else []
        reward = _random_tree(rng, tested, lambda: float(rng.random()))
        actions.append((f"a{a}", cpts, reward))

    names = [f"x{i + 1}" for i in range(n_vars)]
    m = FactoredMdp.from_trees(names, gamma, (0,) * n_vars, actions)
    report = validate_model(m)
    if not report.ok:  # pragma: no cover - construction guarantees validity
        raise AssertionError(str(report))
    return m


def affected_variables(m: FactoredMdp) -> list[set[int]]:
    """Per action, the variables whose CPT is not the identity."""
    return [{i for i, t in enumerate(spec.cpt_trees) if t != _identity(i)} for spec in m.actions]
