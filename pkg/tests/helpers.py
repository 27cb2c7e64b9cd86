"""Small random models shared by the test modules."""

import numpy as np

from symdp.model import FactoredMdp, validate_model

PROBS = (0.0, 0.25, 0.5, 0.75, 1.0)


def random_tree(rng, vars_, leaf, depth):
    if depth == 0 or not vars_ or rng.random() < 0.25:
        return leaf()
    k = int(rng.integers(len(vars_)))
    rest = vars_[k + 1:]
    return (vars_[k], random_tree(rng, rest, leaf, depth - 1), random_tree(rng, rest, leaf, depth - 1))


def random_model(seed: int, n: int, n_actions: int, gamma: float = 0.9, probs=PROBS) -> FactoredMdp:
    """Small model with arbitrary CPT parents and deterministic edges mixed in."""
    rng = np.random.default_rng(seed)
    vars_ = list(range(n))
    actions = []
    for a in range(n_actions):
        cpts = [random_tree(rng, vars_, lambda: float(probs[rng.integers(len(probs))]), 3) for _ in range(n)]
        reward = random_tree(rng, vars_, lambda: float(np.round(rng.uniform(-1, 2), 3)), 3)
        actions.append((f"a{a}", cpts, reward))
    start = tuple(int(b) for b in rng.integers(0, 2, n))
    m = FactoredMdp.from_trees([f"v{i}" for i in range(n)], gamma, start, actions)
    assert validate_model(m).ok
    return m

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []
