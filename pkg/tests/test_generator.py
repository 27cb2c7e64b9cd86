import numpy as np
import pytest

from symdp.generator import PROBABILITIES, affected_variables, generate_problem
from symdp.model import all_states, parse_model, serialize_model, tree_leaves, validate_model
from symdp.oracle import oracle_value_iteration


def test_full_size_dimensions():
    m = generate_problem(0, 20, 25, 3)
    assert m.n == 20 and len(m.actions) == 25
    assert 2 ** m.n == 1_048_576
    assert validate_model(m).ok


def test_same_seed_same_document():
    assert serialize_model(generate_problem(5, 12, 6, 3)) == serialize_model(generate_problem(5, 12, 6, 3))
    assert serialize_model(generate_problem(5, 12, 6, 3)) != serialize_model(generate_problem(6, 12, 6, 3))


def test_small_instance_works_with_oracle():
    m = generate_problem(1, 2, 2, 1)
    sol = oracle_value_iteration(m)
    assert sol.values.shape == (4,) and np.all(np.isfinite(sol.values))


def test_seed_42_round_trips():
    m = generate_problem(42, 8, 5, 3)
    again = parse_model(serialize_model(m))
    assert serialize_model(again) == serialize_model(m)
    for a in range(5):
        for s in all_states(8):
            assert again.mgr.eval(again.actions[a].reward, s) == m.mgr.eval(m.actions[a].reward, s)
            for i in range(8):
                assert again.mgr.eval(again.actions[a].cpts[i], s) == m.mgr.eval(m.actions[a].cpts[i], s)


def test_thousand_generations_are_valid_and_cover_every_variable():
    rng = np.random.default_rng(2024)
    for seed in range(1000):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, 6))
        p = int(rng.integers(1, n + 1))
        m = generate_problem(seed, n, k, p)
        assert validate_model(m).ok
        assert set().union(*affected_variables(m)) == set(range(n)), seed


def test_leaf_ranges_and_parent_limits():
    m = generate_problem(3, 10, 8, 2)
    for spec, changed in zip(m.actions, affected_variables(m)):
        assert all(0.0 <= x <= 1.0 for x in tree_leaves(spec.reward_tree))
        for i in changed:
            assert set(tree_leaves(spec.cpt_trees[i])) <= set(PROBABILITIES)
            assert len(m.mgr.support(spec.cpts[i])) <= 2


@pytest.mark.parametrize(
    "args",
    [(0, 0, 1, 1), (0, 3, 0, 1), (0, 3, 1, 0), (0, 3, 1, 4)],
)
def test_infeasible_parameters(args):
    with pytest.raises(ValueError):
        generate_problem(*args)
