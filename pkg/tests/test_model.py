import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_model
from symdp.model import (
    TINY_CHAIN,
    FactoredMdp,
    ModelError,
    action_factor,
    action_relation,
    action_transition,
    all_states,
    bits_of,
    load_model,
    parse_model,
    reclaim,
    replace_cpt,
    serialize_model,
    state_from_bits,
    tree_eval,
    validate_model,
)


def pair(s, t):
    """Interleaved assignment (x1, x1', x2, x2', ...)."""
    return tuple(b for xy in zip(s, t) for b in xy)


def direct_probability(m, a, s, t):
    p = 1.0
    for i, tree in enumerate(m.actions[a].cpt_trees):
        q = tree_eval(tree, s)
        p *= q if t[i] else 1.0 - q
    return p


# ---------------------------------------------------------------- parsing


def test_parse_tiny_chain(tiny):
    assert tiny.n == 2 and tiny.names == ["x1", "x2"]
    assert [a.name for a in tiny.actions] == ["flip1", "noisy2"]
    assert tiny.gamma == 0.9
    assert tiny.start == (0, 0)
    assert validate_model(tiny).ok


def test_parse_comments_and_whitespace():
    text = "; a comment\n(variables x) ; trailing\n(discount 0.5)\n(start (x 1))\n(action a (x 0.5) (reward 2))\n"
    m = parse_model(text)
    assert m.start == (1,) and m.mgr.eval(m.actions[0].reward, (0,)) == 2.0


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("(variables x) (discount 0.9) (start (x 0)) (action go)", "'go'"),
        ("(variables x) (discount 0.9) (start (x 0)) (action a (x 1.5) (reward 0))", "outside [0, 1]"),
        ("(variables x) (discount 0.9) (start (x 0)) (action a (y 0.5) (reward 0))", "unknown variable 'y'"),
        (
            "(variables x) (discount 0.9) (start (x 0)) (action a (x 0.5) (reward 0)) (action a (x 0.5) (reward 0))",
            "duplicate action 'a'",
        ),
        ("(variables x) (discount 0.9) (action a (x 0.5) (reward 0))", "start"),
        ("(variables x) (discount 0.9) (start (x 0)) (action a (x 0.5) (reward 0)", "line"),
        ("(variables x) (discount 0.9) (start (x 0)) (action a (reward 0))", "no CPT for x"),
        ("(variables x) (discount 1.5) (start (x 0)) (action a (x 0.5) (reward 0))", "discount"),
        ("(variables x) (discount 1) (start (x 0)) (action a (x 0.5) (reward 0))", "absorbing"),
        ("", "empty"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ModelError) as err:
        parse_model(text)
    assert fragment in str(err.value)


def test_parse_error_position():
    text = "(variables x)\n(discount 0.9)\n(start (x 0))\n(action a (x (x 0.5 2.0)) (reward 0))"
    with pytest.raises(ModelError) as err:
        parse_model(text)
    assert err.value.line == 4 and err.value.col is not None


def test_load_model(tmp_path):
    p = tmp_path / "tiny.mdp"
    p.write_text(TINY_CHAIN)
    assert serialize_model(load_model(p)) == serialize_model(parse_model(TINY_CHAIN))


def test_state_helpers():
    assert state_from_bits("01") == (0, 1)
    assert bits_of((1, 0)) == "10"
    assert list(all_states(2)) == [(0, 0), (0, 1), (1, 0), (1, 1)]


# ---------------------------------------------------------------- serialization


def assert_same_model(m1, m2):
    assert m1.names == m2.names and m1.gamma == m2.gamma and m1.start == m2.start
    assert [a.name for a in m1.actions] == [a.name for a in m2.actions]
    for a in range(len(m1.actions)):
        p1, p2 = action_transition(m1, a), action_transition(m2, a)
        for asg in itertools.product((0, 1), repeat=2 * m1.n):
            assert m1.mgr.eval(p1, asg) == m2.mgr.eval(p2, asg)
        for s in all_states(m1.n):
            assert m1.mgr.eval(m1.actions[a].reward, s) == m2.mgr.eval(m2.actions[a].reward, s)


def test_serialize_round_trip_tiny(tiny):
    again = parse_model(serialize_model(tiny))
    assert_same_model(tiny, again)
    assert serialize_model(again) == serialize_model(tiny)


def test_serialize_coin():
    text = "(variables c) (discount 0.5) (start (c 0)) (action toss (c 0.5) (reward 0))"
    m = parse_model(text)
    doc = serialize_model(m)
    assert serialize_model(parse_model(doc)) == doc
    assert_same_model(m, parse_model(doc))


def test_serialize_keeps_absorbing():
    text = "(variables g) (discount 1) (start (g 0)) (absorbing (g 1)) (action go (g 1.0) (reward (g 0.0 -1.0)))"
    m = parse_model(text)
    assert validate_model(m).ok
    again = parse_model(serialize_model(m))
    assert again.absorbing == (1,)


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3))
def test_serialize_round_trip_random(seed, n, k):
    m = random_model(seed, n, k)
    assert_same_model(m, parse_model(serialize_model(m)))


# ---------------------------------------------------------------- transitions


def test_deterministic_action_has_boolean_transition(tiny):
    p = action_transition(tiny, "flip1")
    values = {tiny.mgr.eval(p, asg) for asg in itertools.product((0, 1), repeat=4)}
    assert values == {0.0, 1.0}
    for s in all_states(2):
        succ = [t for t in all_states(2) if tiny.mgr.eval(p, pair(s, t)) == 1.0]
        assert succ == [(1 - s[0], s[1])]


def test_fair_coin_transition():
    m = parse_model("(variables c) (discount 0.5) (start (c 0)) (action toss (c 0.5) (reward 0))")
    p = action_transition(m, 0)
    assert p == m.mgr.const(0.5)
    assert m.mgr.exists_abstract(p, m.primed()) == m.mgr.one


def test_noisy_action_from_10(tiny):
    p = action_transition(tiny, "noisy2")
    probs = {t: tiny.mgr.eval(p, pair((1, 0), t)) for t in all_states(2)}
    assert probs[(1, 1)] == pytest.approx(0.9, abs=1e-15)
    assert probs[(1, 0)] == pytest.approx(0.1, abs=1e-15)
    assert probs[(0, 0)] == 0.0 and probs[(0, 1)] == 0.0


def test_transition_is_cached(tiny):
    assert action_transition(tiny, 1) == action_transition(tiny, "noisy2")
    assert tiny.actions[1].transition is not None


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_transition_is_product_of_cpts(seed, n):
    m = random_model(seed, n, 2)
    for a in range(2):
        p = action_transition(m, a)
        rel = action_relation(m, a)
        for s in all_states(n):
            row = 0.0
            for t in all_states(n):
                x = m.mgr.eval(p, pair(s, t))
                assert x == pytest.approx(direct_probability(m, a, s, t), abs=1e-12)
                assert m.mgr.eval(rel, pair(s, t)) == (1.0 if x > 0 else 0.0)
                row += x
            assert row == pytest.approx(1.0, abs=1e-12)


def test_factor_sums_to_one(tiny):
    for a in range(2):
        for i in range(2):
            assert tiny.mgr.exists_abstract(action_factor(tiny, a, i), [2 * i + 1]) == tiny.mgr.one


def test_replace_cpt_drops_cached_diagrams(tiny):
    action_transition(tiny, 1)
    action_relation(tiny, 1)
    replace_cpt(tiny, 1, 1, 0.5)
    assert tiny.actions[1].transition is None and tiny.actions[1].relation is None
    p = action_transition(tiny, 1)
    assert tiny.mgr.eval(p, pair((1, 0), (1, 1))) == 0.5


# ---------------------------------------------------------------- validation


def test_validate_negative_probability():
    m = FactoredMdp.from_trees(["x"], 0.9, (0,), [("a", [-0.1], 0.0)])
    report = validate_model(m)
    assert not report.ok
    assert any("action a, variable x" in v for v in report.violations)


def test_validate_doubled_cpt_leaf_out_of_range():
    # x2' = 1 with "probability" 2 * 0.5 on one branch, leaving 1 - 1 on the other
    doubled = (0, 1.0, 2 * 0.75)
    m = FactoredMdp.from_trees(["x1", "x2"], 0.9, (0, 0), [("a", [0.5, doubled], 0.0)])
    report = validate_model(m)
    assert not report.ok
    assert any("probability outside [0, 1]" in v for v in report.violations)


def test_validate_bad_row_sum_via_factor(tiny):
    # corrupt a cached factor so one row sums to 2
    mgr = tiny.mgr
    tiny.actions[0].factors = [mgr.const(1.0), None]
    report = validate_model(tiny)
    assert "action flip1: transition rows sum to [2.0] instead of 1" in report.violations


def test_validate_gamma_one_without_goal():
    m = FactoredMdp.from_trees(["x"], 1.0, (0,), [("a", [0.5], 0.0)])
    assert any("absorbing" in v for v in validate_model(m).violations)


def test_validate_goal_avoidable():
    # 'stay' keeps x=0 forever
    text = (
        "(variables g) (discount 1) (start (g 0)) (absorbing (g 1))"
        " (action go (g 1.0) (reward (g 0.0 -1.0))) (action stay (g (g 1.0 0.0)) (reward (g 0.0 -1.0)))"
    )
    report = validate_model(parse_model(text))
    assert any("avoids the absorbing state" in v for v in report.violations)


def test_validate_nonzero_goal_reward():
    text = "(variables g) (discount 1) (start (g 0)) (absorbing (g 1)) (action go (g 1.0) (reward -1))"
    assert any("nonzero reward" in v for v in validate_model(parse_model(text)).violations)


# ---------------------------------------------------------------- reclaim


def test_reclaim_keeps_model_diagrams(tiny):
    mgr = tiny.mgr
    before = [(tiny.mgr.dump(a.reward), [mgr.dump(c) for c in a.cpts]) for a in tiny.actions]
    action_transition(tiny, 0)
    floor = 2
    junk = mgr.full_tree([0, 1, 2, 3], [float(k) for k in range(16)])
    (root,) = reclaim([tiny], [junk], floor=floor, force=True)
    assert [(mgr.dump(a.reward), [mgr.dump(c) for c in a.cpts]) for a in tiny.actions] == before
    assert mgr.eval(root, (1, 1, 1, 1)) == 15.0
    assert validate_model(tiny).ok
    assert mgr.eval(action_transition(tiny, 0), pair((0, 0), (1, 0))) == 1.0


def test_reclaim_requires_shared_manager(tiny):
    other = parse_model(TINY_CHAIN)
    with pytest.raises(ValueError):
        reclaim([tiny, other], [], force=True)

