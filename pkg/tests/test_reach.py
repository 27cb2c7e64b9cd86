import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_model
from symdp.model import FactoredMdp, all_states, parse_model, replace_cpt
from symdp.oracle import oracle_value_iteration, successors
from symdp.reach import (
    chi_of,
    complement,
    default_delta,
    generalize_reach,
    generalize_single,
    generalize_value,
    img,
    mask,
    preimg,
    transition_relation,
)


def states(m, chi):
    return set(m.mgr.enumerate_states(chi))


def brute_img(m, c):
    return set().union(*(successors(m, s) for s in c)) if c else set()


def brute_preimg(m, d):
    return {s for s in all_states(m.n) if successors(m, s) & d}


def value_table(m, sol):
    return m.mgr.full_tree(m.unprimed(), sol.values)


# ---------------------------------------------------------------- chi_of


def test_chi_of_examples(tiny):
    mgr = tiny.mgr
    assert chi_of(tiny, []) == mgr.zero
    assert chi_of(tiny, [(0, 0)]) == mgr.bdd_and(mgr.bdd_not(mgr.literal(0)), mgr.bdd_not(mgr.literal(2)))
    assert chi_of(tiny, all_states(2)) == mgr.one
    assert complement(tiny, mgr.one) == mgr.zero


@given(st.lists(st.tuples(*[st.integers(0, 1)] * 4)))
def test_chi_of_enumerates_back(sts):
    m = random_model(0, 4, 1)
    assert m.mgr.enumerate_states(chi_of(m, sts)) == sorted(set(sts))


# ---------------------------------------------------------------- img, preimg


def test_img_examples(tiny):
    assert img(tiny, tiny.mgr.zero) == tiny.mgr.zero
    assert states(tiny, img(tiny, chi_of(tiny, [(0, 0)]))) == {(0, 0), (0, 1), (1, 0)}
    assert states(tiny, img(tiny, chi_of(tiny, [(1, 0)]))) == {(0, 0), (1, 0), (1, 1)}


def test_preimg_examples(tiny):
    assert preimg(tiny, tiny.mgr.zero) == tiny.mgr.zero
    assert states(tiny, preimg(tiny, chi_of(tiny, [(1, 1)]))) == {(0, 1), (1, 0), (1, 1)}
    assert preimg(tiny, tiny.mgr.one) == tiny.mgr.one


@given(st.integers(0, 10_000), st.integers(1, 6), st.data())
def test_img_preimg_match_explicit_graph(seed, n, data):
    m = random_model(seed, n, 2)
    every = list(all_states(n))
    c = set(data.draw(st.lists(st.sampled_from(every), max_size=6)))
    d = set(data.draw(st.lists(st.sampled_from(every), max_size=6)))
    chi_c, chi_d = chi_of(m, c), chi_of(m, d)
    assert states(m, img(m, chi_c)) == brute_img(m, c)
    assert states(m, preimg(m, chi_d)) == brute_preimg(m, d)
    # C meets preimg(D) exactly when img(C) meets D
    left = m.mgr.bdd_and(chi_c, preimg(m, chi_d)) != m.mgr.zero
    right = m.mgr.bdd_and(img(m, chi_c), chi_d) != m.mgr.zero
    assert left == right


def test_union_relation_follows_cpt_changes(tiny):
    before = transition_relation(tiny)
    assert transition_relation(tiny) == before
    # noisy2 now sets x2 with certainty from every state
    replace_cpt(tiny, 1, 1, 1.0)
    assert transition_relation(tiny) != before
    assert states(tiny, img(tiny, chi_of(tiny, [(0, 0)]))) == {(1, 0), (0, 1)}


# ---------------------------------------------------------------- mask


def test_mask_examples(tiny):
    sol = oracle_value_iteration(tiny)
    v = value_table(tiny, sol)
    mgr = tiny.mgr
    assert mask(tiny, v, mgr.one) == v
    assert mask(tiny, v, mgr.zero) == mgr.zero
    masked = mask(tiny, v, chi_of(tiny, [(0, 0)]))
    for s in all_states(2):
        assert mgr.eval(masked, s) == (sol.value(s) if s == (0, 0) else 0.0)
    primed = mask(tiny, mgr.swap_prime(v), chi_of(tiny, [(0, 0)]), primed=True)
    assert mgr.swap_prime(primed) == masked


@given(st.integers(0, 10_000), st.data())
def test_mask_partition(seed, data):
    m = random_model(seed, 4, 1)
    mgr = m.mgr
    f = m.actions[0].reward
    chi = chi_of(m, data.draw(st.lists(st.sampled_from(list(all_states(4))))))
    assert mgr.add(mask(m, f, chi), mask(m, f, complement(m, chi))) == f


# ---------------------------------------------------------------- generalize by value


def test_generalize_value_constant(tiny):
    h = tiny.mgr.const(10.0)
    for s in all_states(2):
        for delta in (0.0, 0.5, None):
            assert generalize_value(tiny, s, h, delta) == tiny.mgr.one


def test_generalize_value_exact_class_of_optimal_values(tiny):
    sol = oracle_value_iteration(tiny)
    v = value_table(tiny, sol)
    e = generalize_value(tiny, (0, 0), v, 0.0)
    assert states(tiny, e) == {s for s in all_states(2) if sol.value(s) == sol.value((0, 0))}


def test_generalize_value_rejects_negative_delta(tiny):
    with pytest.raises(ValueError):
        generalize_value(tiny, (0, 0), tiny.mgr.one, -1.0)


def test_default_delta(tiny):
    v = tiny.mgr.full_tree([0, 2], [0.0, 1.0, 2.0, 5.0])
    assert default_delta(tiny, v) == pytest.approx(0.05)


@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0.0, 2.0), st.data())
def test_generalize_value_properties(seed, n, delta, data):
    m = random_model(seed, n, 1)
    rng_vals = data.draw(st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.25, 3.0]), min_size=1 << n, max_size=1 << n))
    v = m.mgr.full_tree(m.unprimed(), rng_vals)
    s = data.draw(st.sampled_from(list(all_states(n))))
    e = states(m, generalize_value(m, s, v, delta))
    vs = m.mgr.eval(v, s)
    assert s in e
    for t in all_states(n):
        assert (t in e) == (abs(m.mgr.eval(v, t) - vs) <= delta)


# ---------------------------------------------------------------- generalize by reachability


def test_generalize_reach_tiny(tiny):
    assert states(tiny, generalize_reach(tiny, (0, 0))) == {(0, 0)}


def test_generalize_reach_deterministic_merge():
    # x1' = x1 or x2, x2' = 0: 01, 10 and 11 all move to 10
    m = FactoredMdp.from_trees(
        ["x1", "x2"], 0.9, (0, 0), [("go", [(0, 1.0, (1, 1.0, 0.0)), 0.0], 0.0)]
    )
    assert states(m, generalize_reach(m, (0, 1))) == {(0, 1), (1, 0), (1, 1)}
    assert states(m, generalize_reach(m, (0, 0))) == {(0, 0)}


def test_generalize_reach_deterministic_cycle():
    # two-bit counter: every state has its own successor
    text = (
        "(variables x1 x2) (discount 0.9) (start (x1 0) (x2 0))"
        " (action inc (x1 (x1 (x2 0.0 1.0) (x2 1.0 0.0))) (x2 (x2 0.0 1.0)) (reward 0))"
    )
    m = parse_model(text)
    for s in all_states(2):
        assert states(m, generalize_reach(m, s)) == {s}


@given(st.integers(0, 10_000), st.integers(1, 6), st.data())
def test_generalize_reach_properties(seed, n, data):
    m = random_model(seed, n, 2)
    s = data.draw(st.sampled_from(list(all_states(n))))
    e = states(m, generalize_reach(m, s))
    succ_s = successors(m, s)
    assert s in e
    for t in all_states(n):
        succ = successors(m, t)
        assert (t in e) == (bool(succ) and succ <= succ_s)


def test_generalize_single(tiny):
    assert states(tiny, generalize_single(tiny, (1, 0))) == {(1, 0)}
