"""State sets as characteristic functions, one-step image/preimage, and the
two ways of growing the current state into an abstract state.

A state set is a 0/1 diagram over unprimed variables.
"""

from __future__ import annotations

from collections.abc import Iterable

from .model import FactoredMdp, State, action_relation


def chi_of(m: FactoredMdp, states: Iterable[State]) -> int:
    mgr = m.mgr
    chi = mgr.zero
    for s in states:
        chi = mgr.bdd_or(chi, mgr.cube(s))
    return chi


def complement(m: FactoredMdp, chi: int) -> int:
    return m.mgr.bdd_not(chi)


def transition_relation(m: FactoredMdp) -> int:
    """Pairs (s, s') with positive probability under at least one action.

    Rebuilt only when some action's relation differs from the last build.
    """
    parts = tuple(action_relation(m, a) for a in range(len(m.actions)))
    if m.union_relation is None or parts != m.union_parts:
        mgr = m.mgr
        t = mgr.zero
        for r in parts:
            t = mgr.bdd_or(t, r)
        m.union_relation = t
        m.union_parts = parts
    return m.union_relation


def img(m: FactoredMdp, chi: int) -> int:
    """States reachable in one step from the set, under any action."""
    mgr = m.mgr
    nxt = mgr.and_exists(chi, transition_relation(m), m.unprimed())
    return mgr.swap_prime(nxt)


def preimg(m: FactoredMdp, chi: int) -> int:
    """States with a one-step successor in the set, under some action."""
    mgr = m.mgr
    return mgr.and_exists(transition_relation(m), mgr.swap_prime(chi), m.primed())


def mask(m: FactoredMdp, f: int, chi: int, primed: bool = False) -> int:
    """f where the set holds, 0 elsewhere; ``primed`` masks over next-state
    variables with the set renamed accordingly."""
    mgr = m.mgr
    if primed:
        chi = mgr.swap_prime(chi)
    return mgr.mul(f, chi)


def default_delta(m: FactoredMdp, v: int) -> float:
    leaves = m.mgr.leaves(v)
    return 0.01 * (leaves[-1] - leaves[0])


def generalize_value(m: FactoredMdp, s: State, v: int, delta: float | None = None) -> int:
    """States whose value lies within delta of V(s) (closed interval)."""
    if delta is None:
        delta = default_delta(m, v)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    vs = m.mgr.eval(v, s)
    return m.mgr.threshold_to_bdd(v, vs - delta, vs + delta)


def generalize_reach(m: FactoredMdp, s: State) -> int:
    """States with a successor inside Img({s}) and none outside it."""
    mgr = m.mgr
    succ = img(m, mgr.cube(s))
    inside = preimg(m, succ)
    outside = preimg(m, mgr.bdd_not(succ))
    return mgr.bdd_diff(inside, outside)


def generalize_single(m: FactoredMdp, s: State) -> int:
    return m.mgr.cube(s)
