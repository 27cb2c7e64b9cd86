"""Factored MDP data model and its parenthesized text format.

A model file looks like::

    (variables x1 x2)
    (discount 0.9)
    (start (x1 0) (x2 0))
    (action flip1
      (x1 (x1 0.0 1.0))          ; P(x1' = true | X)
      (x2 (x2 1.0 0.0))
      (reward (x1 (x2 1.0 0.0) 0.0)))

A tree ``(v T F)`` reads "if v is true then T else F"; a bare number is a
leaf. Every variable needs a CPT in every action. A discount of 1 also needs
an ``(absorbing (v bit)+)`` clause naming a zero-reward absorbing state.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from collections.abc import Sequence
from typing import Union

from .dd import Manager

Tree = Union[float, tuple]  # leaf value, or (variable index, true-branch, false-branch)
State = tuple  # tuple of 0/1 bits, one per state variable


class ModelError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.col = col


def state_from_bits(bits: str) -> State:
    if not re.fullmatch(r"[01]*", bits):
        raise ValueError(f"not a bit string: {bits!r}")
    return tuple(int(c) for c in bits)


def bits_of(state: State) -> str:
    return "".join(str(int(b)) for b in state)


def all_states(n: int):
    """Every state over n variables in lexicographic order (x1 most significant)."""
    for k in range(1 << n):
        yield tuple((k >> (n - 1 - i)) & 1 for i in range(n))


def tree_eval(tree: Tree, state: State) -> float:
    while isinstance(tree, tuple):
        v, t, f = tree
        tree = t if state[v] else f
    return float(tree)


def tree_leaves(tree: Tree):
    if isinstance(tree, tuple):
        yield from tree_leaves(tree[1])
        yield from tree_leaves(tree[2])
    else:
        yield float(tree)


def tree_vars(tree: Tree) -> set[int]:
    if isinstance(tree, tuple):
        return {tree[0]} | tree_vars(tree[1]) | tree_vars(tree[2])
    return set()


def tree_to_diagram(mgr: Manager, tree: Tree) -> int:
    if not isinstance(tree, tuple):
        return mgr.const(tree)
    v, t, f = tree
    lit = mgr.literal(2 * v)
    dt = tree_to_diagram(mgr, t)
    df = tree_to_diagram(mgr, f)
    return mgr.add(mgr.mul(lit, dt), mgr.mul(mgr.bdd_not(lit), df))


@dataclass
class ActionSpec:
    """One action: a CPT per variable giving P(x_i' = true | X), and a reward."""

    name: str
    cpt_trees: list
    reward_tree: Tree
    cpts: list = field(default_factory=list)
    reward: int = -1
    transition: int | None = None  # cached P^a(X, X')
    factors: list | None = None  # cached per-variable P^a(X, x_i')
    relation: int | None = None  # cached 0/1 support of P^a(X, X')


@dataclass
class FactoredMdp:
    names: list
    gamma: float
    start: State
    actions: list
    mgr: Manager
    absorbing: State | None = None
    union_relation: int | None = None  # cached OR over actions of action_relation
    union_parts: tuple | None = None  # the action relations union_relation was built from

    @property
    def n(self) -> int:
        return len(self.names)

    @classmethod
    def from_trees(cls, names, gamma, start, actions, absorbing=None, mgr=None) -> "FactoredMdp":
        """Build the diagrams for ``actions = [(name, cpt_trees, reward_tree), ...]``.

        No range checks are made here; see :func:`validate_model`.
        """
        mgr = mgr or Manager(len(names))
        specs = []
        for name, cpt_trees, reward_tree in actions:
            spec = ActionSpec(name, list(cpt_trees), reward_tree)
            spec.cpts = [tree_to_diagram(mgr, t) for t in spec.cpt_trees]
            spec.reward = tree_to_diagram(mgr, reward_tree)
            specs.append(spec)
        return cls(list(names), float(gamma), tuple(start), specs, mgr, absorbing)

    def action_index(self, a) -> int:
        if isinstance(a, int):
            return a
        for k, spec in enumerate(self.actions):
            if spec.name == a:
                return k
        raise KeyError(a)

    def unprimed(self) -> list[int]:
        return list(range(0, 2 * self.n, 2))

    def primed(self) -> list[int]:
        return list(range(1, 2 * self.n, 2))


# ---------------------------------------------------------------- transitions


def action_factor(m: FactoredMdp, a, i: int) -> int:
    """``P^a(X, x_i') = x_i' * cpt_i + (1 - x_i') * (1 - cpt_i)``, cached."""
    spec = m.actions[m.action_index(a)]
    if spec.factors is None:
        spec.factors = [None] * m.n
    if spec.factors[i] is None:
        mgr = m.mgr
        cpt = spec.cpts[i]
        lit = mgr.literal(2 * i + 1)
        on = mgr.mul(lit, cpt)
        off = mgr.mul(mgr.bdd_not(lit), mgr.apply("sub", mgr.one, cpt))
        spec.factors[i] = mgr.add(on, off)
    return spec.factors[i]


def action_factors(m: FactoredMdp, a) -> list[int]:
    """Every variable's factor of ``P^a(X, X')``."""
    return [action_factor(m, a, i) for i in range(m.n)]


def action_transition(m: FactoredMdp, a) -> int:
    """Full transition diagram ``P^a(X, X')``, the product of the factors."""
    spec = m.actions[m.action_index(a)]
    if spec.transition is None:
        p = m.mgr.one
        for f in reversed(action_factors(m, a)):
            p = m.mgr.mul(p, f)
        spec.transition = p
    return spec.transition


def action_relation(m: FactoredMdp, a) -> int:
    """0/1 diagram of the pairs (s, s') with ``P^a(s, s') > 0``."""
    spec = m.actions[m.action_index(a)]
    if spec.relation is None:
        mgr = m.mgr
        r = mgr.one
        lo, hi = mgr.leaf_bounds(spec.cpts)
        for i in reversed(range(m.n)):
            cpt = spec.cpts[i]
            if lo[i] > 0.0 and hi[i] < 1.0:
                continue  # both values of x_i' always possible
            can_be_true = mgr.threshold_to_bdd(cpt, math.ulp(0.0), math.inf)
            can_be_false = mgr.threshold_to_bdd(cpt, -math.inf, math.nextafter(1.0, 0.0))
            lit = mgr.literal(2 * i + 1)
            step = mgr.bdd_or(mgr.bdd_and(lit, can_be_true), mgr.bdd_and(mgr.bdd_not(lit), can_be_false))
            r = mgr.bdd_and(step, r)
        spec.relation = r
    return spec.relation


def invalidate(spec: ActionSpec) -> None:
    spec.transition = None
    spec.factors = None
    spec.relation = None


def replace_cpt(m: FactoredMdp, a, i: int, tree: Tree, diagram: int | None = None) -> None:
    """Swap in a new CPT for variable i of action a and drop what depended on
    it. ``diagram``, when given, must already represent ``tree``."""
    spec = m.actions[m.action_index(a)]
    spec.cpt_trees[i] = tree
    _swap_cpt(spec, i, tree_to_diagram(m.mgr, tree) if diagram is None else diagram)


def replace_cpt_diagrams(m: FactoredMdp, a, diagrams: Sequence[int]) -> None:
    """Swap in new CPT diagrams for every variable of action a.

    The tree copies of those CPTs are set to None: use this only on models
    whose trees nobody reads, such as a learner's working estimate.
    """
    spec = m.actions[m.action_index(a)]
    for i, d in enumerate(diagrams):
        spec.cpt_trees[i] = None
        _swap_cpt(spec, i, int(d))


def _swap_cpt(spec: ActionSpec, i: int, diagram: int) -> None:
    if spec.cpts[i] == diagram:
        return
    spec.cpts[i] = diagram
    if spec.factors is not None:
        spec.factors[i] = None
    spec.transition = None
    spec.relation = None


RECLAIM_MIN_NODES = 1 << 20


def reclaim(models, roots, floor: int = 0, force: bool = False) -> list[int]:
    """Compact the shared manager of ``models`` once it has grown enough.

    Keeps every diagram the models hold plus ``roots`` and returns the
    (possibly renumbered) roots. Ids below ``floor`` never change; any other
    id the caller holds becomes invalid when a compaction happens.
    """
    models = list({id(m): m for m in models}.values())
    mgr = models[0].mgr
    if any(m.mgr is not mgr for m in models):
        raise ValueError("models must share one manager")
    if not force and mgr.node_count < max(floor + RECLAIM_MIN_NODES, 2 * mgr.live_after_compact):
        return list(roots)
    getters, setters = [], []

    def slot(get, put):
        getters.append(get)
        setters.append(put)

    for m in models:
        for spec in m.actions:
            for i in range(len(spec.cpts)):
                slot(lambda sp=spec, i=i: sp.cpts[i], lambda x, sp=spec, i=i: sp.cpts.__setitem__(i, x))
            slot(lambda sp=spec: sp.reward, lambda x, sp=spec: setattr(sp, "reward", x))
            for i, f in enumerate(spec.factors or []):
                if f is not None:
                    slot(lambda sp=spec, i=i: sp.factors[i], lambda x, sp=spec, i=i: sp.factors.__setitem__(i, x))
            for attr in ("transition", "relation"):
                if getattr(spec, attr) is not None:
                    slot(lambda sp=spec, a=attr: getattr(sp, a), lambda x, sp=spec, a=attr: setattr(sp, a, x))
        if m.union_relation is not None:
            slot(lambda m=m: m.union_relation, lambda x, m=m: setattr(m, "union_relation", x))
    for m in models:
        m.union_parts = None
    roots = list(roots)
    new = mgr.compact([g() for g in getters] + roots, floor)
    for put, x in zip(setters, new):
        put(x)
    return new[len(getters):]


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(self.violations)


ROW_SUM_TOL = 1e-9


def validate_model(m: FactoredMdp) -> ValidationReport:
    """Check CPT ranges, reward finiteness and row normalization of every action."""
    report = ValidationReport()
    mgr = m.mgr
    if not (0.0 <= m.gamma <= 1.0):
        report.violations.append(f"discount {m.gamma} outside [0, 1]")
    for spec in m.actions:
        if len(spec.cpts) != m.n:
            report.violations.append(f"action {spec.name}: {len(spec.cpts)} CPTs for {m.n} variables")
            continue
        for i, cpt in enumerate(spec.cpts):
            lo, hi = mgr.min_leaf(cpt), mgr.max_leaf(cpt)
            if lo < 0.0 or hi > 1.0:
                report.violations.append(
                    f"action {spec.name}, variable {m.names[i]}: probability outside [0, 1] ({lo}, {hi})"
                )
            if mgr.has_primed(cpt):
                report.violations.append(f"action {spec.name}, variable {m.names[i]}: CPT mentions a next-state variable")
        # each factor mentions one next-state variable, so the row sums of
        # P^a are the product of the factors' row sums
        rows = mgr.one
        for i in range(m.n):
            rows = mgr.mul(rows, mgr.exists_abstract(action_factor(m, spec.name, i), [2 * i + 1]))
        if mgr.has_primed(rows) or any(abs(x - 1.0) > ROW_SUM_TOL for x in mgr.leaves(rows)):
            report.violations.append(
                f"action {spec.name}: transition rows sum to {mgr.leaves(rows)} instead of 1"
            )
    if m.gamma >= 1.0:
        _check_absorbing(m, report)
    return report


def _check_absorbing(m: FactoredMdp, report: ValidationReport) -> None:
    if m.absorbing is None:
        report.violations.append("discount 1 requires an absorbing goal state")
        return
    mgr = m.mgr
    goal = mgr.cube(m.absorbing)
    for spec in m.actions:
        if mgr.eval(spec.reward, m.absorbing) != 0.0:
            report.violations.append(f"action {spec.name}: nonzero reward in the absorbing state")
        stay = mgr.cofactor(action_transition(m, spec.name), dict(zip(m.unprimed(), m.absorbing)))
        if mgr.eval(stay, {v + 1: b for v, b in zip(m.unprimed(), m.absorbing)}) != 1.0:
            report.violations.append(f"action {spec.name}: goal state is not absorbing")
    # greatest set Y outside the goal where some action keeps every successor in Y
    y = mgr.bdd_not(goal)
    while True:
        y_out = mgr.swap_prime(mgr.bdd_not(y))
        keep = mgr.zero
        for spec in m.actions:
            leaves_y = mgr.and_exists(action_relation(m, spec.name), y_out, m.primed())
            keep = mgr.bdd_or(keep, mgr.bdd_not(leaves_y))
        y_next = mgr.bdd_and(y, keep)
        if y_next == y:
            break
        y = y_next
    if y != mgr.zero:
        report.violations.append("some policy avoids the absorbing state forever with positive probability")


# ---------------------------------------------------------------- text format


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


class _Tok:
    __slots__ = ("text", "line", "col")

    def __init__(self, text, line, col):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:  # pragma: no cover - the pattern accepts every character
            raise ModelError(f"unexpected character {text[pos]!r}", line, col)
        s = mt.group()
        if not s.isspace() and not s.startswith(";"):
            toks.append(_Tok(s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = mt.end()
    return toks


def _read(toks: list[_Tok]):
    """Nested lists of tokens; each list remembers its opening token."""
    pos = 0

    def one():
        nonlocal pos
        if pos >= len(toks):
            last = toks[-1] if toks else _Tok("", 1, 1)
            raise ModelError("unexpected end of input", last.line, last.col)
        t = toks[pos]
        pos += 1
        if t.text == ")":
            raise ModelError("unexpected ')'", t.line, t.col)
        if t.text != "(":
            return t
        items = _Group(t)
        while True:
            if pos >= len(toks):
                raise ModelError("unclosed '('", t.line, t.col)
            if toks[pos].text == ")":
                pos += 1
                return items
            items.append(one())

    out = []
    while pos < len(toks):
        out.append(one())
    return out


class _Group(list):
    def __init__(self, opener: _Tok):
        super().__init__()
        self.line = opener.line
        self.col = opener.col


def _where(x):
    return x.line, x.col


def _word(x, what: str) -> str:
    if not isinstance(x, _Tok):
        raise ModelError(f"expected {what}, found a list", *_where(x))
    return x.text


def _number(x, what: str) -> float:
    s = _word(x, what)
    try:
        value = float(s)
    except ValueError:
        raise ModelError(f"expected {what}, found {s!r}", *_where(x)) from None
    if not math.isfinite(value):
        raise ModelError(f"{what} must be finite", *_where(x))
    return value


def _head(g, keyword: str) -> bool:
    return isinstance(g, _Group) and len(g) > 0 and isinstance(g[0], _Tok) and g[0].text == keyword


def parse_model(text: str, mgr: Manager | None = None) -> FactoredMdp:
    """Parse model text into a :class:`FactoredMdp` with freshly built diagrams."""
    forms = _read(_tokenize(text))
    if not forms:
        raise ModelError("empty model", 1, 1)
    it = iter(forms)

    def expect(keyword):
        g = next(it, None)
        if g is None:
            last = forms[-1]
            raise ModelError(f"missing ({keyword} ...) clause", *_where(last))
        if not _head(g, keyword):
            raise ModelError(f"expected ({keyword} ...)", *_where(g))
        return g

    g = expect("variables")
    names = [_word(x, "variable name") for x in g[1:]]
    if not names:
        raise ModelError("no variables declared", *_where(g))
    index = {}
    for x, name in zip(g[1:], names):
        if name in index:
            raise ModelError(f"duplicate variable {name!r}", *_where(x))
        index[name] = len(index)

    def var_of(x):
        name = _word(x, "variable name")
        if name not in index:
            raise ModelError(f"unknown variable {name!r}", *_where(x))
        return index[name]

    g = expect("discount")
    if len(g) != 2:
        raise ModelError("discount takes one number", *_where(g))
    gamma = _number(g[1], "discount")
    if not (0.0 <= gamma <= 1.0):
        raise ModelError(f"discount {gamma} outside [0, 1]", *_where(g[1]))

    def assignment(g, keyword):
        bits = [None] * len(names)
        for pair in g[1:]:
            if not isinstance(pair, _Group) or len(pair) != 2:
                raise ModelError(f"{keyword} entries look like (name bit)", *_where(pair))
            v = var_of(pair[0])
            b = _word(pair[1], "bit")
            if b not in ("0", "1"):
                raise ModelError(f"expected bit 0 or 1, found {b!r}", *_where(pair[1]))
            if bits[v] is not None:
                raise ModelError(f"variable {names[v]!r} assigned twice", *_where(pair))
            bits[v] = int(b)
        missing = [names[i] for i, b in enumerate(bits) if b is None]
        if missing:
            raise ModelError(f"{keyword} does not assign {', '.join(missing)}", *_where(g))
        return tuple(bits)

    g = expect("start")
    start = assignment(g, "start")

    rest = list(it)
    absorbing = None
    if rest and _head(rest[0], "absorbing"):
        absorbing = assignment(rest[0], "absorbing")
        rest = rest[1:]
    if gamma >= 1.0 and absorbing is None:
        raise ModelError("discount 1 requires an (absorbing ...) clause", *_where(forms[1]))

    def tree(x, probability):
        if isinstance(x, _Tok):
            value = _number(x, "number")
            if probability and not (0.0 <= value <= 1.0):
                raise ModelError(f"probability {value} outside [0, 1]", *_where(x))
            return value
        if len(x) != 3:
            raise ModelError("a tree node looks like (variable true-branch false-branch)", *_where(x))
        return (var_of(x[0]), tree(x[1], probability), tree(x[2], probability))

    actions = []
    seen = set()
    for g in rest:
        if not _head(g, "action"):
            raise ModelError("expected (action ...)", *_where(g))
        if len(g) < 2:
            raise ModelError("action without a name", *_where(g))
        name = _word(g[1], "action name")
        if name in seen:
            raise ModelError(f"duplicate action {name!r}", *_where(g[1]))
        seen.add(name)
        if len(g) == 2:
            raise ModelError(f"action {name!r} has an empty body", *_where(g))
        cpts = [None] * len(names)
        reward = None
        for clause in g[2:]:
            if not isinstance(clause, _Group) or len(clause) != 2:
                raise ModelError(f"action {name!r}: expected (variable tree) or (reward tree)", *_where(clause))
            if _head(clause, "reward"):
                if reward is not None:
                    raise ModelError(f"action {name!r}: two reward clauses", *_where(clause))
                reward = tree(clause[1], False)
                continue
            v = var_of(clause[0])
            if cpts[v] is not None:
                raise ModelError(f"action {name!r}: two CPTs for {names[v]!r}", *_where(clause))
            cpts[v] = tree(clause[1], True)
        missing = [names[i] for i, c in enumerate(cpts) if c is None]
        if missing:
            raise ModelError(f"action {name!r}: no CPT for {', '.join(missing)}", *_where(g))
        if reward is None:
            raise ModelError(f"action {name!r}: no reward clause", *_where(g))
        actions.append((name, cpts, reward))
    if not actions:
        raise ModelError("model declares no actions", *_where(forms[-1]))
    return FactoredMdp.from_trees(names, gamma, start, actions, absorbing, mgr)


def _fmt(x: float) -> str:
    return repr(float(x))


def _tree_text(tree: Tree, names) -> str:
    if isinstance(tree, tuple):
        v, t, f = tree
        return f"({names[v]} {_tree_text(t, names)} {_tree_text(f, names)})"
    return _fmt(tree)


def serialize_model(m: FactoredMdp) -> str:
    names = m.names
    lines = [
        f"(variables {' '.join(names)})",
        f"(discount {_fmt(m.gamma)})",
        "(start " + " ".join(f"({nm} {b})" for nm, b in zip(names, m.start)) + ")",
    ]
    if m.absorbing is not None:
        lines.append("(absorbing " + " ".join(f"({nm} {b})" for nm, b in zip(names, m.absorbing)) + ")")
    for spec in m.actions:
        lines.append(f"(action {spec.name}")
        for nm, t in zip(names, spec.cpt_trees):
            lines.append(f"  ({nm} {_tree_text(t, names)})")
        lines.append(f"  (reward {_tree_text(spec.reward_tree, names)}))")
    return "\n".join(lines) + "\n"


def load_model(path) -> FactoredMdp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


TINY_CHAIN = """\
(variables x1 x2) (discount 0.9) (start (x1 0) (x2 0))
(action flip1 (x1 (x1 0.0 1.0)) (x2 (x2 1.0 0.0)) (reward (x1 (x2 1.0 0.0) 0.0)))
(action noisy2 (x1 (x1 1.0 0.0)) (x2 (x1 0.9 0.1)) (reward (x1 (x2 1.0 0.0) 0.0)))
"""
