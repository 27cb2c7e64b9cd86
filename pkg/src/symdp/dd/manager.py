"""Node manager for reduced ordered decision diagrams over real leaves.

Diagrams are plain integers (node ids) owned by one :class:`Manager`. Two
diagrams denote the same function exactly when their ids are equal.

Variables are interleaved: index ``2*i`` is the current-state variable
``x_i`` and ``2*i + 1`` its next-state copy ``x_i'``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _kernels as K

OPS = {
    "add": K.ADD,
    "sub": K.SUB,
    "mul": K.MUL,
    "max": K.MAX,
    "min": K.MIN,
    "and": K.AND,
    "or": K.OR,
    "diff": K.DIFF,
}
_BOOLEAN_OPS = {K.AND, K.OR, K.DIFF}
CACHE_LIMIT = 1 << 22  # operation-cache entries; a full cache at this size is emptied instead


class DiagramError(ValueError):
    """Contract violation on a diagram operation."""


def prime(v: int) -> int:
    if v % 2:
        raise DiagramError(f"variable {v} is already primed")
    return v + 1


def unprime(v: int) -> int:
    if v % 2 == 0:
        raise DiagramError(f"variable {v} is not primed")
    return v - 1


class Manager:
    """Unique table, memo caches and operators for one variable universe.

    ``n`` is the number of state variables; the manager knows ``2n``
    variable indices.
    """

    def __init__(self, n: int, node_capacity: int = 1 << 12):
        if n < 0:
            raise DiagramError("variable count must be non-negative")
        self.n = n
        self.nv = 2 * n
        cap = 1 << max(6, (node_capacity - 1).bit_length())
        self._s = K.new_store(cap, cap, cap)
        self._nomask = np.zeros(self.nv + 1, dtype=np.bool_)
        self.zero = self.const(0.0)
        self.one = self.const(1.0)
        self.live_after_compact = 2

    # ------------------------------------------------------------ plumbing

    def _grow(self, code: int) -> None:
        s = self._s
        if code == K.FULL_NODES:
            cap = 2 * s.var.shape[0]
            n = int(s.meta[0])

            def grown(a, fill=0):
                b = np.full(cap, fill, dtype=a.dtype)
                b[:n] = a[:n]
                return b

            self._s = s._replace(
                var=grown(s.var), hi=grown(s.hi), lo=grown(s.lo),
                val=grown(s.val), flags=grown(s.flags),
                ut=np.full(2 * cap, -1, dtype=np.int64),
            )
            K.rebuild_unique(self._s)
        elif code == K.FULL_CACHE:
            if s.ck.shape[0] >= CACHE_LIMIT:
                self.clear_caches()
                return
            cap = 2 * s.ck.shape[0]
            self._s = s._replace(ck=np.full((cap, 4), -1, dtype=np.int64))
            self._s.meta[1] = 0
            K.rehash_cache(s.ck, self._s)
        elif code == K.FULL_TRANSIENT:
            tk = np.zeros((2 * s.tk.shape[0], 5), dtype=np.int64)
            tk[:, 4] = -1
            self._s = s._replace(tk=tk)
        else:  # pragma: no cover
            raise AssertionError(code)

    def _fresh(self) -> None:
        meta = self._s.meta
        meta[3] += 1
        meta[2] = 0

    def _call(self, kernel, *args, transient=False) -> int:
        while True:
            if transient:
                self._fresh()
            r = kernel(self._s, *args)
            if r >= 0:
                return int(r)
            self._grow(r)

    def _check(self, f: int) -> None:
        if not (0 <= f < int(self._s.meta[0])):
            raise DiagramError(f"unknown node {f}")

    def _check_var(self, v: int) -> None:
        if not (0 <= v < self.nv):
            raise DiagramError(f"variable index {v} outside [0, {self.nv})")

    def _varmask(self, vars: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        mask = np.zeros(self.nv + 1, dtype=np.bool_)
        seen = set()
        for v in vars:
            self._check_var(v)
            if v in seen:
                raise DiagramError(f"variable {v} listed twice")
            seen.add(v)
            mask[v] = True
        cnt = np.zeros(self.nv + 2, dtype=np.int64)
        cnt[1:] = np.cumsum(mask)
        return mask, cnt

    def _assignment(self, s) -> np.ndarray:
        asg = np.full(self.nv + 1, -1, dtype=np.int64)
        if isinstance(s, Mapping):
            for v, b in s.items():
                self._check_var(v)
                asg[v] = 1 if b else 0
        elif isinstance(s, str):
            return self._assignment(tuple(int(c) for c in s))
        else:
            bits = list(s)
            if len(bits) == self.n:
                asg[0:self.nv:2] = [1 if b else 0 for b in bits]
            elif len(bits) == self.nv:
                asg[:self.nv] = [1 if b else 0 for b in bits]
            else:
                raise DiagramError(f"assignment of length {len(bits)}; expected {self.n} or {self.nv}")
        return asg

    def clear_caches(self) -> None:
        """Drop every memoized operation result (nodes are kept)."""
        self._s.ck[:, 0] = -1
        self._s.meta[1] = 0
        self._fresh()

    def compact(self, roots: Sequence[int], floor: int = 0) -> list[int]:
        """Drop nodes at or above ``floor`` that no root reaches.

        Nodes below ``floor`` keep their ids; surviving nodes above it are
        renumbered and every other id there becomes invalid. All caches are
        dropped. Returns the new ids of roots, in order.
        """
        for f in roots:
            self._check(f)
        s = self._s
        n = int(s.meta[0])
        floor = max(2, min(int(floor), n))
        live = np.zeros(n, dtype=np.bool_)
        live[:floor] = True
        K.mark_live(s, np.array(list(roots), dtype=np.int64), live)
        new_id = np.cumsum(live) - 1
        count = int(new_id[-1]) + 1
        cap = 1 << max(6, (2 * count - 1).bit_length())
        t = K.new_store(cap, min(s.ck.shape[0], 1 << 16), s.tk.shape[0])
        is_leaf = s.var[:n][live] == K.LEAF
        hi, lo = s.hi[:n][live], s.lo[:n][live]
        t.var[:count] = s.var[:n][live]
        t.val[:count] = s.val[:n][live]
        t.flags[:count] = s.flags[:n][live]
        t.hi[:count] = np.where(is_leaf, -1, new_id[np.maximum(hi, 0)])
        t.lo[:count] = np.where(is_leaf, -1, new_id[np.maximum(lo, 0)])
        t.meta[0] = count
        t.meta[3] = s.meta[3] + 1
        K.rebuild_unique(t)
        self._s = t
        self.live_after_compact = count
        return [int(new_id[f]) for f in roots]

    @property
    def node_count(self) -> int:
        return int(self._s.meta[0])

    # ------------------------------------------------------------ inspection

    def is_leaf(self, f: int) -> bool:
        return int(self._s.var[f]) == K.LEAF

    def value(self, f: int) -> float:
        if not self.is_leaf(f):
            raise DiagramError(f"node {f} is not a leaf")
        return float(self._s.val[f])

    def top(self, f: int) -> int | None:
        v = int(self._s.var[f])
        return None if v == K.LEAF else v

    def children(self, f: int) -> tuple[int, int]:
        return int(self._s.hi[f]), int(self._s.lo[f])

    def is_boolean(self, f: int) -> bool:
        return bool(self._s.flags[f] & K.F_BOOL)

    def has_primed(self, f: int) -> bool:
        return bool(self._s.flags[f] & K.F_PRIMED)

    def has_unprimed(self, f: int) -> bool:
        return bool(self._s.flags[f] & K.F_UNPRIMED)

    def nodes(self, f: int) -> np.ndarray:
        """Ids of all nodes reachable from f, children first."""
        self._check(f)
        while True:
            self._fresh()
            out, code = K.postorder(self._s, f)
            if code == 0:
                return out
            self._grow(code)

    def size(self, f: int) -> int:
        return len(self.nodes(f))

    def _leaf_values(self, f: int) -> np.ndarray:
        ids = self.nodes(f)
        s = self._s
        return s.val[ids[s.var[ids] == K.LEAF]]

    def leaves(self, f: int) -> list[float]:
        return sorted(self._leaf_values(f).tolist())

    def support(self, f: int) -> list[int]:
        ids = self.nodes(f)
        vs = self._s.var[ids]
        return sorted(int(v) for v in set(vs.tolist()) if v != K.LEAF)

    def leaf_bounds(self, roots: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """(min leaf, max leaf) of each root, as two arrays."""
        for f in roots:
            self._check(f)
        r = np.asarray(list(roots), dtype=np.int64)
        lo = np.empty(len(r))
        hi = np.empty(len(r))
        self._call(K.leaf_bounds, r, lo, hi, transient=True)
        return lo, hi

    def max_leaf(self, f: int) -> float:
        return float(self._leaf_values(f).max())

    def min_leaf(self, f: int) -> float:
        return float(self._leaf_values(f).min())

    # ------------------------------------------------------------ constructors

    def const(self, value: float) -> int:
        value = float(value)
        if not math.isfinite(value):
            raise DiagramError(f"leaf value must be finite, got {value}")
        return self._call(K.leaf, value)

    mk_const = const

    def literal(self, v: int) -> int:
        self._check_var(v)
        return self._call(K.node, v, self.one, self.zero)

    mk_literal = literal

    def ite_node(self, v: int, hi: int, lo: int) -> int:
        self._check_var(v)
        self._check(hi)
        self._check(lo)
        for c in (hi, lo):
            t = self.top(c)
            if t is not None and t <= v:
                raise DiagramError(f"variable {v} does not precede child top variable {t}")
        return self._call(K.node, v, hi, lo)

    def full_tree(self, vars: Sequence[int], values) -> int:
        """Diagram of the complete tree over ``vars`` (strictly increasing)
        whose leaf for an assignment is ``values[u]``, u being the bits read
        with vars[0] most significant."""
        vs = np.asarray(list(vars), dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        for v in vs:
            self._check_var(int(v))
        if np.any(np.diff(vs) <= 0):
            raise DiagramError("full_tree variables must be strictly increasing")
        if vals.shape != (1 << len(vs),):
            raise DiagramError(f"full_tree over {len(vs)} variables needs {1 << len(vs)} values")
        if not np.all(np.isfinite(vals)):
            raise DiagramError("leaf values must be finite")
        return self._call(K.full_tree, vs, vals)

    def full_trees(self, var_lists: Sequence[Sequence[int]], value_lists: Sequence) -> list[int]:
        """Several :meth:`full_tree` diagrams built in one call."""
        lens = np.array([len(vs) for vs in var_lists], dtype=np.int64)
        if len(value_lists) != len(lens):
            raise DiagramError("one value list per variable list")
        if any(len(x) != (1 << k) for x, k in zip(value_lists, lens)):
            raise DiagramError("each value list needs 2**k entries for k variables")
        vars = np.fromiter((v for vs in var_lists for v in vs), dtype=np.int64, count=int(lens.sum()))
        vals = np.concatenate([np.asarray(x, dtype=np.float64) for x in value_lists]) if len(lens) else np.zeros(0)
        var_off = np.zeros(len(lens) + 1, dtype=np.int64)
        var_off[1:] = np.cumsum(lens)
        val_off = np.zeros(len(lens) + 1, dtype=np.int64)
        val_off[1:] = np.cumsum(1 << lens)
        return [int(x) for x in self.full_trees_packed(vars, var_off, vals, val_off)]

    def full_trees_packed(self, vars: np.ndarray, var_off: np.ndarray, vals: np.ndarray, val_off: np.ndarray) -> np.ndarray:
        """:meth:`full_trees` on flat arrays: tree j tests
        ``vars[var_off[j]:var_off[j+1]]`` and has leaves
        ``vals[val_off[j]:val_off[j+1]]``. Returns the root ids."""
        lens = np.diff(var_off)
        if vals.shape[0] != val_off[-1] or np.any(np.diff(val_off) != (1 << lens)):
            raise DiagramError("each value list needs 2**k entries for k variables")
        if np.any((vars < 0) | (vars >= self.nv)):
            raise DiagramError("variable index out of range")
        steps = np.diff(vars)
        inner = np.ones(len(steps), dtype=np.bool_)
        cuts = var_off[1:-1]
        inner[cuts[(cuts > 0) & (cuts < len(vars))] - 1] = False
        if np.any(steps[inner] <= 0):
            raise DiagramError("full_tree variables must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise DiagramError("leaf values must be finite")
        out = np.zeros(len(lens), dtype=np.int64)
        self._call(K.full_trees, vars, var_off, vals, val_off, out)
        return out

    def cube(self, assignment) -> int:
        """Conjunction of the literals in a (partial) assignment."""
        return self._call(K.cube, self._assignment(assignment), self.nv)

    # ------------------------------------------------------------ operators

    def apply(self, op: str | int, f: int, g: int) -> int:
        if isinstance(op, str):
            if op not in OPS:
                raise DiagramError(f"unknown operator {op!r}")
            code = OPS[op]
        else:
            code = op
        if code in _BOOLEAN_OPS and not (self.is_boolean(f) and self.is_boolean(g)):
            raise DiagramError(f"boolean operator {op!r} on a non 0/1 diagram")
        return self._call(K.apply, code, f, g)

    def add(self, f: int, g: int) -> int:
        return self._call(K.apply, K.ADD, f, g)

    def mul(self, f: int, g: int) -> int:
        return self._call(K.apply, K.MUL, f, g)

    def maximum(self, f: int, g: int) -> int:
        return self._call(K.apply, K.MAX, f, g)

    def bdd_and(self, f: int, g: int) -> int:
        return self.apply(K.AND, f, g)

    def bdd_or(self, f: int, g: int) -> int:
        return self.apply(K.OR, f, g)

    def bdd_diff(self, f: int, g: int) -> int:
        return self.apply(K.DIFF, f, g)

    def bdd_not(self, f: int) -> int:
        if not self.is_boolean(f):
            raise DiagramError("complement of a non 0/1 diagram")
        return self._call(K.complement, f, transient=True)

    def scale(self, f: int, c: float) -> int:
        return self.mul(f, self.const(c))

    def exists_abstract(self, f: int, vars: Iterable[int], kind: str = "sum") -> int:
        """Quantify ``vars`` out of f: sum of cofactors, or their disjunction."""
        if kind not in ("sum", "or"):
            raise DiagramError(f"unknown abstraction kind {kind!r}")
        mask, cnt = self._varmask(vars)
        if kind == "or" and not self.is_boolean(f):
            raise DiagramError("or-abstraction of a non 0/1 diagram")
        return self._call(K.abstract, f, mask, cnt, self.nv, kind == "or", transient=True)

    def mul_sum_abstract(self, f: int, g: int, vars: Iterable[int]) -> int:
        """``exists_abstract(f * g, vars)`` without building the product."""
        mask, cnt = self._varmask(vars)
        return self._call(K.relprod, f, g, mask, cnt, self.nv, False, transient=True)

    def bellman(
        self,
        vp: int,
        rewards: Sequence[int],
        factor_of,
        gamma: float,
        chi: int | None = None,
        early: bool = False,
    ) -> tuple[int, list[int]]:
        """Fused Bellman backup over next-state variables.

        For each action a, ``Q_a = R_a + gamma * sum_{X'} prod_i F_a,i * vp``,
        where ``factor_of(a, v)`` gives the factor for primed variable v and
        only the primed variables vp mentions are summed out, bottom-up. With
        chi every Q_a is masked by it. Returns (max over a of Q_a, [Q_a]).
        """
        if self.has_unprimed(vp):
            raise DiagramError("bellman needs a value diagram over next-state variables only")
        pvars = list(reversed(self.support(vp)))
        n_a = len(rewards)
        if n_a == 0:
            raise DiagramError("bellman needs at least one action")
        factors = np.array([[factor_of(a, v) for v in pvars] for a in range(n_a)], dtype=np.int64).reshape(n_a, len(pvars))
        masks = np.zeros((len(pvars), self.nv + 1), dtype=np.bool_)
        cnts = np.zeros((len(pvars), self.nv + 2), dtype=np.int64)
        for k, v in enumerate(pvars):
            masks[k, v] = True
            cnts[k, v + 1:] = 1
        qs = np.zeros(n_a, dtype=np.int64)
        best = self._call(
            K.bellman, vp, np.asarray(rewards, dtype=np.int64), factors, np.asarray(pvars, dtype=np.int64),
            masks, cnts, float(gamma), -1 if chi is None else chi, bool(early), self.nv, qs, transient=True,
        )
        return best, [int(q) for q in qs]

    def and_exists(self, f: int, g: int, vars: Iterable[int]) -> int:
        """Or-abstraction of ``f and g`` over vars (relational product)."""
        if not (self.is_boolean(f) and self.is_boolean(g)):
            raise DiagramError("relational product of non 0/1 diagrams")
        mask, cnt = self._varmask(vars)
        return self._call(K.relprod, f, g, mask, cnt, self.nv, True, transient=True)

    def swap_prime(self, f: int) -> int:
        """Prime an unprimed-only diagram, or unprime a primed-only one."""
        up, pr = self.has_unprimed(f), self.has_primed(f)
        if up and pr:
            raise DiagramError("swap_prime on a diagram with mixed support")
        if not up and not pr:
            return f
        return self._call(K.shift, f, 1 if up else -1, transient=True)

    def restrict(self, f: int, v: int, value: bool) -> int:
        self._check_var(v)
        asg = np.full(self.nv + 1, -1, dtype=np.int64)
        asg[v] = 1 if value else 0
        return self._call(K.cofactor, f, asg, transient=True)

    def cofactor(self, f: int, assignment) -> int:
        return self._call(K.cofactor, f, self._assignment(assignment), transient=True)

    def threshold_to_bdd(self, f: int, lo: float, hi: float) -> int:
        """0/1 diagram that is 1 where ``lo <= f <= hi``."""
        if lo > hi:
            raise DiagramError(f"empty interval [{lo}, {hi}]")
        return self._call(K.threshold, f, float(lo), float(hi), transient=True)

    def set_value(self, f: int, state, q: float) -> int:
        """f with its value at one full unprimed state replaced by q."""
        if self.has_primed(f):
            raise DiagramError("set_value needs an unprimed-only diagram")
        if not math.isfinite(q):
            raise DiagramError(f"leaf value must be finite, got {q}")
        asg = self._assignment(state)
        return self._call(K.set_path, f, asg, float(q), 0, self.nv)

    # ------------------------------------------------------------ evaluation

    def eval(self, f: int, assignment) -> float:
        asg = self._assignment(assignment)
        k = K.walk(self._s, f, asg)
        if k < 0:
            raise DiagramError("assignment does not cover the diagram's support")
        return float(self._s.val[k])

    def eval_many(self, roots: Sequence[int] | np.ndarray, assignment) -> np.ndarray:
        roots = np.asarray(roots, dtype=np.int64)
        out = np.empty(len(roots))
        if not K.eval_many(self._s, roots, self._assignment(assignment), out):
            raise DiagramError("assignment does not cover the diagram's support")
        return out

    def expectation(self, f: int, probs: np.ndarray) -> np.ndarray:
        """Expected value of f when variable v is true with probability
        ``probs[j, v]``, independently; one result per row j."""
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        while True:
            order = self.nodes(f)
            out, code = K.expect_many(self._s, order, probs)
            if code == 0:
                return out[:, -1].copy()
            self._grow(code)

    def enumerate_states(self, f: int) -> list[tuple[int, ...]]:
        """States (unprimed bit tuples) where the 0/1 diagram f is 1, in
        lexicographic order."""
        if not self.is_boolean(f):
            raise DiagramError("enumerate_states of a non 0/1 diagram")
        if self.has_primed(f):
            raise DiagramError("enumerate_states of a diagram over primed variables")
        return list(self._iter_states(f, 0, ()))

    def _iter_states(self, f: int, i: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if f == self.zero:
            return
        if i == self.n:
            yield prefix
            return
        v = 2 * i
        if self.top(f) == v:
            hi, lo = self.children(f)
        else:
            hi = lo = f
        yield from self._iter_states(lo, i + 1, prefix + (0,))
        yield from self._iter_states(hi, i + 1, prefix + (1,))

    # ------------------------------------------------------------ debugging

    def audit(self, f: int) -> list[str]:
        """Structural problems below f; empty for a well-formed diagram."""
        s = self._s
        problems = []
        triples = {}
        leaves = {}
        for k in self.nodes(f).tolist():
            v = int(s.var[k])
            if v == K.LEAF:
                x = float(s.val[k])
                if x in leaves:
                    problems.append(f"duplicate leaf {x}: {leaves[x]} and {k}")
                leaves[x] = k
                continue
            h, l = int(s.hi[k]), int(s.lo[k])
            if h == l:
                problems.append(f"redundant node {k}")
            for c in (h, l):
                if int(s.var[c]) <= v:
                    problems.append(f"order violation at node {k}")
            key = (v, h, l)
            if key in triples:
                problems.append(f"duplicate node {key}: {triples[key]} and {k}")
            triples[key] = k
        return problems

    def dump(self, f: int) -> str:
        """Deterministic text listing of the DAG below f, renumbered from 0."""
        s = self._s
        ids = self.nodes(f).tolist()
        local = {k: i for i, k in enumerate(ids)}
        lines = []
        for k in ids:
            v = int(s.var[k])
            if v == K.LEAF:
                lines.append(f"{local[k]} leaf {float(s.val[k])!r}")
            else:
                lines.append(f"{local[k]} var {v} hi {local[int(s.hi[k])]} lo {local[int(s.lo[k])]}")
        lines.append(f"root {local[f]}")
        return "\n".join(lines) + "\n"
