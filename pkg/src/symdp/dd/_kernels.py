"""Array-backed decision diagram kernels.

All node data lives in flat arrays bundled in a :class:`Store`. Every kernel
that may allocate returns a negative status code instead of a node id when a
table is full; the manager grows the table and re-runs the call. Nodes created
before the failure stay valid, so a retry only redoes the missing work.

Node layout: ``var[k]`` is the variable index (``LEAF`` for terminals),
``hi``/``lo`` the children, ``val`` the terminal value. ``flags`` caches three
bits per node: all leaves in {0, 1}; mentions an even (unprimed) variable;
mentions an odd (primed) variable.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .._jit import njit

LEAF = 1 << 30

FULL_NODES = -1
FULL_CACHE = -2
FULL_TRANSIENT = -3

ADD, SUB, MUL, MAX, MIN, AND, OR, DIFF = range(8)

F_BOOL = 1
F_UNPRIMED = 2
F_PRIMED = 4

# transient-cache tags, one per operation family
T_ABS = 1
T_REL = 2
T_SHIFT = 3
T_COF = 4
T_THR = 5
T_NOT = 6
T_SEEN = 7
T_POS = 8


class Store(NamedTuple):
    var: np.ndarray
    hi: np.ndarray
    lo: np.ndarray
    val: np.ndarray
    flags: np.ndarray
    ut: np.ndarray
    ck: np.ndarray  # persistent cache rows (op, f, g, result)
    tk: np.ndarray  # transient cache rows (tag, f, g, result, generation)
    meta: np.ndarray  # [n_nodes, cache_count, transient_count, transient_gen]


def new_store(node_cap: int, cache_cap: int, transient_cap: int) -> Store:
    tk = np.zeros((transient_cap, 5), dtype=np.int64)
    tk[:, 4] = -1
    return Store(
        var=np.zeros(node_cap, dtype=np.int64),
        hi=np.zeros(node_cap, dtype=np.int64),
        lo=np.zeros(node_cap, dtype=np.int64),
        val=np.zeros(node_cap, dtype=np.float64),
        flags=np.zeros(node_cap, dtype=np.int64),
        ut=np.full(2 * node_cap, -1, dtype=np.int64),
        ck=np.full((cache_cap, 4), -1, dtype=np.int64),
        tk=tk,
        meta=np.zeros(4, dtype=np.int64),
    )


@njit(inline=True, nrt=False)
def _h3(a, b, c):
    h = (a * 73856093) ^ (b * 19349663) ^ (c * 83492791)
    return h ^ (h >> 17)


@njit(inline=True, nrt=False)
def _hleaf(x):
    # exact for every finite double: mantissa scaled to an integer plus exponent
    m, e = math.frexp(x)
    return _h3(LEAF, e, int(m * 9007199254740992.0))


@njit(inline=True, nrt=False)
def _lvl(v, nv):
    if v == LEAF:
        return nv
    return v


# kernels below never allocate, so they skip array reference counting
kernel = njit(nrt=False)


# ---------------------------------------------------------------- unique table


@kernel
def leaf(S, x):
    if x == 0.0:
        x = 0.0  # fold -0.0 into +0.0
    mask = S.ut.shape[0] - 1
    i = _hleaf(x) & mask
    while True:
        k = S.ut[i]
        if k == -1:
            break
        if S.var[k] == LEAF and S.val[k] == x:
            return k
        i = (i + 1) & mask
    n = S.meta[0]
    if n >= S.var.shape[0]:
        return FULL_NODES
    S.var[n] = LEAF
    S.hi[n] = -1
    S.lo[n] = -1
    S.val[n] = x
    if x == 0.0 or x == 1.0:
        S.flags[n] = F_BOOL
    else:
        S.flags[n] = 0
    S.ut[i] = n
    S.meta[0] = n + 1
    return n


@kernel
def node(S, v, h, l):
    if h == l:
        return h
    mask = S.ut.shape[0] - 1
    i = _h3(v, h, l) & mask
    while True:
        k = S.ut[i]
        if k == -1:
            break
        if S.var[k] == v and S.hi[k] == h and S.lo[k] == l:
            return k
        i = (i + 1) & mask
    n = S.meta[0]
    if n >= S.var.shape[0]:
        return FULL_NODES
    S.var[n] = v
    S.hi[n] = h
    S.lo[n] = l
    S.val[n] = 0.0
    fl = (S.flags[h] & S.flags[l] & F_BOOL) | ((S.flags[h] | S.flags[l]) & (F_UNPRIMED | F_PRIMED))
    if v % 2 == 0:
        fl |= F_UNPRIMED
    else:
        fl |= F_PRIMED
    S.flags[n] = fl
    S.ut[i] = n
    S.meta[0] = n + 1
    return n


@kernel
def rebuild_unique(S):
    """Re-insert every node into a freshly cleared unique table."""
    mask = S.ut.shape[0] - 1
    for k in range(S.meta[0]):
        if S.var[k] == LEAF:
            i = _hleaf(S.val[k]) & mask
        else:
            i = _h3(S.var[k], S.hi[k], S.lo[k]) & mask
        while S.ut[i] != -1:
            i = (i + 1) & mask
        S.ut[i] = k


@kernel
def mark_live(S, roots, live):
    """Flag every node reachable from roots. Children precede parents."""
    for r in roots:
        live[r] = True
    for k in range(S.meta[0] - 1, -1, -1):
        if live[k] and S.var[k] != LEAF:
            live[S.hi[k]] = True
            live[S.lo[k]] = True


# ---------------------------------------------------------------- caches


@njit(inline=True, nrt=False)
def _cget(S, a, b, c):
    ck = S.ck
    mask = ck.shape[0] - 1
    i = _h3(a, b, c) & mask
    while True:
        if ck[i, 0] == -1:
            return -1
        if ck[i, 0] == a and ck[i, 1] == b and ck[i, 2] == c:
            return ck[i, 3]
        i = (i + 1) & mask


@njit(inline=True, nrt=False)
def _cput(S, a, b, c, r):
    ck = S.ck
    cap = ck.shape[0]
    if 2 * S.meta[1] >= cap:
        return False
    mask = cap - 1
    i = _h3(a, b, c) & mask
    while ck[i, 0] != -1:
        if ck[i, 0] == a and ck[i, 1] == b and ck[i, 2] == c:
            ck[i, 3] = r
            return True
        i = (i + 1) & mask
    ck[i, 0] = a
    ck[i, 1] = b
    ck[i, 2] = c
    ck[i, 3] = r
    S.meta[1] += 1
    return True


@kernel
def rehash_cache(old, S):
    for i in range(old.shape[0]):
        if old[i, 0] != -1:
            _cput(S, old[i, 0], old[i, 1], old[i, 2], old[i, 3])


@njit(inline=True, nrt=False)
def _tget(S, a, b, c):
    tk = S.tk
    gen = S.meta[3]
    mask = tk.shape[0] - 1
    i = _h3(a, b, c) & mask
    while True:
        if tk[i, 4] != gen:
            return -1
        if tk[i, 0] == a and tk[i, 1] == b and tk[i, 2] == c:
            return tk[i, 3]
        i = (i + 1) & mask


@njit(inline=True, nrt=False)
def _tput(S, a, b, c, r):
    tk = S.tk
    cap = tk.shape[0]
    if 2 * S.meta[2] >= cap:
        return False
    gen = S.meta[3]
    mask = cap - 1
    i = _h3(a, b, c) & mask
    while tk[i, 4] == gen:
        if tk[i, 0] == a and tk[i, 1] == b and tk[i, 2] == c:
            tk[i, 3] = r
            return True
        i = (i + 1) & mask
    tk[i, 0] = a
    tk[i, 1] = b
    tk[i, 2] = c
    tk[i, 3] = r
    tk[i, 4] = gen
    S.meta[2] += 1
    return True


# ---------------------------------------------------------------- apply


@njit(inline=True, nrt=False)
def _leaf_op(op, x, y):
    if op == ADD:
        return x + y
    if op == SUB:
        return x - y
    if op == MUL or op == AND:
        return x * y
    if op == MAX or op == OR:
        return x if x >= y else y
    if op == MIN:
        return x if x <= y else y
    # DIFF on 0/1 values
    return x * (1.0 - y)


@kernel
def apply(S, op, f, g):
    var = S.var
    val = S.val
    vf = var[f]
    vg = var[g]
    if vf == LEAF and vg == LEAF:
        return leaf(S, _leaf_op(op, val[f], val[g]))
    if op == ADD:
        if vf == LEAF and val[f] == 0.0:
            return g
        if vg == LEAF and val[g] == 0.0:
            return f
    elif op == SUB:
        if vg == LEAF and val[g] == 0.0:
            return f
        if f == g:
            return leaf(S, 0.0)
    elif op == MUL or op == AND:
        if vf == LEAF:
            if val[f] == 0.0:
                return f
            if val[f] == 1.0:
                return g
        if vg == LEAF:
            if val[g] == 0.0:
                return g
            if val[g] == 1.0:
                return f
        if op == AND and f == g:
            return f
    elif op == MAX or op == MIN:
        if f == g:
            return f
    elif op == OR:
        if f == g:
            return f
        if vf == LEAF:
            return f if val[f] == 1.0 else g
        if vg == LEAF:
            return g if val[g] == 1.0 else f
    else:  # DIFF
        if f == g:
            return leaf(S, 0.0)
        if vf == LEAF and val[f] == 0.0:
            return f
        if vg == LEAF:
            if val[g] == 0.0:
                return f
            return leaf(S, 0.0)
    if op != SUB and op != DIFF and f > g:
        f, g = g, f
        vf, vg = vg, vf
    r = _cget(S, op, f, g)
    if r >= 0:
        return r
    v = vf if vf < vg else vg
    if vf == v:
        f1 = S.hi[f]
        f0 = S.lo[f]
    else:
        f1 = f
        f0 = f
    if vg == v:
        g1 = S.hi[g]
        g0 = S.lo[g]
    else:
        g1 = g
        g0 = g
    h = apply(S, op, f1, g1)
    if h < 0:
        return h
    l = apply(S, op, f0, g0)
    if l < 0:
        return l
    r = node(S, v, h, l)
    if r < 0:
        return r
    if not _cput(S, op, f, g, r):
        return FULL_CACHE
    return r


# ---------------------------------------------------------------- abstraction


@kernel
def _scale(S, r, k):
    if k == 0 or r < 0:
        return r
    c = leaf(S, 2.0 ** k)
    if c < 0:
        return c
    return apply(S, MUL, r, c)


@kernel
def _abs(S, f, mask, cnt, nv, is_or):
    # quantifies the masked variables with index >= level(f)
    v = S.var[f]
    if v == LEAF:
        return f
    r = _tget(S, T_ABS, f, 0)
    if r >= 0:
        return r
    h = S.hi[f]
    l = S.lo[f]
    rh = _abs(S, h, mask, cnt, nv, is_or)
    if rh < 0:
        return rh
    rl = _abs(S, l, mask, cnt, nv, is_or)
    if rl < 0:
        return rl
    if not is_or:
        rh = _scale(S, rh, cnt[_lvl(S.var[h], nv)] - cnt[v + 1])
        if rh < 0:
            return rh
        rl = _scale(S, rl, cnt[_lvl(S.var[l], nv)] - cnt[v + 1])
        if rl < 0:
            return rl
    if mask[v]:
        r = apply(S, OR if is_or else ADD, rh, rl)
    else:
        r = node(S, v, rh, rl)
    if r < 0:
        return r
    if not _tput(S, T_ABS, f, 0, r):
        return FULL_TRANSIENT
    return r


@kernel
def abstract(S, f, mask, cnt, nv, is_or):
    r = _abs(S, f, mask, cnt, nv, is_or)
    if is_or:
        return r
    return _scale(S, r, cnt[_lvl(S.var[f], nv)])


@kernel
def _rel(S, f, g, mask, cnt, nv, is_or):
    # quantifies masked variables with index >= top(f, g) out of f*g
    var = S.var
    val = S.val
    vf = var[f]
    vg = var[g]
    if vf == LEAF and val[f] == 0.0:
        return f
    if vg == LEAF and val[g] == 0.0:
        return g
    if vf == LEAF and vg == LEAF:
        return leaf(S, val[f] * val[g])
    if vf == LEAF:
        r = _abs(S, g, mask, cnt, nv, is_or)
        if r < 0 or val[f] == 1.0:
            return r
        return apply(S, MUL, r, f)
    if vg == LEAF:
        r = _abs(S, f, mask, cnt, nv, is_or)
        if r < 0 or val[g] == 1.0:
            return r
        return apply(S, MUL, r, g)
    if f > g:
        f, g = g, f
        vf, vg = vg, vf
    r = _tget(S, T_REL, f, g)
    if r >= 0:
        return r
    v = vf if vf < vg else vg
    if vf == v:
        f1 = S.hi[f]
        f0 = S.lo[f]
    else:
        f1 = f
        f0 = f
    if vg == v:
        g1 = S.hi[g]
        g0 = S.lo[g]
    else:
        g1 = g
        g0 = g
    rh = _rel(S, f1, g1, mask, cnt, nv, is_or)
    if rh < 0:
        return rh
    if is_or and mask[v] and var[rh] == LEAF and val[rh] == 1.0:
        r = rh
    else:
        rl = _rel(S, f0, g0, mask, cnt, nv, is_or)
        if rl < 0:
            return rl
        if not is_or:
            t1 = min(_lvl(var[f1], nv), _lvl(var[g1], nv))
            t0 = min(_lvl(var[f0], nv), _lvl(var[g0], nv))
            rh = _scale(S, rh, cnt[t1] - cnt[v + 1])
            if rh < 0:
                return rh
            rl = _scale(S, rl, cnt[t0] - cnt[v + 1])
            if rl < 0:
                return rl
        if mask[v]:
            r = apply(S, OR if is_or else ADD, rh, rl)
        else:
            r = node(S, v, rh, rl)
        if r < 0:
            return r
    if not _tput(S, T_REL, f, g, r):
        return FULL_TRANSIENT
    return r


@kernel
def relprod(S, f, g, mask, cnt, nv, is_or):
    """Quantify the masked variables out of ``f * g`` (sum or or)."""
    r = _rel(S, f, g, mask, cnt, nv, is_or)
    if is_or:
        return r
    top = min(_lvl(S.var[f], nv), _lvl(S.var[g], nv))
    return _scale(S, r, cnt[top])


@kernel
def bellman(S, vp, rewards, factors, pvars, masks, cnts, gamma, chi, early, nv, qs):
    """All Q_a = R_a + gamma * sum over pvars of prod_i F[a, i] * vp, and their
    max. ``pvars`` lists the primed variables of vp bottom-up; ``factors[a,
    k]`` is the factor for pvars[k]. With chi >= 0 each Q_a is masked by chi,
    inside the expectation when ``early``. Q roots go to qs."""
    g = leaf(S, gamma)
    if g < 0:
        return g
    best = -1
    for a in range(rewards.shape[0]):
        w = vp
        if chi >= 0 and early:
            w = apply(S, MUL, chi, vp)
            if w < 0:
                return w
        for k in range(pvars.shape[0]):
            S.meta[3] += 1
            S.meta[2] = 0
            w = relprod(S, factors[a, k], w, masks[k], cnts[k], nv, False)
            if w < 0:
                return w
        nxt = apply(S, MUL, w, g)
        if nxt < 0:
            return nxt
        r = rewards[a]
        if chi >= 0 and early:
            r = apply(S, MUL, r, chi)
            if r < 0:
                return r
        q = apply(S, ADD, r, nxt)
        if q < 0:
            return q
        if chi >= 0 and not early:
            q = apply(S, MUL, q, chi)
            if q < 0:
                return q
        qs[a] = q
        if best < 0:
            best = q
        else:
            best = apply(S, MAX, best, q)
            if best < 0:
                return best
    return best


# ---------------------------------------------------------------- unary maps


@kernel
def shift(S, f, d):
    """Rename every variable v to v + d (order preserving by contract)."""
    v = S.var[f]
    if v == LEAF:
        return f
    r = _tget(S, T_SHIFT, f, 0)
    if r >= 0:
        return r
    h = shift(S, S.hi[f], d)
    if h < 0:
        return h
    l = shift(S, S.lo[f], d)
    if l < 0:
        return l
    r = node(S, v + d, h, l)
    if r < 0:
        return r
    if not _tput(S, T_SHIFT, f, 0, r):
        return FULL_TRANSIENT
    return r


@kernel
def cofactor(S, f, asg):
    """Restrict f by a partial assignment (asg[v] in {-1, 0, 1})."""
    v = S.var[f]
    if v == LEAF:
        return f
    if asg[v] == 1:
        return cofactor(S, S.hi[f], asg)
    if asg[v] == 0:
        return cofactor(S, S.lo[f], asg)
    r = _tget(S, T_COF, f, 0)
    if r >= 0:
        return r
    h = cofactor(S, S.hi[f], asg)
    if h < 0:
        return h
    l = cofactor(S, S.lo[f], asg)
    if l < 0:
        return l
    r = node(S, v, h, l)
    if r < 0:
        return r
    if not _tput(S, T_COF, f, 0, r):
        return FULL_TRANSIENT
    return r


@kernel
def threshold(S, f, lo, hi):
    v = S.var[f]
    if v == LEAF:
        x = S.val[f]
        return leaf(S, 1.0 if (lo <= x and x <= hi) else 0.0)
    r = _tget(S, T_THR, f, 0)
    if r >= 0:
        return r
    h = threshold(S, S.hi[f], lo, hi)
    if h < 0:
        return h
    l = threshold(S, S.lo[f], lo, hi)
    if l < 0:
        return l
    r = node(S, v, h, l)
    if r < 0:
        return r
    if not _tput(S, T_THR, f, 0, r):
        return FULL_TRANSIENT
    return r


@kernel
def complement(S, f):
    v = S.var[f]
    if v == LEAF:
        return leaf(S, 1.0 - S.val[f])
    r = _tget(S, T_NOT, f, 0)
    if r >= 0:
        return r
    h = complement(S, S.hi[f])
    if h < 0:
        return h
    l = complement(S, S.lo[f])
    if l < 0:
        return l
    r = node(S, v, h, l)
    if r < 0:
        return r
    if not _tput(S, T_NOT, f, 0, r):
        return FULL_TRANSIENT
    return r


# ---------------------------------------------------------------- paths


@njit
def full_tree(S, vars, vals):
    """Complete decision tree testing vars (ascending) in order; vals[u] is
    the leaf for the assignment whose bits, read as a number with vars[0]
    most significant, equal u."""
    k = vars.shape[0]
    level = np.empty(vals.shape[0], dtype=np.int64)
    for u in range(vals.shape[0]):
        r = leaf(S, vals[u])
        if r < 0:
            return r
        level[u] = r
    for d in range(k - 1, -1, -1):
        width = 1 << d
        for u in range(width):
            r = node(S, vars[d], level[2 * u + 1], level[2 * u])
            if r < 0:
                return r
            level[u] = r
    return level[0]


@njit
def full_trees(S, vars, var_off, vals, val_off, out):
    """Batch of :func:`full_tree`; tree j uses vars[var_off[j]:var_off[j+1]]
    and vals[val_off[j]:val_off[j+1]]. Roots go to out; returns 0 or a
    status code."""
    for j in range(out.shape[0]):
        r = full_tree(S, vars[var_off[j]:var_off[j + 1]], vals[val_off[j]:val_off[j + 1]])
        if r < 0:
            return r
        out[j] = r
    return 0


@kernel
def cube(S, asg, nv):
    """Conjunction of the literals fixed in asg (entries -1 are free)."""
    one = leaf(S, 1.0)
    if one < 0:
        return one
    zero = leaf(S, 0.0)
    if zero < 0:
        return zero
    r = one
    for v in range(nv - 1, -1, -1):
        if asg[v] == 1:
            r = node(S, v, r, zero)
        elif asg[v] == 0:
            r = node(S, v, zero, r)
        if r < 0:
            return r
    return r


@kernel
def set_path(S, f, asg, q, i, nv):
    """Return f with the value at the unprimed assignment asg replaced by q."""
    if i >= nv:
        return leaf(S, q)
    v = S.var[f]
    if v == i:
        h = S.hi[f]
        l = S.lo[f]
    else:
        h = f
        l = f
    if asg[i] == 1:
        h = set_path(S, h, asg, q, i + 2, nv)
        if h < 0:
            return h
    else:
        l = set_path(S, l, asg, q, i + 2, nv)
        if l < 0:
            return l
    return node(S, i, h, l)


@kernel
def walk(S, f, asg):
    """Follow asg from f; returns the leaf id, or -1 if a variable is unset."""
    while S.var[f] != LEAF:
        b = asg[S.var[f]]
        if b == 1:
            f = S.hi[f]
        elif b == 0:
            f = S.lo[f]
        else:
            return -1
    return f


@kernel
def eval_many(S, roots, asg, out):
    for j in range(roots.shape[0]):
        k = walk(S, roots[j], asg)
        if k < 0:
            return False
        out[j] = S.val[k]
    return True


# ---------------------------------------------------------------- traversal


@njit
def leaf_bounds(S, roots, lo, hi):
    """Smallest and largest leaf below each root. Returns 0 or a status."""
    stack = np.empty(64, dtype=np.int64)
    for j in range(roots.shape[0]):
        S.meta[3] += 1
        S.meta[2] = 0
        a = np.inf
        b = -np.inf
        stack[0] = roots[j]
        top = 1
        while top > 0:
            top -= 1
            k = stack[top]
            if S.var[k] == LEAF:
                x = S.val[k]
                if x < a:
                    a = x
                if x > b:
                    b = x
                continue
            if _tget(S, T_SEEN, k, 0) >= 0:
                continue
            if not _tput(S, T_SEEN, k, 0, 1):
                return FULL_TRANSIENT
            if top + 2 > stack.shape[0]:
                grown = np.empty(2 * stack.shape[0], dtype=np.int64)
                grown[:top] = stack[:top]
                stack = grown
            stack[top] = S.hi[k]
            stack[top + 1] = S.lo[k]
            top += 2
        lo[j] = a
        hi[j] = b
    return 0


@njit
def postorder(S, f):
    """Node ids reachable from f, children before parents. Returns (ids, status)."""
    out = np.empty(64, dtype=np.int64)
    n = 0
    stack = np.empty(64, dtype=np.int64)
    top = 0
    stack[0] = f
    top = 1
    while top > 0:
        k = stack[top - 1]
        s = _tget(S, T_SEEN, k, 0)
        if s == 1:
            top -= 1
            continue
        if S.var[k] != LEAF and s == -1:
            if not _tput(S, T_SEEN, k, 0, 0):
                return out[:n], FULL_TRANSIENT
            if top + 2 > stack.shape[0]:
                grown = np.empty(2 * stack.shape[0], dtype=np.int64)
                grown[:top] = stack[:top]
                stack = grown
            for c in (S.lo[k], S.hi[k]):
                if _tget(S, T_SEEN, c, 0) != 1:
                    stack[top] = c
                    top += 1
            continue
        if not _tput(S, T_SEEN, k, 0, 1):
            return out[:n], FULL_TRANSIENT
        top -= 1
        if n >= out.shape[0]:
            grown = np.empty(2 * out.shape[0], dtype=np.int64)
            grown[:n] = out[:n]
            out = grown
        out[n] = k
        n += 1
    return out[:n], 0


@njit
def expect_many(S, order, probs):
    """E[f(X)] under independent bits, one row of ``probs`` per distribution.

    ``order`` is the postorder of f; ``probs[j, v]`` is P(var v true).
    """
    m = order.shape[0]
    for p in range(m):
        if not _tput(S, T_POS, order[p], 0, p):
            return np.empty((0, 0)), FULL_TRANSIENT
    vals = np.empty((probs.shape[0], m))
    for p in range(m):
        k = order[p]
        if S.var[k] == LEAF:
            for j in range(probs.shape[0]):
                vals[j, p] = S.val[k]
        else:
            ph = _tget(S, T_POS, S.hi[k], 0)
            pl = _tget(S, T_POS, S.lo[k], 0)
            v = S.var[k]
            for j in range(probs.shape[0]):
                q = probs[j, v]
                vals[j, p] = q * vals[j, ph] + (1.0 - q) * vals[j, pl]
    return vals, 0
