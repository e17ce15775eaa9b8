"""Differential operators on sections of L^k.

An operator is stored as a normalized expression linear in the placeholder
atom ``s``; the derivative prefix on ``s`` is the jet and is kept in the
normal order of the canon module.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import permutations

from .canon import get_normalizer, nabla_prefix
from .expr import ExprError, TensorExpr, max_dummy, shift_dummies
from .parser import parse
from .scalar import ONE, ScalarPoly

PLACEHOLDER = "s"


def _split_s(key):
    """(s atom, other atoms) of a term."""
    for j, a in enumerate(key):
        if a[0] == PLACEHOLDER:
            return a, list(key[:j]) + list(key[j + 1:])
    raise ExprError("operator term without the section placeholder s")


class DiffOp:
    """Finite-order differential operator, normalized on construction."""

    __slots__ = ("expr", "norm")

    def __init__(self, expr: TensorExpr, ctx=None, rules=None, normalized=False, fired=None):
        self.norm = get_normalizer(ctx, rules)
        if not normalized:
            expr = self.norm.normalize(expr, fired)
        for key in expr.terms:
            _split_s(key)
        self.expr = expr

    @classmethod
    def parse(cls, text, ctx=None, rules=None):
        return cls(parse(text), ctx, rules)

    @classmethod
    def identity(cls, ctx=None, rules=None):
        return cls.parse("s", ctx, rules)

    def _new(self, expr, fired=None):
        d = DiffOp.__new__(DiffOp)
        d.norm = self.norm
        d.expr = self.norm.normalize(expr, fired)
        return d

    # algebra
    def __add__(self, other):
        return self._new(self.expr + other.expr)

    def __sub__(self, other):
        return self._new(self.expr - other.expr)

    def __neg__(self):
        return self._new(-self.expr)

    def scale(self, c):
        return self._new(self.expr.scale(c))

    __mul__ = scale
    __rmul__ = scale

    def __eq__(self, other):
        return isinstance(other, DiffOp) and self.expr == other.expr

    def __hash__(self):
        return hash(self.expr)

    def is_zero(self):
        return self.expr.is_zero()

    def order(self):
        return max((len(_split_s(k)[0][3]) for k in self.expr.terms), default=-1)

    def __str__(self):
        return str(self.expr)

    def __repr__(self):
        return f"DiffOp({str(self.expr)!r})"

    def apply(self, target: TensorExpr, fired=None) -> TensorExpr:
        """Substitute an expression (a section-valued expression) for s."""
        return compose_expr(self.expr, target, self.norm, fired)


def compose_expr(outer: TensorExpr, inner: TensorExpr, norm, fired=None) -> TensorExpr:
    vocab = outer.vocab
    items = []
    inner_free = set()
    for k in inner.terms:
        for a in k:
            for l, _ in a[2] + a[3]:
                if isinstance(l, str):
                    inner_free.add(l)
    for k1, c1 in outer.terms.items():
        sat, rest = _split_s(k1)
        for a in rest:
            for l, _ in a[2] + a[3]:
                if isinstance(l, str) and l in inner_free:
                    raise ExprError(f"composition would capture free index {l!r}")
        off = max_dummy(k1) + 1
        for k2, c2 in inner.terms.items():
            at2 = shift_dummies(list(k2), off)
            for at in nabla_prefix(at2, sat[3], vocab):
                items.append((c1 * c2, rest + at))
    return norm.normalize_terms(items, outer.up | inner.up, fired)


def compose(D1: DiffOp, D2: DiffOp, fired=None) -> DiffOp:
    d = DiffOp.__new__(DiffOp)
    d.norm = D1.norm
    d.expr = compose_expr(D1.expr, D2.expr, D1.norm, fired)
    return d


def commutator(D1: DiffOp, D2: DiffOp, fired=None) -> DiffOp:
    d = DiffOp.__new__(DiffOp)
    d.norm = D1.norm
    d.expr = compose_expr(D1.expr, D2.expr, D1.norm, fired) - compose_expr(D2.expr, D1.expr, D1.norm, fired)
    return d


# ---------------------------------------------------------------- symbols

def _labels(n, names=None):
    if names is not None:
        names = list(names)
        if len(names) != n:
            raise ExprError(f"expected {n} symbol labels, got {len(names)}")
        return names
    return [f"x{j + 1}" for j in range(n)]


def top_coefficient(expr: TensorExpr, n, labels):
    """Coefficient of the order-n jet with the jet indices freed as labels."""
    items = []
    for key, c in expr.terms.items():
        sat, rest = _split_s(key)
        if len(sat[3]) != n:
            continue
        rest = list(rest)
        counts = {}
        for a in rest:
            for l, _ in a[2] + a[3]:
                counts[l] = counts.get(l, 0) + 1
        for lab, (l, t) in zip(labels, sat[3]):
            if isinstance(l, int) and counts.get(l, 0) == 1:
                rest = [(nm, ar, tuple((lab if x == l else x, tt) for x, tt in sl),
                         tuple((lab if x == l else x, tt) for x, tt in pr)) for nm, ar, sl, pr in rest]
            else:
                # free derivative index: contract through the metric
                rest.append(("g", (), ((lab, 0), (l, t)), ()))
        items.append((c, rest))
    return TensorExpr.from_terms(items, expr.up | set(labels), expr.vocab)


def symmetrize_labels(e: TensorExpr, labels) -> TensorExpr:
    labels = list(labels)
    if len(labels) < 2 or e.is_zero():
        return e
    perms = list(permutations(labels))
    w = Fraction(1, len(perms))
    items = []
    for key, c in e.terms.items():
        for p in perms:
            mp = dict(zip(labels, p))
            items.append((c * w, [(nm, ar, tuple((mp.get(x, x), t) for x, t in sl),
                                   tuple((mp.get(x, x), t) for x, t in pr)) for nm, ar, sl, pr in key]))
    return TensorExpr.from_terms(items, e.up, e.vocab)


def nabla_n(sigma: TensorExpr, labels, norm=None, fired=None, target=(PLACEHOLDER, ())) -> TensorExpr:
    """sigma^{x1..xn} nabla_{x1} ... nabla_{xn} s as a normalized expression.

    ``target`` (name, args) replaces the section by a scalar atom."""
    items = []
    for key, c in sigma.terms.items():
        off = max_dummy(key) + 1
        mp = {lab: off + j for j, lab in enumerate(labels)}
        at = [(nm, ar, tuple((mp.get(x, x), t) for x, t in sl),
               tuple((mp.get(x, x), t) for x, t in pr)) for nm, ar, sl, pr in key]
        at.append((target[0], tuple(target[1]), (), tuple((off + j, 0) for j in range(len(labels)))))
        items.append((c, at))
    up = sigma.up - set(labels)
    if norm is None:
        return TensorExpr.from_terms(items, up, sigma.vocab)
    return norm.normalize_terms(items, up, fired)


def symbols(D: DiffOp, labels=None, fired=None):
    """All symbols {d: sigma_d} by the recursive top-order extraction."""
    out = {}
    cur = D.expr
    n = D.order()
    while n >= 0:
        labs = _labels(n, labels[:n] if labels is not None else None)
        sig = D.norm.normalize(symmetrize_labels(top_coefficient(cur, n, labs), labs), fired)
        out[n] = sig
        cur = cur - nabla_n(sig, labs, D.norm, fired)
        n2 = max((len(_split_s(k)[0][3]) for k in cur.terms), default=-1)
        if n2 >= n:
            raise ExprError("symbol extraction did not lower the order")
        for m in range(n - 1, n2, -1):
            out[m] = TensorExpr.zero()
        n = n2
    return out


def symbol(D: DiffOp, d: int, labels=None, fired=None) -> TensorExpr:
    if d > D.order():
        return TensorExpr.zero()
    res = symbols(D, labels, fired).get(d)
    return res if res is not None else TensorExpr.zero()


def from_symbols(sig: dict, norm, labels=None) -> TensorExpr:
    """Reassemble sum_d nabla^d_{sigma_d} s."""
    tot = TensorExpr.zero()
    for d, s in sig.items():
        labs = _labels(d, labels[:d] if labels is not None else None)
        tot = tot + nabla_n(s, labs, norm)
    return tot


# ---------------------------------------------------------------- constructors

def _as_expr(x):
    return parse(x) if isinstance(x, str) else x


def nabla_B(B, labels=None, ctx=None, rules=None) -> DiffOp:
    """nabla^n_B for a tensor with n free contravariant slots."""
    B = _as_expr(B)
    if labels is None:
        labels = sorted(B.up)
    norm = get_normalizer(ctx, rules)
    d = DiffOp.__new__(DiffOp)
    d.norm = norm
    d.expr = nabla_n(B, labels, norm)
    return d


def laplace(B, ctx=None, rules=None) -> DiffOp:
    """Delta_B = nabla^2_B + nabla_{delta B} for a bivector B^{ab}."""
    from .canon import divergence
    B = _as_expr(B)
    if B.is_zero():
        norm = get_normalizer(ctx, rules)
        d = DiffOp.__new__(DiffOp)
        d.norm, d.expr = norm, TensorExpr.zero()
        return d
    free = B.free()
    if len(free) != 2 or any(v != "up" for v in free.values()):
        raise ExprError("laplace needs a bivector with two contravariant slots")
    a, b = _slot_order(B)
    dB = divergence(B, a)
    return nabla_B(B, [a, b], ctx, rules) + nabla_B(dB, [b], ctx, rules)


def laplace_function(B, f="f", ctx=None, rules=None, fired=None) -> TensorExpr:
    """Delta_B f = B^{ab} nabla_a nabla_b f + (delta B)^b nabla_b f for a scalar atom f."""
    from .canon import divergence
    B = _as_expr(B)
    if B.is_zero():
        return B
    norm = get_normalizer(ctx, rules)
    tgt = _atom_target(f)
    a, b = _slot_order(B)
    dB = divergence(B, a)
    return nabla_n(B, [a, b], norm, fired, tgt) + nabla_n(dB, [b], norm, fired, tgt)


def _atom_target(f):
    if isinstance(f, tuple):
        return f
    e = _as_expr(f)
    (key, c), = e.terms.items()
    if len(key) != 1 or key[0][2] or key[0][3] or c != ONE:
        raise ExprError("target must be a bare scalar atom")
    return (key[0][0], key[0][1])


def _slot_order(B):
    """Free labels of B in the order of their first slot occurrence."""
    key = next(iter(B.terms))
    seen = []
    for at in key:
        for l, _ in at[3] + at[2]:
            if isinstance(l, str) and l not in seen:
                seen.append(l)
    return seen


def hamiltonian(f) -> TensorExpr:
    """X_f^a = nabla_u f omegaInv^{u a}, so that X_f . omega = df."""
    f = _as_expr(f)
    if f.free():
        raise ExprError("hamiltonian needs a scalar function")
    from .canon import nabla
    return nabla(f, "u") * parse("omegaInv^{u a}")


def prequantum(f, ctx=None, rules=None) -> DiffOp:
    """P_k(f) = (i/k) nabla_{X_f} + f."""
    f = _as_expr(f)
    X = hamiltonian(f)
    I = ScalarPoly.var("i")
    K = ScalarPoly.var("k")
    norm = get_normalizer(ctx, rules)
    first = nabla_n(X, ["a"]).scale(I / K)
    zero = f * parse("s")
    d = DiffOp.__new__(DiffOp)
    d.norm = norm
    d.expr = norm.normalize(first + zero)
    return d


def poisson(f, g) -> TensorExpr:
    """{f, g} = X_f(g) = nabla_u g X_f^u."""
    from .canon import nabla
    X = hamiltonian(_as_expr(f))
    dg = nabla(_as_expr(g), "a")
    return dg * X
