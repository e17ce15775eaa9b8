"""Formal scalars: polynomials over Q in i, k, t, lambda, m.

Relations applied eagerly: i*i = -1 and tbar = 2k - t.
A monomial is an exponent tuple (i, k, t, lam, m) with i in {0, 1}.
"""
from __future__ import annotations

from fractions import Fraction
from functools import reduce

VARS = ("i", "k", "t", "lambda", "m")
_ALIASES = {"lam": "lambda", "n": "lambda"}
ONE_MONO = (0, 0, 0, 0, 0)


def _mono_mul(a, b):
    i = a[0] + b[0]
    sign = 1
    if i >= 2:
        i -= 2
        sign = -1
    return (i, a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4]), sign


class ScalarPoly:
    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        # terms: dict mono -> Fraction, zero entries dropped
        self.terms = {m: c for m, c in (terms or {}).items() if c}
        self._hash = None

    # constructors
    @classmethod
    def const(cls, c):
        c = Fraction(c)
        return cls({ONE_MONO: c} if c else {})

    @classmethod
    def var(cls, name):
        name = _ALIASES.get(name, name)
        if name == "tbar":
            return cls({(0, 1, 0, 0, 0): Fraction(2), (0, 0, 1, 0, 0): Fraction(-1)})
        idx = VARS.index(name)
        e = [0] * 5
        e[idx] = 1
        return cls({tuple(e): Fraction(1)})

    # arithmetic
    def __add__(self, other):
        other = _coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return ScalarPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return ScalarPoly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        out = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m, s = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + s * c1 * c2
        return ScalarPoly(out)

    __rmul__ = __mul__

    def __pow__(self, n):
        return reduce(lambda a, b: a * b, [self] * n, ScalarPoly.const(1))

    def __truediv__(self, other):
        if isinstance(other, ScalarPoly):
            return self * other.inverse()
        other = Fraction(other)
        return ScalarPoly({m: c / other for m, c in self.terms.items()})

    def inverse(self):
        """Inverse of a single-term polynomial (Laurent in k, t, lambda, m)."""
        if len(self.terms) != 1:
            raise ZeroDivisionError(f"cannot invert {self}")
        (m, c), = self.terms.items()
        inv = (m[0],) + tuple(-e for e in m[1:])
        c = 1 / c
        if m[0]:
            c = -c          # 1/i = -i
        return ScalarPoly({inv: c})

    def __eq__(self, other):
        if not isinstance(other, ScalarPoly):
            try:
                other = _coerce(other)
            except TypeError:
                return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self):
        return not self.terms

    def conjugate(self):
        """i -> -i and t -> 2k - t."""
        out = ScalarPoly()
        tbar = ScalarPoly.var("tbar")
        for (ie, ke, te, le, me), c in self.terms.items():
            base = ScalarPoly({(0, ke, 0, le, me): c * (-1 if ie else 1)})
            if ie:
                base = base * ScalarPoly.var("i")
            out = out + base * (tbar ** te)
        return out

    def evaluate(self, **vals):
        vals = {_ALIASES.get(k, k): v for k, v in vals.items()}
        vals.setdefault("i", 1j)
        tot = 0
        for mono, c in self.terms.items():
            v = complex(c) if isinstance(c, Fraction) else c
            for name, e in zip(VARS, mono):
                if e:
                    v *= vals[name] ** e
            tot += v
        return tot

    def sorted_items(self):
        return sorted(self.terms.items(), key=lambda mc: _mono_order(mc[0]))

    def __repr__(self):
        return f"ScalarPoly({format_scalar(self)!r})"

    def __str__(self):
        return format_scalar(self)


def _mono_order(m):
    return (sum(m[1:]), m[1:], m[0])


def _coerce(x):
    if isinstance(x, ScalarPoly):
        return x
    if isinstance(x, (int, Fraction)):
        return ScalarPoly.const(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to ScalarPoly")


def format_mono(m):
    parts = []
    for name, e in zip(VARS, m):
        if e == 1:
            parts.append(name)
        elif e:
            parts.append(f"{name}^{e}")
    return " ".join(parts)


def format_scalar(p):
    if not p.terms:
        return "0"
    out = []
    for m, c in p.sorted_items():
        body = format_mono(m)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if body:
            txt = body if a == 1 else f"{a} {body}"
        else:
            txt = str(a)
        out.append((sign, txt))
    s = ("-" if out[0][0] == "-" else "") + out[0][1]
    for sign, txt in out[1:]:
        s += f" {sign} {txt}"
    return s


ZERO = ScalarPoly()
ONE = ScalarPoly.const(1)
I = ScalarPoly.var("i")
K = ScalarPoly.var("k")
T = ScalarPoly.var("t")
TBAR = ScalarPoly.var("tbar")
LAM = ScalarPoly.var("lambda")
M = ScalarPoly.var("m")
