"""Exact sparse linear algebra over Q(i) for span-membership questions.

An expression is flattened to a vector indexed by (term key, monomial without
i); entries are Gaussian rationals stored as pairs of Fractions.  Unknown
coefficients may be polynomials in k, t, lambda, m: a generator g is offered
as the columns mu * g for every monomial mu that can reach a monomial of the
target.
"""
from __future__ import annotations

from fractions import Fraction

from .scalar import ScalarPoly

_Z = (Fraction(0), Fraction(0))


def _q(re, im=0):
    return (Fraction(re), Fraction(im))


def _mul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _inv(a):
    n = a[0] * a[0] + a[1] * a[1]
    return (a[0] / n, -a[1] / n)


def _nz(a):
    return a[0] != 0 or a[1] != 0


def flatten(expr):
    """{(key, mono): gaussian} for a TensorExpr."""
    out = {}
    for key, c in expr.terms.items():
        for mono, q in c.terms.items():
            m = mono[1:]
            v = (q, Fraction(0)) if mono[0] == 0 else (Fraction(0), q)
            k = (key, m)
            old = out.get(k, _Z)
            s = (old[0] + v[0], old[1] + v[1])
            if _nz(s):
                out[k] = s
            else:
                out.pop(k, None)
    return out


def _shift(vec, mu):
    return {(k, tuple(a + b for a, b in zip(m, mu))): v for (k, m), v in vec.items()}


def _divides(a, b):
    return all(x <= y for x, y in zip(a, b))


class SpanSolver:
    """Incremental row-echelon basis; reduce() returns the residual of a vector."""

    def __init__(self):
        self.pivots = {}          # pivot coordinate -> (row, combo)
        self.order = []

    def _reduce(self, vec, combo):
        vec = dict(vec)
        combo = dict(combo)
        changed = True
        while changed:
            changed = False
            for coord in list(vec):
                if coord not in vec:
                    continue
                piv = self.pivots.get(coord)
                if piv is None:
                    continue
                row, rc = piv
                f = vec[coord]
                for k, v in row.items():
                    nv = _sub(vec.get(k, _Z), _mul(f, v))
                    if _nz(nv):
                        vec[k] = nv
                    else:
                        vec.pop(k, None)
                for k, v in rc.items():
                    nv = _sub(combo.get(k, _Z), _mul(f, v))
                    if _nz(nv):
                        combo[k] = nv
                    else:
                        combo.pop(k, None)
                changed = True
        return vec, combo

    def add(self, vec, label):
        vec, combo = self._reduce(vec, {label: _q(1)})
        if not vec:
            return False
        coord = min(vec, key=_coord_key)
        f = _inv(vec[coord])
        vec = {k: _mul(f, v) for k, v in vec.items()}
        combo = {k: _mul(f, v) for k, v in combo.items()}
        self.pivots[coord] = (vec, combo)
        self.order.append(coord)
        return True

    def reduce(self, vec):
        """(residual, combination) with vec = residual + sum combo[label] * generator."""
        res, combo = self._reduce(vec, {})
        return res, {k: (-v[0], -v[1]) for k, v in combo.items()}


def _coord_key(c):
    return (repr(c[0]), c[1])


def gaussian_to_scalar(v):
    out = ScalarPoly()
    if v[0]:
        out = out + ScalarPoly.const(v[0])
    if v[1]:
        out = out + ScalarPoly.const(v[1]) * ScalarPoly.var("i")
    return out


def unflatten(vec, up, vocab):
    from .expr import TensorExpr
    acc = {}
    for (key, m), v in vec.items():
        c = gaussian_to_scalar(v)
        mono = ScalarPoly({(0,) + tuple(m): Fraction(1)})
        acc[key] = acc.get(key, ScalarPoly()) + c * mono
    return TensorExpr({k: c for k, c in acc.items() if c}, up, vocab)


def reduce_in_span(target, generators, up=None):
    """Residual of target modulo the Q(i)[k,t,lambda,m]-span of generators.

    ``generators`` maps a label to a normalized TensorExpr.  Returns the
    residual expression and {label: ScalarPoly} coefficients."""
    tv = flatten(target)
    tmonos = {m for _, m in tv}
    solver = SpanSolver()
    for lab, g in generators.items():
        gv = flatten(g)
        if not gv:
            continue
        gmonos = {m for _, m in gv}
        shifts = set()
        for tm in tmonos:
            for gm in gmonos:
                if _divides(gm, tm):
                    shifts.add(tuple(b - a for a, b in zip(gm, tm)))
        for mu in sorted(shifts):
            solver.add(_shift(gv, mu), (lab, mu))
    res, combo = solver.reduce(tv)
    coeffs = {}
    for (lab, mu), v in combo.items():
        c = gaussian_to_scalar(v) * ScalarPoly({(0,) + tuple(mu): Fraction(1)})
        coeffs[lab] = coeffs.get(lab, ScalarPoly()) + c
    return unflatten(res, target.up if up is None else up, target.vocab), coeffs
