"""Parser for the expression notation.

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := factor ('*'? factor)*
    factor := number ['/' number] | scalar | atom | 'nabla' idx factor
            | '(' expr ')' | 'Sym' '[' labels ']' '(' expr ')'
    atom   := name ['(' args ')'] (('_'|'^') '{' index* '}')*
    index  := letter [digits] ["'" | "''"]
"""
from __future__ import annotations

import re
from fractions import Fraction

from .expr import FLIP, ExprError, TensorExpr, symmetrize
from .scalar import ONE, ScalarPoly
from .vocab import DEFAULT_VOCAB

SCALAR_NAMES = {"i", "k", "t", "tbar", "lambda", "lam", "m"}

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z][A-Za-z0-9]*)
  | (?P<prime>'{1,2})
  | (?P<op>[-+*/_^{}()\[\],])
""", re.VERBOSE)


class ParseError(ExprError):
    def __init__(self, msg, pos=None, text=None):
        self.pos = pos
        if pos is not None:
            msg = f"{msg} at position {pos}"
            if text is not None:
                msg += f": {text[max(0, pos - 10):pos]}<<>>{text[pos:pos + 10]}"
        super().__init__(msg)


def tokenize(text):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", pos))
    return out


class _Raw:
    """A raw sum: list of (coeff, atoms, variances) with str labels."""

    def __init__(self, items):
        self.items = items   # (ScalarPoly, [atom], {label: [variance...]})


class Parser:
    def __init__(self, text, vocab=None, canonical=True):
        self.canonical = canonical
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.vocab = vocab or DEFAULT_VOCAB
        self.fresh = 0

    def peek(self, k=0):
        return self.toks[self.i + k]

    def take(self, value=None, kind=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, got {tok[1]!r}", tok[2], self.text)
        if kind is not None and tok[0] != kind:
            raise ParseError(f"expected {kind}, got {tok[1]!r}", tok[2], self.text)
        self.i += 1
        return tok

    # grammar ----------------------------------------------------------
    def parse(self):
        raw = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2], self.text)
        return self.finish(raw)

    def expr(self):
        items = []
        sign = 1
        tok = self.peek()
        if tok[1] in "+-" and tok[0] == "op":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        while True:
            t = self.term()
            for c, atoms, var in t:
                items.append((c * sign, atoms, var))
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                sign = -1 if tok[1] == "-" else 1
                continue
            break
        return items

    def term(self):
        acc = [(ONE, [], {})]
        nfac = 0
        while True:
            tok = self.peek()
            if tok[0] == "end" or (tok[0] == "op" and tok[1] in "+-)],"):
                break
            if tok[0] == "op" and tok[1] == "*":
                self.take()
                continue
            fac = self.factor()
            acc = self._mul(acc, fac)
            nfac += 1
        if nfac == 0:
            tok = self.peek()
            raise ParseError("empty term", tok[2], self.text)
        return acc

    def _mul(self, a, b):
        out = []
        for c1, at1, v1 in a:
            for c2, at2, v2 in b:
                var = {k: list(v) for k, v in v1.items()}
                for k, v in v2.items():
                    var.setdefault(k, []).extend(v)
                for k, v in var.items():
                    if len(v) > 2:
                        raise ParseError(f"index {k!r} used more than twice", self.peek()[2], self.text)
                out.append((c1 * c2, at1 + at2, var))
        return out

    def factor(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            num = Fraction(int(tok[1]))
            if self.peek()[1] == "/":
                self.take()
                den = self.take(kind="num")
                num = num / int(den[1])
            return [(ScalarPoly.const(num), [], {})]
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            inner = self.expr()
            self.take(")")
            return self._localize(inner)
        if tok[0] == "name":
            name = tok[1]
            if name == "Sym":
                return self.sym()
            if name == "nabla":
                return self.nabla()
            nxt = self.peek(1)
            if name in SCALAR_NAMES and nxt[1] == "^" and self.peek(2)[1] != "{":
                self.take()
                self.take("^")
                neg = self.peek()[1] == "-"
                if neg:
                    self.take("-")
                e = int(self.take(kind="num")[1])
                v = ScalarPoly.var(name) ** e
                return [(v.inverse() if neg else v, [], {})]
            has_idx = nxt[0] == "op" and nxt[1] in "_^("
            if name in SCALAR_NAMES and not has_idx:
                self.take()
                return [(ScalarPoly.var(name), [], {})]
            return self.atom()
        raise ParseError(f"unexpected token {tok[1]!r}", tok[2], self.text)

    def sym(self):
        tok = self.take("Sym")
        self.take("[")
        labels = []
        while self.peek()[0] == "name":
            labels.append(self.take()[1])
        self.take("]")
        self.take("(")
        inner = self.expr()
        self.take(")")
        inner = self._localize(inner)
        e = self._to_expr(inner, tok[2])
        try:
            e = symmetrize(e, labels)
        except ExprError as exc:
            raise ParseError(str(exc), tok[2], self.text) from None
        return self._from_expr(e)

    def nabla(self):
        tok = self.take("nabla")
        idxs = []
        while self.peek()[0] == "op" and self.peek()[1] in "_^":
            v = "up" if self.take()[1] == "^" else "down"
            self.take("{")
            while self.peek()[1] != "}":
                idxs.append(self.index() + (v,))
            self.take("}")
        if not idxs:
            raise ParseError("nabla without index", tok[2], self.text)
        target = self.factor()
        for lbl, typ, v in reversed(idxs):
            target = self._derive(target, lbl, typ, v)
        return target

    def _derive(self, items, lbl, typ, v):
        out = []
        st = FLIP[typ] if v == "up" else typ
        for c, atoms, var in items:
            if len(var.get(lbl, [])) >= 2:
                raise ParseError(f"index {lbl!r} used more than twice", self.peek()[2], self.text)
            var2 = {k: list(x) for k, x in var.items()}
            var2.setdefault(lbl, []).append(v)
            for j, (name, args, slots, prefix) in enumerate(atoms):
                spec = self.vocab.get(name)
                if spec is not None and spec.parallel:
                    continue
                new = list(atoms)
                new[j] = (name, args, slots, ((lbl, st),) + prefix)
                out.append((c, new, var2))
        return out

    def index(self):
        tok = self.take(kind="name")
        typ = 0
        if self.peek()[0] == "prime":
            typ = len(self.take()[1])
        return tok[1], typ

    def atom(self):
        tok = self.take(kind="name")
        name = tok[1]
        spec = self.vocab.get(name)
        if spec is None:
            raise ParseError(f"unknown symbol {name!r}", tok[2], self.text)
        args = []
        if self.peek()[1] == "(" :
            self.take("(")
            while self.peek()[1] != ")":
                a = self.take(kind="name")[1]
                if self.peek()[0] == "prime":
                    a += self.take()[1]
                args.append(a)
                if self.peek()[1] == ",":
                    self.take(",")
            self.take(")")
        if spec.nargs >= 0 and len(args) != spec.nargs:
            raise ParseError(f"{name} expects {spec.nargs} arguments, got {len(args)}", tok[2], self.text)
        slots = []
        var = {}
        while self.peek()[0] == "op" and self.peek()[1] in "_^":
            v = "up" if self.take()[1] == "^" else "down"
            self.take("{")
            while self.peek()[1] != "}":
                lbl, typ = self.index()
                slots.append((lbl, FLIP[typ] if v == "up" else typ))
                var.setdefault(lbl, []).append(v)
            self.take("}")
        if len(slots) != spec.nslots:
            raise ParseError(f"{name} expects {spec.nslots} indices, got {len(slots)}", tok[2], self.text)
        for k, v in var.items():
            if len(v) > 2:
                raise ParseError(f"index {k!r} used more than twice", tok[2], self.text)
        return [(ONE, [(name, tuple(args), tuple(slots), ())], var)]

    # helpers ------------------------------------------------------------
    def _localize(self, items):
        """Rename labels contracted inside a group to fresh integers."""
        out = []
        for c, atoms, var in items:
            mp = {}
            for k, v in var.items():
                if len(v) == 2:
                    mp[k] = self.fresh
                    self.fresh += 1
            new = []
            for name, args, slots, prefix in atoms:
                new.append((name, args, tuple((mp.get(l, l), t) for l, t in slots),
                            tuple((mp.get(l, l), t) for l, t in prefix)))
            out.append((c, new, {k: v for k, v in var.items() if k not in mp}))
        return out

    def _to_expr(self, items, pos=None):
        ups = set()
        frees = None
        for c, atoms, var in items:
            fr = {}
            for k, v in var.items():
                if len(v) == 1:
                    fr[k] = v[0]
            if frees is None:
                frees = fr
            elif fr != frees and c:
                raise ParseError(f"inconsistent free indices {sorted(frees)} vs {sorted(fr)}",
                                 pos if pos is not None else self.peek()[2], self.text)
            ups |= {k for k, v in fr.items() if v == "up"}
        return TensorExpr.from_terms(((c, atoms) for c, atoms, _ in items), ups, self.vocab,
                                     canonical=self.canonical)

    def _from_expr(self, e):
        out = []
        for key, c in e.terms.items():
            var = {}
            atoms = []
            mp = {}
            for name, args, slots, prefix in key:
                ns = []
                for l, t in slots:
                    if isinstance(l, int):
                        if l not in mp:
                            mp[l] = self.fresh
                            self.fresh += 1
                        l = mp[l]
                    ns.append((l, t))
                np_ = []
                for l, t in prefix:
                    if isinstance(l, int):
                        if l not in mp:
                            mp[l] = self.fresh
                            self.fresh += 1
                        l = mp[l]
                    np_.append((l, t))
                    if isinstance(l, str):
                        var.setdefault(l, []).append("down")
                for l, _ in ns:
                    if isinstance(l, str):
                        var.setdefault(l, []).append("up" if l in e.up else "down")
                atoms.append((name, args, tuple(ns), tuple(np_)))
            out.append((c, atoms, var))
        return out

    def finish(self, items):
        items = self._localize(items)
        return self._to_expr(items)


def parse(text, vocab=None, canonical=True) -> TensorExpr:
    """Parse one expression line into a TensorExpr (alpha-canonical unless asked not to)."""
    return Parser(text, vocab, canonical).parse()
