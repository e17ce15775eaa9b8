"""Variation calculus along the parameter space of a family of Kahler structures.

Terms are varied in the lowered, type-split form produced by the normalizer.
A term there is a product of native tensors composed with the metric (to
lower native upper slots), with the projections pi' / pi'' (typed slots) and
contracted through the inverse metric.  The variation of a term is the sum of

* the native variation of each atom (table in ``family.rules``),
* the variation of the projection on every typed slot,
  V[pi'] = -i/2 Gt(V) . omega and V[pi''] = +i/2 Gt(V) . omega,
* the variation of the lowering metric on native upper slots, V[g] = g Gt g,
* the variation of the raising metric on free upper labels, V[gInv] = -Gt,
* the variation of the Levi-Civita connection on every derivative.

Contractions need no correction: after type splitting every pair joins a
primed and a double primed slot, and V[gInv] = -Gt has no (1,1)-part.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .canon import (KahlerContext, PatternRule, RuleSet, _split_arg, default_rules,
                    get_normalizer, nabla_atoms, nabla_prefix)
from .expr import ExprError, TensorExpr, max_dummy, term_label_counts
from .jetop import DiffOp
from .parser import parse
from .scalar import ONE, ScalarPoly
from .vocab import DEFAULT_VOCAB

_I = ScalarPoly.var("i")
_HALF_I = _I / 2
TILDE = {"G": "Gt", "Gb": "Gt"}
PARTS = ("'", "''")


@dataclass(frozen=True)
class ParamField:
    name: str
    part: str | None = None           # None (full), "'" or "''"

    def __str__(self):
        return self.name + (self.part or "")

    @classmethod
    def of(cls, x):
        if isinstance(x, ParamField):
            return x
        base, part = _split_arg(x)
        return cls(base, part or None)


@dataclass
class VaryRule:
    part: str | None
    rule: PatternRule | None          # None for the potential rule F(...)
    commuting: bool
    tag: str
    text: str


class FamilyRules:
    """Native variation table, unfold rules and the extended normalizer rules."""

    def __init__(self, text, vocab=None, base=None, source="family.rules"):
        self.vocab = vocab or DEFAULT_VOCAB
        self.vary = {}                 # atom name -> [VaryRule]
        self.unfold = []
        defines = RuleSet()
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tags = ["convention"]
            if line.endswith("]") and "[" in line.rsplit("=>", 1)[-1]:
                body, _, t = line.rpartition("[")
                line = body.strip()
                tags = [x.strip() for x in t[:-1].split(",") if x.strip()]
            commuting = "commuting" in tags
            tags = [t for t in tags if t != "commuting"] or ["convention"]
            where = f"{source}:{n}"
            if "=>" not in line:
                raise ExprError(f"{where}: missing '=>'")
            head, rhs_t = (x.strip() for x in line.split("=>", 1))
            if head.startswith("vary["):
                close = head.index("]")
                fld = head[5:close]
                lhs_t = head[close + 1:].strip()
                part = _split_arg(fld)[1] or None
                if "..." in lhs_t:
                    name = lhs_t.split("(", 1)[0].strip()
                    self.vary.setdefault(name, []).append(VaryRule(part, None, commuting, tags[0], line))
                    continue
                tmp = RuleSet()
                rule = tmp.add_pattern(lhs_t, rhs_t, tags[0], self.vocab, where)
                if rule.lhs[3]:
                    raise ExprError(f"{where}: variation rules take no derivative prefix")
                self.vary.setdefault(rule.lhs[0], []).append(VaryRule(part, rule, commuting, tags[0], line))
            elif head.startswith("unfold"):
                tmp = RuleSet()
                self.unfold.append(tmp.add_pattern(head[6:].strip(), rhs_t, tags[0], self.vocab, where))
            elif head.startswith("define"):
                defines.add_pattern(head[6:].strip(), rhs_t, tags[0], self.vocab, where)
            else:
                raise ExprError(f"{where}: unknown rule kind {head.split()[0]!r}")
        base = base or default_rules()
        rs = base.copy()
        pos = rs.index_of("absorb_metric")
        for e in defines.entries:
            rs.entries.insert(pos, e)
            pos += 1
        self.rules = rs

    @classmethod
    def load(cls, path=None, vocab=None, base=None):
        if path is None:
            text = resources.files("hitchin_cas").joinpath("data/family.rules").read_text()
            return cls(text, vocab, base)
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read(), vocab, base, path)

    def native_rules(self, name, part):
        return [r for r in self.vary.get(name, ()) if r.part is None or r.part == part]


_FAMILY = None


def family_table():
    global _FAMILY
    if _FAMILY is None:
        _FAMILY = FamilyRules.load()
        _FAMILY.rules = with_potential_rules(_FAMILY)
    return _FAMILY


def family_rules():
    """Kahler rules plus family definitions and the derived potential rules."""
    return family_table().rules


# ---------------------------------------------------------------- core

def _replace_slot(atom, where, pos, idx):
    name, args, slots, prefix = atom
    if where == 2:
        slots = slots[:pos] + (idx,) + slots[pos + 1:]
    else:
        prefix = prefix[:pos] + (idx,) + prefix[pos + 1:]
    if idx[1] == 0:
        name = TILDE.get(name, name)
    return (name, args, slots, prefix)


class Varier:
    def __init__(self, table=None, ctx=None):
        self.table = table or family_table()
        self.ctx = ctx or KahlerContext()
        self.vocab = self.ctx.vocab

    # unfolding (scal -> r) before varying
    def _unfold(self, key):
        out = [(ONE, list(key))]
        changed = True
        while changed:
            changed = False
            nxt = []
            for c, atoms in out:
                hit = None
                for j, a in enumerate(atoms):
                    for rule in self.table.unfold:
                        m = rule.match(a)
                        if m is not None:
                            hit = (j, rule, m)
                            break
                    if hit:
                        break
                if hit is None:
                    nxt.append((c, atoms))
                    continue
                changed = True
                j, rule, (bind, argb, outer) = hit
                off = max_dummy(atoms) + 1
                rest = atoms[:j] + atoms[j + 1:]
                for c2, new in rule.instantiate(bind, argb, off):
                    for at in nabla_prefix(new, outer, self.vocab):
                        nxt.append((c * c2, rest + at))
            out = nxt
        return out

    def _check_commuting(self, fld, args, rule):
        for x in args:
            other = _split_arg(x)[0]
            if other != fld.name and not self.ctx.commuting(fld.name, other):
                raise ExprError(f"rule {rule.text!r} needs {fld.name} and {other} to commute")

    def _native(self, atom, fld, part, off):
        """Native variation of an atom without its prefix: list of (c, atoms)."""
        name, args, slots, prefix = atom
        spec = self.vocab.get(name)
        rules = self.table.native_rules(name, part)
        if not rules:
            if spec is not None and spec.kind == "placeholder":
                return []
            raise ExprError(f"no variation rule for atom {name!r}")
        out = []
        for vr in rules:
            if vr.commuting:
                self._check_commuting(fld, args, vr)
            if vr.rule is None:
                newargs = tuple(sorted(args + (fld.name + part,)))
                out.append((ONE, [(name, newargs, slots, ())]))
                continue
            m = vr.rule.match((name, args, slots, ()))
            if m is None:
                continue
            bind, argb, _ = m
            argb = dict(argb)
            argb.setdefault("V", fld.name if vr.part else fld.name + part)
            out.extend(vr.rule.instantiate(bind, argb, off))
            break
        else:
            if not out:
                raise ExprError(f"no variation rule matches atom {name!r}")
        return out

    def vary_key(self, key, fld: ParamField, part, up):
        """Variation of one lowered, type-split term along fld with the given part."""
        items = []
        vfield = fld.name + part
        for c0, atoms in self._unfold(key):
            d = max_dummy(atoms) + 1
            counts = term_label_counts(atoms)
            for j, a in enumerate(atoms):
                rest = atoms[:j] + atoms[j + 1:]
                name, args, slots, prefix = a
                spec = self.vocab.get(name)
                native = spec.native if spec is not None else "d" * len(slots)
                # (a) native variation, then the prefix by Leibniz
                for c, new in self._native(a, fld, part, d):
                    for at in nabla_prefix(new, prefix, self.vocab):
                        items.append((c0 * c, rest + at))
                p, q = d, d + 1
                # (b) projections on typed slots, (c) lowering metric, (d) raising metric
                for where, idxs in ((3, prefix), (2, slots)):
                    for pos, (l, t) in enumerate(idxs):
                        if t:
                            sgn = -_HALF_I if t == 1 else _HALF_I
                            new = _replace_slot(a, where, pos, (p, 0))
                            om = ("omega", (), ((q, 0), (l, 0)), ())
                            gt = ("Gt", (vfield,), ((p, 0), (q, 0)), ())
                            items.append((c0 * sgn, rest + [new, gt, om]))
                        if where == 2 and native[pos] == "u":
                            new = _replace_slot(a, 2, pos, (p, 0))
                            gt = ("Gt", (vfield,), ((l, t), (p, 0)), ())
                            items.append((c0, rest + [new, gt]))
                        if isinstance(l, str) and l in up and counts.get(l) == 1:
                            new = _replace_slot(a, where, pos, (p, t))
                            gt = ("Gt", (vfield,), ((l, 0), (p, 0)), ())
                            items.append((-c0, rest + [new, gt]))
                # Christoffel variation on every derivative of the prefix
                for k in range(len(prefix)):
                    x = prefix[k]
                    outer = prefix[:k]
                    inner_pre = prefix[k + 1:]
                    U = (name, args, slots, inner_pre)
                    for where, idxs in ((3, inner_pre), (2, slots)):
                        for pos, (l, t) in enumerate(idxs):
                            up_slot = where == 2 and native[pos] == "u"
                            new = _replace_slot(U, where, pos, (p, 0))
                            if up_slot:
                                dg = ("dGamma", (vfield,), ((l, t), x, (p, 0)), ())
                                sgn = ONE
                            else:
                                dg = ("dGamma", (vfield,), ((p, 0), x, (l, t)), ())
                                sgn = -ONE
                            for at in nabla_prefix([dg, new], outer, self.vocab):
                                items.append((c0 * sgn, rest + at))
        return items


def _parts(part):
    if part is None:
        return PARTS
    if part not in PARTS:
        raise ExprError(f"unknown part {part!r}")
    return (part,)


def vary(field, e, ctx=None, table=None, pre_rules=None, normalize=True, fired=None, rules=None):
    """V[e] for a TensorExpr or DiffOp; field is 'V', "V'" or "V''" (or a ParamField).

    ``rules`` replaces the table's normalizer rules (tag overrides), ``pre_rules``
    only those applied before differentiating."""
    fld = ParamField.of(field)
    table = table or family_table()
    rules = rules or table.rules
    if isinstance(e, str):
        e = parse(e)
    op = isinstance(e, DiffOp)
    expr = e.expr if op else e
    pre = get_normalizer(ctx, pre_rules or rules)
    expr = pre.normalize(expr)
    v = Varier(table, ctx)
    items = []
    for key, c in expr.terms.items():
        for part in _parts(fld.part):
            for c2, atoms in v.vary_key(key, fld, part, expr.up):
                items.append((c * c2, atoms))
    if not normalize:
        return TensorExpr.from_terms(items, expr.up, expr.vocab)
    norm = get_normalizer(ctx, rules)
    out = norm.normalize_terms(items, expr.up, fired)
    if op:
        d = DiffOp.__new__(DiffOp)
        d.norm = norm
        d.expr = out
        return d
    return out


def exterior_dT(form, V, W, ctx=None, table=None, fired=None, rules=None):
    """V[form(W)] - W[form(V)] for commuting fields.

    ``form`` maps a bare field name to a TensorExpr or DiffOp; the parts of
    V and W ("V'", "W''", ...) select the component of the two-form."""
    V, W = ParamField.of(V), ParamField.of(W)
    ctx = ctx or KahlerContext()
    if not ctx.commuting(V.name, W.name):
        raise ExprError(f"exterior_dT needs {V.name} and {W.name} to commute")
    a = vary(V, form(W.name), ctx, table, fired=fired, rules=rules)
    b = vary(W, form(V.name), ctx, table, fired=fired, rules=rules)
    if isinstance(a, DiffOp) or isinstance(b, DiffOp):
        norm = get_normalizer(ctx, rules or (table or family_table()).rules)
        d = DiffOp.__new__(DiffOp)
        d.norm = norm
        d.expr = norm.normalize(_expr(a) - _expr(b), fired)
        return d
    return a - b


def _expr(x):
    return x.expr if isinstance(x, DiffOp) else x


def dbar_of(e, label="a", ctx=None, rules=None, fired=None):
    """(0,1)-part of d on M: nabla_{a''} e, normalized with the potential rules."""
    if isinstance(e, str):
        e = parse(e)
    if e.free():
        raise ExprError("dbar_of needs a scalar expression")
    items = []
    for key, c in e.terms.items():
        for new in nabla_atoms(list(key), (label, 2), e.vocab):
            items.append((c, new))
    norm = get_normalizer(ctx, rules or family_rules())
    return norm.normalize_terms(items, frozenset(), fired)


def project_free(e: TensorExpr, label, typ, ctx=None, rules=None):
    """Projection of a free index onto one type (1 or 2, stored lowered type)."""
    norm = get_normalizer(ctx, rules or family_rules())
    e = norm.normalize(e)
    items = []
    for key, c in e.terms.items():
        keep = True
        for a in key:
            for l, t in a[2] + a[3]:
                if l == label and t != typ:
                    keep = False
        if keep:
            items.append((c, key))
    return TensorExpr.from_terms(items, e.up, e.vocab)


# ---------------------------------------------------------------- potential rules

_POTENTIAL_BASE = "nabla_{a''} F(V')"


def with_potential_rules(table):
    """Add nabla'' F(V',W') and nabla'' F(V',W'') (and conjugates) to the rules.

    They are obtained by varying the first-order potential rule along W' and
    W'' and solving for the new atom; the projection variation of the free
    slot is moved to the right-hand side."""
    rs = table.rules
    base = None
    for e in rs.entries:
        if e[0] == "pattern" and e[1].lhs[0] == "F" and e[1].lhs[1] == ("V'",) and e[1].lhs[3] \
                and e[1].lhs[3][0][1] == 2:
            base = e[1]
    if base is None:
        return rs
    pos = next(i for i, e in enumerate(rs.entries) if e[0] == "pattern" and e[1] is base) + 1
    tmp = FamilyRulesView(table, rs)
    pre = rs.copy()
    pre.entries = [e for e in pre.entries if not (e[0] == "pattern" and e[1] is base)]
    new = rs.copy()
    for part in PARTS:
        lhs_atom = ("F", tuple(sorted(("V'", "W" + part))), (), (("a", 2),))
        # W[lhs - rhs] = 0 with lhs = nabla_{a''} F(V')
        raw = TensorExpr.from_terms([(ONE, [("F", ("V'",), (), (("a", 2),))])], frozenset())
        diff = raw - TensorExpr.from_terms([(c, list(k)) for k, c in base.rhs.terms.items()], frozenset())
        var = vary("W" + part, diff, table=tmp, pre_rules=pre)
        # var = lhs_atom + rest, the lhs atom only appears through the native rule
        coeff = var.terms.get((lhs_atom,))
        if coeff != ONE:
            raise ExprError("derived potential rule: unexpected coefficient")
        rest = var - TensorExpr({(lhs_atom,): ONE}, frozenset())
        rhs = project_free(-rest, "a", 2, rules=rs)
        rule = PatternRule(lhs_atom, _to_pattern(rhs), "Ricci-potential",
                           f"nabla_{{a''}} F(V',W{part}) => derived", True)
        new.entries.insert(pos, ("pattern", rule))
        pos += 1
        from .expr import conjugate
        crule = PatternRule(("F", tuple(sorted(("V''", "W" + ("'" if part == "''" else "''")))), (),
                             (("a", 1),)),
                            _to_pattern(conjugate(rhs)), "Ricci-potential",
                            f"conjugate of {rule.text}", True)
        new.entries.insert(pos, ("pattern", crule))
        pos += 1
    return new


def _to_pattern(e: TensorExpr) -> TensorExpr:
    """Pattern RHS: the free label 'a' is bound by the matcher, dummies stay ints."""
    return e


class FamilyRulesView:
    """A FamilyRules sharing the variation table but with other normalizer rules."""

    def __init__(self, table, rules):
        self.vocab = table.vocab
        self.vary = table.vary
        self.unfold = table.unfold
        self.rules = rules

    def native_rules(self, name, part):
        return FamilyRules.native_rules(self, name, part)


# ---------------------------------------------------------------- Gamma symmetry

_GAMMA_ATOMS = ("G", "Gb")


def _pair_generator(key, i, j, up):
    """nabla_S Sym(G(X).nabla G(Y) - G(Y).nabla G(X)) placed in the context of key.

    The pair (key[i], key[j]) fixes the number of derivatives and which
    external labels sit on contravariant slots; returns raw items or None."""
    x, y = key[i], key[j]
    counts = {}
    for a in (x, y):
        for l, _ in a[2] + a[3]:
            counts[l] = counts.get(l, 0) + 1
    ext_up = [idx for a in (x, y) for idx in a[2] if counts[idx[0]] == 1]
    ext_low = [idx for a in (x, y) for idx in a[3] if counts[idx[0]] == 1]
    m = len(x[3]) + len(y[3]) - 1
    k = 3 - len(ext_up)
    if m < 0 or k < 0 or m - k != len(ext_low):
        return None
    rest = [a for n, a in enumerate(key) if n not in (i, j)]
    d = max_dummy(key) + 1
    dums = [(d + n, 0) for n in range(k)]
    u = (d + k, 0)
    abc = ext_up + dums
    S = tuple(ext_low + dums)
    name = x[0]
    X, Y = sorted((x[1][0], y[1][0]))
    third = ScalarPoly.const(1) / 3
    items = []
    for P, Q, sgn in ((X, Y, third), (Y, X, -third)):
        for r in range(3):
            a, b, c = abc[r], abc[(r + 1) % 3], abc[(r + 2) % 3]
            pair = [(name, (P,), (a, u), ()), (name, (Q,), (b, c), (u,))]
            for at in nabla_prefix(pair, S, DEFAULT_VOCAB):
                items.append((sgn, rest + at))
    return items


def gamma_generators(key, up):
    for i, x in enumerate(key):
        if x[0] not in _GAMMA_ATOMS:
            continue
        for j in range(i + 1, len(key)):
            y = key[j]
            if y[0] != x[0] or y[1][0] == x[1][0]:
                continue
            items = _pair_generator(key, i, j, up)
            if items is not None:
                yield (key, i, j), items


def gamma_reduce(residual, ctx=None, rules=None, rounds=4, max_generators=20000, fired=None):
    """Reduce a normalized residual modulo the Gamma-symmetry relations.

    Generators are contexts of nabla_S (Gamma3(X,Y) - Gamma3(Y,X)) and of its
    conjugate; each residual term proposes the generator matching each of its
    (G(X), G(Y)) pairs, and terms produced by generators propose further
    generators until the residual lies in the span or the rounds run out."""
    from .linsolve import reduce_in_span
    if residual.is_zero():
        return residual, {}
    norm = get_normalizer(ctx, rules or family_rules())
    gens = {}
    seen = set()
    frontier = list(residual.terms)
    res, coeffs = residual, {}
    for _ in range(rounds):
        new = []
        for key in frontier:
            if key in seen:
                continue
            seen.add(key)
            for lab, items in gamma_generators(key, residual.up):
                g = norm.normalize_terms(items, residual.up)
                if g.is_zero():
                    continue
                sig = frozenset(g.terms)
                if sig in gens:
                    continue
                gens[sig] = g
                new.extend(k for k in g.terms if k not in seen)
                if len(gens) > max_generators:
                    break
        res, coeffs = reduce_in_span(residual, {i: g for i, g in enumerate(gens.values())})
        if res.is_zero() or not new or len(gens) > max_generators:
            break
        frontier = new
    if fired is not None and any(coeffs.values()):
        fired.add("Gamma-symmetry")
    return res, coeffs
