"""Normalization of tensor expressions modulo the Kahler axioms.

Every index is first split by projection type, after which the Kahler
structure becomes local: omega, J and the projections turn into multiples
of g, the curvature is a (1,1)-form with values in (1,1)-endomorphisms, and
the first Bianchi identity becomes a monoterm symmetry of the oriented
curvature R_{a' b'' c' d''}.  Covariant derivatives are kept in a fixed
order per atom (primed block outside, double primed block inside, reversed
for antiholomorphic atoms); commuting two of them emits curvature terms and
the line-bundle term -ik w omega.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from itertools import permutations
from importlib import resources

from .canonical import canonicalize_term, close_group, product_groups, sym_group_on
from .expr import (FLIP, ExprError, TensorExpr, canonical_key, max_dummy,
                   term_label_counts)
from .parser import parse
from .scalar import ONE, ScalarPoly
from .vocab import DEFAULT_VOCAB

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

TAGS = ("convention", "Kahler", "curvature", "rigidity", "Ricci-potential",
        "Gamma-symmetry", "Bianchi")
_TAG_ALIASES = {"kähler": "Kahler", "kahler": "Kahler", "γ-symmetry": "Gamma-symmetry",
                "gamma": "Gamma-symmetry", "gamma-symmetry": "Gamma-symmetry",
                "ricci": "Ricci-potential", "bianchi": "Bianchi"}

DEFAULT_BUDGET = int(os.environ.get("HITCHIN_CAS_BUDGET", 10 ** 6))

# tags fired by any normalizer since the last reset (read by the verifier)
FIRED_LOG = set()
_M = ScalarPoly.var("m")
_I = ScalarPoly.var("i")
_K = ScalarPoly.var("k")
_HALF = ScalarPoly.const(1) / 2


def canonical_tag(tag):
    if tag in TAGS:
        return tag
    t = _TAG_ALIASES.get(tag.lower())
    if t is None:
        raise ValueError(f"unknown rule tag {tag!r}")
    return t


class BudgetExceeded(RuntimeError):
    def __init__(self, msg, expr=None):
        super().__init__(msg)
        self.expr = expr


# ---------------------------------------------------------------- rules

def _split_arg(x):
    if x.endswith("''"):
        return x[:-2], "''"
    if x.endswith("'"):
        return x[:-1], "'"
    return x, ""


@dataclass
class PatternRule:
    """Single-atom pattern; unprimed labels match any projection."""
    lhs: tuple
    rhs: TensorExpr
    tag: str
    text: str = ""
    args_perm: bool = False          # atom arguments are symmetric

    def _match_args(self, args, actual):
        argb = {}
        for p, x in zip(args, actual):
            pb, ps = _split_arg(p)
            if ps:
                xb, xs = _split_arg(x)
                if xs != ps:
                    return None
                val = xb
            else:
                val = x
            if argb.setdefault(pb, val) != val:
                return None
        return argb

    def match(self, a):
        name, args, slots, prefix = self.lhs
        if a[0] != name or len(a[2]) != len(slots) or len(a[1]) != len(args):
            return None
        npre = len(prefix)
        if len(a[3]) < npre:
            return None
        argb = self._match_args(args, a[1])
        if argb is None and self.args_perm and len(args) > 1:
            for perm in permutations(a[1]):
                argb = self._match_args(args, perm)
                if argb is not None:
                    break
        if argb is None:
            return None
        outer = a[3][:len(a[3]) - npre]
        inner = a[3][len(a[3]) - npre:]
        bind = {}
        for (pv, pt), (l, t) in zip(prefix + slots, inner + a[2]):
            if pt and pt != t:
                return None
            old = bind.get(pv)
            if old is None:
                bind[pv] = (l, t)
            elif old[0] != l:
                return None
        return bind, argb, outer

    def instantiate(self, bind, argb, offset):
        """RHS terms as (coeff, atoms) with pattern labels substituted."""
        out = []
        for key, c in self.rhs.terms.items():
            atoms = []
            for name, args, slots, prefix in key:
                nargs = []
                for y in args:
                    yb, ys = _split_arg(y)
                    v = argb.get(yb, yb)
                    if ys and _split_arg(v)[1]:
                        raise ExprError(f"rule {self.text!r}: cannot decorate {v!r}")
                    nargs.append(v + ys)
                atoms.append((name, tuple(nargs), _subst(slots, bind, offset),
                              _subst(prefix, bind, offset)))
            out.append((c, atoms))
        return out


def _subst(idx, bind, offset):
    out = []
    for l, t in idx:
        if isinstance(l, int):
            out.append((l + offset, t))
        else:
            L, T = bind[l]
            out.append((L, t or T))
    return tuple(out)


@dataclass
class RuleSet:
    """Ordered rules (patterns and built-in procedures) with tag switches."""
    entries: list = field(default_factory=list)     # ("builtin", name, tag) | ("pattern", rule)
    active: dict = field(default_factory=lambda: {t: True for t in TAGS})

    @classmethod
    def from_text(cls, text, vocab=None, source="<rules>"):
        vocab = vocab or DEFAULT_VOCAB
        rs = cls()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tag = "convention"
            if line.endswith("]") and "[" in line:
                body, _, t = line.rpartition("[")
                line, tag = body.strip(), canonical_tag(t[:-1].strip())
            if line.startswith("@"):
                rs.entries.append(("builtin", line[1:].strip(), tag))
                continue
            if "=>" not in line:
                raise ExprError(f"{source}:{n}: missing '=>'")
            lhs_t, rhs_t = (x.strip() for x in line.split("=>", 1))
            rs.add_pattern(lhs_t, rhs_t, tag, vocab, f"{source}:{n}")
        return rs

    def add_pattern(self, lhs_text, rhs_text, tag, vocab=None, where="", position=None):
        vocab = vocab or DEFAULT_VOCAB
        lhs = parse(lhs_text, vocab, canonical=False)
        if len(lhs.terms) != 1:
            raise ExprError(f"{where}: LHS must be a single atom")
        (key, c), = lhs.terms.items()
        if len(key) != 1 or c != ONE:
            raise ExprError(f"{where}: LHS must be a single atom")
        rhs = parse(rhs_text, vocab, canonical=False) if rhs_text.strip() != "0" else TensorExpr.zero()
        spec = vocab.get(key[0][0])
        rule = PatternRule(key[0], rhs, canonical_tag(tag), f"{lhs_text} => {rhs_text}",
                           bool(spec is not None and spec.args_sym == 1))
        entry = ("pattern", rule)
        if position is None:
            self.entries.append(entry)
        else:
            self.entries.insert(position, entry)
        return rule

    @classmethod
    def load(cls, path=None, vocab=None):
        if path is None:
            text = resources.files("hitchin_cas").joinpath("data/kahler.rules").read_text()
            return cls.from_text(text, vocab, "kahler.rules")
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), vocab, os.path.basename(path))

    def copy(self):
        return RuleSet(list(self.entries), dict(self.active))

    def with_tags(self, **flags):
        rs = self.copy()
        for k, v in flags.items():
            rs.active[canonical_tag(k.replace("_", "-"))] = bool(v)
        return rs

    def is_active(self, tag):
        return self.active.get(tag, False)

    def index_of(self, builtin):
        for i, e in enumerate(self.entries):
            if e[0] == "builtin" and e[1] == builtin:
                return i
        raise KeyError(builtin)

    def signature(self):
        return (tuple(id(e[1]) if e[0] == "pattern" else e[1] for e in self.entries),
                tuple(sorted(self.active.items())))


_DEFAULT_RULES = None


def default_rules():
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = RuleSet.load()
    return _DEFAULT_RULES


@dataclass
class KahlerContext:
    """Vocabulary plus declared parameter fields and their commutation flags."""
    vocab: object = DEFAULT_VOCAB
    fields: tuple = ("V", "W")
    noncommuting: frozenset = frozenset()

    def commuting(self, a, b):
        return frozenset((a, b)) not in self.noncommuting


# ---------------------------------------------------------------- helpers

def nabla_atoms(atoms, idx, vocab):
    """Leibniz: list of atom lists for nabla_idx applied to the product."""
    out = []
    for j, a in enumerate(atoms):
        spec = vocab.get(a[0])
        if spec is not None and spec.parallel:
            continue
        new = list(atoms)
        new[j] = (a[0], a[1], a[2], (idx,) + a[3])
        out.append(new)
    return out


def nabla_prefix(atoms, prefix, vocab):
    """Apply nabla_{p1} ... nabla_{pn} (outermost first) to a product."""
    cur = [list(atoms)]
    for idx in reversed(prefix):
        nxt = []
        for at in cur:
            nxt.extend(nabla_atoms(at, idx, vocab))
        cur = nxt
    return cur


def _runs(types):
    """Maximal runs of equal types as lists of positions."""
    runs = []
    for i, t in enumerate(types):
        if runs and types[runs[-1][0]] == t:
            runs[-1].append(i)
        else:
            runs.append([i])
    return runs


def outer_type(a):
    """Projection type that goes to the outside of the derivative prefix."""
    name, args = a[0], a[1]
    if name in ("Gb", "Kb"):
        return 2
    if name == "F" and args:
        has1 = any(_split_arg(x)[1] == "'" for x in args)
        has2 = any(_split_arg(x)[1] == "''" for x in args)
        if has2 and not has1:
            return 2
    return 1


# ---------------------------------------------------------------- normalizer

class Normalizer:
    def __init__(self, ctx=None, rules=None, budget=None):
        self.ctx = ctx or KahlerContext()
        self.vocab = self.ctx.vocab
        self.rules = rules or default_rules()
        self.budget = budget or DEFAULT_BUDGET
        self.memo = {}
        self.count = 0
        self.peak = 0
        self._gcache = {}
        self._plan = self._compile()

    # rule plan: consecutive pattern rules grouped and indexed by atom name
    def _compile(self):
        plan = []
        block = None
        for e in self.rules.entries:
            if e[0] == "pattern":
                rule = e[1]
                if not self.rules.is_active(rule.tag):
                    continue
                if block is None:
                    block = {}
                    plan.append(("patterns", block))
                block.setdefault(rule.lhs[0], []).append(rule)
            else:
                block = None
                if self.rules.is_active(e[2]) or e[1] in ("type_split", "pair_types", "parallel"):
                    plan.append(("builtin", e[1], e[2]))
        return plan

    # public -----------------------------------------------------------
    def normalize(self, e: TensorExpr, fired=None) -> TensorExpr:
        acc = {}
        tags = set()
        for key, c in e.terms.items():
            res, t = self._norm(key)
            tags |= t
            for k2, c2 in res.items():
                v = acc.get(k2)
                s = c * c2 if v is None else v + c * c2
                if s:
                    acc[k2] = s
                else:
                    acc.pop(k2, None)
        self.peak = max(self.peak, len(acc))
        FIRED_LOG.update(tags)
        if fired is not None:
            fired |= tags
        return TensorExpr(acc, e.up, e.vocab)

    def normalize_terms(self, items, up=frozenset(), fired=None):
        """Normalize a raw iterable of (coeff, atoms)."""
        acc = {}
        tags = set()
        for c, atoms in items:
            res, t = self._norm(atoms)
            tags |= t
            for k2, c2 in res.items():
                v = acc.get(k2)
                s = c * c2 if v is None else v + c * c2
                if s:
                    acc[k2] = s
                else:
                    acc.pop(k2, None)
        self.peak = max(self.peak, len(acc))
        FIRED_LOG.update(tags)
        if fired is not None:
            fired |= tags
        return TensorExpr(acc, up, self.vocab)

    # core -------------------------------------------------------------
    def _norm(self, atoms):
        sign, key = canonical_key(atoms, self.vocab)
        if sign == 0:
            return {}, frozenset()
        hit = self.memo.get(key)
        if hit is None:
            self.count += 1
            if self.count > self.budget:
                raise BudgetExceeded(f"term budget {self.budget} exceeded", key)
            step = self._step(key)
            if step is None:
                s2, fk = canonicalize_term(key, self._group)
                hit = ({} if s2 == 0 else {fk: ScalarPoly.const(s2)}, frozenset())
            else:
                tag, items = step
                acc = {}
                tags = {tag}
                for c, at in items:
                    res, t = self._norm(at)
                    tags |= t
                    for k2, c2 in res.items():
                        v = acc.get(k2)
                        s = c * c2 if v is None else v + c * c2
                        if s:
                            acc[k2] = s
                        else:
                            acc.pop(k2, None)
                hit = (acc, frozenset(tags))
            self.memo[key] = hit
        if sign < 0:
            return {k: -v for k, v in hit[0].items()}, hit[1]
        return hit

    def _step(self, key):
        for item in self._plan:
            if item[0] == "patterns":
                block = item[1]
                for j, a in enumerate(key):
                    rules = block.get(a[0])
                    if not rules:
                        continue
                    for rule in rules:
                        m = rule.match(a)
                        if m is None:
                            continue
                        return rule.tag, self._apply(key, j, rule, m)
            else:
                res = getattr(self, "_b_" + item[1])(key)
                if res is not None:
                    return item[2], res
        return None

    def _apply(self, key, j, rule, m):
        bind, argb, outer = m
        off = max_dummy(key) + 1
        rest = list(key[:j]) + list(key[j + 1:])
        out = []
        for c, atoms in rule.instantiate(bind, argb, off):
            for at in nabla_prefix(atoms, outer, self.vocab):
                out.append((c, rest + at))
        return out

    # built-ins ----------------------------------------------------------
    def _b_type_split(self, key):
        occ = {}
        for j, a in enumerate(key):
            for pos, (l, t) in enumerate(a[3]):
                occ.setdefault(l, []).append((j, 3, pos, t))
            for pos, (l, t) in enumerate(a[2]):
                occ.setdefault(l, []).append((j, 2, pos, t))
        for l, lst in occ.items():
            if len(lst) == 2:
                t1, t2 = lst[0][3], lst[1][3]
                if t1 and t2:
                    if t1 == t2:
                        return []
                    continue
                if t1 or t2:
                    tt = t1 or t2
                    return [(ONE, _retype(key, {lst[0][:3]: FLIP[tt] if not t1 else t1,
                                                lst[1][:3]: FLIP[tt] if not t2 else t2}))]
                return [(ONE, _retype(key, {lst[0][:3]: 1, lst[1][:3]: 2})),
                        (ONE, _retype(key, {lst[0][:3]: 2, lst[1][:3]: 1}))]
            elif len(lst) == 1 and lst[0][3] == 0:
                return [(ONE, _retype(key, {lst[0][:3]: 1})),
                        (ONE, _retype(key, {lst[0][:3]: 2}))]
            elif len(lst) > 2:
                raise ExprError(f"index {l!r} used {len(lst)} times")
        return None

    def _b_pair_types(self, key):
        return None          # folded into type_split

    def _b_parallel(self, key):
        for a in key:
            if a[3]:
                spec = self.vocab.get(a[0])
                if spec is not None and spec.parallel:
                    return []
        return None

    def _b_absorb_metric(self, key):
        counts = None
        for j, a in enumerate(key):
            if a[0] != "g" or a[3]:
                continue
            (x, tx), (y, ty) = a[2]
            rest = list(key[:j]) + list(key[j + 1:])
            if x == y:
                return [(_M, rest)]
            if counts is None:
                counts = term_label_counts(key)
            for lab, other in ((x, y), (y, x)):
                if counts.get(lab, 0) == 2:
                    return [(ONE, _relabel_one(rest, lab, other))]
        return None

    def _b_commute(self, key):
        for j, a in enumerate(key):
            p = a[3]
            if len(p) < 2:
                continue
            if a[0] == "F" and not a[1]:
                types = [t for _, t in p]
                n = len(types)
                last = types[-1]
                jj = max((i for i in range(n - 1) if types[i] != last), default=None)
                if jj is not None and jj < n - 2:
                    return self._swap(key, j, jj)
                continue
            ot = outer_type(a)
            for i in range(len(p) - 1):
                if p[i][1] != ot and p[i + 1][1] == ot:
                    return self._swap(key, j, i)
        return None

    def _swap(self, key, j, i):
        """nabla_x nabla_y U = nabla_y nabla_x U + [nabla_x, nabla_y] U."""
        name, args, slots, prefix = key[j]
        x, y = prefix[i], prefix[i + 1]
        outer, inner = prefix[:i], prefix[i + 2:]
        rest = list(key[:j]) + list(key[j + 1:])
        out = [(ONE, rest + [(name, args, slots, outer + (y, x) + inner)])]
        d = max_dummy(key) + 1
        spec = self.vocab.get(name)
        # curvature on every covariant slot of U = nabla_inner atom
        for where, idxs in ((3, inner), (2, slots)):
            for pos, (l, t) in enumerate(idxs):
                R = ("R", (), (x, y, (l, t), (d, FLIP[t])), ())
                new = list(idxs)
                new[pos] = (d, t)
                if where == 3:
                    U = (name, args, slots, tuple(new))
                else:
                    U = (name, args, tuple(new), inner)
                for at in nabla_prefix([R, U], outer, self.vocab):
                    out.append((-ONE, rest + at))
        w = spec.weight if spec is not None else 0
        if w:
            om = ("omega", (), (x, y), ())
            U = (name, args, slots, inner)
            for at in nabla_prefix([om, U], outer, self.vocab):
                out.append((-_I * _K * w, rest + at))
        return out

    def _b_ricci_contract(self, key):
        for j, a in enumerate(key):
            name = a[0]
            if name not in ("R", "r"):
                continue
            res = self._contract_in_slots(key, j, a)
            if res is not None:
                return res
            if self.rules.is_active("Bianchi") and a[3]:
                labs = [l for l, _ in a[2]]
                pre = {l for l, _ in a[3]}
                if not any(l in pre for l in labs):
                    continue
                positions = list(a[3]) + list(a[2])
                npre = len(a[3])
                for perm, s in self._group(a):
                    new = [positions[q] for q in perm]
                    sl = [l for l, _ in new[npre:]]
                    if len(set(sl)) < len(sl):
                        na = (name, a[1], tuple(new[npre:]), tuple(new[:npre]))
                        return [(ScalarPoly.const(s), list(key[:j]) + [na] + list(key[j + 1:]))]
        return None

    def _contract_in_slots(self, key, j, a):
        name, args, slots, prefix = a
        labs = [l for l, _ in slots]
        rest = list(key[:j]) + list(key[j + 1:])
        if name == "r":
            if labs[0] == labs[1] and slots[0][1] and slots[1][1]:
                return [(_HALF, rest + [("scal", (), (), prefix)])]
            return None
        if any(t == 0 for _, t in slots):
            return None
        for p in range(4):
            for q in range(p + 1, 4):
                if labs[p] == labs[q]:
                    others = [slots[k] for k in range(4) if k not in (p, q)]
                    A = [s for s in others if s[1] == 1]
                    B = [s for s in others if s[1] == 2]
                    if len(A) != 1 or len(B) != 1:
                        return []
                    return [(ONE, rest + [("r", (), (A[0], B[0]), prefix)])]
        return None

    def _b_bianchi(self, key):
        return None          # acts through the canonical symmetry groups

    # symmetry groups used for final canonical forms -------------------
    def _group(self, a):
        name, args, slots, prefix = a
        ptypes = tuple(t for _, t in prefix)
        stypes = tuple(t for _, t in slots)
        bianchi = self.rules.is_active("Bianchi")
        ck = (name, len(args), ptypes, stypes, bianchi)
        g = self._gcache.get(ck)
        if g is not None:
            return g
        npre, ns = len(prefix), len(slots)
        n = npre + ns
        runs = _runs(ptypes)
        groups = []
        if name == "R" and stypes == (1, 2, 1, 2):
            sets = {1: [npre, npre + 2], 2: [npre + 1, npre + 3]}
            if bianchi and runs:
                last = runs[-1]
                sets[ptypes[last[0]]] = sets[ptypes[last[0]]] + last
                runs = runs[:-1]
            for r in runs:
                groups.append([(p, 1) for p in sym_group_on(r, n)])
            for st in sets.values():
                groups.append([(p, 1) for p in sym_group_on(st, n)])
        elif name == "r" and stypes == (1, 2):
            if bianchi and runs:
                last = runs[-1]
                t = ptypes[last[0]]
                groups.append([(p, 1) for p in sym_group_on(last + [npre + t - 1], n)])
                runs = runs[:-1]
            for r in runs:
                groups.append([(p, 1) for p in sym_group_on(r, n)])
        else:
            for r in runs:
                groups.append([(p, 1) for p in sym_group_on(r, n)])
            spec = self.vocab.get(name)
            if spec is not None and spec.sym:
                gens = [(tuple(range(npre)) + tuple(npre + q for q in perm), sign)
                        for perm, sign in spec.sym if len(perm) == ns]
                groups.append(close_group(gens, n))
        g = product_groups(groups, n) if groups else [(tuple(range(n)), 1)]
        # product of commuting groups may list duplicates; keep a sign-consistent set
        seen = {}
        for p, s in g:
            if p in seen and seen[p] != s:
                seen[p] = 0
            else:
                seen.setdefault(p, s)
        g = list(seen.items())
        self._gcache[ck] = g
        return g


def _retype(key, changes):
    out = []
    for j, a in enumerate(key):
        name, args, slots, prefix = a
        if any(c[0] == j for c in changes):
            prefix = tuple((l, changes.get((j, 3, p), t)) for p, (l, t) in enumerate(prefix))
            slots = tuple((l, changes.get((j, 2, p), t)) for p, (l, t) in enumerate(slots))
        out.append((name, args, slots, prefix))
    return out


def _relabel_one(atoms, lab, new):
    out = []
    for name, args, slots, prefix in atoms:
        out.append((name, args,
                    tuple((new if l == lab else l, t) for l, t in slots),
                    tuple((new if l == lab else l, t) for l, t in prefix)))
    return out


# ---------------------------------------------------------------- API

_NORMALIZERS = {}


def get_normalizer(ctx=None, rules=None):
    rules = rules or default_rules()
    k = (id(ctx), rules.signature())
    n = _NORMALIZERS.get(k)
    if n is None:
        n = Normalizer(ctx, rules)
        _NORMALIZERS[k] = n
    return n


def set_budget(n):
    """Term budget for new and cached normalizers (None rereads the environment)."""
    global DEFAULT_BUDGET
    DEFAULT_BUDGET = int(os.environ.get("HITCHIN_CAS_BUDGET", 10 ** 6)) if n is None else int(n)
    for nz in _NORMALIZERS.values():
        nz.budget = DEFAULT_BUDGET


def reset_counters(clear_memo=False):
    """Zero the work counters of every cached normalizer and clear FIRED_LOG."""
    FIRED_LOG.clear()
    for n in _NORMALIZERS.values():
        n.count = 0
        n.peak = 0
        if clear_memo:
            n.memo.clear()


def work_counters():
    """(intermediate terms computed, largest expression) over cached normalizers."""
    return (sum(n.count for n in _NORMALIZERS.values()),
            max((n.peak for n in _NORMALIZERS.values()), default=0))


def normalize(e: TensorExpr, ctx=None, rules=None, fired=None) -> TensorExpr:
    return get_normalizer(ctx, rules).normalize(e, fired)


def is_zero(e: TensorExpr, ctx=None, rules=None):
    r = normalize(e, ctx, rules)
    return r.is_zero(), r


def divergence(e: TensorExpr, slot: str) -> TensorExpr:
    """delta on a free contravariant slot: nabla_u e^{..u..}."""
    if e.is_zero():
        return e
    free = e.free()
    if slot not in free:
        raise ExprError(f"divergence: {slot!r} is not a free index")
    if free[slot] != "up":
        raise ExprError(f"divergence: {slot!r} is covariant")
    items = []
    for key, c in e.terms.items():
        d = max_dummy(key) + 1
        at = [(n, a, tuple((d if l == slot else l, t) for l, t in s),
               tuple((d if l == slot else l, t) for l, t in p)) for n, a, s, p in key]
        for new in nabla_atoms(at, (d, 0), e.vocab):
            items.append((c, new))
    return TensorExpr.from_terms(items, e.up - {slot}, e.vocab)


def nabla(e: TensorExpr, label, typ=0) -> TensorExpr:
    """Covariant derivative with a new free covariant index."""
    items = []
    for key, c in e.terms.items():
        for new in nabla_atoms(list(key), (label, typ), e.vocab):
            items.append((c, new))
    return TensorExpr.from_terms(items, e.up, e.vocab)
