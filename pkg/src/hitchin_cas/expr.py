"""Abstract-index tensor expressions.

Internal convention: every slot is stored lowered and every repeated label is
a contraction through the inverse metric.  Same-variance pairs are always
read as metric contractions; an up/down pair X^u a_u is the same
contraction once X is lowered.  Free labels written upstairs are recorded in
``TensorExpr.up`` and printed upstairs again.  Types: 0 = undecorated,
1 = primed (holomorphic), 2 = double primed (antiholomorphic).  Lowering a
slot swaps its type, so a free upper a' is stored as a lower a''.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from .canonical import canonicalize_term, close_group
from .scalar import ScalarPoly
from .vocab import DEFAULT_VOCAB

PRIMES = {0: "", 1: "'", 2: "''"}
FLIP = (0, 2, 1)


@dataclass(frozen=True)
class Index:
    label: str
    variance: str = "down"          # up | down
    projection: str = "none"        # none | holomorphic | antiholomorphic

    @property
    def type(self):
        return {"none": 0, "holomorphic": 1, "antiholomorphic": 2}[self.projection]


@dataclass(frozen=True)
class TensorAtom:
    symbol: str
    indices: tuple
    prefix: tuple = ()
    args: tuple = ()


class ExprError(ValueError):
    pass


# ---------------------------------------------------------------- atoms

def atom(name, slots=(), prefix=(), args=()):
    return (name, tuple(args), tuple(slots), tuple(prefix))


def atom_labels(a):
    for l, _ in a[3]:
        yield l
    for l, _ in a[2]:
        yield l


def term_label_counts(atoms):
    cnt = {}
    for a in atoms:
        for l in atom_labels(a):
            cnt[l] = cnt.get(l, 0) + 1
    return cnt


def term_free(atoms):
    """Free (label -> type) of a term."""
    cnt = term_label_counts(atoms)
    out = {}
    for a in atoms:
        for l, t in a[3] + a[2]:
            if cnt[l] == 1:
                out[l] = t
    return out


def max_dummy(atoms):
    m = -1
    for a in atoms:
        for l in atom_labels(a):
            if isinstance(l, int) and l > m:
                m = l
    return m


def relabel_atoms(atoms, mapping):
    out = []
    for name, args, slots, prefix in atoms:
        out.append((name, args,
                    tuple((mapping.get(l, l), t) for l, t in slots),
                    tuple((mapping.get(l, l), t) for l, t in prefix)))
    return out


def shift_dummies(atoms, offset):
    out = []
    for name, args, slots, prefix in atoms:
        out.append((name, args,
                    tuple(((l + offset) if isinstance(l, int) else l, t) for l, t in slots),
                    tuple(((l + offset) if isinstance(l, int) else l, t) for l, t in prefix)))
    return out


# ---------------------------------------------------------------- groups

_group_cache = {}


def slot_group(vocab, a):
    """Monoterm symmetry group of an atom acting on prefix+slots (prefix fixed)."""
    spec = vocab.get(a[0])
    npre, ns = len(a[3]), len(a[2])
    key = (a[0], npre, ns, id(vocab))
    g = _group_cache.get(key)
    if g is None:
        gens = []
        if spec is not None:
            for perm, sign in spec.sym:
                if len(perm) != ns:
                    continue
                gens.append((tuple(range(npre)) + tuple(npre + p for p in perm), sign))
        g = close_group(gens, npre + ns)
        _group_cache[key] = g
    return g


def canon_args(vocab, name, args):
    """Sort arguments of (anti)symmetric family atoms; returns (sign, args)."""
    spec = vocab.get(name)
    if spec is None or not spec.args_sym or len(args) < 2:
        return 1, tuple(args)
    srt = tuple(sorted(args))
    if spec.args_sym == 1:
        return 1, srt
    if len(set(args)) < len(args):
        return 0, srt
    # parity of the sorting permutation
    perm = sorted(range(len(args)), key=lambda i: args[i])
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, ln = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            ln += 1
        if ln % 2 == 0:
            sign = -sign
    return sign, srt


# ---------------------------------------------------------------- expression

class TensorExpr:
    """Immutable sum of terms: dict canonical-term -> ScalarPoly."""

    __slots__ = ("terms", "up", "vocab")

    def __init__(self, terms=None, up=frozenset(), vocab=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v}
        self.up = frozenset(up)
        self.vocab = vocab or DEFAULT_VOCAB

    # construction helpers
    @classmethod
    def zero(cls, up=frozenset(), vocab=None):
        return cls({}, up, vocab)

    @classmethod
    def from_terms(cls, items, up=frozenset(), vocab=None, canonical=True, group_of=None):
        """items: iterable of (coeff, atoms)."""
        vocab = vocab or DEFAULT_VOCAB
        acc = {}
        for coeff, atoms in items:
            add_term(acc, coeff, atoms, vocab, canonical, group_of)
        return cls(acc, up, vocab)

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def is_zero(self):
        return not self.terms

    def free(self):
        """Free labels as a dict label -> variance ('up'/'down')."""
        for key in self.terms:
            fr = term_free(key)
            return {l: ("up" if l in self.up else "down") for l in fr}
        return {}

    def free_labels(self):
        return frozenset(self.free())

    def check_free(self):
        sets = {frozenset(term_free(k)) for k in self.terms}
        if len(sets) > 1:
            raise ExprError(f"inconsistent free indices across terms: {sorted(map(sorted, sets))}")

    def __add__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return self
        acc = dict(self.terms)
        for k, v in other.terms.items():
            c = acc.get(k)
            s = v if c is None else c + v
            if s:
                acc[k] = s
            else:
                acc.pop(k, None)
        return TensorExpr(acc, self.up | other.up, self.vocab)

    __radd__ = __add__

    def __neg__(self):
        return TensorExpr({k: -v for k, v in self.terms.items()}, self.up, self.vocab)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = c if isinstance(c, ScalarPoly) else ScalarPoly.const(c)
        if not c:
            return TensorExpr({}, self.up, self.vocab)
        return TensorExpr({k: v * c for k, v in self.terms.items()}, self.up, self.vocab)

    def __mul__(self, other):
        if isinstance(other, TensorExpr):
            return product(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TensorExpr):
            return NotImplemented
        return self.terms == other.terms and (not self.terms or self.up == other.up)

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"TensorExpr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    def atoms_view(self):
        """Terms as (ScalarPoly, [TensorAtom]) for inspection."""
        out = []
        for key, c in self.terms.items():
            atoms = []
            for name, args, slots, prefix in key:
                idx = tuple(_index_view(l, t, l in self.up) for l, t in slots)
                pre = tuple(_index_view(l, t, False) for l, t in prefix)
                atoms.append(TensorAtom(name, idx, pre, args))
            out.append((c, atoms))
        return out


def _index_view(l, t, up):
    if up:
        t = FLIP[t]
    proj = ("none", "holomorphic", "antiholomorphic")[t]
    return Index(l if isinstance(l, str) else f"_{l}", "up" if up else "down", proj)


def add_term(acc, coeff, atoms, vocab=DEFAULT_VOCAB, canonical=True, group_of=None):
    if not coeff:
        return
    if canonical:
        sign, key = canonical_key(atoms, vocab, group_of)
        if sign == 0:
            return
        if sign < 0:
            coeff = -coeff
    else:
        key = tuple(atoms)
    c = acc.get(key)
    s = coeff if c is None else c + coeff
    if s:
        acc[key] = s
    else:
        acc.pop(key, None)


_canon_cache = {}


def canonical_key(atoms, vocab=DEFAULT_VOCAB, group_of=None):
    """Canonical (sign, key) under the expr-level monoterm symmetries."""
    raw = tuple(atoms)
    ck = (raw, id(vocab), group_of)
    hit = _canon_cache.get(ck)
    if hit is not None:
        return hit
    sign = 1
    fixed = []
    for name, args, slots, prefix in raw:
        s, a2 = canon_args(vocab, name, args)
        if s == 0:
            _canon_cache[ck] = (0, None)
            return 0, None
        sign *= s
        fixed.append((name, a2, slots, prefix))
    g = group_of or (lambda a: slot_group(vocab, a))
    s2, key = canonicalize_term(fixed, g)
    res = (0, None) if s2 == 0 else (sign * s2, key)
    if len(_canon_cache) > 500000:
        _canon_cache.clear()
    _canon_cache[ck] = res
    return res


def product(e1, e2):
    """Tensor product with contraction of shared labels; dummies renamed apart."""
    items = []
    for k1, c1 in e1.terms.items():
        off = max_dummy(k1) + 1
        for k2, c2 in e2.terms.items():
            items.append((c1 * c2, list(k1) + shift_dummies(k2, off)))
    up = (e1.up | e2.up)
    out = TensorExpr.from_terms(items, vocab=e1.vocab)
    fr = out.free_labels()
    return TensorExpr(out.terms, up & fr, e1.vocab)


# ---------------------------------------------------------------- operations

def alpha_canonicalize(e: TensorExpr) -> TensorExpr:
    return TensorExpr.from_terms(((c, k) for k, c in e.terms.items()), e.up, e.vocab)


def conjugate(e: TensorExpr) -> TensorExpr:
    """Swap projections, G <-> Gb, t <-> tbar, i <-> -i, parameter parts."""
    vocab = e.vocab
    items = []
    for key, c in e.terms.items():
        atoms = []
        for name, args, slots, prefix in key:
            atoms.append((vocab.conj_name(name), tuple(conj_arg(x) for x in args),
                          tuple((l, FLIP[t]) for l, t in slots),
                          tuple((l, FLIP[t]) for l, t in prefix)))
        items.append((c.conjugate(), atoms))
    return TensorExpr.from_terms(items, e.up, vocab)


def conj_arg(x):
    if x.endswith("''"):
        return x[:-2] + "'"
    if x.endswith("'"):
        return x + "'"
    return x


def symmetrize(e: TensorExpr, slots) -> TensorExpr:
    slots = list(slots)
    free = e.free()
    for s in slots:
        if s not in free:
            raise ExprError(f"slot {s!r} is not a free index")
    if e.is_zero():
        return e
    if len({free[s] for s in slots}) > 1:
        raise ExprError("symmetrization over mixed variance")
    perms = list(permutations(slots))
    w = Fraction(1, len(perms))
    items = []
    for key, c in e.terms.items():
        for p in perms:
            mp = dict(zip(slots, p))
            items.append((c * w, relabel_atoms(key, mp)))
    return TensorExpr.from_terms(items, e.up, e.vocab)


def rename_free(e: TensorExpr, mapping) -> TensorExpr:
    items = [(c, relabel_atoms(k, mapping)) for k, c in e.terms.items()]
    up = frozenset(mapping.get(l, l) for l in e.up)
    return TensorExpr.from_terms(items, up, e.vocab)


# ---------------------------------------------------------------- printing

_DUMMY_POOL = "uvwxyzpqjlnoabcdefghikmrst"


def _label_names(key, up):
    free = set(l for l in term_free(key) if isinstance(l, str))
    names = {}
    pool = [c for c in _DUMMY_POOL if c not in free]
    extra = 0
    for a in key:
        for l in atom_labels(a):
            if isinstance(l, int) and l not in names:
                if pool:
                    names[l] = pool.pop(0)
                else:
                    names[l] = f"u{extra}"
                    extra += 1
    return names


def format_atom(a, names, up, vocab=None, raised=None):
    name, args, slots, prefix = a
    spec = vocab.get(name) if vocab is not None else None
    native = spec.native if spec is not None else ""
    out = []
    for l, t in prefix:
        out.append(f"nabla_{{{names.get(l, l)}{PRIMES[t]}}}")
    s = name
    if args:
        s += "(" + ",".join(args) + ")"
    groups = []
    for j, (l, t) in enumerate(slots):
        if isinstance(l, str):
            v = "^" if l in up else "_"
        elif raised is not None and j < len(native) and native[j] == "u" and l not in raised:
            raised.add(l)
            v = "^"
        else:
            v = "_"
        tt = FLIP[t] if v == "^" else t
        txt = f"{names.get(l, l)}{PRIMES[tt]}"
        if groups and groups[-1][0] == v:
            groups[-1][1].append(txt)
        else:
            groups.append((v, [txt]))
    for v, items in groups:
        s += f"{v}{{{' '.join(items)}}}"
    out.append(s)
    return " ".join(out)


def format_coeff(c: ScalarPoly):
    """Coefficient text and sign for a term."""
    items = c.sorted_items()
    if len(items) == 1:
        mono, q = items[0]
        from .scalar import format_mono
        body = format_mono(mono)
        a = abs(q)
        num = "" if a == 1 else str(a)
        txt = " ".join(x for x in (num, body) if x)
        return ("-" if q < 0 else "+"), txt
    return "+", "(" + str(c) + ")"


def term_sort_key(item):
    key, c = item
    return (len(key), repr(key), repr(sorted(c.terms.items())))


def to_string(e: TensorExpr) -> str:
    if not e.terms:
        return "0"
    parts = []
    for key, c in sorted(e.terms.items(), key=term_sort_key):
        names = _label_names(key, e.up)
        raised = set()
        body = " ".join(format_atom(a, names, e.up, e.vocab, raised) for a in key)
        sign, ctxt = format_coeff(c)
        txt = " ".join(x for x in (ctxt, body) if x) or "1"
        parts.append((sign, txt))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, txt in parts[1:]:
        out += f" {sign} {txt}"
    return out
