"""Canonical relabeling of a single term.

A term is a tuple of atoms (name, args, slots, prefix); every slot or prefix
entry is an index (label, type) with label a str (free) or an int (dummy).
The canonical form is the lexicographically least encoding over atom orders,
per-atom symmetry elements and dummy renumberings, found by a greedy search
that branches only on ties.
"""
from __future__ import annotations

from itertools import permutations


def close_group(gens, n):
    """All (perm, sign) generated by signed permutation generators on n points."""
    ident = tuple(range(n))
    seen = {ident: 1}
    frontier = [ident]
    while frontier:
        nxt = []
        for p in frontier:
            sp = seen[p]
            for g, sg in gens:
                q = tuple(p[g[i]] for i in range(n))
                s = sp * sg
                if q in seen:
                    if seen[q] != s:
                        seen[q] = 0       # group contains -1: tensor vanishes
                    continue
                seen[q] = s
                nxt.append(q)
        frontier = nxt
    return [(p, s) for p, s in seen.items()]


def sym_group_on(positions, n):
    """Full symmetric group on a subset of positions, sign +1."""
    positions = list(positions)
    out = []
    for perm in permutations(positions):
        p = list(range(n))
        for src, dst in zip(positions, perm):
            p[src] = dst
        out.append(tuple(p))
    return out


def product_groups(groups, n):
    """Product of commuting permutation groups given as lists of (perm, sign)."""
    acc = [(tuple(range(n)), 1)]
    for grp in groups:
        new = []
        for p, s in acc:
            for q, t in grp:
                new.append((tuple(p[q[i]] for i in range(n)), s * t))
        acc = new
    return acc


def _encode_label(lbl, dmap, counter):
    if isinstance(lbl, str):
        return (0, lbl), counter
    v = dmap.get(lbl)
    if v is None:
        v = counter
        dmap[lbl] = v
        counter += 1
    return (1, v), counter


def canonicalize_term(atoms, group_of):
    """Return (sign, canonical_atoms). sign == 0 means the term vanishes.

    group_of(atom) -> list of (perm, sign) on the atom's positions
    (prefix entries first, then slots)."""
    atoms = list(atoms)
    n = len(atoms)
    if n == 0:
        return 1, ()
    # dummies are labels appearing twice; normalise str dummies too
    count = {}
    for a in atoms:
        for lbl, _ in a[3]:
            count[lbl] = count.get(lbl, 0) + 1
        for lbl, _ in a[2]:
            count[lbl] = count.get(lbl, 0) + 1
    dummies = {l for l, c in count.items() if c >= 2}

    positions = []
    statics = []
    groups = []
    for a in atoms:
        pos = [(l if l not in dummies else ("#", l), t) for l, t in a[3]] + \
              [(l if l not in dummies else ("#", l), t) for l, t in a[2]]
        positions.append(pos)
        statics.append((a[0], a[1], len(a[3]), len(a[2])))
        g = group_of(a)
        if any(s == 0 for _, s in g):
            return 0, None
        groups.append(g)

    best = [None]          # best encoding (list of atom encodings)
    best_sign = [0]
    zero = [False]

    def enc_atom(i, perm, dmap, counter):
        pos = positions[i]
        toks = []
        for j in perm:
            lbl, t = pos[j]
            if isinstance(lbl, tuple):
                v = dmap.get(lbl)
                if v is None:
                    v = counter
                    dmap[lbl] = v
                    counter += 1
                toks.append((t, 1, v))
            else:
                toks.append((t, 0, lbl))
        return (statics[i], tuple(toks)), counter

    def dfs(remaining, enc, dmap, counter, sign, chosen):
        if not remaining:
            if best[0] is None or enc < best[0]:
                best[0] = list(enc)
                best_sign[0] = sign
                best_choice[0] = list(chosen)
                zero[0] = False
            elif enc == best[0] and sign != best_sign[0]:
                zero[0] = True
            return
        depth = len(enc)
        # candidate atoms: minimal static key among remaining
        smin = min(statics[i] for i in remaining)
        options = []
        for i in remaining:
            if statics[i] != smin:
                continue
            for perm, s in groups[i]:
                d2 = dict(dmap)
                e, c2 = enc_atom(i, perm, d2, counter)
                options.append((e, i, perm, s, d2, c2))
        emin = min(o[0] for o in options)
        if best[0] is not None:
            b = best[0][depth]
            if emin > b and enc == best[0][:depth]:
                return
        seen = set()
        for e, i, perm, s, d2, c2 in options:
            if e != emin:
                continue
            key = (i, frozenset(d2.items()), s)
            if key in seen:
                continue
            seen.add(key)
            rem = [j for j in remaining if j != i]
            chosen.append((i, perm))
            enc.append(e)
            dfs(rem, enc, d2, c2, sign * s, chosen)
            enc.pop()
            chosen.pop()

    best_choice = [None]
    dfs(list(range(n)), [], {}, 0, 1, [])
    if zero[0]:
        return 0, None
    # rebuild canonical atoms
    dmap = {}
    counter = 0
    out = []
    for i, perm in best_choice[0]:
        a = atoms[i]
        pos = positions[i]
        np_ = len(a[3])
        new = []
        for j in perm:
            lbl, t = pos[j]
            if isinstance(lbl, tuple):
                v = dmap.get(lbl)
                if v is None:
                    v = counter
                    dmap[lbl] = v
                    counter += 1
                new.append((v, t))
            else:
                new.append((lbl, t))
        out.append((a[0], a[1], tuple(new[np_:]), tuple(new[:np_])))
    return best_sign[0], tuple(out)
