"""Atom vocabulary: slot signatures, monoterm symmetries, conjugation."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class AtomSpec:
    name: str
    native: str                      # one char per slot, 'u' or 'd'
    sym: tuple = ()                  # generators: (perm, sign); new[i] = old[perm[i]]
    conj: str | None = None          # conjugate symbol (None: real)
    weight: int = 0                  # power of L^k carried (the section placeholder has 1)
    parallel: bool = False           # covariant derivative vanishes
    nargs: int = 0                   # parameter-field arguments; -1 for a free-length list
    args_sym: int = 0                # 0 none, 1 symmetric, -1 antisymmetric
    kind: str = "tensor"             # tensor | scalar | family | placeholder
    doc: str = ""

    @property
    def nslots(self):
        return len(self.native)


def _sym2():
    return (((1, 0), 1),)


def _asym2():
    return (((1, 0), -1),)


def _sym_all(n):
    if n < 2:
        return ()
    gens = [(tuple([1, 0] + list(range(2, n))), 1)]
    if n > 2:
        gens.append((tuple(list(range(1, n)) + [0]), 1))
    return tuple(gens)


RIEMANN_SYM = (((1, 0, 2, 3), -1), ((0, 1, 3, 2), -1), ((2, 3, 0, 1), 1))

_BUILTIN = [
    AtomSpec("g", "dd", _sym2(), parallel=True, doc="Kahler metric"),
    AtomSpec("gInv", "uu", _sym2(), parallel=True, doc="inverse metric"),
    AtomSpec("Id", "ud", _sym2(), parallel=True, doc="identity endomorphism"),
    AtomSpec("omega", "dd", _asym2(), parallel=True, doc="symplectic form"),
    AtomSpec("omegaInv", "uu", _asym2(), parallel=True, doc="inverse symplectic bivector"),
    AtomSpec("J", "ud", _asym2(), parallel=True, doc="complex structure J^u_a"),
    AtomSpec("pi10", "ud", (), parallel=True, doc="projection onto T'"),
    AtomSpec("pi01", "ud", (), parallel=True, doc="projection onto T''"),
    AtomSpec("R", "dddu", RIEMANN_SYM, doc="curvature R_{abc}^d"),
    AtomSpec("r", "dd", _sym2(), doc="Ricci tensor"),
    AtomSpec("rho", "dd", _asym2(), doc="Ricci form"),
    AtomSpec("scal", "", kind="scalar", doc="scalar curvature"),
    AtomSpec("s", "", weight=1, kind="placeholder", doc="section of L^k"),
    AtomSpec("Gt", "uu", _sym2(), nargs=1, kind="family", doc="real deformation bivector"),
    AtomSpec("G", "uu", _sym2(), conj="Gb", nargs=1, kind="family", doc="(2,0)-part of Gt"),
    AtomSpec("Gb", "uu", _sym2(), conj="G", nargs=1, kind="family", doc="(0,2)-part of Gt"),
    AtomSpec("K", "uu", _sym2(), conj="Kb", nargs=2, args_sym=1, kind="family",
             doc="(2,0)-part of the second variation W'[Gt(V')]"),
    AtomSpec("Kb", "uu", _sym2(), conj="K", nargs=2, args_sym=1, kind="family"),
    AtomSpec("Theta", "uu", _sym2(), nargs=2, args_sym=-1, kind="family"),
    AtomSpec("theta", "", nargs=2, args_sym=-1, kind="family"),
    AtomSpec("F", "", nargs=-1, args_sym=1, kind="family", doc="Ricci potential, args = parameter derivatives"),
    AtomSpec("Gamma3", "uuu", _sym_all(3), nargs=2, kind="family"),
    AtomSpec("Gamma2", "uu", _sym_all(2), nargs=2, kind="family"),
    AtomSpec("Gamma1", "u", (), nargs=2, kind="family"),
    AtomSpec("Gamma0", "", (), nargs=2, kind="family"),
    AtomSpec("c", "", nargs=1, kind="family", doc="one-form c(V)"),
    AtomSpec("dGamma", "ddd", (((0, 2, 1), 1),), nargs=1, kind="family",
             doc="variation of the Levi-Civita connection, first slot lowered"),
]

# generic user tensors available without declaration
_USER_DEFAULT = [
    AtomSpec("A", "uu", _sym2(), doc="symmetric bivector"),
    AtomSpec("B", "uu", _sym2(), doc="symmetric bivector"),
    AtomSpec("C", "uu", (), doc="general bivector"),
    AtomSpec("P", "uu", _asym2(), doc="antisymmetric bivector"),
    AtomSpec("X", "u"),
    AtomSpec("Y", "u"),
    AtomSpec("Z", "u"),
    AtomSpec("alpha", "d"),
    AtomSpec("beta", "d"),
    AtomSpec("f", "", kind="scalar"),
    AtomSpec("h", "", kind="scalar"),
    AtomSpec("T", "ddd", ()),
    AtomSpec("S", "uu", (), ),
]


@dataclass
class Vocabulary:
    specs: dict = field(default_factory=dict)

    @classmethod
    def default(cls):
        v = cls()
        for s in _BUILTIN + _USER_DEFAULT:
            v.specs[s.name] = s
        return v

    def declare(self, spec: AtomSpec):
        self.specs[spec.name] = spec
        return spec

    def __contains__(self, name):
        return name in self.specs

    def __getitem__(self, name):
        try:
            return self.specs[name]
        except KeyError:
            raise KeyError(f"unknown symbol {name!r}") from None

    def get(self, name):
        return self.specs.get(name)

    def conj_name(self, name):
        spec = self.specs.get(name)
        if spec is None or spec.conj is None:
            return name
        return spec.conj


DEFAULT_VOCAB = Vocabulary.default()
