"""IR, parser, renaming, conjugation and symmetrization."""
import pytest
from hypothesis import given, settings, strategies as st

from hitchin_cas import ExprError, ParseError, alpha_canonicalize, conjugate, parse, symmetrize, to_string
from hitchin_cas.expr import TensorExpr, rename_free

# terms with free lowered indices a, b; u, v are dummies
TEMPLATES = [
    "g_{a b}", "omega_{a b}", "r_{a b}", "rho_{a b}", "nabla_{a} alpha_{b}",
    "alpha_{a} beta_{b}", "X^{u} R_{u a b}^{v} alpha_{v}", "r_{a u} gInv^{u v} g_{v b}",
    "nabla_{a} nabla_{b} f", "J^{u}_{a} omega_{u b}", "nabla_{u} X^{u} alpha_{a} beta_{b}",
    "Gt(V)^{u v} omega_{u a} g_{v b}", "nabla_{a} nabla_{u} X^{u} alpha_{b}",
]
DECOR = ["", "'", "''"]
COEFF = ["+ ", "+ 2 ", "- 1/3 ", "+ i ", "+ k ", "- 2 i lambda "]
RENAMES = ["p", "q", "m", "n", "w", "z"]


def _sub(text, mapping):
    out = text
    for old, new in mapping.items():
        out = out.replace("{%s}" % old, "{@%s@}" % new).replace("{%s " % old, "{@%s@ " % new) \
                 .replace(" %s}" % old, " @%s@}" % new).replace(" %s " % old, " @%s@ " % new)
    return out.replace("@", "")


@st.composite
def expressions(draw):
    da, db = draw(st.sampled_from(DECOR)), draw(st.sampled_from(DECOR))
    n = draw(st.integers(1, 3))
    terms = []
    for _ in range(n):
        t = draw(st.sampled_from(TEMPLATES))
        c = draw(st.sampled_from(COEFF))
        terms.append(c + _sub(t, {"a": "a" + da, "b": "b" + db}))
    return " ".join(terms).lstrip("+ ")


def _renamed(text, draw_pair):
    return _sub(text, dict(zip(("u", "v"), draw_pair)))


# ---------------------------------------------------------------- parse

@pytest.mark.trivial
def test_parse_free_indices():
    """[TRIVIAL] g_{a u} gInv^{u b} has free a (down) and b (up)."""
    assert parse("g_{a u} gInv^{u b}").free() == {"a": "down", "b": "up"}


@pytest.mark.trivial
def test_parse_decorations_round_trip():
    """[TRIVIAL] omega_{a' b'} keeps its holomorphic decorations."""
    e = parse("omega_{a' b'}")
    assert to_string(e) == "omega_{a' b'}"
    assert parse(to_string(e)) == e


@pytest.mark.paper
def test_parse_gamma3_integrand():
    """[PAPER] G(V)^{a u} nabla_u G(W)^{b c} has three free contravariant indices."""
    e = parse("G(V)^{a u} nabla_{u} G(W)^{b c}")
    assert e.free() == {"a": "up", "b": "up", "c": "up"}


@pytest.mark.parametrize("bad", ["g_{a b", "foo_{a}", "g_{a}", "X^{u} alpha_{u} beta_{u}"])
@pytest.mark.trivial
def test_parse_errors(bad):
    """[TRIVIAL] syntax error, unknown symbol, index count, triple dummy."""
    with pytest.raises(ParseError) as exc:
        parse(bad)
    assert "position" in str(exc.value)


@pytest.mark.trivial
def test_parse_error_is_expr_error():
    """[TRIVIAL] parse failures are engine errors."""
    assert issubclass(ParseError, ExprError)


# ---------------------------------------------------------------- renaming

@pytest.mark.trivial
def test_dummy_renaming_invariance():
    """[TRIVIAL] X^u alpha_u and X^v alpha_v are the same expression."""
    assert parse("X^{u} alpha_{u}") == parse("X^{v} alpha_{v}")


@pytest.mark.trivial
def test_duplicate_terms_merge():
    """[TRIVIAL] the same term with different dummies collects to coefficient 2."""
    assert parse("X^{u} alpha_{u} + X^{v} alpha_{v}") == parse("2 X^{w} alpha_{w}")


@pytest.mark.paper
def test_theta_dummy_choice():
    """[PAPER] Sym(Gt(V) omega Gt(W)) is independent of the dummy names."""
    a = parse("Sym[a b](Gt(V)^{a u} omega_{u v} Gt(W)^{v b})")
    b = parse("Sym[a b](Gt(V)^{a p} omega_{p q} Gt(W)^{q b})")
    assert a == b


@pytest.mark.trivial
def test_alpha_canonicalize_idempotent():
    """[TRIVIAL] alpha_canonicalize is a projection."""
    e = parse("X^{u} R_{u a b}^{v} alpha_{v}")
    assert alpha_canonicalize(alpha_canonicalize(e)) == alpha_canonicalize(e)


# ---------------------------------------------------------------- conjugation

@pytest.mark.paper
def test_conjugate_G():
    """[PAPER] the conjugate of G(V) is Gb(V)."""
    assert conjugate(parse("G(V)^{a b}")) == parse("Gb(V)^{a b}")


@pytest.mark.trivial
def test_conjugate_i_omega():
    """[TRIVIAL] conj(i omega_{a' b''}) = -i omega_{a'' b'}."""
    assert conjugate(parse("i omega_{a' b''}")) == parse("-i omega_{a'' b'}")


# ---------------------------------------------------------------- symmetrization

@pytest.mark.trivial
def test_symmetrize_symmetric_unchanged():
    """[TRIVIAL] symmetrizing g_{ab} leaves it unchanged."""
    assert symmetrize(parse("g_{a b}"), ["a", "b"]) == parse("g_{a b}")


@pytest.mark.trivial
def test_symmetrize_antisymmetric_vanishes():
    """[TRIVIAL] symmetrizing omega_{ab} gives 0."""
    assert symmetrize(parse("omega_{a b}"), ["a", "b"]).is_zero()


@pytest.mark.paper
def test_symmetrize_curvature_term():
    """[PAPER] Sym(A^{xy} R_{uxy}^a B^{ub}) over a, b is the two-term average."""
    e = symmetrize(parse("A^{x y} R_{u x y}^{a} B^{u b}"), ["a", "b"])
    assert e == parse("1/2 A^{x y} R_{u x y}^{a} B^{u b} + 1/2 A^{x y} R_{u x y}^{b} B^{u a}")
    assert len(e) == 2


@pytest.mark.trivial
def test_symmetrize_errors():
    """[TRIVIAL] mixed variance and non-free slots are rejected."""
    with pytest.raises(ExprError):
        symmetrize(parse("X^{a} alpha_{b}"), ["a", "b"])
    with pytest.raises(ExprError):
        symmetrize(parse("X^{a}"), ["a", "c"])


# ---------------------------------------------------------------- properties

@settings(max_examples=60, deadline=None)
@given(expressions(), st.permutations(RENAMES).map(lambda p: p[:2]))
def test_property_renaming(text, pair):
    """Renaming the dummies never changes the expression."""
    assert parse(text) == parse(_renamed(text, pair))


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_property_conjugate_involution(text):
    e = parse(text)
    assert conjugate(conjugate(e)) == e


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_property_print_parse_round_trip(text):
    e = parse(text)
    assert parse(to_string(e)) == e


@settings(max_examples=60, deadline=None)
@given(expressions(), expressions())
def test_property_addition(t1, t2):
    e1, e2 = parse(t1), parse(t2)
    assert e1 + e2 == e2 + e1
    assert (e1 - e1).is_zero()
    assert e1 + e1 == e1.scale(2)


@settings(max_examples=40, deadline=None)
@given(expressions())
def test_property_free_rename_inverse(text):
    e = parse(text)
    back = rename_free(rename_free(e, {"a": "c", "b": "d"}), {"c": "a", "d": "b"})
    assert back == e


@settings(max_examples=40, deadline=None)
@given(expressions())
def test_property_zero_identity(text):
    e = parse(text)
    assert e + TensorExpr.zero(e.up, e.vocab) == e
