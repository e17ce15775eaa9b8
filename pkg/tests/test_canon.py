"""Normalizer: rule examples, divergence, budget, confluence and soundness."""
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hitchin_cas import ExprError, parse
from hitchin_cas.canon import (BudgetExceeded, RuleSet, default_rules, divergence, is_zero,
                               normalize, set_budget)
from hitchin_cas.family import family_rules, vary


def nf(text, rules=None):
    return normalize(parse(text) if isinstance(text, str) else text, rules=rules)


# ---------------------------------------------------------------- normalize

@pytest.mark.paper
def test_metric_times_inverse_is_identity():
    """[PAPER] g_{au} g~^{ub} is the identity endomorphism."""
    assert nf("g_{a u} gInv^{u b}") == nf("Id_{a}^{b}")


@pytest.mark.trivial
def test_omega_antisymmetry():
    """[TRIVIAL] omega_{ab} + omega_{ba} = 0."""
    assert nf("omega_{a b} + omega_{b a}").is_zero()


@pytest.mark.paper
def test_rigidity_kills_antiholomorphic_derivative(family):
    """[PAPER] nabla_{a''} G(V)^{bc} = 0 for a rigid family."""
    assert nf("nabla_{a''} G(V)^{b c}", family).is_zero()
    assert not nf("nabla_{a''} G(V)^{b c}", family.with_tags(rigidity=False)).is_zero()


@pytest.mark.paper
def test_ricci_form_from_curvature():
    """[PAPER] rho_{ab} = 1/2 R_{abuv} omega~^{uv}."""
    assert nf("rho_{a b} - 1/2 R_{a b u v} omegaInv^{u v}").is_zero()


@pytest.mark.trivial
def test_normal_form_idempotent():
    """[TRIVIAL] a normal form is a fixpoint."""
    e = nf("X^{u} R_{u a b}^{v} alpha_{v} + nabla_{a} nabla_{b} f")
    assert normalize(e) == e


# ---------------------------------------------------------------- is_zero

@pytest.mark.paper
def test_scalar_curvature_variation(family):
    """[PAPER] V[s] - delta delta G~(V) = 0 with the Bianchi rules."""
    lhs = vary("V", parse("scal"))
    ok, res = is_zero(lhs - parse("nabla_{a} nabla_{b} Gt(V)^{a b}"), rules=family)
    assert ok and res.is_zero()


@pytest.mark.trivial
def test_is_zero_symmetric_metric():
    """[TRIVIAL] g_{ab} - g_{ba} = 0."""
    assert is_zero(parse("g_{a b} - g_{b a}"))[0]


@pytest.mark.trivial
def test_is_zero_returns_residual():
    """[TRIVIAL] a nonzero input comes back with its normal form."""
    ok, res = is_zero(parse("2 g_{a b} - g_{b a}"))
    assert not ok and res == nf("g_{a b}")


def _curvature_2d(phi, h=1e-3):
    """R_{abcd} of e^{2 phi}(dx^2 + dy^2) at the origin by finite differences."""
    def metric(p):
        return np.exp(2 * phi(p)) * np.eye(2)

    def christoffel(p):
        dg = np.empty((2, 2, 2))                       # dg[c, a, b] = d_c g_ab
        for c in range(2):
            e = np.zeros(2); e[c] = h
            dg[c] = (metric(p + e) - metric(p - e)) / (2 * h)
        # Gamma^a_{bc} = 1/2 g^{ad}(d_b g_dc + d_c g_db - d_d g_bc)
        t = np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg
        return 0.5 * np.einsum("ad,dbc->abc", np.linalg.inv(metric(p)), t)

    p0 = np.zeros(2)
    G0 = christoffel(p0)
    dG = np.empty((2, 2, 2, 2))                        # dG[e, a, b, c] = d_e Gamma^a_bc
    for e_ in range(2):
        e = np.zeros(2); e[e_] = h
        dG[e_] = (christoffel(p0 + e) - christoffel(p0 - e)) / (2 * h)
    # R^a_{bcd} = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_ce Gamma^e_db - Gamma^a_de Gamma^e_cb
    Rup = (np.einsum("cadb->abcd", dG) - np.einsum("dacb->abcd", dG)
           + np.einsum("ace,edb->abcd", G0, G0) - np.einsum("ade,ecb->abcd", G0, G0))
    return np.einsum("ae,ebcd->abcd", metric(p0), Rup)


@pytest.mark.derived
def test_curvature_pair_antisymmetry_numeric():
    """[DERIVED] R_{abcd} + R_{bacd} = 0 symbolically and on a random 2-dim Kahler metric."""
    assert is_zero(parse("R_{a b c d} + R_{b a c d}"))[0]
    rng = np.random.default_rng(7)
    c = rng.normal(size=5) * 0.3
    R = _curvature_2d(lambda p: c[0] * p[0] + c[1] * p[1] + c[2] * p[0] ** 2 + c[3] * p[0] * p[1] + c[4] * p[1] ** 2)
    assert np.max(np.abs(R + R.transpose(1, 0, 2, 3))) < 1e-5
    assert np.max(np.abs(R + R.transpose(0, 1, 3, 2))) < 1e-5
    assert np.max(np.abs(R)) > 1e-2                   # the metric is genuinely curved


# ---------------------------------------------------------------- divergence

@pytest.mark.paper
def test_divergence_of_tensor_product():
    """[PAPER] delta(X (x) alpha) = (nabla_u X^u) alpha + X^u nabla_u alpha."""
    got = divergence(parse("X^{a} alpha_{b}"), "a")
    assert got == parse("nabla_{u} X^{u} alpha_{b} + X^{u} nabla_{u} alpha_{b}")


@pytest.mark.trivial
def test_divergence_of_parallel_tensor():
    """[TRIVIAL] delta g~ = 0."""
    assert normalize(divergence(parse("gInv^{a b}"), "a")).is_zero()


@pytest.mark.paper
def test_double_divergence_of_antisymmetric_bivector():
    """[PAPER] delta delta only sees the symmetric part of a bivector."""
    e = divergence(divergence(parse("X^{a} Y^{b} - X^{b} Y^{a}"), "a"), "b")
    assert normalize(e).is_zero()
    e = divergence(divergence(parse("omegaInv^{a u} r_{u v} Gt(V)^{v b}"), "a"), "b")
    sym = divergence(divergence(parse("1/2 omegaInv^{a u} r_{u v} Gt(V)^{v b} + 1/2 omegaInv^{b u} r_{u v} Gt(V)^{v a}"), "a"), "b")
    assert normalize(e - sym, rules=family_rules()).is_zero()


@pytest.mark.trivial
def test_divergence_errors():
    """[TRIVIAL] covariant or missing slot."""
    with pytest.raises(ExprError):
        divergence(parse("alpha_{a}"), "a")
    with pytest.raises(ExprError):
        divergence(parse("X^{a}"), "b")


# ---------------------------------------------------------------- budget

@pytest.mark.trivial
def test_budget_exceeded_reports_expression():
    """[TRIVIAL] a tiny budget aborts with the offending input."""
    set_budget(20)
    try:
        with pytest.raises(BudgetExceeded) as exc:
            normalize(vary("V", parse("c(W)"), normalize=False), rules=family_rules())
        assert "budget" in str(exc.value)
    finally:
        set_budget(None)
    assert not normalize(vary("V", parse("c(W)"), normalize=False), rules=family_rules()).is_zero()


# ---------------------------------------------------------------- rule files

@pytest.mark.trivial
def test_rule_file_round_trip(tmp_path):
    """[TRIVIAL] a declarative rule line is loaded with its tag."""
    p = tmp_path / "x.rules"
    p.write_text("# comment\nomega_{a' b'} => 0 [Kahler]\n@commute [curvature]\n")
    rs = RuleSet.load(str(p))
    assert [e[0] for e in rs.entries] == ["pattern", "builtin"]
    assert rs.entries[0][1].tag == "Kahler"


@pytest.mark.trivial
def test_rule_file_errors(tmp_path):
    """[TRIVIAL] malformed rule lines are rejected."""
    with pytest.raises(ExprError):
        RuleSet.from_text("omega_{a b} 0")
    with pytest.raises(ExprError):
        RuleSet.from_text("g_{a b} + g_{b a} => 0")


# ---------------------------------------------------------------- corpus properties

CORPUS = [
    "g_{a u} gInv^{u b}", "rho_{a b} - 1/2 R_{a b u v} omegaInv^{u v}",
    "nabla_{a} nabla_{b} nabla_{c} f", "nabla_{a} nabla_{b} X^{c}",
    "X^{u} R_{u a b}^{v} alpha_{v}", "nabla_{u} nabla_{v} Gt(V)^{u v}",
    "c(V)", "G(V)^{a u} nabla_{u} G(W)^{b c}", "Theta(V,W)^{a b}", "theta(V,W)",
    "nabla_{a''} F(V')", "Gamma3(V,W)^{a b c} - Gamma3(W,V)^{a b c}",
    "nabla_{a} nabla_{b} r_{c d}", "J^{u}_{a} J^{v}_{u} alpha_{v}",
]


def _shuffled(rules, seed):
    rng = random.Random(seed)
    pats = [i for i, e in enumerate(rules.entries) if e[0] == "pattern"]
    perm = pats[:]
    rng.shuffle(perm)
    entries = list(rules.entries)
    for i, j in zip(pats, perm):
        entries[i] = rules.entries[j]
    return RuleSet(entries, dict(rules.active))


@pytest.mark.derived
@pytest.mark.parametrize("seed", [1, 2])
def test_confluence_random_rule_order(seed):
    """[DERIVED] two random orders of the pattern rules give the same normal forms."""
    base = family_rules()
    alt = _shuffled(base, seed)
    for text in CORPUS:
        e = parse(text)
        assert normalize(e, rules=base) == normalize(e, rules=alt), text


@pytest.mark.trivial
def test_default_rules_loaded():
    """[TRIVIAL] the shipped kahler.rules parses."""
    assert any(e[0] == "pattern" for e in default_rules().entries)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(CORPUS), st.sampled_from(["p", "q", "w"]))
def test_soundness_alpha_variant(text, new):
    """e - (dummy-renamed e) normalizes to zero."""
    e = parse(text)
    renamed = parse(text.replace("{u", "{" + new).replace(" u}", " " + new + "}").replace(" u ", " " + new + " "))
    assert normalize(e - renamed, rules=family_rules()).is_zero()


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([t for t in CORPUS if not nf(t, family_rules()).is_zero()]),
       st.sampled_from(["2", "-1", "1/2", "i", "k"]))
def test_soundness_perturbed(text, c):
    """e - c e with c != 1 does not normalize to zero."""
    e = parse(text)
    assert not normalize(e - e.scale(parse(c).terms[()]), rules=family_rules()).is_zero()
