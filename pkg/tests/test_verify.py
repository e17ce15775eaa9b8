"""Identity registry, runner, audit and negative controls."""
import json
from importlib import resources

import jsonschema
import pytest

from hitchin_cas import verify
from hitchin_cas.verify import GATED, REGISTRY, Env, check, check_all, curvature_assembly, mutation_sweep

CLOSING = [t for t in GATED if t != "P12"]


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "ms"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


@pytest.fixture(scope="module")
def gated_report():
    return check_all("gated")


@pytest.mark.trivial
def test_registry_contents():
    """[TRIVIAL] every listed target is registered with its gating."""
    ids = {"EQ16", "L7", "L8", "P3", "P14", "P22", "P24", "P8", "P11", "P12", "T4", "T1", "T2",
           "EQ34", "EQ10", "EQ45"}
    assert set(REGISTRY) == ids
    assert REGISTRY["EQ45"].gating == "informational"
    assert len(GATED) == 15


@pytest.mark.paper
@pytest.mark.parametrize("tid", CLOSING)
def test_target_closes(gated_report, tid):
    """[PAPER] each identity closes to zero with its axiom tags."""
    rec = next(r for r in gated_report["targets"] if r["id"] == tid)
    assert rec["status"] == "closed", rec["residual"]
    assert rec["audit"]["ok"], rec["audit"]


@pytest.mark.paper
def test_L7_all_symbols(gated_report):
    """[PAPER] all three symbol slots of [nabla^2_B, nabla_X] match the table."""
    rec = next(r for r in gated_report["targets"] if r["id"] == "L7")
    assert len(rec["components"]) >= 3
    assert all(c["status"] == "closed" for c in rec["components"])


@pytest.mark.paper
def test_P3_top_symbol_and_audit(gated_report):
    """[PAPER] P3 closes with sigma_3 = 0 and fires rigidity and Gamma-symmetry."""
    rec = next(r for r in gated_report["targets"] if r["id"] == "P3")
    assert rec["status"] == "closed"
    s3 = next(c for c in rec["components"] if c["name"].startswith("sigma3"))
    assert s3["residual"] == "0"
    assert {"rigidity", "Gamma-symmetry"} <= set(rec["axioms_fired"])


@pytest.mark.paper
def test_P3_proof_variant_does_not_close(gated_report):
    """[PAPER] the statement's -4ik delta Theta closes; the proof's -4i variant leaves a residual."""
    rec = next(r for r in gated_report["targets"] if r["id"] == "P3")
    alt = [c for c in rec["components"] if "alternative" in c]
    assert [c["name"] for c in alt] == ["sigma1"]
    assert alt[0]["status"] == "closed"
    assert alt[0]["alternative"] == {"flag": "k-factor", "status": "residual"}


@pytest.mark.paper
def test_P12_sigma0_statement_residual():
    """[PAPER] P12: sigma_3..sigma_1 close; the stated sigma_0 is off by a factor 4, the proof's form closes."""
    rec = check("P12")
    by = {c["name"]: c for c in rec["components"]}
    assert all(by[s]["status"] == "closed" for s in ("sigma3", "sigma2", "sigma1"))
    assert by["sigma0"]["status"] == "residual"
    assert by["sigma0 via b W''[F]"]["status"] == "closed"
    assert rec["status"] == "residual" and rec["flags"]


@pytest.mark.paper
def test_audit_forbidden_tags(gated_report):
    """[PAPER] EQ16, L7 and L8 fire neither rigidity nor Gamma-symmetry."""
    for rec in gated_report["targets"]:
        if rec["id"] in ("EQ16", "L7", "L8"):
            assert not {"rigidity", "Gamma-symmetry"} & set(rec["axioms_fired"])


@pytest.mark.paper
def test_audit_detects_missing_axiom():
    """[PAPER] switching rigidity off breaks P14 and is reported, not closed."""
    from hitchin_cas.family import family_rules
    rep = check_all(["P14"], rules_override=family_rules().with_tags(rigidity=False))
    assert rep["targets"][0]["status"] != "closed"
    assert not rep["ok"]


@pytest.mark.derived
@pytest.mark.xfail(strict=True, reason="P12 sigma_0: the stated normalization is a factor 4 off")
def test_check_all_gated_all_closed(gated_report):
    """[DERIVED] a correct build closes all 15 gated targets."""
    assert (gated_report["closed"], gated_report["residual"]) == (15, 0)
    assert gated_report["ok"]


@pytest.mark.trivial
def test_check_all_empty():
    """[TRIVIAL] an empty filter gives an empty report."""
    rep = check_all(set())
    assert rep["targets"] == [] and rep["ok"]


@pytest.mark.paper
def test_informational_does_not_gate():
    """[PAPER] EQ45 is reported but never fails the run."""
    rep = check_all("informational")
    assert [r["id"] for r in rep["targets"]] == ["EQ45"]
    assert rep["failed_gated"] == [] and rep["ok"]


@pytest.mark.trivial
def test_unknown_target():
    """[TRIVIAL] unregistered ids are rejected."""
    with pytest.raises(KeyError):
        check("NOPE")


@pytest.mark.trivial
@pytest.mark.parametrize("tid", GATED)
def test_mutation_is_residual(tid):
    """[TRIVIAL] flipping one RHS sign never closes."""
    rec = check(tid, mutate=True)
    assert rec["status"] == "residual"
    assert rec["mutated"]


@pytest.mark.trivial
def test_mutation_sweep_sample():
    """[TRIVIAL] the first mutants of a few targets are all caught."""
    out = mutation_sweep(["EQ16", "L7", "P24"])
    assert all(s == "residual" for v in out.values() for s in v)


@pytest.mark.paper
def test_hitchin_02_curvature_vanishes():
    """[PAPER] F^{0,2} of the Hitchin connection is zero."""
    op, _ = curvature_assembly(Env(), "hitchin", "0,2")
    assert op.is_zero()


@pytest.mark.trivial
def test_determinism():
    """[TRIVIAL] repeated runs agree up to timing."""
    a = check_all(["L7", "P3", "P24"])
    b = check_all(["L7", "P3", "P24"])
    assert _strip_timing(a) == _strip_timing(b)
    assert _strip_timing(check("P3")) == _strip_timing(check("P3"))


@pytest.mark.trivial
def test_report_schema_and_markdown(gated_report):
    """[TRIVIAL] the report validates against the shipped schema."""
    schema = json.loads(resources.files("hitchin_cas").joinpath("data/report.schema.json").read_text())
    jsonschema.validate(json.loads(verify.to_json(gated_report)), schema)
    md = verify.to_markdown(gated_report)
    assert md.count("\n| ") == len(gated_report["targets"])
