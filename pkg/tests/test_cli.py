"""Command-line interface: exit codes, reports, schemas."""
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from hitchin_cas.cli import main, parse_complex


def _schema(name):
    return json.loads(resources.files("hitchin_cas").joinpath(f"data/{name}").read_text())


@pytest.mark.trivial
def test_parse_complex():
    """[TRIVIAL] RE+IMi and plain reals."""
    assert parse_complex("2+3i") == 2 + 3j
    assert parse_complex("1.5-0.25i") == 1.5 - 0.25j
    assert parse_complex("4") == 4


@pytest.mark.trivial
def test_verify_only_closes(tmp_path, capsys):
    """[TRIVIAL] L7 and L8 close, exit 0, and the report validates."""
    out = tmp_path / "r.json"
    md = tmp_path / "r.md"
    assert main(["verify", "--only", "L7,L8", "--json", str(out), "--markdown", str(md)]) == 0
    rep = json.loads(out.read_text())
    jsonschema.validate(rep, _schema("report.schema.json"))
    assert [t["id"] for t in rep["targets"]] == ["L7", "L8"]
    assert rep["config"]["only"] == "L7,L8"
    assert "| L7 | closed" in md.read_text()


@pytest.mark.trivial
def test_verify_mutate_fails(capsys):
    """[TRIVIAL] the negative control exits 1."""
    assert main(["verify", "--only", "EQ16", "--mutate"]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert rep["targets"][0]["status"] == "residual"


@pytest.mark.trivial
def test_verify_tag_override_fails(capsys):
    """[TRIVIAL] switching rigidity off breaks P14."""
    assert main(["verify", "--only", "P14", "--tags", "rigidity=off"]) == 1


@pytest.mark.trivial
def test_verify_gated_fails_on_p12(capsys):
    """[TRIVIAL] the full gated run exits 1 while P12 sigma_0 stays open."""
    assert main(["verify"]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert rep["failed_gated"] == ["P12"]


@pytest.mark.trivial
def test_verify_informational_ok(capsys):
    """[TRIVIAL] EQ45 alone never fails the run."""
    assert main(["verify", "--only", "informational"]) == 0


@pytest.mark.trivial
@pytest.mark.parametrize("argv", [["verify", "--bogus"], ["verify", "--only", "NOPE"], [],
                                  ["torus", "--t", "abc"], ["verify", "--tags", "rigidity=maybe"]])
def test_usage_errors(argv, capsys):
    """[TRIVIAL] usage errors exit 2."""
    assert main(argv) == 2


@pytest.mark.trivial
def test_canon_stdin(monkeypatch, capsys):
    """[TRIVIAL] canon prints one normal form per line."""
    import io
    monkeypatch.setattr(sys, "stdin", io.StringIO("omega_{a b} + omega_{b a}\n# skip\ng_{a u} gInv^{u b}\n"))
    assert main(["canon", "-"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "0" and len(lines) == 2


@pytest.mark.trivial
def test_canon_family_rules(tmp_path, capsys):
    """[TRIVIAL] --rules family activates rigidity; JSON output carries the inputs."""
    f = tmp_path / "e.txt"
    f.write_text("nabla_{a''} G(V)^{b c}\n")
    out = tmp_path / "c.json"
    assert main(["canon", str(f), "--rules", "family", "--json", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["expressions"][0]["normal_form"] == "0"


@pytest.mark.trivial
def test_canon_parse_error(tmp_path, capsys):
    """[TRIVIAL] an engine error exits 3."""
    f = tmp_path / "bad.txt"
    f.write_text("foo_{a}\n")
    assert main(["canon", str(f)]) == 3
    assert "unknown symbol" in capsys.readouterr().err


@pytest.mark.trivial
def test_budget_error_exit(capsys):
    """[TRIVIAL] a tiny budget is an engine error, not a closure."""
    assert main(["--budget", "10", "verify", "--only", "P24"]) == 3


@pytest.mark.trivial
def test_torus_json(tmp_path, capsys):
    """[TRIVIAL] torus --json validates and passes at the defaults."""
    out = tmp_path / "t.json"
    csvp = tmp_path / "t.csv"
    assert main(["torus", "--k", "1", "--json", str(out), "--csv", str(csvp), "--scaling"]) == 0
    rec = json.loads(out.read_text())
    jsonschema.validate(rec, _schema("torus.schema.json"))
    assert rec["ok"] and rec["basis_dimension"] == 1
    assert len(csvp.read_text().strip().splitlines()) == 4


@pytest.mark.trivial
def test_torus_invalid_model(capsys):
    """[TRIVIAL] Re t != k exits 3."""
    assert main(["torus", "--k", "2", "--t", "1+1i"]) == 3


@pytest.mark.trivial
def test_torus_tolerance_failure(capsys):
    """[TRIVIAL] an impossible tolerance exits 1."""
    assert main(["torus", "--tol-defect", "1e-30"]) == 1


@pytest.mark.trivial
def test_module_entry_point():
    """[TRIVIAL] python -m hitchin_cas works."""
    p = subprocess.run([sys.executable, "-m", "hitchin_cas", "verify", "--only", "EQ10"],
                       capture_output=True, text=True, timeout=120)
    assert p.returncode == 0
    assert json.loads(p.stdout)["ok"]
