import pytest


def pytest_configure(config):
    for tag, text in (("paper", "oracle is a published displayed result"),
                      ("derived", "oracle is an independent derivation or computation"),
                      ("trivial", "oracle is a definitional or structural fact"),
                      ("slow", "runs for more than a few seconds")):
        config.addinivalue_line("markers", f"{tag}: {text}")


@pytest.fixture(scope="session")
def family():
    from hitchin_cas.family import family_rules
    return family_rules()


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """record(n, ok, detail): one summary line per acceptance criterion."""
    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
