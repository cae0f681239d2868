import pytest

from govimpact.fixture import build_fixture
from govimpact.pipeline import load_config, run_all


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    return build_fixture(tmp_path_factory.mktemp("fixture"))


@pytest.fixture(scope="session")
def fixture_run(fixture_paths, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_all(load_config(fixture_paths["config"], {"out": str(out)}))


_ACCEPTANCE: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
