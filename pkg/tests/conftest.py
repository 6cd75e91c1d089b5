import pytest

ACCEPTANCE: dict = {}


class Recorder:
    def __call__(self, n: int, ok: bool, detail: str):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
