import pytest

ACCEPTANCE_IDS = tuple(range(1, 11))


@pytest.fixture(scope="session")
def acceptance_log(request):
    """``log(n, ok, detail)`` records one acceptance verdict for the terminal summary."""
    results = request.config.stash.setdefault(_KEY, {})

    def log(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[n] = line
        print(line)

    return log


_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_KEY, None)
    if results is None:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in ACCEPTANCE_IDS:
        terminalreporter.write_line(results.get(n, f"criterion {n:2d}: FAIL  (no verdict: test errored or was not run)"))
