import pytest

from purcell_sim import metrics, model, solvers

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture(scope="session")
def fig1():
    return model.preset("fig1")


@pytest.fixture(scope="session")
def fig1_steady(fig1):
    return solvers.steady_state(model.build_liouvillian(fig1)).rho_ss


@pytest.fixture(scope="session")
def sym():
    return metrics.TargetState.symmetric()


@pytest.fixture(scope="session")
def fig2a_result():
    from purcell_sim import sweep

    return sweep.run_sweep(sweep.load_plan_preset("fig2a"), jobs=1)
