import pytest

from mshglab.apparent import Strategy, enumerate_moduli, generic_parameters
from mshglab.mshg import MeshSpec, solve_vacuum
from mshglab.rational_core import SphereData


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical study")


@pytest.fixture(scope="session")
def draw1():
    return generic_parameters(1)


@pytest.fixture(scope="session")
def moduli_l1(draw1):
    sphere, delta = draw1
    return enumerate_moduli(sphere, delta, 1, Strategy(seed=1))


@pytest.fixture(scope="session")
def moduli_l2(draw1):
    sphere, delta = draw1
    return enumerate_moduli(sphere, delta, 2, Strategy(seed=1))


SYM_M = (-0.4, -0.4, -0.4)
UNI_A = (1.2, 1.1)
UNI_M = (-0.3, -0.3)


@pytest.fixture(scope="session")
def sym_field():
    return solve_vacuum(SphereData(), SYM_M, 1.0)


@pytest.fixture(scope="session")
def sym_field_fine():
    return solve_vacuum(SphereData(), SYM_M, 1.0, MeshSpec(h=0.05))


@pytest.fixture(scope="session")
def unitary_field():
    return solve_vacuum(SphereData(a1=UNI_A[0], a2=UNI_A[1], regime="unitary"), UNI_M, 1.0)


# ---- acceptance report ------------------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 10


@pytest.fixture
def accept(request):
    """Record a criterion outcome; the lines are printed in the terminal summary."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(key, ok, detail):
        store[key] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, None)
    if store is None:
        return
    terminalreporter.section("acceptance criteria")
    keys = [str(n) for n in range(1, N_CRITERIA + 1)] + sorted(k for k in store if not k.isdigit())
    for key in keys:
        if key not in store:
            if key.isdigit():
                terminalreporter.write_line(f"criterion {key}: FAIL (no result recorded)")
            continue
        ok, detail = store[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}")
