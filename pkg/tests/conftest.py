import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edmdlab.circle_map import DensitySpec, doubling_map, fig1_map, invariant_density  # noqa: E402


@pytest.fixture(scope="session")
def fmap():
    return fig1_map()


@pytest.fixture(scope="session")
def dmap():
    return doubling_map()


@pytest.fixture(scope="session")
def physical(fmap):
    return invariant_density(fmap, 128)


@pytest.fixture(scope="session")
def cos_density():
    return DensitySpec.from_trig(cos=(0.5,))


@pytest.fixture(scope="session")
def corpus(physical, cos_density):
    """The three test densities: uniform, 1 + 0.5 cos x and the physical one."""
    return {"uniform": DensitySpec.uniform(), "cos": cos_density, "physical": physical}


@pytest.fixture(scope="session")
def oracle(fmap, physical):
    from edmdlab.spectral_compare import oracle_resonances

    return oracle_resonances(fmap, physical, K_oracle=256, modulus_floor=1e-3)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Callable recording one pass/fail line per acceptance criterion."""

    def record(number, ok, text):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
