import numpy as np
import pytest

from cocyclelab.discretization import DelayParams, ParabolicParams, SampledFunction


def delay_params(lam=1.0, b=1, tau=1.0, rho=1.0, n_grid=16, scheme="upwind2"):
    return DelayParams(lam, b, tau, SampledFunction.constant(rho, -tau, 0.0), n_grid, scheme)


def parabolic_params(alpha=1.0, beta=2.0, rho=1.0, n_modes=8):
    return ParabolicParams(alpha, beta, SampledFunction.constant(rho, 0.0, 1.0), n_modes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CONFIG_DIR = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"


def load_config(name, **overrides):
    """Reference config with ``section__key=value`` overrides."""
    import yaml

    from cocyclelab.config import config_from_dict

    raw = yaml.safe_load((CONFIG_DIR / f"{name}.yaml").read_text())
    for key, value in overrides.items():
        section, field = key.split("__")
        raw.setdefault(section, {})[field] = value
    return config_from_dict(raw)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def log(number, name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} :: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
