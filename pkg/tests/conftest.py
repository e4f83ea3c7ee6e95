import numpy as np
import pytest

from ltnid.simulate import GenerationConfig, add_noise, generate_synthetic


def toy_batch(seed: int, n: int = 2, m: int = 1, T_d: int = 10, eps_bar: float = 0.0):
    """Small random batch from a model drawn on the default weight ranges.

    Inputs are scaled up so both saturation sides occur at this size.
    """
    cfg = GenerationConfig(n=n, m=m, T_d=T_d, rng_seed=seed, input_range=(0.0, 6.0),
                           input_weight_range=(-0.3, 0.6), s_D_star=1.0)
    model, batch = generate_synthetic(cfg)
    if eps_bar > 0:
        batch = add_noise(batch, eps_bar, (seed, 99))
    return model, batch


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240601))


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
