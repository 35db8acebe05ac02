import numpy as np
import pytest

from srnah.dataset import SynthConfig, build_dataset, load_dataset

# 50 samples: ten plates, five lowest modes each
TINY = dict(plates={"rectangle": 4, "superellipse": 3, "violinoid": 3}, seed=3, max_modes=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny") / "ds"
    build_dataset(SynthConfig(**TINY), out)
    return out


@pytest.fixture(scope="session")
def tiny(tiny_dir):
    return load_dataset(tiny_dir)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import lines

    out = lines()
    if out:
        terminalreporter.section("acceptance criteria")
        for line in out:
            terminalreporter.write_line(line)
