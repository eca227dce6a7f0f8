import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ssimm", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ssimm"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    """32 x 32 crop of the bundled texture, 6 kinds x 3 levels + original."""
    from ssimm import distortion_lab as dl
    from ssimm.image_blocks import GrayImage

    base = dl.bundled_image().as_array()[:32, :32]
    items = dl.synth_dataset(GrayImage.from_array(base), [100.0, 300.0, 600.0], seed=3)
    return items


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(num, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  [{num:2d}] {title}: {detail}"
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
