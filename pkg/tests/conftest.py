import numpy as np
import pytest

from spiketrack.backbone import BackboneConfig
from spiketrack.model import SpikeTrack, init_model

TINY = BackboneConfig(depths=(1, 1, 1, 1), channels=(4, 4, 8, 8), template_timesteps=2)


@pytest.fixture(scope="session")
def tiny_model():
    return SpikeTrack(TINY, init_model(TINY, np.random.default_rng(0)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
