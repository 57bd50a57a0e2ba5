import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from copfama.geometry import build_geometry
from copfama.channel import RichScattering
from copfama.simulate import SnapshotSimulator

torch.set_num_threads(max(torch.get_num_threads(), 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geo8():
    return build_geometry(1, num_ports=8, aperture=1.0)


@pytest.fixture
def geo16():
    return build_geometry(1, num_ports=16, aperture=2.0)


@pytest.fixture
def sim8(geo8):
    return SnapshotSimulator(RichScattering(geo8), num_users=4, signal_power=1.0, snr_db=10.0)
