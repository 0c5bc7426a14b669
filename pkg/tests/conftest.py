import numpy as np
import pytest

from iabsim.config import ArchMode, ScenarioConfig
from iabsim.harness import (STREAM_DONOR, STREAM_DROPS, STREAM_LOS, STREAM_O2I,
                            STREAM_SHADOW, build_radio_environment, substream)
from iabsim.scenario import build_deployment
from iabsim.topology import attach_all


def build_run(cfg: ScenarioConfig, run: int = 0, vmr_pos=None):
    """Deployment + frozen radio draws + attachment tree for one run."""
    rng_drops = substream(cfg.base_seed, run, STREAM_DROPS)
    rng_donor = None
    if cfg.arch_mode is ArchMode.THREE_GPP:
        rng_donor = substream(cfg.base_seed, run, STREAM_DONOR)
    dep = build_deployment(cfg, rng_drops, rng_donor)
    env = build_radio_environment(dep,
                                  substream(cfg.base_seed, run, STREAM_LOS),
                                  substream(cfg.base_seed, run, STREAM_SHADOW),
                                  substream(cfg.base_seed, run, STREAM_O2I),
                                  vmr_pos)
    graph = attach_all(dep, env.snr_bs_to_mt, env.snr_bs_to_ue)
    return dep, env, graph


@pytest.fixture(scope="session")
def default_run():
    return build_run(ScenarioConfig(base_seed=11))


@pytest.fixture(scope="session")
def threegpp_run():
    return build_run(ScenarioConfig(base_seed=11, arch_mode=ArchMode.THREE_GPP, num_donors=3))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
