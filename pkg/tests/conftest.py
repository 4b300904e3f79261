"""Shared fixtures: the default problem instance and one solved trajectory.

Session scope keeps the (comparatively) expensive forward solve shared;
tests must treat the trajectory as read-only and re-solve if they need
to corrupt fields.
"""

import pytest

from ac_control import state
from ac_control.config import default_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def setup(cfg):
    return cfg.build_setup()


@pytest.fixture(scope="session")
def opts(cfg):
    return cfg.step_options()


@pytest.fixture(scope="session")
def zero_traj(setup, opts):
    return state.solve_state(setup, setup.zero_control(), opts)
