"""Shared fixtures: the canonical linear-ramp process and its exact
reference objects, computed once per session."""
import numpy as np
import pytest

from workqed.evolve import PropagationConfig
from workqed.interferometry import SystemSpec, branch_propagator
from workqed.model import ModelParams, h_system
from workqed.qop import Operator
from workqed.workstats import tmp_oracle

RAMP_DT = 5e-4


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def shared_cache():
    return {}


@pytest.fixture(scope="session")
def ramp_unitary(params, shared_cache):
    system = SystemSpec(params, ())
    cfg = PropagationConfig(dt=RAMP_DT)
    return Operator(system.layout,
                    branch_propagator(system, params.ramp(), cfg, shared_cache))


@pytest.fixture(scope="session")
def ramp_unitary_reversed(params, shared_cache):
    system = SystemSpec(params, ())
    cfg = PropagationConfig(dt=RAMP_DT)
    return Operator(system.layout,
                    branch_propagator(system, params.ramp_reversed(), cfg,
                                      shared_cache))


@pytest.fixture(scope="session")
def endpoint_hamiltonians(params):
    return (h_system(params.lambda0, params),
            h_system(params.lambda_tau, params))


@pytest.fixture(scope="session")
def forward_oracle(params, ramp_unitary, endpoint_hamiltonians):
    h0, ht = endpoint_hamiltonians
    return tmp_oracle(h0, ht, ramp_unitary, params.beta)
