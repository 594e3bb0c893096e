import math
import sys

import numpy as np
import pytest

from kbsim.model import ArrivalSchedule, Context, ProblemInstance, ResourceSpec


def make_instance(revenues=(1.0, 1.5), capacities=(250.0, 250.0), thetas=None,
                  features=((1.0, 0.0), (0.0, 1.0)), rates=(300.0, 200.0), horizon=500,
                  true_theta=0, reject=True):
    if thetas is None:
        thetas = [((math.log(9.0), 0.0),)] * len(revenues)
    resources = tuple(ResourceSpec(r, c, th, true_theta) for r, c, th in zip(revenues, capacities, thetas))
    contexts = tuple(Context(l, f) for l, f in enumerate(features))
    return ProblemInstance(resources, contexts, horizon, rates, reject)


def iid_schedule(probs=(0.6, 0.4), horizon=500):
    return ArrivalSchedule(np.tile(probs, (horizon, 1)))


@pytest.fixture
def iid_instance():
    return make_instance()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
