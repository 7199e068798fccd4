"""Regenerate the pinned regression values (run only on purpose)."""
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
from conftest import linear_model  # noqa: E402

from mvlse.model import build_example_model
from mvlse.segment_path import Grid
from mvlse.simulator import SimConfig, simulate_observation

HERE = os.path.dirname(__file__)


def golden_cases():
    g = Grid.from_horizon(1.0, 0.25, 20)
    lin = simulate_observation(linear_model(xi_value=0.5), SimConfig(0.1, g, 4, 20240917, 8), [1.0])
    ex = simulate_observation(build_example_model("sincos"), SimConfig(0.05, g, 16, 20240917, 8), [1.0, 0.5])
    return {"linear_f8": lin.path[:, 0].tolist(), "example_f8": ex.path[:, 0].tolist()}


if __name__ == "__main__":
    with open(os.path.join(HERE, "observations.json"), "w") as fh:
        json.dump(golden_cases(), fh, indent=1)
