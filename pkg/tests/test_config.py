import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvlse.config import ExperimentConfig, build_model, validate_config
from mvlse.errors import ConfigError

BASE = {"theta0": [1.0, 0.5], "epsilon_list": [0.1, 0.05], "n_scale": 10}


def problems(raw):
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    return info.value.problems


class TestValidate:
    def test_defaults(self):
        cfg = validate_config(BASE)
        assert cfg.theta_box == ((0.0, 2.0), (0.0, 2.0))
        assert cfg.measure_mode == "ensemble"

    def test_epsilon_range(self):
        msgs = problems({**BASE, "epsilon_list": [1.5]})
        assert any("0 < epsilon < 1" in m for m in msgs)

    def test_theta0_on_edge(self):
        msgs = problems({**BASE, "theta0": [0.0, 0.5]})
        assert any("strictly inside" in m for m in msgs)

    def test_grid_counts(self):
        assert any("n >= 1" in m for m in problems({**BASE, "n_scale": None, "n_list": [0]}))
        assert any("whole number" in m for m in problems({**BASE, "n_scale": None, "n_list": [50 + 1]}))

    def test_unknown_model(self):
        msgs = problems({**BASE, "model": {"name": "heston"}})
        assert any("unknown model 'heston'" in m for m in msgs)

    def test_unknown_b0(self):
        assert any("model.b0" in m for m in problems({**BASE, "model": {"name": "example", "b0": "tanh"}}))

    def test_errors_are_aggregated(self):
        msgs = problems({"theta0": [0.0, 3.0], "epsilon_list": [0.0, 2.0], "n_scale": 10, "typo": 1})
        assert len(msgs) == 4
        assert "unknown field 'typo'" in msgs

    def test_missing_required(self):
        assert any("theta0" in m for m in problems({"epsilon_list": [0.1], "n_scale": 1}))

    def test_exactly_one_grid_rule(self):
        assert any("exactly one" in m for m in problems({**BASE, "delta": 0.01}))

    def test_json_syntax_error_has_line(self):
        with pytest.raises(ConfigError) as info:
            validate_config('{\n "theta0": [1, 0.5],\n "epsilon_list": [0.1,]\n}')
        assert "line 3" in str(info.value)

    def test_custom_not_buildable(self):
        cfg = validate_config({**BASE, "model": {"name": "custom"}})
        with pytest.raises(ConfigError):
            build_model(cfg)


class TestCells:
    def test_matched_n(self):
        cfg = validate_config({**BASE, "epsilon_list": [0.2, 0.1, 0.05, 0.02]})
        assert [c.n for c in cfg.cells()] == [52, 100, 200, 500]

    def test_product_cells(self):
        cfg = validate_config({**BASE, "n_scale": None, "n_list": [20, 40]})
        cells = cfg.cells()
        assert [(c.epsilon_index, c.n_index) for c in cells] == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_delta_rule(self):
        cfg = validate_config({**BASE, "n_scale": None, "delta": 0.01})
        assert {c.n for c in cfg.cells()} == {100}


eps_lists = st.lists(st.floats(0.001, 0.999), min_size=1, max_size=4)


@given(
    eps=eps_lists,
    t1=st.floats(0.01, 1.99),
    t2=st.floats(0.01, 1.99),
    reps=st.integers(1, 50),
    seed=st.integers(0, 2**64 - 1),
    mode=st.sampled_from(["ensemble", "dirac"]),
    b0=st.sampled_from(["sincos", "zero", "state"]),
)
def test_round_trip(eps, t1, t2, reps, seed, mode, b0):
    raw = {
        "theta0": [t1, t2],
        "epsilon_list": eps,
        "n_list": [20, 40],
        "n_replications": reps,
        "rng_seed": seed,
        "measure_mode": mode,
        "model": {"name": "example", "b0": b0},
    }
    cfg = validate_config(raw)
    again = validate_config(cfg.to_json())
    assert again == cfg
    assert json.loads(again.to_json()) == json.loads(cfg.to_json())


def test_replace_revalidates():
    cfg = validate_config(BASE)
    assert cfg.replace(n_replications=3).n_replications == 3
    with pytest.raises(ConfigError):
        cfg.replace(n_replications=0)


def test_dataclass_fields_documented():
    # every field accepted by the parser is a dataclass field and vice versa
    cfg = validate_config(BASE)
    assert set(cfg.to_dict()) == set(ExperimentConfig.__dataclass_fields__)
