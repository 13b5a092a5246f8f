import json
from pathlib import Path

import numpy as np
import pytest

from gscioc.errors import DimensionMismatch, InputError, MissingCoefficient, NegativeParameter, SchemaError
from gscioc.scenarios import (
    BUILTIN,
    ScenarioConfig,
    ZEBRA_DEFAULTS,
    build_group_goal_scenario,
    build_zebra_scenario,
    dump_scenario,
    load_scenario,
    resolve_scenario,
)

SHIPPED = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_round_trip(name, tmp_path):
    cfg = BUILTIN[name]()
    path = tmp_path / "s.json"
    dump_scenario(cfg, path)
    back = load_scenario(path)
    assert back.to_dict() == cfg.to_dict()
    np.testing.assert_array_equal(back.theta, cfg.theta)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_shipped_files_match_builders(name):
    shipped = json.loads((SHIPPED / f"{name}.json").read_text())
    assert shipped == BUILTIN[name]().to_dict()


def test_group_goal_defaults():
    cfg = build_group_goal_scenario()
    assert cfg.T == 14 and cfg.cooperative
    assert cfg.x0.x_i.tolist() == [20.0, 20.0] and cfg.x0.x_j.tolist() == [20.0, -20.0]
    het = build_group_goal_scenario((0.4, 1.5, 2.5), (0.2, 1.0, 3.0))
    assert het.theta.tolist() == [0.4, 1.5, 2.5, 0.2, 1.0, 3.0] and not het.cooperative


def test_group_goal_decoupled_has_no_cross_hessian():
    from gscioc.iterative import standing_still
    from gscioc.rewards import taylor_expand

    cfg = build_group_goal_scenario((0.2, 1.0, 0.0))
    e = taylor_expand(cfg.reward("i"), standing_still(cfg.dynamics, cfg.x0, cfg.T))
    assert not e.block("ui", "uj").any() and not e.block("xi", "xj").any()


def test_group_goal_validation():
    with pytest.raises(NegativeParameter):
        build_group_goal_scenario((0.2, -1.0, 3.0))
    with pytest.raises(DimensionMismatch):
        build_group_goal_scenario((0.2, 1.0))


def test_zebra_flags():
    plain = build_zebra_scenario(False)
    social = build_zebra_scenario(True)
    assert all(t.term.to_dict().get("of") == "i" for t in plain.terms_i)
    assert any(t.term.to_dict().get("of") == "j" for t in social.terms_i)
    assert plain.x0.x_i.tolist() == [-6.0] and plain.x0.x_j.tolist() == [6.0] and plain.T == 12


def test_zebra_missing_coefficient():
    coeffs = dict(ZEBRA_DEFAULTS)
    del coeffs["interaction"]
    with pytest.raises(MissingCoefficient):
        build_zebra_scenario(False, coeffs)
    coeffs = dict(ZEBRA_DEFAULTS)
    del coeffs["social_goal"]
    build_zebra_scenario(False, coeffs)
    with pytest.raises(MissingCoefficient):
        build_zebra_scenario(True, coeffs)


def test_schema_errors(tmp_path):
    data = build_group_goal_scenario().to_dict()
    for mutate in (
        lambda d: d.update(schema_version=2),
        lambda d: d.pop("T"),
        lambda d: d["agents"].pop(),
        lambda d: d["agents"][0]["reward_terms"][0].update(type="bogus"),
    ):
        d = json.loads(json.dumps(data))
        mutate(d)
        with pytest.raises(InputError):
            ScenarioConfig.from_dict(d)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError):
        load_scenario(bad)


def test_resolve_by_name_and_path(tmp_path):
    assert resolve_scenario("zebra").name == "zebra"
    assert resolve_scenario(SHIPPED / "group_goal.json").name == "group_goal"


def test_with_theta():
    cfg = build_group_goal_scenario()
    assert cfg.with_theta([1, 2, 3]).theta.tolist() == [1, 2, 3]
    with pytest.raises(DimensionMismatch):
        cfg.with_theta([1, 2])
