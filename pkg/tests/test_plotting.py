import re

import numpy as np
import pytest

from gscioc.errors import InputError
from gscioc.experiments import demonstrations
from gscioc.plotting import PALETTE, Series, batch_series, plot_batches, render_svg

from oracles import group_goal_1d


@pytest.fixture(scope="module")
def batch():
    return demonstrations(group_goal_1d(T=4), 30, 2)


def test_series_per_agent(batch):
    acts = batch_series(batch, label="demo")
    assert [s.label for s in acts] == ["demo i", "demo j"]
    np.testing.assert_array_equal(acts[0].t, [1, 2, 3, 4])
    np.testing.assert_allclose(acts[0].mean, batch.trajectories.actions_i[..., 0].mean(0))
    states = batch_series(batch, "states")
    assert states[1].t[0] == 0 and states[1].std[0] == 0.0


def test_series_validation(batch):
    with pytest.raises(InputError):
        batch_series(batch, "rewards")
    with pytest.raises(InputError):
        batch_series(batch, component=3)


def test_svg_is_deterministic_and_well_formed(batch):
    a = plot_batches([batch, batch], labels=["a", "b"], title="x < y")
    assert a == plot_batches([batch, batch], labels=["a", "b"], title="x < y")
    assert a.startswith("<svg") and a.rstrip().endswith("</svg>")
    assert "x &lt; y" in a
    assert a.count("<polyline") >= 4
    assert PALETTE[0] in a and PALETTE[3] in a


def test_render_single_point_and_flat_data():
    s = Series("flat", np.array([1.0]), np.array([2.0]), np.array([0.0]))
    svg = render_svg([s])
    assert not re.search(r"nan|inf", svg)


def test_empty_inputs_rejected(tmp_path):
    with pytest.raises(InputError):
        render_svg([])
    with pytest.raises(InputError):
        plot_batches([], path=tmp_path / "p.svg")
    assert not (tmp_path / "p.svg").exists()
