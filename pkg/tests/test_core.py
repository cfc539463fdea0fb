import numpy as np
import pytest

from imrc.core import (DegenerateDirectionError, EvalConfig, GridBoundsError, grid_index, linear_index,
                       normalize, vec3)
from tests.conftest import constant_volume


@pytest.mark.parametrize("idx, expected", [((0, 0, 0), 0), ((1, 0, 0), 1), ((0, 1, 2), 36)])
def test_linear_index_examples(idx, expected):
    assert linear_index(idx, (4, 4, 4)) == expected


@pytest.mark.parametrize("idx", [(4, 0, 0), (0, -1, 0), (0, 0, 9)])
def test_linear_index_out_of_range(idx):
    with pytest.raises(GridBoundsError):
        linear_index(idx, (4, 4, 4))


def test_grid_index_inverts_linear_index():
    res = (3, 5, 2)
    seen = {linear_index(grid_index(i, res), res) for i in range(30)}
    assert seen == set(range(30))
    with pytest.raises(GridBoundsError):
        grid_index(30, res)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize((2, 0, 0)), [1, 0, 0])
    np.testing.assert_allclose(normalize((1, 1, 1)), [0.57735] * 3, atol=1e-5)
    with pytest.raises(DegenerateDirectionError):
        normalize((0, 0, 0))


def test_vec3_rejects_non_finite():
    with pytest.raises(ValueError):
        vec3((np.nan, 0, 0))
    np.testing.assert_array_equal(vec3(1, 2, 3), [1.0, 2.0, 3.0])


def test_eval_config_defaults_and_validation():
    cfg = EvalConfig()
    assert cfg.sh_degree == 2 and cfg.skip_alpha_eps == 1e-7 and cfg.min_confidence_eps == 1e-6
    vol = constant_volume(0.0, n=5, hi=(1.0, 2.0, 4.0))
    assert cfg.resolve_step(vol) == pytest.approx(0.125)
    assert EvalConfig(ray_step=0.3).resolve_step(vol) == 0.3
    with pytest.raises(ValueError):
        EvalConfig(sh_degree=5)
    with pytest.raises(ValueError):
        EvalConfig(ray_step=0.0)
