import numpy as np
import pytest

from intrinsics4d.field import FieldConfig, init_params, NeuralField


@pytest.fixture
def small_config():
    return FieldConfig(
        plane_res=24,
        d_low=6,
        keyframes=4,
        levels=3,
        table_log2=11,
        d_level=2,
        hash_base_res=6,
        hash_growth=1.6,
        mlp_hidden=32,
    )


@pytest.fixture
def small_params(small_config):
    return init_params(small_config, seed=7)


@pytest.fixture
def small_field(small_params):
    return NeuralField(small_params)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
