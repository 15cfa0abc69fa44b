from .config import FieldConfig
from .params import Field4DParams, init_params, leaves, set_leaves, assert_finite
from .query import (
    FieldSample,
    SpaceTimePoint,
    NeuralField,
    plane_feature,
    hash_feature,
    query_field,
    query_batch,
    sdf_batch,
)
from .checkpoint import read_arrays, write_arrays, save_params, load_params

__all__ = [
    "FieldConfig",
    "Field4DParams",
    "init_params",
    "leaves",
    "set_leaves",
    "assert_finite",
    "FieldSample",
    "SpaceTimePoint",
    "NeuralField",
    "plane_feature",
    "hash_feature",
    "query_field",
    "query_batch",
    "sdf_batch",
    "read_arrays",
    "write_arrays",
    "save_params",
    "load_params",
]
