"""Closed-form path constructions."""

from .hmap import HSegment, map_h, retarget_first_layer_path
from .lindata import connect_lin_data, path_to_full_rank, unbounded_ray_lin_data
from .pipelines import (
    connect_all_wide,
    connect_wide_first,
    descend_all_wide,
    descend_no_bad_valley,
    unbounded_ray_wide_first,
)
from .rewire import (
    BlockCurve,
    RewireCurve,
    WideLayerWitness,
    bias_rank_boost,
    distinct_rows_nudge,
    equalize_layer,
    equalize_path,
    layer_full_rank_path,
    make_layer_output_full_rank,
    rewire_redundant_columns,
)

__all__ = [
    "BlockCurve",
    "HSegment",
    "RewireCurve",
    "WideLayerWitness",
    "bias_rank_boost",
    "connect_all_wide",
    "connect_lin_data",
    "connect_wide_first",
    "descend_all_wide",
    "descend_no_bad_valley",
    "distinct_rows_nudge",
    "equalize_layer",
    "equalize_path",
    "layer_full_rank_path",
    "make_layer_output_full_rank",
    "map_h",
    "path_to_full_rank",
    "retarget_first_layer_path",
    "rewire_redundant_columns",
    "unbounded_ray_lin_data",
    "unbounded_ray_wide_first",
]
