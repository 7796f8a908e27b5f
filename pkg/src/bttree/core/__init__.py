from .balance import merge_policy, merge_threshold, route_child, split_point
from .leaf import OpResult, leaf_insert, leaf_remove, leaf_search, new_leaf_row
from .tree import BTTree, Config, InvalidKeyError, create

__all__ = [
    "BTTree",
    "Config",
    "InvalidKeyError",
    "OpResult",
    "create",
    "leaf_insert",
    "leaf_remove",
    "leaf_search",
    "merge_policy",
    "merge_threshold",
    "new_leaf_row",
    "route_child",
    "split_point",
]
