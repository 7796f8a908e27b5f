"""Concurrent in-memory B-tree with unordered leaves and elidable locking."""

from .core import BTTree, Config, InvalidKeyError, OpResult, create
from .sync import ElidableLock, SyncPolicy

__all__ = ["BTTree", "Config", "ElidableLock", "InvalidKeyError", "OpResult", "SyncPolicy", "create"]
__version__ = "0.1.0"
