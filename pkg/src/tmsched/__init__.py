"""Round-synchronous simulation of transactional-memory schedulers under adversarial transaction generation."""

from .model import QUEUE_BASED, QUEUE_FREE, InvalidInput, SystemConfig, Transaction, TxType, collides, conflict_free, weight

__all__ = [
    "QUEUE_BASED",
    "QUEUE_FREE",
    "InvalidInput",
    "SystemConfig",
    "Transaction",
    "TxType",
    "collides",
    "conflict_free",
    "weight",
]
