"""Deterministic seed derivation for stochastic stages.

One master seed per run; every stage/replicate derives its own stream by
stable hashing, so reruns are byte-identical and replicates are independent
regardless of execution order.
"""

import hashlib

import numpy as np


def child_seed(master: int, stage: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{master}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def child_rng(master: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, stage, index))
