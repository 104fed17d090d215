"""Deterministic seeding helpers.

Every training entry point calls :func:`seed_all` so that a fixed (data,
config, seed) triple reproduces checkpoints bit for bit.  Thread count is
pinned to one because multi-threaded reductions are the only source of
run-to-run float drift on CPU.
"""

import random

import numpy as np
import torch

_THREADS_PINNED = False


def pin_threads() -> None:
    global _THREADS_PINNED
    if not _THREADS_PINNED:
        torch.set_num_threads(1)
        _THREADS_PINNED = True


def seed_all(seed: int) -> torch.Generator:
    """Seed python/numpy/torch RNGs and return a dedicated torch generator."""
    pin_threads()
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
