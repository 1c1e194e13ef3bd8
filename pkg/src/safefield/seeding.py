"""Seed derivation for independent random streams.

A stream seed is the first 8 bytes (little endian) of
``blake2b(f"{master_seed}/{trial}/{purpose}", digest_size=8, person=b"safefield")``.
Purposes used by the simulator: ``graph``, ``attack_selection``,
``attack_signal`` and ``noise:<agent>``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, trial: int, purpose: str) -> int:
    msg = f"{int(master_seed)}/{int(trial)}/{purpose}".encode()
    digest = hashlib.blake2b(msg, digest_size=8, person=b"safefield").digest()
    return int.from_bytes(digest, "little")


class SeedBook:
    """Seeds and generators for one trial."""

    def __init__(self, master_seed: int, trial: int = 0):
        self.master_seed = int(master_seed)
        self.trial = int(trial)

    def seed(self, purpose: str) -> int:
        return derive_seed(self.master_seed, self.trial, purpose)

    def rng(self, purpose: str) -> np.random.Generator:
        return np.random.default_rng(self.seed(purpose))
