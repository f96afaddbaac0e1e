"""Seeded random streams.

Every party of every run draws from its own generator. The stream for
``(master_seed, role, run_index)`` is a PCG64 seeded by
``SeedSequence([master_seed low 32, master_seed high 32, role_id, run_index])``
where ``role_id`` is the first 4 bytes of SHA-256 of the role name. Streams
are therefore independent of each other and of the order in which they
are created.
"""

from __future__ import annotations

import hashlib

import numpy as np

ROLES = ("alice", "eve", "bob", "detector0", "detector1")

_MASK32 = 0xFFFFFFFF


def role_id(role: str) -> int:
    return int.from_bytes(hashlib.sha256(role.encode()).digest()[:4], "little")


def derive_stream(master_seed: int, role: str, run_index: int = 0) -> np.random.Generator:
    if not 0 <= master_seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    if run_index < 0:
        raise ValueError("run_index must be >= 0")
    entropy = [master_seed & _MASK32, master_seed >> 32, role_id(role), run_index]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def streams(master_seed: int, run_index: int = 0) -> dict[str, np.random.Generator]:
    return {role: derive_stream(master_seed, role, run_index) for role in ROLES}
