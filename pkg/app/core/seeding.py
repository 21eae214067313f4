"""Seed fan-out.

One global seed drives every random stream. A component asks for its own
sub-seed with ``derive_seed(seed, module, index)``: the triple is encoded as
``"<seed>:<module>:<index>"`` (UTF-8), hashed with BLAKE2b (8-byte digest) and
read back as a little-endian unsigned 64-bit integer. Sub-seeds are therefore
stable across platforms and Python versions, and independent per component.

Random streams are ``numpy.random.Generator(PCG64(sub_seed))``.
"""

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def derive_seed(seed: int, module: str, index: int = 0) -> int:
    payload = f"{int(seed)}:{module}:{int(index)}".encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    """Named deterministic generator used by every sampling step"""
    return np.random.Generator(np.random.PCG64(int(seed) & MAX_SEED))


def derive_rng(seed: int, module: str, index: int = 0) -> np.random.Generator:
    return make_rng(derive_seed(seed, module, index))
