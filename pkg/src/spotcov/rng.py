"""Deterministic stream derivation for all randomness in the package.

Every consumer of randomness gets its own labeled substream.  The rule is

    key = blake2s("{seed}:{label[/label...]}", digest_size=16)

and the 128-bit key feeds a counter-based Philox generator.  Streams with
different labels are independent, identical (seed, labels) pairs reproduce
bitwise on any platform, and re-deriving a stream never perturbs sibling
streams.  Labels in use: "vol-1", "vol-2" for the variance processes,
"diffusion-1", "diffusion-2" for the price Brownian motions, "jumps" for
the compound Poisson component, and "rep/<index>" prefixes for Monte
Carlo replications.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    """Map (seed, labels) to a 128-bit integer, stable across platforms."""
    name = f"{int(seed)}:" + "/".join(str(lab) for lab in labels)
    digest = hashlib.blake2s(name.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for the given seed and label path."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *labels)))
