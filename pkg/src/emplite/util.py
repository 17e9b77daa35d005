"""Small shared helpers: seeded RNG derivation, hashing, display rounding."""

import hashlib
import zlib
from fractions import Fraction

import numpy as np


def derive_rng(seed, *labels):
    """Return a Generator for (seed, labels...), independent of call order.

    Every consumer of randomness in the package derives its own stream from
    a single master seed plus a name, so adding a new consumer never shifts
    the draws of an existing one.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def truncate_decimals(value, places=3):
    """Render a probability the way the annotation tables do: truncated,
    not rounded, so 2/3 displays as 0.666."""
    if isinstance(value, Fraction):
        scaled = (value.numerator * 10**places) // value.denominator
    else:
        scaled = int(float(value) * 10**places + 1e-9)
    return f"{scaled / 10**places:.{places}f}"


def chunked(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]
