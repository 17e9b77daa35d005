"""Training-data augmentation.

Four strategies: dropping at most one word, dropping at least one word,
upper-casing one word, and reversing the sentence. Augmented copies are
appended to the original data, never substituted; annotations (and with
them probabilities and labels) travel with their tokens.

Selection and all per-sentence choices are seeded per sentence, so the
result is a pure function of (input, spec).
"""

import math
from dataclasses import dataclass

from .corpus import AnnotatedSentence
from .errors import ConfigError
from .util import derive_rng

STRATEGIES = ("remove_le1", "remove_ge1", "uppercase_word", "reverse")

_REMOVE_PROB = 0.15  # per-token drop probability for remove_ge1


@dataclass
class AugmentSpec:
    strategy: str
    fraction: float
    seed: int = 0


def _pick(sentence, keep_indices):
    tokens = [sentence.tokens[i] for i in keep_indices]
    anns = [sentence.annotations[i] for i in keep_indices]
    pos = [sentence.pos[i] for i in keep_indices] if sentence.pos is not None else None
    return AnnotatedSentence(tokens, anns, pos=pos)


def _augment_one(sentence, strategy, rng):
    n = len(sentence)
    if strategy == "reverse":
        return _pick(sentence, list(range(n - 1, -1, -1)))
    if strategy == "remove_le1":
        if n < 2:
            return None  # removal would leave nothing
        drop = int(rng.integers(n))
        return _pick(sentence, [i for i in range(n) if i != drop])
    if strategy == "remove_ge1":
        if n < 2:
            return None
        for _ in range(100):
            keep = rng.random(n) >= _REMOVE_PROB
            if keep.any() and not keep.all():
                return _pick(sentence, [i for i in range(n) if keep[i]])
        # Degenerate run of draws: fall back to dropping a single token.
        drop = int(rng.integers(n))
        return _pick(sentence, [i for i in range(n) if i != drop])
    if strategy == "uppercase_word":
        candidates = [i for i, t in enumerate(sentence.tokens) if t.upper() != t]
        if not candidates:
            return None
        j = candidates[int(rng.integers(len(candidates)))]
        tokens = list(sentence.tokens)
        tokens[j] = tokens[j].upper()
        pos = list(sentence.pos) if sentence.pos is not None else None
        return AnnotatedSentence(tokens, [list(a) for a in sentence.annotations], pos=pos)
    raise ConfigError(f"unknown augmentation strategy {strategy!r}")


def augment(train, spec: AugmentSpec):
    """Return the original sentences plus one augmented copy of each
    selected sentence (a seeded sample of ceil(fraction * N))."""
    if spec.strategy not in STRATEGIES:
        raise ConfigError(f"unknown augmentation strategy {spec.strategy!r}")
    if not 0.0 <= spec.fraction <= 1.0:
        raise ConfigError(f"augmentation fraction must be in [0, 1], got {spec.fraction}")
    out = list(train)
    n_selected = math.ceil(spec.fraction * len(train))
    if n_selected == 0:
        return out
    selector = derive_rng(spec.seed, "augment-select", spec.strategy)
    chosen = selector.choice(len(train), size=n_selected, replace=False)
    for idx in sorted(int(i) for i in chosen):
        rng = derive_rng(spec.seed, "augment-sentence", spec.strategy, idx)
        copy = _augment_one(train[idx], spec.strategy, rng)
        if copy is not None and len(copy) >= 1:
            out.append(copy)
    return out
