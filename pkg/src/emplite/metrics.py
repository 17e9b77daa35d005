"""Top-m overlap scoring.

For each sentence the m highest ground-truth probabilities and the m
highest predicted probabilities form two index sets; the score is their
mean overlap fraction over the evaluation set, and the summary score
averages m = 1..4. Only the ranking of predictions matters.

Ties break by ascending token index on both sides, and m larger than the
sentence saturates to the whole sentence (denominator min(m, length)), so
a perfect prediction always scores 1.0. Both choices are this module's
convention; swap here if an external scorer differs.
"""

from dataclasses import dataclass

from .errors import AlignmentError, DegenerateInputError, ParseError


@dataclass
class EvalInstance:
    truth_probs: list
    pred_probs: list

    def __post_init__(self):
        if len(self.truth_probs) != len(self.pred_probs):
            raise AlignmentError(
                f"instance lengths differ: {len(self.truth_probs)} truth vs "
                f"{len(self.pred_probs)} predicted"
            )
        if not self.truth_probs:
            raise DegenerateInputError("evaluation instance has no tokens")


def top_m_set(probs, m):
    """Indices of the m largest probabilities, ties by ascending index;
    saturates to all indices when m exceeds the length."""
    if m < 1:
        raise DegenerateInputError(f"m must be >= 1, got {m}")
    n = len(probs)
    ranked = sorted(range(n), key=lambda i: (-float(probs[i]), i))
    return set(ranked[: min(m, n)])


def match_m(instances, m):
    """Mean top-m overlap over the instances, in [0, 1]."""
    if not instances:
        raise DegenerateInputError("cannot score an empty instance list")
    total = 0.0
    for inst in instances:
        denom = min(m, len(inst.truth_probs))
        truth = top_m_set(inst.truth_probs, m)
        pred = top_m_set(inst.pred_probs, m)
        total += len(truth & pred) / denom
    return total / len(instances)


def average_score(instances):
    """Mean of the m = 1..4 scores."""
    return sum(match_m(instances, m) for m in (1, 2, 3, 4)) / 4.0


def read_predictions(path):
    """Read a prediction file: blank-line-separated blocks of
    ``token <TAB> prob`` lines. Returns a list of (tokens, probs)."""
    blocks = []
    tokens, probs = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    blocks.append((tokens, probs))
                    tokens, probs = [], []
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ParseError("expected 'token<TAB>prob'", path, line_no)
            try:
                p = float(cols[1])
            except ValueError:
                raise ParseError(f"bad probability {cols[1]!r}", path, line_no) from None
            tokens.append(cols[0])
            probs.append(p)
    if tokens:
        blocks.append((tokens, probs))
    return blocks


def write_predictions(path, blocks):
    """Inverse of read_predictions; probabilities keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for bi, (tokens, probs) in enumerate(blocks):
            if bi:
                fh.write("\n")
            for tok, p in zip(tokens, probs):
                fh.write(f"{tok}\t{float(p)!r}\n")
