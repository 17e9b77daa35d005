"""Dataset parsing, annotation aggregation, vocabularies, GloVe
subsetting, and padded batch assembly.

The native file format is a UTF-8 TSV: sentences separated by blank
lines, one token per line as

    token <TAB> ann1|ann2|...|annK [<TAB> prob [<TAB> pos]]

where each ann is B, I, or O (one per annotator). The optional third
column is a display-rounded probability; when present alongside
annotations it is cross-checked, never trusted. The optional fourth
column carries a part-of-speech tag.

Emphasis probabilities are kept as exact rationals internally; values
like 0.666 in data files are treated as truncated renderings of 6/9.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import postag
from .errors import ConfigError, DegenerateInputError, ParseError
from .layers import EmbeddingTable
from .tensor import Tensor
from .util import derive_rng, truncate_decimals

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1

BIO = frozenset("BIO")
MAX_WORD_LEN = 16


@dataclass
class AnnotatedSentence:
    """Tokens with per-annotator BIO labels and what derives from them."""

    tokens: list
    annotations: list  # per token: list of B/I/O symbols, one per annotator
    pos: list | None = None
    emph_prob: list = field(default_factory=list)
    label: list | None = None

    def __post_init__(self):
        if not self.emph_prob and self.annotations:
            self.emph_prob = aggregate_probabilities(self)

    @property
    def n_annotators(self):
        return len(self.annotations[0]) if self.annotations else 0

    def __len__(self):
        return len(self.tokens)


def aggregate_probabilities(sentence):
    """Exact per-token emphasis probability: (#B + #I) / #annotators."""
    probs = []
    for anns in sentence.annotations:
        if not anns:
            raise DegenerateInputError("token has zero annotators")
        marked = sum(1 for a in anns if a in ("B", "I"))
        probs.append(Fraction(marked, len(anns)))
    return probs


def threshold_labels(probs, threshold_prob=Fraction(2, 5)):
    """Binary labels: 1 iff prob >= threshold (boundary inclusive).

    Float thresholds are read as decimal literals (0.4 means exactly 2/5),
    so the boundary case behaves the way the data tables do.
    """
    if not isinstance(threshold_prob, Fraction):
        threshold_prob = Fraction(str(threshold_prob))
    if not 0 <= threshold_prob <= 1:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold_prob}")
    return [1 if p >= threshold_prob else 0 for p in probs]


def apply_labels(sentences, threshold_prob):
    for s in sentences:
        s.label = threshold_labels(s.emph_prob, threshold_prob)


def _finish_sentence(tokens, anns, probs, tags, path, line_no):
    counts = {len(a) for a in anns}
    if len(counts) > 1:
        raise ParseError(
            f"inconsistent annotator counts within one sentence: {sorted(counts)}",
            path, line_no,
        )
    sent = AnnotatedSentence(tokens, anns, pos=tags if any(t is not None for t in tags) else None)
    for i, given in enumerate(probs):
        if given is None:
            continue
        # Stored probabilities are display-rounded; accept anything within
        # one unit in the last printed place.
        if abs(float(sent.emph_prob[i]) - given) > 1.5e-3:
            raise ParseError(
                f"probability column {given} disagrees with annotations "
                f"({float(sent.emph_prob[i]):.4f})",
                path, line_no,
            )
    return sent


def parse_dataset(path, fmt="emplite-tsv", semeval_map=None):
    """Parse a dataset file into sentences, in file order."""
    if fmt == "emplite-tsv":
        return _parse_tsv(path)
    if fmt == "semeval-adapter":
        return _parse_semeval(path, semeval_map or SemevalMap())
    raise ConfigError(f"unknown dataset format {fmt!r}")


def _parse_tsv(path):
    sentences = []
    tokens, anns, probs, tags = [], [], [], []
    start_line = 1
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    sentences.append(
                        _finish_sentence(tokens, anns, probs, tags, path, start_line)
                    )
                    tokens, anns, probs, tags = [], [], [], []
                start_line = line_no + 1
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ParseError("expected at least token and annotations columns", path, line_no)
            token = cols[0]
            if not token:
                raise ParseError("empty token", path, line_no)
            symbols = cols[1].split("|")
            for sym in symbols:
                if sym not in BIO:
                    raise ParseError(f"malformed BIO symbol {sym!r}", path, line_no)
            prob = None
            if len(cols) > 2 and cols[2]:
                try:
                    prob = float(cols[2])
                except ValueError:
                    raise ParseError(f"bad probability value {cols[2]!r}", path, line_no) from None
            tag = cols[3] if len(cols) > 3 and cols[3] else None
            tokens.append(token)
            anns.append(symbols)
            probs.append(prob)
            tags.append(tag)
    if tokens:
        sentences.append(_finish_sentence(tokens, anns, probs, tags, path, start_line))
    return sentences


@dataclass
class SemevalMap:
    """Column layout of an upstream release file, all indices 0-based.

    The shipped defaults assume tab-separated lines of
    ``id  token  ann1 .. ann9`` with blank lines between sentences; adjust
    the fields if the release at hand differs.
    """

    token_col: int = 1
    ann_start: int = 2
    ann_count: int = 9


def _parse_semeval(path, cmap):
    sentences = []
    tokens, anns = [], []
    start_line = 1
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    probs = [None] * len(tokens)
                    tags = [None] * len(tokens)
                    sentences.append(
                        _finish_sentence(tokens, anns, probs, tags, path, start_line)
                    )
                    tokens, anns = [], []
                start_line = line_no + 1
                continue
            cols = line.split("\t")
            needed = max(cmap.token_col, cmap.ann_start + cmap.ann_count - 1)
            if len(cols) <= needed:
                raise ParseError(
                    f"expected at least {needed + 1} columns, got {len(cols)}", path, line_no
                )
            token = cols[cmap.token_col]
            if not token:
                raise ParseError("empty token", path, line_no)
            symbols = cols[cmap.ann_start : cmap.ann_start + cmap.ann_count]
            for sym in symbols:
                if sym not in BIO:
                    raise ParseError(f"malformed BIO symbol {sym!r}", path, line_no)
            tokens.append(token)
            anns.append(symbols)
    if tokens:
        sentences.append(
            _finish_sentence(tokens, anns, [None] * len(tokens), [None] * len(tokens), path, start_line)
        )
    return sentences


def serialize_dataset(sentences, path, with_prob=True, with_pos=True):
    """Write sentences back out in the native TSV format."""
    with open(path, "w", encoding="utf-8") as fh:
        for si, s in enumerate(sentences):
            if si:
                fh.write("\n")
            for i, tok in enumerate(s.tokens):
                cols = [tok, "|".join(s.annotations[i])]
                if with_prob:
                    cols.append(truncate_decimals(s.emph_prob[i]))
                if with_pos and s.pos is not None:
                    cols.append(s.pos[i])
                fh.write("\t".join(cols) + "\n")


def tag_corpus(sentences, source="builtin"):
    """Fill missing POS tags in place."""
    for s in sentences:
        if source == "sidecar":
            s.pos = postag.tag_sentence(s.tokens, source="sidecar", sidecar_tags=s.pos)
        elif s.pos is None:
            s.pos = postag.tag_sentence(s.tokens)


class Vocabulary:
    """Word, character, and tag symbol tables.

    Ids 0 and 1 are reserved for padding and unknowns in every table.
    Remaining ids are assigned by descending training frequency with ties
    broken lexicographically, so rebuilding from the same data always
    yields the same assignment. Word lookups are lowercased (the
    pretrained vectors are uncased); characters keep their case.
    """

    def __init__(self, words, chars, pos_tags):
        self.id_to_word = [PAD_TOKEN, UNK_TOKEN] + list(words)
        self.id_to_char = [PAD_TOKEN, UNK_TOKEN] + list(chars)
        self.id_to_pos = [PAD_TOKEN, UNK_TOKEN] + list(pos_tags)
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}
        self.char_to_id = {c: i for i, c in enumerate(self.id_to_char)}
        self.pos_to_id = {p: i for i, p in enumerate(self.id_to_pos)}

    @property
    def n_words(self):
        return len(self.id_to_word)

    @property
    def n_chars(self):
        return len(self.id_to_char)

    @property
    def n_pos(self):
        return len(self.id_to_pos)

    def word_id(self, token):
        return self.word_to_id.get(token.lower(), UNK_ID)

    def char_ids(self, token, max_len=MAX_WORD_LEN):
        return [self.char_to_id.get(c, UNK_ID) for c in token[:max_len]]

    def pos_id(self, tag):
        return self.pos_to_id.get(tag, UNK_ID)


def _ranked(freqs):
    return [sym for sym, _ in sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_vocab(train_sentences, pos_source="builtin"):
    """Build the symbol tables from the training split only."""
    if not train_sentences:
        raise DegenerateInputError("cannot build a vocabulary from an empty training set")
    tag_corpus(train_sentences, source=pos_source)
    word_freq, char_freq, pos_freq = {}, {}, {}
    for s in train_sentences:
        for tok, tag in zip(s.tokens, s.pos):
            low = tok.lower()
            word_freq[low] = word_freq.get(low, 0) + 1
            for c in tok:
                char_freq[c] = char_freq.get(c, 0) + 1
            pos_freq[tag] = pos_freq.get(tag, 0) + 1
    return Vocabulary(_ranked(word_freq), _ranked(char_freq), _ranked(pos_freq))


def _format_value(v):
    return np.format_float_positional(v, unique=True)


def subset_glove(glove_path, vocab, dim=50, seed=0, out_path=None, dtype=np.float32):
    """Build the word embedding table from a pretrained vector file.

    Rows for in-vocabulary words are copied verbatim. The unknown row and
    words missing from the file get a seeded uniform(-0.25, 0.25) row that
    is reproducible per word, independent of vocabulary order. When
    ``out_path`` is given the kept vectors are re-emitted as a small,
    reloadable subset file.
    """
    wanted = set(vocab.id_to_word[2:])
    found = {}
    with open(glove_path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            word = parts[0]
            if word not in wanted or word in found:
                continue
            if len(parts) - 1 != dim:
                raise ParseError(
                    f"expected {dim} values for {word!r}, got {len(parts) - 1}",
                    glove_path, line_no,
                )
            try:
                found[word] = np.array([float(v) for v in parts[1:]], dtype=dtype)
            except ValueError:
                raise ParseError(f"bad float in vector for {word!r}", glove_path, line_no) from None

    table = np.zeros((vocab.n_words, dim), dtype=dtype)
    for idx, word in enumerate(vocab.id_to_word):
        if idx == PAD_ID:
            continue
        if word in found:
            table[idx] = found[word]
        else:
            rng = derive_rng(seed, "glove-oov", word)
            table[idx] = rng.uniform(-0.25, 0.25, size=dim).astype(dtype)

    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            for idx in range(1, vocab.n_words):
                values = " ".join(_format_value(v) for v in table[idx])
                fh.write(f"{vocab.id_to_word[idx]} {values}\n")

    return EmbeddingTable(Tensor(table, dtype=dtype), trainable=True)


@dataclass
class Batch:
    """Padded id arrays for one mini-batch.

    The mask is true exactly on real tokens; padded cells hold pad ids and
    label 0. Words are cut to MAX_WORD_LEN characters.
    """

    word_ids: np.ndarray   # [B, T] int64
    char_ids: np.ndarray   # [B, T, L] int64
    pos_ids: np.ndarray    # [B, T] int64
    labels: np.ndarray     # [B, T] float32
    mask: np.ndarray       # [B, T] bool

    @property
    def size(self):
        return self.word_ids.shape[0]


def encode_sentence(vocab, sentence, max_word_len=MAX_WORD_LEN):
    """Id-encode one sentence: word ids, per-word char ids, tag ids."""
    word_ids = [vocab.word_id(t) for t in sentence.tokens]
    char_rows = [vocab.char_ids(t, max_word_len) for t in sentence.tokens]
    tags = sentence.pos if sentence.pos is not None else postag.tag_sentence(sentence.tokens)
    pos_ids = [vocab.pos_id(t) for t in tags]
    return word_ids, char_rows, pos_ids


def make_batches(sentences, vocab, batch_size=32, shuffle_seed=None, max_word_len=MAX_WORD_LEN):
    """Group sentences into padded batches.

    With ``shuffle_seed`` the order is a seeded permutation (reshuffle by
    passing a different seed each epoch); otherwise file order is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    order = list(range(len(sentences)))
    if shuffle_seed is not None:
        derive_rng(shuffle_seed, "batch-order").shuffle(order)
    batches = []
    for lo in range(0, len(order), batch_size):
        group = [sentences[i] for i in order[lo : lo + batch_size]]
        if not group:
            continue
        b = len(group)
        t_max = max(len(s) for s in group)
        word_ids = np.zeros((b, t_max), dtype=np.int64)
        char_ids = np.zeros((b, t_max, max_word_len), dtype=np.int64)
        pos_ids = np.zeros((b, t_max), dtype=np.int64)
        labels = np.zeros((b, t_max), dtype=np.float32)
        mask = np.zeros((b, t_max), dtype=bool)
        for row, s in enumerate(group):
            wids, crows, pids = encode_sentence(vocab, s, max_word_len)
            n = len(s)
            word_ids[row, :n] = wids
            pos_ids[row, :n] = pids
            mask[row, :n] = True
            for i, cr in enumerate(crows):
                char_ids[row, i, : len(cr)] = cr
            if s.label is not None:
                labels[row, :n] = s.label
        batches.append(Batch(word_ids, char_ids, pos_ids, labels, mask))
    return batches


def tokenize_text(text):
    """Whitespace tokenization with leading/trailing punctuation split off
    as separate tokens (for free-text inference input)."""
    out = []
    for chunk in text.split():
        lead = []
        while chunk and not chunk[0].isalnum():
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail = []
        while chunk and not chunk[-1].isalnum():
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out
