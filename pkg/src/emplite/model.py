"""The emphasis model: variant assembly, training, inference, parameter
counting, and bundle I/O.

The word encoder concatenates a word embedding with one or two pooled
character-convolution features (or a character LSTM state in the legacy
variants). A BiLSTM reads the sequence; the tag embedding is appended to
its output; additive attention rescales the sequence; and two
time-distributed dense layers with sigmoid activations emit a per-token
emphasis probability. Which pieces exist is decided by ``variant``.

Each sentence is processed at its true length, so predictions never
depend on batch companions or padding.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import serialize
from .corpus import (
    MAX_WORD_LEN,
    Vocabulary,
    apply_labels,
    encode_sentence,
    make_batches,
    tag_corpus,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    NumericError,
    TrainingIntegrityError,
)
from .layers import (
    AttentionParams,
    EmbeddingTable,
    LstmParams,
    attention,
    bilstm,
    dropout,
    embed,
    glorot_uniform,
    lstm,
    masked_bce_loss,
    recurrent_dropout_mask,
    time_distributed_dense,
)
from .metrics import EvalInstance, match_m
from .optim import Adam
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    concat,
    conv1d,
    gather_rows,
    global_max_pool,
    no_grad,
    reshape,
)
from .util import derive_rng

VARIANTS = (
    "base",
    "char_lstm",
    "glove_frozen_char_lstm",
    "glove_frozen_char_cnn",
    "glove_trainable_char_cnn",
    "dual_cnn",
    "dual_cnn_attn",
    "emplite_full",
)

_GLOVE_VARIANTS = frozenset(VARIANTS[2:])
_FROZEN_VARIANTS = frozenset(("glove_frozen_char_lstm", "glove_frozen_char_cnn"))
_CHAR_LSTM_VARIANTS = frozenset(("char_lstm", "glove_frozen_char_lstm"))
_DUAL_CNN_VARIANTS = frozenset(("dual_cnn", "dual_cnn_attn", "emplite_full"))
_SINGLE_CNN_VARIANTS = frozenset(("glove_frozen_char_cnn", "glove_trainable_char_cnn"))
_ATTN_VARIANTS = frozenset(("dual_cnn_attn", "emplite_full"))


@dataclass
class ModelConfig:
    """Hyperparameters for one architecture variant."""

    variant: str = "emplite_full"
    word_dim: int = 50
    char_dim: int = 50
    char_filters: int = 16
    kernel_sizes: tuple = (3, 5)
    lstm_units: int = 16
    char_lstm_units: int = 16
    pos_dim: int = 16
    dense_units: tuple = (12, 1)
    dropout: float = 0.2
    batch_size: int = 32
    threshold_prob: float = 0.4
    max_word_len: int = MAX_WORD_LEN
    seed: int = 13
    attn_mode: str = "scale"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; have {VARIANTS}")
        if not 0.0 <= float(self.threshold_prob) <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold_prob}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")

    @property
    def uses_glove(self):
        return self.variant in _GLOVE_VARIANTS

    @property
    def word_trainable(self):
        return self.variant not in _FROZEN_VARIANTS

    @property
    def char_encoder(self):
        if self.variant in _CHAR_LSTM_VARIANTS:
            return "lstm"
        if self.variant in _SINGLE_CNN_VARIANTS:
            return "cnn"
        if self.variant in _DUAL_CNN_VARIANTS:
            return "cnn_dual"
        return None

    @property
    def uses_attention(self):
        return self.variant in _ATTN_VARIANTS

    @property
    def uses_pos(self):
        return self.variant == "emplite_full"

    @property
    def encoder_dim(self):
        dim = self.word_dim
        enc = self.char_encoder
        if enc == "lstm":
            dim += self.char_lstm_units
        elif enc == "cnn":
            dim += self.char_filters
        elif enc == "cnn_dual":
            dim += 2 * self.char_filters
        return dim

    @property
    def feature_dim(self):
        dim = 2 * self.lstm_units
        if self.uses_pos:
            dim += self.pos_dim
        return dim

    @property
    def dense_input_dim(self):
        if self.uses_attention and self.attn_mode == "concat_context":
            return 2 * self.feature_dim
        return self.feature_dim

    def to_items(self):
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            out.append((f.name, value))
        return out

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name in ("kernel_sizes", "dense_units"):
                kwargs[f.name] = tuple(int(v) for v in str(raw).split(","))
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


class ModelParams:
    """Named parameter tensors for one variant."""

    def __init__(self):
        self.word_table = None       # EmbeddingTable
        self.char_table = None       # EmbeddingTable or None
        self.pos_table = None        # EmbeddingTable or None
        self.conv3 = None            # (kernel, bias) or None
        self.conv5 = None            # (kernel, bias) or None
        self.char_lstm = None        # LstmParams or None
        self.lstm_fwd = None         # LstmParams
        self.lstm_bwd = None         # LstmParams
        self.attn = None             # AttentionParams or None
        self.dense1 = None           # (weights, bias)
        self.dense2 = None           # (weights, bias)

    def named_tensors(self):
        """All tensors in a stable order, trainable or not."""
        out = {}
        out["word_table"] = self.word_table.table
        if self.char_table is not None:
            out["char_table"] = self.char_table.table
        if self.pos_table is not None:
            out["pos_table"] = self.pos_table.table
        for tag, pair in (("conv3", self.conv3), ("conv5", self.conv5)):
            if pair is not None:
                out[f"{tag}.kernel"], out[f"{tag}.bias"] = pair
        for tag, p in (
            ("char_lstm", self.char_lstm),
            ("lstm_fwd", self.lstm_fwd),
            ("lstm_bwd", self.lstm_bwd),
        ):
            if p is not None:
                for sub, t in p.tensors().items():
                    out[f"{tag}.{sub}"] = t
        if self.attn is not None:
            out["attn_w"] = self.attn.w
        out["dense1.weights"], out["dense1.bias"] = self.dense1
        out["dense2.weights"], out["dense2.bias"] = self.dense2
        return out

    def trainable_tensors(self):
        return {n: t for n, t in self.named_tensors().items() if t.requires_grad}

    def state_dict(self):
        return {n: t.data.copy() for n, t in self.named_tensors().items()}

    def load_state(self, state):
        for name, t in self.named_tensors().items():
            t.data[...] = state[name]


def init_params(config: ModelConfig, vocab: Vocabulary, glove=None, dtype=DEFAULT_DTYPE):
    """Build freshly initialized parameters for a variant.

    Kernels and the attention vector are Glorot-uniform; biases are zero
    except the LSTM forget gates (1.0); embedding tables are small uniform
    draws. Everything derives from config.seed, independent of creation
    order.
    """
    p = ModelParams()
    seed = config.seed

    if config.uses_glove:
        if glove is None:
            raise ConfigError(f"variant {config.variant!r} needs a pretrained word table")
        if glove.dim != config.word_dim or glove.vocab_size != vocab.n_words:
            raise TrainingIntegrityError(
                f"pretrained table is {glove.vocab_size}x{glove.dim}, expected "
                f"{vocab.n_words}x{config.word_dim}"
            )
        word = Tensor(glove.table.data.astype(dtype, copy=True), dtype=dtype)
        p.word_table = EmbeddingTable(word, trainable=config.word_trainable)
    else:
        p.word_table = EmbeddingTable.random(
            vocab.n_words, config.word_dim, derive_rng(seed, "init", "word_table"), dtype=dtype
        )

    enc = config.char_encoder
    if enc is not None:
        p.char_table = EmbeddingTable.random(
            vocab.n_chars, config.char_dim, derive_rng(seed, "init", "char_table"), dtype=dtype
        )
    if enc in ("cnn", "cnn_dual"):
        for tag, k in zip(("conv3", "conv5"), config.kernel_sizes):
            kernel = Tensor(
                glorot_uniform(
                    (k, config.char_dim, config.char_filters),
                    k * config.char_dim,
                    k * config.char_filters,
                    derive_rng(seed, "init", tag),
                    dtype,
                ),
                requires_grad=True,
                dtype=dtype,
            )
            bias = Tensor(np.zeros(config.char_filters, dtype=dtype), requires_grad=True, dtype=dtype)
            setattr(p, tag, (kernel, bias))
            if enc == "cnn":
                break
    if enc == "lstm":
        p.char_lstm = LstmParams.create(
            config.char_dim, config.char_lstm_units, derive_rng(seed, "init", "char_lstm"), dtype
        )

    p.lstm_fwd = LstmParams.create(
        config.encoder_dim, config.lstm_units, derive_rng(seed, "init", "lstm_fwd"), dtype
    )
    p.lstm_bwd = LstmParams.create(
        config.encoder_dim, config.lstm_units, derive_rng(seed, "init", "lstm_bwd"), dtype
    )

    if config.uses_pos:
        p.pos_table = EmbeddingTable.random(
            vocab.n_pos, config.pos_dim, derive_rng(seed, "init", "pos_table"), dtype=dtype
        )
    if config.uses_attention:
        p.attn = AttentionParams.create(
            config.feature_dim, derive_rng(seed, "init", "attn"), dtype
        )

    d_in = config.dense_input_dim
    u1, u2 = config.dense_units
    p.dense1 = (
        Tensor(
            glorot_uniform((d_in, u1), d_in, u1, derive_rng(seed, "init", "dense1"), dtype),
            requires_grad=True, dtype=dtype,
        ),
        Tensor(np.zeros(u1, dtype=dtype), requires_grad=True, dtype=dtype),
    )
    p.dense2 = (
        Tensor(
            glorot_uniform((u1, u2), u1, u2, derive_rng(seed, "init", "dense2"), dtype),
            requires_grad=True, dtype=dtype,
        ),
        Tensor(np.zeros(u2, dtype=dtype), requires_grad=True, dtype=dtype),
    )
    return p


def count_params(config: ModelConfig, vocab: Vocabulary):
    """Number of trainable scalars for a variant on this vocabulary.

    Frozen word tables do not count. Mirrors init_params exactly;
    the test suite cross-checks the two.
    """
    total = 0
    if config.word_trainable:
        total += vocab.n_words * config.word_dim
    enc = config.char_encoder
    if enc is not None:
        total += vocab.n_chars * config.char_dim
    if enc in ("cnn", "cnn_dual"):
        ks = config.kernel_sizes if enc == "cnn_dual" else config.kernel_sizes[:1]
        for k in ks:
            total += k * config.char_dim * config.char_filters + config.char_filters
    if enc == "lstm":
        h = config.char_lstm_units
        total += (config.char_dim + h) * 4 * h + 4 * h
    h = config.lstm_units
    total += 2 * ((config.encoder_dim + h) * 4 * h + 4 * h)
    if config.uses_pos:
        total += vocab.n_pos * config.pos_dim
    if config.uses_attention:
        total += config.feature_dim
    d_in = config.dense_input_dim
    u1, u2 = config.dense_units
    total += d_in * u1 + u1 + u1 * u2 + u2
    return total


def _char_feature(params, config, char_rows):
    """Per-word character features for one sentence: [T, F...]."""
    t_len = len(char_rows)
    if config.char_encoder == "lstm":
        finals = []
        for row in char_rows:
            ce = embed(params.char_table, row)
            h = lstm(ce, params.char_lstm)
            finals.append(gather_rows(h, [len(row) - 1]))
        return concat(finals, axis=0) if len(finals) > 1 else finals[0]
    # CNN path: pad words to a common char length and pool only over the
    # real characters, which matches running each word at its own length.
    l_max = max(len(row) for row in char_rows)
    padded = np.zeros((t_len, l_max), dtype=np.int64)
    cmask = np.zeros((t_len, l_max), dtype=bool)
    for i, row in enumerate(char_rows):
        padded[i, : len(row)] = row
        cmask[i, : len(row)] = True
    ce = embed(params.char_table, padded.reshape(-1))
    ce = reshape(ce, (t_len, l_max, config.char_dim))
    feats = []
    convs = [params.conv3] if config.char_encoder == "cnn" else [params.conv3, params.conv5]
    for kernel, bias in convs:
        feats.append(global_max_pool(conv1d(ce, kernel, bias), mask=cmask))
    return concat(feats, axis=1) if len(feats) > 1 else feats[0]


def _sentence_probs(params, config, word_ids, char_rows, pos_ids, training=False, drop_rng=None):
    """Forward one sentence at its true length -> probability Tensor [T]."""
    t_len = len(word_ids)
    dtype = params.word_table.table.data.dtype
    parts = [embed(params.word_table, np.asarray(word_ids, dtype=np.int64))]
    if config.char_encoder is not None:
        parts.append(_char_feature(params, config, char_rows))
    enc = concat(parts, axis=1) if len(parts) > 1 else parts[0]
    rmasks = (None, None)
    if training:
        enc = dropout(enc, config.dropout, training, drop_rng)
        rmasks = (
            recurrent_dropout_mask(config.lstm_units, config.dropout, training, drop_rng, dtype),
            recurrent_dropout_mask(config.lstm_units, config.dropout, training, drop_rng, dtype),
        )
    h = bilstm(enc, params.lstm_fwd, params.lstm_bwd, recurrent_masks=rmasks)
    if config.uses_pos:
        h = concat([h, embed(params.pos_table, np.asarray(pos_ids, dtype=np.int64))], axis=1)
    if config.uses_attention:
        h, _z = attention(h, params.attn, mode=config.attn_mode)
    u1, u2 = config.dense_units
    h = time_distributed_dense(h, params.dense1[0], params.dense1[1], "sigmoid")
    h = time_distributed_dense(h, params.dense2[0], params.dense2[1], "sigmoid")
    return reshape(h, (t_len,))


def _check_batch(params, config, batch):
    if batch.word_ids.max(initial=0) >= params.word_table.vocab_size:
        raise TrainingIntegrityError("batch word ids exceed the model's vocabulary")
    if params.char_table is not None and batch.char_ids.max(initial=0) >= params.char_table.vocab_size:
        raise TrainingIntegrityError("batch char ids exceed the model's vocabulary")
    if params.pos_table is not None and batch.pos_ids.max(initial=0) >= params.pos_table.vocab_size:
        raise TrainingIntegrityError("batch tag ids exceed the model's vocabulary")


def _batch_rows(batch):
    for row in range(batch.size):
        n = int(batch.mask[row].sum())
        word_ids = batch.word_ids[row, :n].tolist()
        char_rows = []
        for i in range(n):
            chars = batch.char_ids[row, i]
            char_rows.append(chars[chars != 0].tolist() or [1])
        pos_ids = batch.pos_ids[row, :n].tolist()
        yield row, n, word_ids, char_rows, pos_ids


def forward(config, params, batch):
    """Probabilities for a padded batch: [B, T], zeros on padded cells."""
    _check_batch(params, config, batch)
    out = np.zeros(batch.word_ids.shape, dtype=np.float32)
    with no_grad():
        for row, n, word_ids, char_rows, pos_ids in _batch_rows(batch):
            probs = _sentence_probs(params, config, word_ids, char_rows, pos_ids)
            out[row, :n] = probs.data
    return out


@dataclass
class Prediction:
    tokens: list
    probs: list


def predict(params, config, vocab, tokens, pos_tags=None):
    """Per-token emphasis probabilities for one tokenized text."""
    if not tokens:
        raise DegenerateInputError("cannot predict on an empty token list")
    from . import postag

    if pos_tags is None:
        pos_tags = postag.tag_sentence(tokens)
    word_ids = [vocab.word_id(t) for t in tokens]
    char_rows = [vocab.char_ids(t, config.max_word_len) or [1] for t in tokens]
    pos_ids = [vocab.pos_id(t) for t in pos_tags]
    with no_grad():
        probs = _sentence_probs(params, config, word_ids, char_rows, pos_ids)
    return Prediction(list(tokens), [float(v) for v in probs.data])


def evaluate(params, config, vocab, sentences):
    """Match scores of the model on annotated sentences.

    Returns (m1, m2, m3, m4, average)."""
    if not sentences:
        raise DegenerateInputError("cannot evaluate on an empty sentence list")
    instances = []
    for s in sentences:
        word_ids, char_rows, pos_ids = encode_sentence(vocab, s, config.max_word_len)
        char_rows = [row or [1] for row in char_rows]
        with no_grad():
            probs = _sentence_probs(params, config, word_ids, char_rows, pos_ids)
        instances.append(
            EvalInstance([float(p) for p in s.emph_prob], [float(v) for v in probs.data])
        )
    scores = tuple(match_m(instances, m) for m in (1, 2, 3, 4))
    return scores + (sum(scores) / 4.0,)


def train(
    config: ModelConfig,
    vocab: Vocabulary,
    train_sentences,
    dev_sentences,
    glove=None,
    max_epochs=100,
    patience=10,
    lr=0.001,
    pos_source="builtin",
    log=None,
):
    """Train one variant; returns (params, history).

    Mini-batches are reshuffled every epoch from a seeded stream. After
    each epoch the dev split is scored; the best-scoring parameters are
    kept and training stops after ``patience`` epochs without improvement.
    History records one dict per epoch and compares exactly across reruns
    with the same seed.
    """
    if not train_sentences:
        raise ConfigError("training set is empty")
    if not dev_sentences:
        raise ConfigError("dev set is empty")
    tag_corpus(train_sentences, source=pos_source)
    tag_corpus(dev_sentences, source=pos_source)
    apply_labels(train_sentences, config.threshold_prob)
    params = init_params(config, vocab, glove=glove)
    adam = Adam(params.trainable_tensors(), lr=lr)
    drop_rng = derive_rng(config.seed, "dropout")
    history = []
    best_score = -1.0
    best_state = params.state_dict()
    best_epoch = -1
    for epoch in range(max_epochs):
        batches = make_batches(
            train_sentences, vocab, config.batch_size,
            shuffle_seed=derive_rng(config.seed, "shuffle", epoch).integers(2**31),
            max_word_len=config.max_word_len,
        )
        epoch_loss = 0.0
        for batch in batches:
            _check_batch(params, config, batch)
            loss = None
            for row, n, word_ids, char_rows, pos_ids in _batch_rows(batch):
                probs = _sentence_probs(
                    params, config, word_ids, char_rows, pos_ids,
                    training=True, drop_rng=drop_rng,
                )
                sent_loss = masked_bce_loss(probs, batch.labels[row, :n], batch.mask[row, :n])
                loss = sent_loss if loss is None else loss + sent_loss
            loss = loss * (1.0 / batch.size)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            adam.step()
            epoch_loss += value
        scores = evaluate(params, config, vocab, dev_sentences)
        record = {
            "epoch": epoch,
            "loss": epoch_loss / max(1, len(batches)),
            "dev_match": scores[:4],
            "dev_avg": scores[4],
        }
        history.append(record)
        if log:
            log(record)
        if scores[4] > best_score:
            best_score = scores[4]
            best_state = params.state_dict()
            best_epoch = epoch
        elif epoch - best_epoch >= patience:
            break
    params.load_state(best_state)
    return params, history


def save_model(path, config, vocab, params):
    """Write the model as a single EMPL bundle; returns its byte size."""
    arrays = [(n, t.data) for n, t in params.named_tensors().items()]
    return serialize.write_bundle(
        path,
        config.to_items(),
        [vocab.id_to_word[2:], vocab.id_to_char[2:], vocab.id_to_pos[2:]],
        arrays,
    )


def load_model(path):
    """Read an EMPL bundle back into (config, vocab, params)."""
    mapping, symbols, arrays = serialize.read_bundle(path)
    config = ModelConfig.from_mapping(mapping)
    vocab = Vocabulary(*symbols)
    params = init_params(config, vocab, glove=_placeholder_glove(config, vocab))
    named = params.named_tensors()
    loaded = dict(arrays)
    missing = set(named) - set(loaded)
    extra = set(loaded) - set(named)
    if missing or extra:
        raise serialize.BundleError(
            "WEIGHTS", f"tensor set mismatch (missing {sorted(missing)}, extra {sorted(extra)})"
        )
    for name, t in named.items():
        if loaded[name].shape != t.data.shape:
            raise serialize.BundleError(
                "WEIGHTS", f"tensor {name!r} has shape {loaded[name].shape}, expected {t.data.shape}"
            )
        t.data[...] = loaded[name]
    return config, vocab, params


def _placeholder_glove(config, vocab):
    if not config.uses_glove:
        return None
    data = np.zeros((vocab.n_words, config.word_dim), dtype=DEFAULT_DTYPE)
    return EmbeddingTable(Tensor(data), trainable=config.word_trainable)


def run_ablation(base_config, vocab, train_sentences, dev_sentences, test_sentences,
                 variants, glove=None, **train_kwargs):
    """Train several variants with a shared seed and score each on the
    test split. Returns one row dict per variant."""
    import os
    import tempfile

    rows = []
    for variant in variants:
        config = replace(base_config, variant=variant)
        params, history = train(
            config, vocab, train_sentences, dev_sentences,
            glove=glove if config.uses_glove else None, **train_kwargs,
        )
        scores = evaluate(params, config, vocab, test_sentences)
        fd, tmp = tempfile.mkstemp(suffix=".empl")
        os.close(fd)
        try:
            size = save_model(tmp, config, vocab, params)
        finally:
            os.unlink(tmp)
        rows.append(
            {
                "variant": variant,
                "match": scores[:4],
                "average": scores[4],
                "params": count_params(config, vocab),
                "bundle_bytes": size,
                "epochs": len(history),
            }
        )
    return rows
