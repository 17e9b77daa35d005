"""Acceptance gate: one test per shipping criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Criterion 5 trains on the real benchmark split when the environment
points at it (EMPLITE_SEMEVAL_TRAIN/DEV/TEST plus EMPLITE_GLOVE);
otherwise it runs the documented fallback, an overfit check on the
32-sentence fixture shipped with the tests.
"""

import os
import time

import numpy as np
import pytest

import synthdata
from checks import gradcheck
from emplite.augment import AugmentSpec, augment
from emplite.corpus import (
    Vocabulary,
    build_vocab,
    parse_dataset,
    subset_glove,
    tag_corpus,
    threshold_labels,
)
from emplite.errors import BundleError
from emplite.layers import (
    AttentionParams,
    EmbeddingTable,
    LstmParams,
    attention,
    bilstm,
    embed,
    lstm,
    masked_bce_loss,
    time_distributed_dense,
)
from emplite.metrics import EvalInstance, match_m
from emplite.model import (
    VARIANTS,
    ModelConfig,
    count_params,
    init_params,
    load_model,
    predict,
    save_model,
    train,
)
from emplite.postag import PTB_TAGS
from emplite.tensor import Tensor, conv1d, sum_all, tanh
from emplite.util import derive_rng, truncate_decimals

DATA = os.path.join(os.path.dirname(__file__), "data")
OVERFIT = os.path.join(DATA, "overfit32.tsv")
GLOVE_TINY = os.path.join(DATA, "glove_tiny.txt")

PUBLISHED_PARAM_MIN = 21_574
PUBLISHED_PARAM_MAX = 238_620


def _report(number, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {number} ({name}): {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


# ---------------------------------------------------------------------------
# shared expensive fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def synth_env(tmp_path_factory):
    """Synthetic corpus + vectors + the three ablation training runs."""
    train_s, dev_s, test_s = synthdata.gen_corpus(seed=7)
    words = synthdata.corpus_words(train_s, dev_s, test_s)
    gdir = tmp_path_factory.mktemp("synthglove")
    gpath = str(gdir / "vectors.txt")
    synthdata.write_glove(gpath, words, seed=7)
    vocab = build_vocab(train_s)
    glove = subset_glove(gpath, vocab, dim=50, seed=13)

    scores = {}
    for variant in ("base", "glove_frozen_char_cnn", "emplite_full"):
        config = ModelConfig(variant=variant, seed=13)
        params, _ = train(
            config, vocab, list(train_s), dev_s,
            glove=glove if config.uses_glove else None,
            max_epochs=40, patience=10,
        )
        from emplite.model import evaluate

        scores[variant] = evaluate(params, config, vocab, test_s)[4]
    return {
        "train": train_s,
        "dev": dev_s,
        "test": test_s,
        "vocab": vocab,
        "glove": glove,
        "scores": scores,
    }


@pytest.fixture(scope="module")
def benchmark_vocab():
    """A vocabulary of exactly 4331 words with a realistic character
    inventory, standing in for the benchmark training vocabulary."""
    rng = derive_rng(20260810, "acceptance-vocab")
    words = []
    for i in range(4331):
        length = int(rng.integers(3, 11))
        words.append("".join(chr(97 + int(rng.integers(26))) for _ in range(length)) + f"{i:04d}")
    chars = [chr(c) for c in range(33, 127)] + ["é", "ü", "ñ", "–", "’", "à"]
    return Vocabulary(words, chars, list(PTB_TAGS))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_criterion_1_metric_fidelity():
    started = time.time()
    rng = np.random.default_rng(20260810)
    instances = []
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        instances.append(EvalInstance(rng.random(n).tolist(), rng.random(n).tolist()))

    def brute(inst_list, m):
        total = 0.0
        for inst in inst_list:
            n = len(inst.truth_probs)
            t = [i for _, i in sorted((-p, i) for i, p in enumerate(inst.truth_probs))][: min(m, n)]
            p = [i for _, i in sorted((-q, i) for i, q in enumerate(inst.pred_probs))][: min(m, n)]
            total += len(set(t) & set(p)) / min(m, n)
        return total / len(inst_list)

    worst = max(abs(match_m(instances, m) - brute(instances, m)) for m in (1, 2, 3, 4))

    reference = [match_m(instances, m) for m in (1, 2, 3, 4)]
    monotone_ok = True
    for trial in range(100):
        a = float(rng.uniform(0.1, 4.0))
        b = float(rng.uniform(-2.0, 2.0))
        f = [lambda p: a * p + b, lambda p: np.expm1(a * p), lambda p: np.tanh(a * p) + b][trial % 3]
        mapped = [EvalInstance(i.truth_probs, [float(f(q)) for q in i.pred_probs]) for i in instances]
        if [match_m(mapped, m) for m in (1, 2, 3, 4)] != reference:
            monotone_ok = False
            break
    elapsed = time.time() - started
    _report(
        1, "metric fidelity",
        worst < 1e-12 and monotone_ok and elapsed < 10,
        f"oracle gap {worst:.2e}, monotone invariance {monotone_ok}, {elapsed:.1f}s",
    )


def test_criterion_2_annotation_table_reproduction(tmp_path):
    path = tmp_path / "table2.tsv"
    path.write_text(
        "Kindness\tB|B|B|O|O|O|B|B|B\n"
        "is\tO|O|O|O|O|O|I|I|O\n"
        "like\tO|O|O|O|O|O|I|I|O\n"
        "snow\tO|O|B|O|O|O|I|I|O\n",
        encoding="utf-8",
    )
    s = parse_dataset(str(path))[0]
    rendered = [truncate_decimals(p) for p in s.emph_prob]
    labels = threshold_labels(s.emph_prob, 0.4)
    ok = rendered == ["0.666", "0.222", "0.222", "0.333"] and labels == [1, 0, 0, 0]
    _report(2, "annotation table reproduction", ok, f"probs {rendered}, labels {labels}")


def test_criterion_3_average_arithmetic():
    value = sum((0.541, 0.698, 0.782, 0.823)) / 4
    ok = abs(value - 0.711) <= 0.0005
    _report(3, "summary average arithmetic", ok, f"average {value:.6f} vs 0.711")


def test_criterion_4_gradient_suite():
    started = time.time()
    rng = np.random.default_rng(4)
    worst = {}

    def check(layer, make_case):
        errs = []
        for trial in range(20):
            make_loss, params = make_case(trial)
            errs.append(gradcheck(make_loss, params))
        worst[layer] = max(errs)

    def emb_case(trial):
        r = derive_rng(trial, "c4-emb")
        v, d, t = int(r.integers(4, 9)), int(r.integers(2, 6)), int(r.integers(1, 6))
        table = EmbeddingTable.random(v, d, r, dtype=np.float64)
        weights = Tensor(r.standard_normal((t, d)), dtype=np.float64)
        ids = r.integers(1, v, size=t)
        return lambda: sum_all(embed(table, ids) * weights), [table.table]

    def conv_case(trial):
        r = derive_rng(trial, "c4-conv")
        n, length, cin, cout = 2, int(r.integers(2, 7)), int(r.integers(1, 4)), int(r.integers(1, 5))
        k = 3 if trial % 2 else 5
        x = Tensor(r.standard_normal((n, length, cin)), requires_grad=True, dtype=np.float64)
        w = Tensor(r.standard_normal((k, cin, cout)), requires_grad=True, dtype=np.float64)
        b = Tensor(r.standard_normal(cout), requires_grad=True, dtype=np.float64)
        return lambda: sum_all(tanh(conv1d(x, w, b))), [x, w, b]

    def cell_case(trial):
        r = derive_rng(trial, "c4-cell")
        d, h = int(r.integers(2, 6)), int(r.integers(2, 5))
        x = Tensor(r.standard_normal((1, d)), requires_grad=True, dtype=np.float64)
        p = LstmParams.create(d, h, r, dtype=np.float64)
        return (
            lambda: sum_all(lstm(x, p)),
            [x, p.input_kernel, p.recurrent_kernel, p.bias],
        )

    def bilstm_case(trial):
        r = derive_rng(trial, "c4-bilstm")
        t, d, h = int(r.integers(2, 5)), int(r.integers(2, 5)), int(r.integers(2, 4))
        x = Tensor(r.standard_normal((t, d)), requires_grad=True, dtype=np.float64)
        f = LstmParams.create(d, h, r, dtype=np.float64)
        b = LstmParams.create(d, h, r, dtype=np.float64)
        params = [x, f.input_kernel, f.recurrent_kernel, f.bias,
                  b.input_kernel, b.recurrent_kernel, b.bias]
        return lambda: sum_all(tanh(bilstm(x, f, b))), params

    def attn_case(trial):
        r = derive_rng(trial, "c4-attn")
        t, d = int(r.integers(1, 6)), int(r.integers(2, 6))
        h = Tensor(r.standard_normal((t, d)), requires_grad=True, dtype=np.float64)
        p = AttentionParams.create(d, r, dtype=np.float64)

        def loss():
            weighted, _ = attention(h, p)
            return sum_all(weighted * weighted)

        return loss, [h, p.w]

    def dense_case(trial):
        r = derive_rng(trial, "c4-dense")
        t, d, u = int(r.integers(1, 6)), int(r.integers(2, 6)), int(r.integers(1, 4))
        h = Tensor(r.standard_normal((t, d)), requires_grad=True, dtype=np.float64)
        w = Tensor(r.standard_normal((d, u)), requires_grad=True, dtype=np.float64)
        b = Tensor(r.standard_normal(u), requires_grad=True, dtype=np.float64)
        return lambda: sum_all(time_distributed_dense(h, w, b, "sigmoid")), [h, w, b]

    def bce_case(trial):
        r = derive_rng(trial, "c4-bce")
        n = int(r.integers(1, 8))
        p = Tensor(r.uniform(0.05, 0.95, n), requires_grad=True, dtype=np.float64)
        y = (r.random(n) > 0.5).astype(np.float64)
        mask = r.random(n) > 0.2
        if not mask.any():
            mask[0] = True
        return lambda: masked_bce_loss(p, y, mask), [p]

    check("embedding", emb_case)
    check("conv1d", conv_case)
    check("lstm_cell", cell_case)
    check("bilstm", bilstm_case)
    check("attention", attn_case)
    check("dense", dense_case)
    check("bce", bce_case)
    elapsed = time.time() - started
    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    _report(
        4, "gradient suite",
        not bad and elapsed < 120,
        f"worst rel. err {max(worst.values()):.2e} over {sorted(worst)} in {elapsed:.1f}s",
    )


def _semeval_paths():
    keys = ("EMPLITE_SEMEVAL_TRAIN", "EMPLITE_SEMEVAL_DEV", "EMPLITE_SEMEVAL_TEST", "EMPLITE_GLOVE")
    paths = [os.environ.get(k) for k in keys]
    if all(p and os.path.exists(p) for p in paths):
        return paths
    return None


def test_criterion_5_end_to_end_training():
    benchmark = _semeval_paths()
    if benchmark is not None:
        train_path, dev_path, test_path, glove_path = benchmark
        train_s = parse_dataset(train_path)
        dev_s = parse_dataset(dev_path)
        test_s = parse_dataset(test_path)
        vocab = build_vocab(train_s)
        glove = subset_glove(glove_path, vocab, dim=50, seed=13)
        config = ModelConfig(variant="emplite_full", seed=13, batch_size=32)
        params, _ = train(config, vocab, train_s, dev_s, glove=glove)
        from emplite.model import evaluate

        score = evaluate(params, config, vocab, test_s)[4]
        _report(5, "end-to-end training (benchmark)", score >= 0.65, f"test average {score:.4f}")
        return

    sentences = parse_dataset(OVERFIT)
    vocab = build_vocab(sentences)
    glove = subset_glove(GLOVE_TINY, vocab, dim=50, seed=13)
    config = ModelConfig(variant="emplite_full", seed=13, batch_size=4, threshold_prob=0.4)
    _, history = train(
        config, vocab, sentences, sentences, glove=glove, max_epochs=200, patience=200
    )
    best = max(h["dev_avg"] for h in history)
    ok = best >= 0.95 and len(history) <= 200
    _report(
        5, "end-to-end training (overfit fallback)", ok,
        f"best fixture average {best:.4f} within {len(history)} epochs",
    )


def test_criterion_6_ablation_ordering(synth_env):
    scores = synth_env["scores"]
    ok = (
        scores["emplite_full"] >= scores["base"]
        and scores["glove_frozen_char_cnn"] >= scores["base"]
    )
    _report(
        6, "ablation ordering", ok,
        "full {emplite_full:.4f} vs base {base:.4f}; frozen char-cnn "
        "{glove_frozen_char_cnn:.4f} vs base {base:.4f}".format(**scores),
    )


def test_criterion_7_footprint(benchmark_vocab, tmp_path):
    vocab = benchmark_vocab
    lo = int(0.8 * PUBLISHED_PARAM_MIN)
    hi = int(1.05 * PUBLISHED_PARAM_MAX)
    counts = {v: count_params(ModelConfig(variant=v), vocab) for v in VARIANTS}
    in_range = all(lo <= c <= hi for c in counts.values())
    full = counts["emplite_full"]
    full_ok = 0.95 * PUBLISHED_PARAM_MAX <= full <= 1.05 * PUBLISHED_PARAM_MAX

    config = ModelConfig(variant="emplite_full", seed=1)
    rng_table = derive_rng(1, "acceptance-glove")
    table = EmbeddingTable(
        Tensor(rng_table.uniform(-0.25, 0.25, (vocab.n_words, 50)).astype(np.float32)),
        trainable=True,
    )
    params = init_params(config, vocab, glove=table)
    bundle = str(tmp_path / "full.empl")
    size = save_model(bundle, config, vocab, params)
    size_ok = size <= 5 * 1024 * 1024
    _report(
        7, "footprint",
        in_range and full_ok and size_ok,
        f"counts {min(counts.values())}..{max(counts.values())} within [{lo}, {hi}], "
        f"full variant {full} (target {PUBLISHED_PARAM_MAX} +/-5%), bundle {size / 1e6:.2f} MB",
    )


def test_criterion_8_vector_subset_size(benchmark_vocab, tmp_path):
    vocab = benchmark_vocab
    rng = derive_rng(8, "acceptance-glove-src")
    source = str(tmp_path / "vectors_full.txt")
    with open(source, "w", encoding="utf-8") as fh:
        # a larger pretrained file: every vocab word plus distractors
        for word in vocab.id_to_word[2:]:
            values = rng.uniform(-0.25, 0.25, 50).astype(np.float32)
            fh.write(word + " " + " ".join(np.format_float_positional(v, unique=True) for v in values) + "\n")
        for i in range(2000):
            values = rng.uniform(-0.25, 0.25, 50).astype(np.float32)
            fh.write(f"distractor{i:05d} " + " ".join(np.format_float_positional(v, unique=True) for v in values) + "\n")
    out = str(tmp_path / "subset.txt")
    subset_glove(source, vocab, dim=50, seed=8, out_path=out)
    size = os.path.getsize(out)
    target = 2.5e6
    ok = abs(size - target) <= 0.2 * target
    _report(8, "vector subset size", ok, f"subset file {size / 1e6:.2f} MB (target 2.5 +/- 0.5)")


def test_criterion_9_serialization(tmp_path):
    sentences = parse_dataset(OVERFIT)
    vocab = build_vocab(sentences)
    glove = subset_glove(GLOVE_TINY, vocab, dim=50, seed=9)
    config = ModelConfig(variant="emplite_full", seed=9)
    params = init_params(config, vocab, glove=glove)
    path = str(tmp_path / "model.empl")
    save_model(path, config, vocab, params)
    config2, vocab2, params2 = load_model(path)

    rng = np.random.default_rng(9)
    pool = vocab.id_to_word[2:]
    exact = True
    for _ in range(100):
        n = int(rng.integers(1, 7))
        tokens = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        if predict(params, config, vocab, tokens).probs != predict(params2, config2, vocab2, tokens).probs:
            exact = False
            break

    blob = bytearray(open(path, "rb").read())
    blob[len(blob) // 2] ^= 0x01
    corrupted = str(tmp_path / "corrupt.empl")
    with open(corrupted, "wb") as fh:
        fh.write(bytes(blob))
    try:
        load_model(corrupted)
        detected = False
    except BundleError as err:
        detected = err.section == "checksum"
    _report(
        9, "serialization", exact and detected,
        f"100-sentence predictions bit-exact {exact}, corruption detected {detected}",
    )


def test_criterion_10_determinism(tmp_path):
    sentences = parse_dataset(OVERFIT)
    vocab = build_vocab(sentences)
    glove = subset_glove(GLOVE_TINY, vocab, dim=50, seed=10)
    config = ModelConfig(variant="emplite_full", seed=10, batch_size=8)

    bundles, histories = [], []
    for run in range(2):
        params, history = train(
            config, vocab, list(sentences), list(sentences), glove=glove,
            max_epochs=6, patience=6,
        )
        path = str(tmp_path / f"run{run}.empl")
        save_model(path, config, vocab, params)
        bundles.append(open(path, "rb").read())
        histories.append(history)
    ok = histories[0] == histories[1] and bundles[0] == bundles[1]
    _report(
        10, "determinism", ok,
        f"histories equal {histories[0] == histories[1]}, bundles equal {bundles[0] == bundles[1]}",
    )


def test_criterion_11_augmentation_direction(synth_env):
    base_score = synth_env["scores"]["emplite_full"]
    vocab = synth_env["vocab"]
    glove = synth_env["glove"]
    dev_s = synth_env["dev"]
    test_s = synth_env["test"]
    from emplite.model import evaluate

    def run(train_sents):
        config = ModelConfig(variant="emplite_full", seed=13)
        params, _ = train(
            config, vocab, train_sents, dev_s, glove=glove, max_epochs=40, patience=10
        )
        return evaluate(params, config, vocab, test_s)[4]

    removed = augment(synth_env["train"], AugmentSpec("remove_le1", 1.0, seed=13))
    tag_corpus(removed)
    remove_score = run(removed)

    uppercased = augment(synth_env["train"], AugmentSpec("uppercase_word", 0.3, seed=13))
    tag_corpus(uppercased)
    upper_score = run(uppercased)

    remove_ok = remove_score - base_score >= -0.03
    upper_ok = upper_score - base_score <= 0.01
    _report(
        11, "augmentation direction", remove_ok and upper_ok,
        f"remove_le1@100% delta {remove_score - base_score:+.4f} (>= -0.03), "
        f"uppercase@30% delta {upper_score - base_score:+.4f} (<= +0.01)",
    )
