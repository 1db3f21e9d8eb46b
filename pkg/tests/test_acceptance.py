"""Acceptance criteria, one test per criterion.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the measured
values; the terminal summary prints one PASS/FAIL line per criterion either way.
"""

import time
import unicodedata

import numpy as np
import pytest

from seqtag import synthetic
from seqtag.bootstrap import annotate_raw, bootstrap_cycle, corpus_digest
from seqtag.checkpoint import load_model, save_model
from seqtag.corpus import (
    Sentence,
    TaggedCorpus,
    Token,
    UnknownTagError,
    builtin_bis_tagset,
    corpus_from_rows,
    parse_column_file,
    write_column_file,
)
from seqtag.crf import (
    Transitions,
    log_partition,
    nll_loss,
    posterior_marginals,
    viterbi_decode,
)
from seqtag.embeddings import (
    CharEncoder,
    EmbeddingStack,
    PrecomputedContextual,
    StaticTable,
    embed_sentence,
)
from seqtag.evaluation import evaluate
from seqtag.training import TrainingConfig, tag_corpus, train

import factories as F
import oracles
from test_corpus import SAMPLE_ROWS, SAMPLE_TEXT, BIS_CODES

BIS = builtin_bis_tagset()


def _accuracy(model, corpus):
    return evaluate(corpus, tag_corpus(model, corpus), top_k=0).accuracy


@pytest.mark.criterion(1, "CRF matches exhaustive enumeration")
def test_crf_oracle_equivalence(detail):
    rng = np.random.default_rng(20260101)
    start_time = time.perf_counter()
    worst = 0.0
    instances = 1200
    for _ in range(instances):
        e, A, start, end = oracles.random_crf(rng, n_max=4, t_max=5)
        trans = Transitions(A, start, end)
        log_z, marg, best, argmax, logp = oracles.enumerate_crf(e, A, start, end)
        gold = tuple(int(t) for t in rng.integers(e.shape[1], size=e.shape[0]))
        path, score = viterbi_decode(e, trans)
        errs = (
            abs(log_partition(e, trans) - log_z),
            abs(nll_loss(e, trans, gold) + logp[gold]),
            float(np.max(np.abs(posterior_marginals(e, trans) - marg))),
            abs(score - best),
            abs(oracles.path_score(e, A, start, end, path) - best),
        )
        assert max(errs) <= 1e-9, errs
        assert tuple(path) in argmax
        worst = max(worst, *errs)
    elapsed = time.perf_counter() - start_time
    detail(f"{instances} instances, max error {worst:.1e}, {elapsed:.1f}s")
    assert elapsed < 60


@pytest.mark.criterion(2, "BiLSTM-CRF gradients match central differences")
def test_gradient_fidelity(detail):
    rng = np.random.default_rng(7)
    start_time = time.perf_counter()
    worst_rel = worst_abs = 0.0
    models = 100
    for i in range(models):
        n = int(rng.integers(1, 5))
        sent = F.random_sentence(rng, 6, n, sid=f"g:{i}")
        model = F.tiny_model(rng, arch="bilstm-crf", T=None, max_dim=6,
                             precomputed_for=sent if i % 3 == 0 else None)
        sent = sent.with_tags([g % len(model.tagset) for g in sent.gold])
        model.zero_grad()
        model.forward_loss(sent)
        model.backward()
        for name, p in model.params().items():
            numeric = oracles.central_difference(lambda: model.loss(sent), p.value, 1e-5)
            worst_rel = max(worst_rel, oracles.rel_error(p.grad, numeric))
            worst_abs = max(worst_abs, float(np.max(np.abs(p.grad - numeric), initial=0.0)))
    elapsed = time.perf_counter() - start_time
    detail(f"{models} models, max rel error {worst_rel:.1e}, max abs error {worst_abs:.1e}, {elapsed:.1f}s")
    assert worst_rel < 1e-4
    assert elapsed < 120


@pytest.mark.criterion(3, "d log Z / d e equals the posterior marginals")
def test_marginal_identity(detail):
    rng = np.random.default_rng(3)
    worst_fd = worst_row = 0.0
    for k in range(300):
        # enumeration-sized instances plus some longer ones
        n_max, t_max = (4, 5) if k % 2 else (12, 8)
        e, A, start, end = oracles.random_crf(rng, n_max=n_max, t_max=t_max)
        trans = Transitions(A, start, end)
        marg = posterior_marginals(e, trans)
        numeric = oracles.central_difference(lambda: log_partition(e, trans), e, 1e-5)
        worst_fd = max(worst_fd, float(np.max(np.abs(numeric - marg))))
        worst_row = max(worst_row, float(np.max(np.abs(marg.sum(axis=1) - 1.0))))
    detail(f"300 instances, max |fd - marginal| {worst_fd:.1e}, max |row sum - 1| {worst_row:.1e}")
    assert worst_fd <= 1e-6
    assert worst_row <= 1e-9


@pytest.mark.criterion(4, "per-position emission shifts")
def test_shift_invariance(detail):
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(1000):
        e, A, start, end = oracles.random_crf(rng, n_max=10, t_max=8)
        trans = Transitions(A, start, end)
        c = rng.normal(0, 5, e.shape[0])
        shifted = e + c[:, None]
        assert viterbi_decode(shifted, trans)[0] == viterbi_decode(e, trans)[0]
        d_marg = float(np.max(np.abs(posterior_marginals(shifted, trans) - posterior_marginals(e, trans))))
        d_z = abs(log_partition(shifted, trans) - log_partition(e, trans) - c.sum())
        assert d_marg <= 1e-9 and d_z <= 1e-9
        worst = max(worst, d_marg, d_z)
    detail(f"1000 instances, identical paths, max error {worst:.1e}")


@pytest.mark.criterion(5, "convergence on the unambiguous corpus")
def test_synthetic_convergence(converged, detail):
    cfg = converged.config
    assert (cfg.hidden_size, cfg.hidden_layers) == (32, 1)
    assert (cfg.learning_rate, cfg.word_dropout, cfg.mini_batch_size) == (0.01, 0.05, 16)
    data = converged.data
    assert len(set(data.lexicon.values())) >= 6
    assert synthetic.vocabulary(data) and len(data.lexicon) == 200
    assert [len(c.sentences) for c in (data.train, data.dev, data.test)] == [500, 50, 50]
    acc = _accuracy(converged.model, data.test)
    detail(f"test accuracy {acc:.4f} after {len(converged.curve)} epochs, {converged.seconds:.1f}s")
    assert acc >= 0.99
    assert len(converged.curve) <= 20
    assert converged.seconds < 300


@pytest.mark.slow
@pytest.mark.criterion(6, "BiLSTM-CRF beats CRF-only on context ambiguity")
def test_architecture_ordering(detail):
    gaps = []
    for seed in range(3):
        data = synthetic.context_ambiguous(seed=seed)
        scores = {}
        for tagger in ("bilstm-crf", "crf"):
            cfg = F.scaled_config(seed=seed, tagger=tagger)
            model, _ = train(F.fresh_model(data, cfg), data.train, data.dev, cfg)
            scores[tagger] = _accuracy(model, data.test)
        gap = scores["bilstm-crf"] - scores["crf"]
        gaps.append(gap)
        detail(f"seed {seed}: {scores['bilstm-crf']:.3f} vs {scores['crf']:.3f}")
    assert min(gaps) >= 0.05, gaps


@pytest.mark.criterion(7, "stacked embedding equals concatenation")
def test_stacking(detail):
    rng = np.random.default_rng(8)
    words = ["a", "b", "c", "dd", "ab"]
    stacks = 200
    for k in range(stacks):
        n = int(rng.integers(1, 6))
        sent = Sentence(tuple(Token(str(w)) for w in rng.choice(words + ["zz"], size=n)), f"s:{k}")
        providers = []
        for i in range(int(rng.integers(1, 5))):
            kind = int(rng.integers(3))
            if kind == 0:
                providers.append(StaticTable.random(words[: int(rng.integers(1, 6))], int(rng.integers(1, 9)),
                                                    rng, name=f"p{i}", trainable=bool(rng.integers(2))))
            elif kind == 1:
                d = int(rng.integers(1, 9))
                providers.append(PrecomputedContextual({(sent.id, j): rng.normal(size=d) for j in range(n)},
                                                       d, f"p{i}"))
            else:
                providers.append(CharEncoder.init("abcd", rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                                                  name=f"p{i}"))
        stack = EmbeddingStack(providers)
        out = embed_sentence(stack, sent)
        assert stack.total_dim == sum(p.dim for p in providers) == out.shape[1]
        manual = np.concatenate([p.forward(sent)[0] for p in providers], axis=1)
        assert np.array_equal(out, manual)
    detail(f"{stacks} random stacks")


_ALPHABET = "অআইকখগঘচজটডতদনপবমৰলৱসহািীুূেৈোৌং়্" + "abcxyzÉéñ0123-_.,!?/" + "।"


def _random_corpus(rng):
    sents = []
    for i in range(int(rng.integers(0, 6))):
        toks = []
        for _ in range(int(rng.integers(1, 9))):
            surface = "".join(rng.choice(list(_ALPHABET), size=int(rng.integers(1, 7))))
            surface = unicodedata.normalize("NFC", surface)
            if surface.startswith("#"):
                surface = "x" + surface
            gold = None if rng.random() < 0.1 else int(rng.integers(len(BIS)))
            toks.append(Token(surface, gold))
        sents.append(Sentence(tuple(toks), f"<input>:{i + 1}"))
    return TaggedCorpus(tuple(sents), BIS)


@pytest.mark.criterion(8, "column format round-trip and the built-in tagset")
def test_corpus_round_trip(detail):
    rng = np.random.default_rng(9)
    for _ in range(1000):
        c = _random_corpus(rng)
        assert parse_column_file(write_column_file(c), BIS) == c
        assert parse_column_file(write_column_file(c, with_ids=True), BIS) == c
    table = corpus_from_rows(SAMPLE_ROWS, BIS)
    assert parse_column_file(SAMPLE_TEXT.encode(), BIS) == table
    assert write_column_file(table).decode() == SAMPLE_TEXT

    assert len(BIS) == 41 and len(BIS.categories) == 11
    assert tuple(BIS.codes) == tuple(BIS_CODES)
    for code in BIS_CODES:
        assert parse_column_file(f"x\t{code}\n", BIS, "strict").sentences[0].gold == [BIS.ordinal(code)]
    near_misses = {c.lower() for c in BIS_CODES} | {c + "X" for c in BIS_CODES}
    near_misses |= {c.split("_")[-1] for c in BIS_CODES if "_" in c} | {"NN", "VM", "PUNC", "N", "X", "UNK"}
    near_misses -= set(BIS_CODES)
    for code in sorted(near_misses):
        with pytest.raises(UnknownTagError):
            parse_column_file(f"x\t{code}\n", BIS, "strict")
    detail(f"1000 random corpora, {len(near_misses)} non-codes rejected")


@pytest.mark.criterion(9, "same seed gives identical weights; save/load keeps predictions")
def test_determinism_and_persistence(converged, tmp_path, detail):
    data = synthetic.unambiguous(n_train=60, n_dev=10, n_test=10, vocab_size=40, seed=2)
    cfg = TrainingConfig(hidden_size=8, hidden_layers=2, max_epochs=3, seed=2)
    runs = [train(F.fresh_model(data, cfg, dim=10), data.train, data.dev, cfg)[0] for _ in range(2)]
    p1, p2 = runs[0].params(), runs[1].params()
    assert p1.keys() == p2.keys()
    for k in p1:
        assert p1[k].value.tobytes() == p2[k].value.tobytes(), k

    path = tmp_path / "m.ckpt"
    save_model(converged.model, path)
    back = load_model(path)
    rng = np.random.default_rng(10)
    vocab = synthetic.vocabulary(converged.data) + ["unseen1", "unseen2"]
    for i in range(100):
        sent = Sentence(tuple(Token(str(w)) for w in rng.choice(vocab, size=int(rng.integers(1, 15)))), f"r:{i}")
        assert back.tag(sent) == converged.model.tag(sent)
    detail(f"{len(p1)} parameter arrays bitwise equal, 100 sentences tagged identically")


@pytest.mark.criterion(10, "micro F1 equals accuracy; hand-computed example")
def test_evaluation_identities(detail):
    rng = np.random.default_rng(11)
    for _ in range(500):
        T = int(rng.integers(1, len(BIS) + 1))
        sents_g, sents_p = [], []
        for i in range(int(rng.integers(1, 6))):
            n = int(rng.integers(1, 10))
            gold = rng.integers(T, size=n)
            # mostly right, so that accuracy covers the whole range
            pred = np.where(rng.random(n) < rng.random(), gold, rng.integers(T, size=n))
            words = [f"w{j}" for j in range(n)]
            sents_g.append(Sentence(tuple(Token(w, int(t)) for w, t in zip(words, gold)), f"s:{i}"))
            sents_p.append(Sentence(tuple(Token(w, int(t)) for w, t in zip(words, pred)), f"s:{i}"))
        r = evaluate(TaggedCorpus(tuple(sents_g), BIS), TaggedCorpus(tuple(sents_p), BIS))
        assert r.micro_f1 == r.accuracy

    from seqtag.corpus import TagSet
    ab = TagSet.from_codes(["A", "B"])
    words = [f"w{i}" for i in range(10)]
    gold = TaggedCorpus((Sentence(tuple(Token(w, 0 if i < 5 else 1) for i, w in enumerate(words)), "h:1"),), ab)
    pred = TaggedCorpus((Sentence(tuple(Token(w, 0 if i < 8 else 1) for i, w in enumerate(words)), "h:1"),), ab)
    r = evaluate(gold, pred)
    assert r.accuracy == 0.7
    assert r.per_tag["A"].f1 == 10 / 13 and r.per_tag["B"].f1 == 4 / 7
    detail("500 random prediction sets; hand example 0.7, 10/13, 4/7 exact")


# filler words with different tags, kept out of training so the incumbent guesses them
HELD_BACK = ("w003", "w011", "w017", "w024", "w040")


@pytest.mark.slow
@pytest.mark.criterion(11, "bootstrap cycle contract")
def test_bootstrap_contract(detail):
    data = synthetic.context_ambiguous(seed=0, exclude_from_train=HELD_BACK)
    # same generator, longer test split: its first 100 sentences are the held-out
    # set, so corrections come only from the tail
    pool = synthetic.context_ambiguous(seed=0, n_test=300, exclude_from_train=HELD_BACK).test.sentences
    assert pool[:100] == data.test.sentences
    fixes = [s for s in pool[100:] if set(s.surfaces) & set(HELD_BACK)]
    assert fixes

    cfg = F.scaled_config(seed=0)
    incumbent, _ = train(F.fresh_model(data, cfg), data.train, data.dev, cfg)
    raw = "\n".join(" ".join(s.surfaces) for s in fixes)
    review = annotate_raw(incumbent, raw, "raw.txt")
    wrong = sum(p != g for r, s in zip(review.corpus.sentences, fixes) for p, g in zip(r.gold, s.gold))
    assert wrong > 0, "the constructed error should be visible in the incumbent's suggestions"
    corrected = review.corpus.replace(r.with_tags(s.gold) for r, s in zip(review.corpus.sentences, fixes))

    digest = corpus_digest(data.test)
    result = bootstrap_cycle(incumbent, raw, [corrected], cfg.replace(max_epochs=10),
                             base=data.train, dev=data.dev, held_out=data.test, source="raw.txt")
    assert result.eval_digest == digest == corpus_digest(data.test)
    assert result.merged.token_count == data.train.token_count + corrected.token_count
    before, after = result.before.accuracy, result.after.accuracy
    detail(f"{wrong} tokens corrected; held-out accuracy {before:.4f} -> {after:.4f}")
    assert after >= before
