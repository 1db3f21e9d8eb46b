import unicodedata

import pytest
from hypothesis import given, settings, strategies as st

from seqtag.corpus import (
    CATEGORIES,
    CorpusError,
    Sentence,
    TaggedCorpus,
    Token,
    UnknownTagError,
    builtin_bis_tagset,
    corpus_from_rows,
    corpus_stats,
    load_tagset_file,
    parse_column_file,
    split_corpus,
    strip_comments,
    write_column_file,
)

BIS = builtin_bis_tagset()

SAMPLE_ROWS = [
    [("দিল্লী", "N_NNP"), ("ভাৰতৰ", "N_NNP"), ("ৰাজধানী", "N_ANN"), ("।", "RD_PUNC")],
    [("প্ৰধানমন্ত্ৰী", "N_ANN"), ("দিল্লীত", "N_NNP"), ("থাকে", "V_VAUX"), ("।", "RD_PUNC")],
]
SAMPLE_TEXT = "\n\n".join("\n".join(f"{w}\t{t}" for w, t in s) for s in SAMPLE_ROWS) + "\n\n"

BIS_CODES = (
    "N_NNP N_CNN N_VNN N_ANN N_MNN N_NST N_NN PR_PRP PR_PRF PR_PRC PR_PRL PR_PRQ PR_PRI "
    "DM_DMD DM_DMR DM_DMQ DM_DMI V_VAUX V_VM V_VBT V_VBI J_PJJ J_VJJ J_JJ RB PSP CC_CCD CC_CCS "
    "SUF RP_RPD RP_INJ RP_NEG RP_INTF QT_QTF QT_QTC QT_QTO RD_RDF RD_SYM RD_PUNC RD_ECH RD_UNK"
).split()


def test_builtin_tagset_shape():
    assert len(BIS) == 41
    assert len(BIS.categories) == 11
    assert BIS.categories == list(CATEGORIES)
    assert BIS.codes == BIS_CODES
    assert BIS.category_of("N_NNP") == ("Noun", "Proper Noun")
    assert BIS.category_of("RD_ECH") == ("Residuals", "Echowords")
    assert BIS.category_of("SUF")[0] == "Particles"
    assert list(BIS.index.values()) == list(range(41))


def test_tagset_records_round_trip():
    from seqtag.corpus import TagSet
    assert TagSet.from_records(BIS.to_records()) == BIS
    text = "".join(f"{c}\t{cat}\t{typ}\n" for c, cat, typ in BIS.to_records())
    assert load_tagset_file(text) == BIS


def test_unknown_code_lookup():
    with pytest.raises(UnknownTagError):
        BIS.ordinal("N_XXXX")


def test_parse_sample():
    c = parse_column_file(SAMPLE_TEXT.encode(), BIS)
    assert len(c.sentences) == 2
    assert [len(s) for s in c.sentences] == [4, 4]
    assert c.sentences[0].surfaces[0] == "দিল্লী"
    assert BIS.code(c.sentences[1].gold[2]) == "V_VAUX"
    st_ = corpus_stats(c)
    assert (st_.sentence_count, st_.token_count) == (2, 8)
    assert st_.tag_histogram == {"N_NNP": 3, "N_ANN": 2, "V_VAUX": 1, "RD_PUNC": 2}


def test_write_sample_programmatic():
    c = corpus_from_rows(SAMPLE_ROWS, BIS)
    assert write_column_file(c).decode() == SAMPLE_TEXT


def test_minimal_write():
    c = corpus_from_rows([[("।", "RD_PUNC")]], BIS)
    assert write_column_file(c) == "।\tRD_PUNC\n\n".encode()


def test_empty_input():
    c = parse_column_file(b"", BIS)
    assert len(c.sentences) == 0 and c.token_count == 0
    s = corpus_stats(c)
    assert (s.sentence_count, s.token_count, s.tag_histogram, s.untagged_count) == (0, 0, {}, 0)


def test_strict_unknown_tag_names_line():
    with pytest.raises(UnknownTagError) as err:
        parse_column_file("দিল্লী N_XXXX\n".encode(), BIS)
    assert err.value.line == 1
    assert "line 1" in str(err.value)
    with pytest.raises(UnknownTagError) as err:
        parse_column_file("a\tN_NN\nb\tN_NN\n\nc\tBAD\n".encode(), BIS)
    assert err.value.line == 4


def test_lenient_keeps_token_with_diagnostic():
    c = parse_column_file("a\tN_NN\nb\tPUNC\n".encode(), BIS, "lenient")
    assert c.sentences[0].gold == [BIS.ordinal("N_NN"), None]
    assert len(c.diagnostics) == 1 and c.diagnostics[0].line == 2


def test_strict_accepts_exactly_the_bis_codes():
    for code in BIS_CODES:
        parse_column_file(f"x\t{code}\n".encode(), BIS)
    for bad in ("PUNC", "SYM", "N_nnp", "NN", "V_VAUXX", "RD_PUNCT"):
        with pytest.raises(CorpusError):
            parse_column_file(f"x\t{bad}\n".encode(), BIS)


def test_separator_tolerance():
    tab = parse_column_file(b"a\tN_NN\nb\tRB\n", BIS)
    spaces = parse_column_file(b"a   N_NN\nb \t RB\n", BIS)
    assert tab == spaces
    assert write_column_file(spaces) == b"a\tN_NN\nb\tRB\n\n"


def test_crlf_bom_and_multiple_blank_lines():
    data = "﻿a\tN_NN\r\n\r\n\r\n\r\nb\tRB\r\n".encode()
    c = parse_column_file(data, BIS)
    assert [s.surfaces for s in c.sentences] == [["a"], ["b"]]


def test_too_many_fields_and_bad_utf8():
    with pytest.raises(CorpusError) as err:
        parse_column_file(b"a\tN_NN\tX\n", BIS)
    assert err.value.line == 1
    with pytest.raises(CorpusError) as err:
        parse_column_file(b"a\tN_NN\n\n\xff\tRB\n", BIS)
    assert err.value.line == 3


def test_comments_and_sentence_ids():
    data = "# source = x\n# sent_id = s-7\na\tN_NN\n\nb\tRB\n".encode()
    c = parse_column_file(data, BIS, name="f.col")
    assert [s.id for s in c.sentences] == ["s-7", "f.col:2"]
    again = parse_column_file(write_column_file(c, with_ids=True), BIS)
    assert again == c
    assert b"#" not in strip_comments(write_column_file(c, with_ids=True))


def test_nfc_normalization():
    decomposed = unicodedata.normalize("NFD", "é")
    c = parse_column_file(f"{decomposed}\tN_NN\n".encode(), BIS)
    assert c.sentences[0].surfaces[0] == "é"
    assert Token(decomposed).surface == "é"
    once = parse_column_file(write_column_file(c), BIS)
    assert once == c


def test_token_and_sentence_invariants():
    with pytest.raises(ValueError):
        Token("")
    with pytest.raises(ValueError):
        Token("a b")
    with pytest.raises(ValueError):
        Sentence(())


def test_untagged_tokens_round_trip():
    c = parse_column_file(b"a\nb\tRB\n", BIS)
    assert c.sentences[0].gold == [None, BIS.ordinal("RB")]
    assert corpus_stats(c).untagged_count == 1
    assert parse_column_file(write_column_file(c), BIS) == c


def _numbered(n):
    return TaggedCorpus(
        tuple(Sentence((Token(f"w{i}", i % 41),), f"c:{i}") for i in range(n)), BIS)


def test_split_sizes_and_determinism():
    c = _numbered(10)
    parts = split_corpus(c, (0.8, 0.1, 0.1), seed=7)
    assert tuple(len(p.sentences) for p in parts) == (8, 1, 1)
    assert parts == split_corpus(c, (0.8, 0.1, 0.1), seed=7)
    assert parts != split_corpus(c, (0.8, 0.1, 0.1), seed=8)


def test_split_partition():
    c = _numbered(100)
    parts = split_corpus(c, seed=3)
    ids = [set(s.id for s in p.sentences) for p in parts]
    assert set().union(*ids) == {s.id for s in c.sentences}
    for i in range(3):
        for j in range(i + 1, 3):
            assert not ids[i] & ids[j]
    assert sum(len(p.sentences) for p in parts) == 100


def test_split_errors():
    with pytest.raises(ValueError):
        split_corpus(_numbered(2), (0.8, 0.1, 0.1))
    with pytest.raises(ValueError):
        split_corpus(_numbered(10), (0.5, 0.2))


def test_histogram_sums_to_token_count():
    from seqtag import synthetic
    c = synthetic.unambiguous(n_train=50, n_dev=1, n_test=1, seed=4).train
    s = corpus_stats(c)
    assert sum(s.tag_histogram.values()) == s.token_count
    recount = {}
    for sent in c.sentences:
        for g in sent.gold:
            recount[BIS.code(g)] = recount.get(BIS.code(g), 0) + 1
    assert s.tag_histogram == recount


def test_oov_candidates():
    c = parse_column_file(b"a\tN_NN\nb\tRB\na\tN_NN\n", BIS)
    assert corpus_stats(c, vocabulary=["b"]).oov_candidates == ("a",)


surface = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Zs", "Zl", "Zp", "Cc"), blacklist_characters="#"),
    min_size=1, max_size=6,
).filter(lambda s: not any(ch.isspace() for ch in s))


@st.composite
def corpora(draw):
    rows = draw(st.lists(
        st.lists(st.tuples(surface, st.one_of(st.none(), st.integers(0, 40))), min_size=1, max_size=8),
        max_size=6,
    ))
    sents = tuple(
        Sentence(tuple(Token(s, g) for s, g in row), f"<input>:{i}") for i, row in enumerate(rows, 1)
    )
    return TaggedCorpus(sents, BIS)


@settings(max_examples=200, deadline=None)
@given(corpora())
def test_property_round_trip(c):
    assert parse_column_file(write_column_file(c), BIS) == c
    assert parse_column_file(write_column_file(c, with_ids=True), BIS) == c
    data = write_column_file(c)
    assert write_column_file(parse_column_file(data, BIS)) == data
