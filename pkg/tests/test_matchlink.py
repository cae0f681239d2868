import pytest
from hypothesis import given
from hypothesis import strategies as st

from govimpact.matchlink import (Token, chunk3, jaccard, load_keywords, match_actors,
                                 normalize_name, similarity)


def test_normalize_examples():
    assert normalize_name("Curve.fi!") == "curvefi"
    assert normalize_name("DAO Maker") == "dao maker"
    assert normalize_name("  Yearn\tFinance \n") == "yearn finance"
    assert normalize_name("") == ""


def test_chunk3_examples():
    assert chunk3("pickle") == {"pic", "ick", "ckl", "kle"}
    assert chunk3("ab") == {"ab"}
    assert chunk3("ab cde") == {"ab", "cde"}
    assert chunk3("") == frozenset()


def test_jaccard_examples():
    # pickles adds "les": 4 shared of 5 total
    assert jaccard(chunk3("pickle"), chunk3("pickles")) == 0.8
    assert jaccard({"abc"}, {"abc"}) == 1.0
    assert jaccard({"abc"}, {"xyz"}) == 0.0
    assert jaccard(set(), set()) == 0.0


words = st.text("abcdefg ", max_size=12)


@given(words, words)
def test_jaccard_symmetric_and_bounded(x, y):
    a, b = chunk3(x), chunk3(y)
    assert jaccard(a, b) == jaccard(b, a)
    assert 0.0 <= jaccard(a, b) <= 1.0
    if a:
        assert jaccard(a, a) == 1.0


def test_match_by_id():
    [m] = match_actors(["curve"], [Token("curve", "Curve DAO Token")])
    assert m.score_id == 1.0 and m.matched and m.rule == "id_0.8"


def test_keyword_lowers_name_threshold():
    # compound: 6 chunks; name adds dao plus 5 chunks of network -> 6/12
    tok = Token("comp", "Compound DAO Network")
    [m] = match_actors(["Compound"], [tok])
    assert m.score_name == 0.5 and m.matched and m.rule == "keyword_0.5"
    [m] = match_actors(["Compound"], [tok], keywords=[])
    assert not m.matched and m.rule == ""


def test_identical_keyword_name_matches_on_name():
    [m] = match_actors(["dao maker"], [Token("dao", "dao maker dao")])
    assert m.score_name == 1.0 and m.rule == "name_0.7"


def test_unrelated_names_unmatched():
    [m] = match_actors(["lazarus"], [Token("uni", "Uniswap")])
    assert m.score_id == 0.0 and m.score_name == 0.0 and not m.matched


def test_all_pairs_emitted():
    out = match_actors(["a1", "b2", "a1"], [Token("x", "X"), Token("y", "Y"), Token("z", "Z")])
    assert len(out) == 6


names = st.lists(st.text("abcdo ", min_size=1, max_size=10), min_size=1, max_size=5)
toks = st.lists(st.builds(Token, st.text("abcd", max_size=6),
                          st.sampled_from(["abc dao", "bcd network", "abcd", "cab", "dd"])),
                max_size=5)


@given(names, toks, st.permutations(range(5)))
def test_order_independent(actors, tokens, perm):
    shuffled = [actors[i] for i in perm if i < len(actors)]
    assert match_actors(shuffled, tokens) == match_actors(actors, tokens)


@given(names, toks, st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 0.3))
def test_lower_thresholds_keep_matches(actors, tokens, d_id, d_name, d_kw):
    base = match_actors(actors, tokens)
    lower = match_actors(actors, tokens, id_threshold=0.8 - d_id, name_threshold=0.7 - d_name,
                         keyword_threshold=0.5 - d_kw)
    for a, b in zip(base, lower):
        assert (a.actor, a.token_id) == (b.actor, b.token_id)
        assert b.matched or not a.matched


def test_similarity_normalizes():
    assert similarity("Curve.fi", "curvefi") == 1.0


def test_load_keywords(tmp_path):
    p = tmp_path / "kw.txt"
    p.write_text("# defi words\nDAO\n\nswap\n")
    assert load_keywords(p) == {"dao", "swap"}
