import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_satisfies, random_descriptor
from vpm.errors import EmptyDescriptor, RangeSyntaxError, UrlDependencyUnsupported
from vpm.ranges import (
    Comparator,
    Exact,
    HyphenRange,
    Tilde,
    Wildcard,
    XRange,
    desugar,
    max_satisfying,
    parse_range,
    satisfies,
)
from vpm.version import Version, parse_version

V = parse_version

# every descriptor of the package.json snippet except the URL one
SNIPPET = {
    "foo": "1.0.0 - 2.9999.9999",
    "bar": ">=1.0.2 <2.1.2",
    "baz": ">1.0.2 <=2.3.4",
    "boo": "2.0.1",
    "qux": "<1.0.0 || >=2.3.1 <2.4.5",
    "til": "~1.2",
    "elf": "~1.2.3",
    "two": "2.x",
    "thr": "3.3.x",
}

# 0.0.0 .. 3.3.3 plus the shorter forms, so prefix edges are exercised
GRID = [Version(c) for n in (1, 2, 3) for c in itertools.product(range(4), repeat=n)]


def _texts(comparators):
    return [str(c) for c in comparators]


@pytest.mark.parametrize("name", sorted(SNIPPET))
def test_snippet_parses_and_round_trips(name):
    r = parse_range(SNIPPET[name])
    assert r.source_text == SNIPPET[name]
    assert parse_range(r.source_text) == r
    assert parse_range(str(r.alternatives[0])).alternatives[0] == r.alternatives[0]


def test_snippet_structures():
    bar = parse_range(SNIPPET["bar"])
    assert len(bar.alternatives) == 1
    assert bar.alternatives[0].primitives == (Comparator(">=", V("1.0.2")), Comparator("<", V("2.1.2")))
    qux = parse_range(SNIPPET["qux"])
    assert len(qux.alternatives) == 2
    assert [len(a.primitives) for a in qux.alternatives] == [1, 2]
    assert parse_range(SNIPPET["foo"]).alternatives[0].primitives == (HyphenRange(V("1.0.0"), V("2.9999.9999")),)
    assert parse_range(SNIPPET["boo"]).alternatives[0].primitives == (Exact(V("2.0.1")),)
    assert parse_range(SNIPPET["til"]).alternatives[0].primitives == (Tilde(V("1.2")),)
    assert parse_range(SNIPPET["two"]).alternatives[0].primitives == (XRange((2,)),)
    assert parse_range(SNIPPET["thr"]).alternatives[0].primitives == (XRange((3, 3)),)
    assert parse_range("7.3-x").alternatives[0].primitives == (XRange((7, 3)),)
    assert parse_range("*").alternatives[0].primitives == (Wildcard(),)


@pytest.mark.parametrize("text", ["http://asdf.com/asdf.tar.gz", "https://x.org/y.tgz", ">=1.0 || http://a/b"])
def test_url_rejected(text):
    with pytest.raises(UrlDependencyUnsupported):
        parse_range(text)


@pytest.mark.parametrize("text, error", [
    ("", EmptyDescriptor),
    ("   ", EmptyDescriptor),
    ("1.0 ||", RangeSyntaxError),
    ("|| 1.0", RangeSyntaxError),
    ("1.0 | 2.0", RangeSyntaxError),
    ("~1", RangeSyntaxError),
    ("^1.2.3", RangeSyntaxError),
    ("=1.2", RangeSyntaxError),
    (">", RangeSyntaxError),
    ("1.x.2", RangeSyntaxError),
    ("x", RangeSyntaxError),
    ("1.0 -", RangeSyntaxError),
    ("- 1.0", RangeSyntaxError),
    ("1.2b", RangeSyntaxError),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_range(text)


def test_syntax_error_has_position():
    with pytest.raises(RangeSyntaxError) as info:
        parse_range(">=1.0 <2.b")
    assert info.value.position == 7  # start of the offending version


def test_detached_operator():
    assert parse_range(">= 1.0") == parse_range(">=1.0")


# desugar expectations were frozen from brute-force enumeration over GRID below
@pytest.mark.parametrize("prim, expected", [
    (Tilde(V("1.2")), [">=1.2", "<1.3"]),
    (Tilde(V("1.2.3")), [">=1.2.3", "<1.3"]),
    (XRange((3, 3)), [">=3.3", "<3.4"]),
    (XRange((2,)), [">=2", "<3"]),
    (HyphenRange(V("1.0.0"), V("2.9999.9999")), [">=1.0.0", "<=2.9999.9999"]),
    (Exact(V("2.0.1")), ["==2.0.1"]),
    (Comparator(">", V("1.0.2")), [">1.0.2"]),
])
def test_desugar(prim, expected):
    assert _texts(desugar(prim)) == expected


def test_tilde_and_xrange_sets_by_enumeration():
    tilde = {v for v in GRID if satisfies(v, parse_range("~1.2"))}
    assert tilde == {v for v in GRID if (1, 2) <= v.components < (1, 3)}
    xr = {v for v in GRID if satisfies(v, parse_range("3.3.x"))}
    assert xr == {v for v in GRID if (3, 3) <= v.components < (3, 4)}
    # 1.2 itself is admitted by ~1.2, 1.3 and 1.3.0 are not
    assert V("1.2") in parse_range("~1.2")
    assert V("1.3") not in parse_range("~1.2")


@pytest.mark.parametrize("version, text, expected", [
    ("1.0.2", ">1.0.2 <=2.3.4", False),
    ("2.3.4", ">1.0.2 <=2.3.4", True),
    ("2.0.1", "2.0.1", True),
    ("2.0.1.0", "2.0.1", False),
    ("2.4.0", "<1.0.0 || >=2.3.1 <2.4.5", True),
    ("1.5.0", "<1.0.0 || >=2.3.1 <2.4.5", False),
    ("0.9.9", "<1.0.0 || >=2.3.1 <2.4.5", True),
    ("2.9999.9999", "1.0.0 - 2.9999.9999", True),
    ("1.0.0", "1.0.0 - 2.9999.9999", True),
    ("3.0", "1.0.0 - 2.9999.9999", False),
    ("7.3-22", "7.3-x", True),
    ("0.8.9", "0.8.x", True),
    ("0.9.0", "0.8.x", False),
])
def test_satisfies(version, text, expected):
    assert satisfies(V(version), parse_range(text)) is expected


def test_max_satisfying():
    cands = [V("1.0.0"), V("1.2.7"), V("1.3.1")]
    assert max_satisfying(cands, parse_range("~1.2")) == V("1.2.7")
    assert max_satisfying([], parse_range("*")) is None
    assert max_satisfying([V("0.8.9"), V("0.9.0")], parse_range("*")) == V("0.9.0")
    assert max_satisfying(cands, parse_range(">5")) is None


def test_oracle_equivalence_sample():
    rng = random.Random(7)
    for _ in range(2000):
        structure, text = random_descriptor(rng)
        r = parse_range(text)
        for v in rng.sample(GRID, 5):
            assert satisfies(v, r) == oracle_satisfies(v.components, structure), (text, v)


versions = st.lists(st.integers(0, 5), min_size=1, max_size=4).map(lambda c: Version(tuple(c)))


@settings(max_examples=200)
@given(st.lists(versions, min_size=1, max_size=10))
def test_wildcard_selects_max(vs):
    assert max_satisfying(vs, parse_range("*")) == max(vs)


@settings(max_examples=200)
@given(st.randoms(use_true_random=False), versions)
def test_disjunction_soundness(rnd, v):
    (_, a), (_, b) = random_descriptor(rnd, max_alts=1), random_descriptor(rnd, max_alts=1)
    assert satisfies(v, parse_range(f"{a} || {b}")) == (
        satisfies(v, parse_range(a)) or satisfies(v, parse_range(b)))


@settings(max_examples=200)
@given(st.randoms(use_true_random=False))
def test_parse_is_idempotent(rnd):
    _, text = random_descriptor(rnd)
    r = parse_range(text)
    assert parse_range(r.source_text) == r
    assert parse_range(" || ".join(map(str, r.alternatives))) == r
