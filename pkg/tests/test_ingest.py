import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosslink.errors import ContractError, ParseError
from crosslink.ingest import (
    bundled_oui_path,
    load_embeddings,
    load_oui,
    load_registry,
    load_sessions,
    load_sightings,
    load_truth,
    sessionize,
    write_embeddings,
    write_sessions,
    write_sightings,
)
from crosslink.model import MacAddress, Session, Sighting, parse_mac

MAC = parse_mac("00:11:22:33:44:55")


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def jsonl(*objs):
    return "".join(json.dumps(o) + "\n" for o in objs)


def test_sessions_ordered(tmp_path):
    p = write(
        tmp_path,
        "s.jsonl",
        jsonl(
            {"id": "b", "start_ms": 7200000, "end_ms": 10800000, "location": "x"},
            {"id": "a", "start_ms": 0, "end_ms": 3600000, "location": "x"},
        ),
    )
    assert [s.id for s in load_sessions(p)] == ["a", "b"]


def test_sessions_bad_window_names_line(tmp_path):
    p = write(
        tmp_path,
        "s.jsonl",
        jsonl({"id": "a", "start_ms": 0, "end_ms": 10}, {"id": "b", "start_ms": 20, "end_ms": 5}),
    )
    with pytest.raises(ParseError, match=":2:"):
        load_sessions(p)


def test_sessions_duplicate_id(tmp_path):
    p = write(tmp_path, "s.jsonl", jsonl({"id": "a", "start_ms": 0, "end_ms": 10}, {"id": "a", "start_ms": 20, "end_ms": 30}))
    with pytest.raises(ParseError, match="duplicate"):
        load_sessions(p)


def test_sessions_empty_and_lenient(tmp_path):
    assert load_sessions(write(tmp_path, "e.jsonl", "")) == []
    p = write(tmp_path, "s.jsonl", jsonl({"id": "a", "start_ms": 0, "end_ms": 10}) + "{not json\n")
    skipped = []
    assert len(load_sessions(p, strict=False, skipped=skipped)) == 1
    assert skipped and skipped[0][0] == 2


def test_sightings_parse(tmp_path):
    p = write(tmp_path, "x.csv", "timestamp_ms,mac,rss_dbm\n1600000000000,aa:bb:cc:dd:ee:ff,-42\n")
    (s,) = load_sightings(p)
    assert s == Sighting(parse_mac("aa:bb:cc:dd:ee:ff"), 1600000000000, -42)


def test_sightings_rss_range(tmp_path):
    p = write(tmp_path, "x.csv", "timestamp_ms,mac,rss_dbm\n1,aa:bb:cc:dd:ee:ff,-130\n")
    with pytest.raises(ParseError):
        load_sightings(p)


def test_sightings_strict_names_row(tmp_path):
    text = "timestamp_ms,mac,rss_dbm\n1,aa:bb:cc:dd:ee:ff,-40\n2,aa:bb:cc:dd:ee,-40\n3,aa:bb:cc:dd:ee:ff,-40\n"
    p = write(tmp_path, "x.csv", text)
    # the malformed record is the second data row, on line 3 of the file
    with pytest.raises(ParseError, match=":3:"):
        load_sightings(p)
    assert len(load_sightings(p, strict=False)) == 2


def test_sightings_header_and_non_integer(tmp_path):
    with pytest.raises(ParseError):
        load_sightings(write(tmp_path, "h.csv", "ts,mac,rss\n"))
    with pytest.raises(ParseError):
        load_sightings(write(tmp_path, "n.csv", "timestamp_ms,mac,rss_dbm\n1,aa:bb:cc:dd:ee:ff,-4.5\n"))


def test_embeddings_normalized(tmp_path):
    p = write(tmp_path, "e.jsonl", jsonl({"sample_id": "x", "session_id": "a", "vector": [3, 4], "true_label": "u"}))
    (s,) = load_embeddings(p)
    np.testing.assert_allclose(s.embedding, [0.6, 0.8], atol=1e-12)
    assert s.true_label == "u"


def test_embeddings_dimension_mismatch(tmp_path):
    p = write(
        tmp_path,
        "e.jsonl",
        jsonl({"sample_id": "x", "session_id": "a", "vector": [1.0] * 64}, {"sample_id": "y", "session_id": "a", "vector": [1.0] * 32}),
    )
    with pytest.raises(ParseError, match="dimension"):
        load_embeddings(p)
    with pytest.raises(ParseError):
        load_embeddings(p, strict=False)


def test_embeddings_zero_vector(tmp_path):
    p = write(tmp_path, "e.jsonl", jsonl({"sample_id": "x", "session_id": "a", "vector": [0, 0, 0]}))
    with pytest.raises(ParseError):
        load_embeddings(p)


def test_oui(tmp_path):
    db = load_oui(write(tmp_path, "o.csv", "prefix,vendor\n001122,ExampleCorp\n"))
    assert db.entries == {(0x00, 0x11, 0x22): "ExampleCorp"}
    assert db.vendor(MAC) == "ExampleCorp"
    with pytest.raises(ParseError, match="duplicate"):
        load_oui(write(tmp_path, "d.csv", "prefix,vendor\n001122,A\n001122,B\n"))
    with pytest.raises(ParseError):
        load_oui(write(tmp_path, "m.csv", "prefix,vendor\n00112G,A\n"))
    assert len(load_oui(write(tmp_path, "e.csv", ""))) == 0


def test_bundled_oui_loads():
    db = load_oui(bundled_oui_path())
    vendors = " ".join(db.entries.values()).lower()
    for brand in ("cisco", "netgear", "tp-link", "apple"):
        assert brand in vendors


def test_registry_and_truth(tmp_path):
    reg = load_registry(write(tmp_path, "r.csv", "mac,owner\n00:11:22:33:44:55,alice\n"))
    assert reg == {MAC: "alice"}
    labels, owners = load_truth(
        write(tmp_path, "t.jsonl", jsonl({"sample_id": "x", "subject": "alice"}, {"mac": str(MAC), "subject": "alice"}))
    )
    assert labels == {"x": "alice"} and owners == {MAC: "alice"}


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        load_sightings(tmp_path / "nope.csv")


def test_sessionize_examples():
    sessions = [Session("s", 0, 200)]
    out = sessionize([Sighting(MAC, 100, -50)], sessions)
    assert out.per_session["s"] == {MAC: -50}
    out = sessionize([Sighting(MAC, 10, -60), Sighting(MAC, 20, -40)], sessions)
    assert out.per_session["s"][MAC] == -40
    out = sessionize([Sighting(MAC, 200, -40)], sessions)
    assert out.per_session["s"] == {} and out.dropped == 1


def test_sessionize_overlap_goes_to_earliest():
    sessions = [Session("late", 50, 150, "b"), Session("early", 0, 100, "a")]
    out = sessionize([Sighting(MAC, 75, -40)], sessions)
    assert out.per_session["early"] == {MAC: -40} and out.per_session["late"] == {}
    assert out.overlap_warnings == 1


def test_sessionize_requires_sessions():
    with pytest.raises(ContractError):
        sessionize([], [])


sighting_lists = st.lists(
    st.tuples(st.integers(0, 5), st.integers(-20, 420), st.integers(-100, -20)), max_size=40
)


@settings(max_examples=60, deadline=None)
@given(sighting_lists, st.randoms(use_true_random=False))
def test_sessionize_order_independent_and_conserves(rows, rnd):
    sessions = [Session("a", 0, 100), Session("b", 100, 250), Session("c", 300, 400)]
    sightings = [Sighting(MacAddress((0, 0, 0, 0, 0, m)), t, r) for m, t, r in rows]
    shuffled = list(sightings)
    rnd.shuffle(shuffled)
    x, y = sessionize(sightings, sessions), sessionize(shuffled, sessions)
    assert x.per_session == y.per_session
    assert x.assigned + x.dropped == x.total == len(sightings)


def test_writers_round_trip(tmp_path):
    sessions = [Session("a", 0, 10, "x"), Session("b", 10, 20, "y")]
    write_sessions(tmp_path / "s.jsonl", sessions)
    assert load_sessions(tmp_path / "s.jsonl") == sessions
    sightings = [Sighting(MAC, 5, -40)]
    write_sightings(tmp_path / "x.csv", sightings)
    assert load_sightings(tmp_path / "x.csv") == sightings
    from crosslink.model import BiometricSample

    write_embeddings(tmp_path / "e.jsonl", [BiometricSample("x", "a", np.array([0.6, 0.8]), "u")])
    (s,) = load_embeddings(tmp_path / "e.jsonl")
    assert s.sample_id == "x" and s.true_label == "u"
