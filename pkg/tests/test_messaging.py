import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnpsim.messaging import (
    ACL_F,
    ACL_K,
    DialectError,
    EncodingError,
    Envelope,
    MessageFactory,
    Performative,
    TraceParseError,
    decode,
    dialect_equivalent,
    encode,
    format_header,
    parse_header,
    read_trace,
    write_trace,
)

P = Performative


def cfp(factory=None, **payload):
    factory = factory or MessageFactory(ACL_F)
    env = factory.make("m0", "p1", P.CALL_FOR_PROPOSALS, "T1", payload or {"task": "T1"}, 0)
    return Envelope(**{**env.__dict__, "delivered_at": 1})


def test_dialect_tables_are_total_and_disjoint():
    for d in (ACL_F, ACL_K):
        assert len({d.keyword(p) for p in P}) == len(P)
    assert not set(ACL_F.mapping.values()) & set(ACL_K.mapping.values())


@pytest.mark.parametrize("dialect, keyword", [(ACL_F, "cfp"), (ACL_K, "achieve")])
def test_cfp_keyword_and_round_trip(dialect, keyword):
    env = cfp(MessageFactory(dialect), task="T1", target="prey 3,x=y")
    line = encode(env)
    assert line.split("|")[4] == keyword
    back = decode(line)
    for name in ("msg_id", "conversation_id", "sender", "receiver", "performative",
                 "dialect_keyword", "payload", "sent_at", "delivered_at"):
        assert getattr(back, name) == getattr(env, name)


def test_same_envelope_other_dialect_differs_only_in_keyword():
    env = cfp()
    f, k = encode(env, ACL_F).split("|"), encode(env, ACL_K).split("|")
    assert (f[4], k[4]) == ("cfp", "achieve")
    assert f[:4] + f[5:] == k[:4] + k[5:]


token = st.text(st.characters(whitelist_categories=("L", "N"), whitelist_characters="-_."), min_size=1, max_size=8)
value = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)


@st.composite
def envelopes(draw):
    sent = draw(st.integers(0, 1000))
    perf = draw(st.sampled_from(list(P)))
    dialect = draw(st.sampled_from([ACL_F, ACL_K]))
    return Envelope(
        msg_id=draw(st.integers(0, 10**6)),
        conversation_id=draw(token),
        sender=draw(token),
        receiver=draw(token),
        performative=perf,
        dialect_keyword=dialect.keyword(perf),
        payload=tuple(draw(st.lists(st.tuples(value, value), max_size=5))),
        sent_at=sent,
        delivered_at=sent + draw(st.integers(0, 20)),
    )


@given(envelopes())
def test_decode_inverts_encode(env):
    assert decode(encode(env)) == env


def test_unknown_keyword_is_dialect_error():
    line = encode(cfp()).replace("|cfp|", "|frobnicate|")
    with pytest.raises(DialectError):
        decode(line)


def test_truncated_line_names_the_field():
    line = encode(cfp())
    with pytest.raises(TraceParseError) as info:
        decode("|".join(line.split("|")[:5]))
    assert info.value.field == "sent_at"


def test_bad_time_field():
    parts = encode(cfp()).split("|")
    parts[5] = "soon"
    with pytest.raises(TraceParseError) as info:
        decode("|".join(parts))
    assert info.value.field == "sent_at"


def test_payload_limit():
    env = cfp(note="x" * 100)
    encode(env, max_payload=200)
    with pytest.raises(EncodingError):
        encode(env, max_payload=50)


def test_pipe_in_identifier_refused():
    env = Envelope(1, "T|1", "m0", "p1", P.CANCEL, "cancel", (), 0, 1)
    with pytest.raises(EncodingError):
        encode(env)


def test_undelivered_envelope_refused():
    env = MessageFactory().make("m0", "p1", P.CANCEL, "T1", {}, 0)
    with pytest.raises(EncodingError):
        encode(env)


def test_factory_numbers_messages_and_drops_none():
    f = MessageFactory(ACL_K)
    a = f.make("m0", "p1", P.PROPOSE, "T1", {"cost": 2.5, "skip": None}, 3)
    b = f.make("p1", "m0", P.REFUSE, "T1", {}, 3)
    assert (a.msg_id, b.msg_id) == (1, 2)
    assert a.payload == (("cost", "2.5"),)
    assert a.dialect_keyword == "tell"


def test_dialect_equivalent_basics():
    f = cfp(MessageFactory(ACL_F))
    k = cfp(MessageFactory(ACL_K))
    assert dialect_equivalent([f], [k])
    assert dialect_equivalent([f], [f])
    assert not dialect_equivalent([f], [])
    other = Envelope(**{**k.__dict__, "receiver": "p2"})
    assert not dialect_equivalent([f], [other])


def test_header_round_trip(tmp_path):
    header = format_header([("variant", "updated"), ("grid", "10x10")])
    assert parse_header(header) == {"variant": "updated", "grid": "10x10"}
    path = tmp_path / "t.txt"
    write_trace(path, [cfp()], header)
    settings, entries = read_trace(path)
    assert settings["grid"] == "10x10"
    assert [line for line, _ in entries] == [2]


def test_read_trace_reports_line_number(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# variant=updated\n" + encode(cfp()) + "\n1|T1|m0\n")
    with pytest.raises(TraceParseError, match="line 3"):
        read_trace(path)
