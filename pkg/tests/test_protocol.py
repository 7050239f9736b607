import json
import math
import socket
import struct
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldpquant import ConfigError, DecodeError, PrivacyLevel, RoundAbortedError, TruncatedSessionError
from ldpquant.estimator import EstimatorConfig, QuantileEstimator, draw_randomizer_uniforms
from ldpquant.protocol import HELLO_ROUND, QUERY_SIZE, CuratorServer, QueryMessage, ResponseMessage, \
    decode_query, decode_response, encode_query, encode_response, fetch_status, run_session, serve, \
    user_client
from ldpquant.randomizer import lrc_respond


@pytest.fixture
def curator(small_pivot):
    srv = serve(("127.0.0.1", 0), EstimatorConfig(), small_pivot, round_timeout=2.0, record=True)
    yield srv
    srv.shutdown()


def test_query_frame_bytes():
    frame = encode_query(QueryMessage(seq=1, threshold=0.0, rate_ppm=500_000))
    assert frame.hex(" ").upper() == "51 01 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 20 A1 07 00"
    assert len(frame) == 21


def test_response_frame_bytes():
    assert encode_response(ResponseMessage(seq=2, bit=1)) == bytes.fromhex("52 0200000000000000 01")


@given(st.integers(0, 2**64 - 1), st.floats(allow_nan=False, allow_infinity=False),
       st.integers(0, 999_999))
def test_query_round_trip(seq, threshold, ppm):
    m = QueryMessage(seq, threshold, ppm)
    assert decode_query(encode_query(m)) == m


@given(st.integers(0, 2**64 - 1), st.integers(0, 1))
def test_response_round_trip(seq, bit):
    m = ResponseMessage(seq, bit)
    assert decode_response(encode_response(m)) == m


def test_bad_bit_rejected_with_offset():
    frame = bytearray(encode_response(ResponseMessage(7, 1)))
    frame[9] = 2
    with pytest.raises(DecodeError) as err:
        decode_response(bytes(frame))
    assert err.value.offset == 9


@pytest.mark.parametrize("mutate, offset", [
    (lambda f: b"\x00" + f[1:], 0),
    (lambda f: f[:15], 15),
    (lambda f: f[:17] + struct.pack("<I", 1_000_000), 17),
    (lambda f: f[:9] + struct.pack("<d", math.nan) + f[17:], 9),
])
def test_malformed_query(mutate, offset):
    frame = encode_query(QueryMessage(3, 0.25, 250_000))
    with pytest.raises(DecodeError) as err:
        decode_query(mutate(frame))
    assert err.value.offset == offset


def test_encode_validation():
    with pytest.raises(ValueError):
        encode_response(ResponseMessage(1, 3))
    with pytest.raises(ValueError):
        encode_query(QueryMessage(1, math.inf, 10))
    with pytest.raises(ValueError):
        encode_query(QueryMessage(1, 0.0, 1_000_000))


def test_rate_must_fit_wire_format():
    with pytest.raises(ConfigError):
        CuratorServer(("127.0.0.1", 0), EstimatorConfig(level=PrivacyLevel(1 / 3)))


def test_session_zero_rounds():
    res = run_session(EstimatorConfig(q0=0.4), [], 0)
    assert res.state.n == 0 and res.state.q == 0.4


def test_session_truncated_keeps_partial_state():
    with pytest.raises(TruncatedSessionError) as err:
        run_session(EstimatorConfig(), [0.1, 0.2, 0.3], 5, np.random.default_rng(0))
    assert err.value.partial.state.n == 3


def test_session_consumes_each_datum_once():
    seen = []

    def data():
        for k in range(10):
            seen.append(k)
            yield float(k)

    res = run_session(EstimatorConfig(), data(), 10, np.random.default_rng(0), record=True)
    assert seen == list(range(10))
    assert len(res.transcript) == 10 and len(res.trajectory) == 10
    assert res.transcript[0][0] == 0.0
    assert [t for t, _ in res.transcript[1:]] == list(res.trajectory[:-1])


def test_non_private_session_is_consistent():
    cfg = EstimatorConfig(tau=0.5, level=PrivacyLevel.non_private())
    good = 0
    for seed in range(100):
        rng = np.random.default_rng([seed, 1])
        x = rng.standard_normal(10**5)
        u = np.random.default_rng([seed, 2])
        est = QuantileEstimator(cfg).run(x, *draw_randomizer_uniforms(u, 10**5))
        good += abs(est.estimate()) < 0.05
    assert good >= 95


def test_status_before_any_round(curator):
    status = fetch_status(curator.address)
    assert status == {"n": 0, "estimate": None, "ci_lo": None, "ci_hi": None, "alpha": 0.05}


def test_status_after_rounds(curator):
    rng = np.random.default_rng(1)
    for x in np.random.default_rng(2).standard_normal(30):
        user_client(curator.address, float(x), rng)
    status = fetch_status(curator.address)
    assert status["n"] == 30
    assert status["ci_lo"] <= status["estimate"] <= status["ci_hi"]
    assert set(status) == {"n", "estimate", "ci_lo", "ci_hi", "alpha"}


def test_transport_matches_in_process(curator):
    n = 1500
    x = np.random.default_rng(10).standard_normal(n)
    rng = np.random.default_rng(11)
    for xi in x:
        user_client(curator.address, float(xi), rng)
    ref = run_session(EstimatorConfig(), x, n, np.random.default_rng(11), record=True)
    assert curator.state == ref.state
    assert curator.transcript == ref.transcript


def test_killed_client_leaves_state_unchanged(curator):
    user_client(curator.address, 0.3, np.random.default_rng(0))
    before = curator.state
    with socket.create_connection(curator.address) as sock:
        sock.sendall(bytes([HELLO_ROUND]))
        sock.recv(QUERY_SIZE)
    time.sleep(0.2)
    assert curator.state == before
    user_client(curator.address, 0.3, np.random.default_rng(0))
    assert curator.state.n == before.n + 1


def test_wrong_sequence_rejected(curator):
    with socket.create_connection(curator.address) as sock:
        sock.sendall(bytes([HELLO_ROUND]))
        buf = b""
        while len(buf) < QUERY_SIZE:
            buf += sock.recv(QUERY_SIZE - len(buf))
        q = decode_query(buf)
        sock.sendall(encode_response(ResponseMessage(q.seq + 5, 1)))
        sock.recv(1)
    assert curator.rejected == 1
    assert curator.state.n == 0


def test_client_never_sends_private_value(curator):
    rng = np.random.default_rng(5)
    xs = np.random.default_rng(6).standard_normal(200)
    wire = bytearray()
    for x in xs:
        res = user_client(curator.address, float(x), rng, wire_log=wire)
        assert res.bit in (0, 1)
    assert len(wire) == 200 * (1 + 10)
    for x in xs:
        assert struct.pack("<d", float(x)) not in wire
        assert struct.pack(">d", float(x)) not in wire
        assert repr(float(x)).encode() not in wire


def test_client_refuses_excessive_rate(curator):
    with pytest.raises(RoundAbortedError):
        user_client(curator.address, 1.0, np.random.default_rng(0), max_rate=0.25)
    time.sleep(0.1)
    assert curator.state.n == 0


def test_client_gives_up_without_curator():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(ConnectionError):
        user_client(("127.0.0.1", port), 1.0, np.random.default_rng(0), retries=1, timeout=0.5)


def test_truthful_limit_round(curator):
    lvl = PrivacyLevel.non_private()
    assert lrc_respond(0.0, lvl, 5.0, np.random.default_rng(0)) == 1


def test_half_rate_response_fraction():
    frame = encode_query(QueryMessage(1, 0.0, 500_000))
    q = decode_query(frame)
    lvl = PrivacyLevel(q.rate)
    rng = np.random.default_rng(8)
    n = 10**5
    ones = sum(lrc_respond(q.threshold, lvl, 1.0, rng) for _ in range(n))
    assert abs(ones / n - 0.75) < 3 * math.sqrt(0.75 * 0.25 / n)
