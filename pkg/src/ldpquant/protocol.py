"""Curator/user rounds, in process or over TCP.

Every round the curator sends the current iterate as an inquiry to one
new user, the user answers with a single randomized bit, and the curator
folds the bit into its estimator. A private value is used in exactly one
round and never leaves the user's process.

Wire frames (all integers little-endian)::

    query     0x51 | seq u64 | threshold f64 | rate_ppm u32      21 bytes
    response  0x52 | seq u64 | bit u8 (0 or 1)                   10 bytes

Over TCP a connection opens with one intent byte from the client: 0x48
joins one round, 0x53 asks for the status record, returned as a u32 length
followed by UTF-8 JSON ``{n, estimate, ci_lo, ci_hi, alpha}``.
"""

import json
import logging
import math
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DecodeError, RoundAbortedError, TruncatedSessionError
from .estimator import QuantileEstimator
from .inference import sn_interval
from .randomizer import PrivacyLevel, lrc_respond

__all__ = [
    "QueryMessage",
    "ResponseMessage",
    "encode_query",
    "decode_query",
    "encode_response",
    "decode_response",
    "SessionResult",
    "run_session",
    "CuratorServer",
    "serve",
    "user_client",
    "fetch_status",
]

log = logging.getLogger(__name__)

QUERY_MAGIC = 0x51
RESPONSE_MAGIC = 0x52
HELLO_ROUND = 0x48
HELLO_STATUS = 0x53
MAX_RATE_PPM = 999_999

_QUERY = struct.Struct("<BQdI")
_RESPONSE = struct.Struct("<BQB")
_LEN = struct.Struct("<I")

QUERY_SIZE = _QUERY.size
RESPONSE_SIZE = _RESPONSE.size


@dataclass(frozen=True)
class QueryMessage:
    seq: int
    threshold: float
    rate_ppm: int

    @property
    def rate(self):
        return self.rate_ppm / 1_000_000


@dataclass(frozen=True)
class ResponseMessage:
    seq: int
    bit: int


def rate_to_ppm(r):
    ppm = round(r * 1_000_000)
    if ppm / 1_000_000 != r:
        raise ConfigError(f"r = {r!r} is not representable in parts-per-million on the wire")
    return ppm


def encode_query(m):
    if not 0 <= m.seq < 2**64:
        raise ValueError("seq out of u64 range")
    if not 0 <= m.rate_ppm <= MAX_RATE_PPM:
        raise ValueError(f"rate_ppm must lie in [0, {MAX_RATE_PPM}]")
    if not math.isfinite(m.threshold):
        raise ValueError("threshold must be finite")
    return _QUERY.pack(QUERY_MAGIC, m.seq, m.threshold, m.rate_ppm)


def _check_frame(buf, size, magic, what):
    if len(buf) < 1:
        raise DecodeError(f"empty {what} frame", 0)
    if buf[0] != magic:
        raise DecodeError(f"bad {what} magic 0x{buf[0]:02x}", 0)
    if len(buf) < size:
        raise DecodeError(f"short {what} frame: {len(buf)} of {size} bytes", len(buf))


def decode_query(buf):
    buf = bytes(buf)
    _check_frame(buf, QUERY_SIZE, QUERY_MAGIC, "query")
    _, seq, threshold, ppm = _QUERY.unpack_from(buf)
    if not math.isfinite(threshold):
        raise DecodeError("non-finite threshold", 9)
    if ppm > MAX_RATE_PPM:
        raise DecodeError(f"rate_ppm {ppm} exceeds {MAX_RATE_PPM}", 17)
    return QueryMessage(seq, threshold, ppm)


def encode_response(m):
    if m.bit not in (0, 1):
        raise ValueError("response bit must be 0 or 1")
    return _RESPONSE.pack(RESPONSE_MAGIC, m.seq, m.bit)


def decode_response(buf):
    buf = bytes(buf)
    _check_frame(buf, RESPONSE_SIZE, RESPONSE_MAGIC, "response")
    _, seq, bit = _RESPONSE.unpack_from(buf)
    if bit not in (0, 1):
        raise DecodeError(f"response bit must be 0 or 1, got {bit}", 9)
    return ResponseMessage(seq, bit)


@dataclass
class SessionResult:
    estimator: QuantileEstimator
    transcript: list = None
    trajectory: np.ndarray = None

    @property
    def state(self):
        return self.estimator.state


def run_session(config, data, n, rng=None, record=False):
    """Run ``n`` sequential rounds in process.

    ``data`` is consumed one value per round; ``rng`` drives every user's
    randomizer in turn. With ``record`` the (threshold, bit) transcript
    and the iterate path are returned too.
    """
    if rng is None:
        rng = np.random.default_rng()
    est = QuantileEstimator(config)
    transcript = [] if record else None
    path = [] if record else None
    it = iter(data)
    level = config.level
    for done in range(n):
        try:
            x = next(it)
        except StopIteration:
            partial = SessionResult(est, transcript, None if path is None else np.array(path))
            raise TruncatedSessionError(f"data ran out after {done} of {n} rounds", partial) from None
        threshold = est.q
        bit = lrc_respond(threshold, level, x, rng)
        est.update(bit)
        if record:
            transcript.append((threshold, bit))
            path.append(est.q)
    return SessionResult(est, transcript, None if path is None else np.array(path))


def _recv_exact(sock, size):
    chunks, got = [], 0
    while got < size:
        chunk = sock.recv(size - got)
        if not chunk:
            raise ConnectionError(f"peer closed after {got} of {size} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        curator = self.server.curator
        try:
            intent = _recv_exact(sock, 1)[0]
            if intent == HELLO_STATUS:
                body = json.dumps(curator.status()).encode()
                sock.sendall(_LEN.pack(len(body)) + body)
            elif intent == HELLO_ROUND:
                curator._play_round(sock)
            else:
                log.info("dropping connection with unknown intent 0x%02x", intent)
        except (OSError, DecodeError) as exc:
            log.info("round dropped: %s", exc)


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128


class CuratorServer:
    """TCP curator that applies rounds one at a time in arrival order."""

    def __init__(self, bind_address, config, pivot=None, alpha=0.05, round_timeout=10.0,
                 record=False):
        self.config = config
        self.rate_ppm = rate_to_ppm(config.level.r)
        self.pivot = pivot
        self.alpha = alpha
        self.round_timeout = round_timeout
        self.estimator = QuantileEstimator(config)
        self.transcript = [] if record else None
        self.rejected = 0
        self._next_seq = 1
        self._lock = threading.Lock()
        self._server = _TCPServer(tuple(bind_address), _Handler)
        self._server.curator = self
        self._thread = None

    @property
    def address(self):
        return self._server.server_address[:2]

    @property
    def state(self):
        with self._lock:
            return self.estimator.state

    def _play_round(self, sock):
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            threshold = self.estimator.q
            sock.sendall(encode_query(QueryMessage(seq, threshold, self.rate_ppm)))
            sock.settimeout(self.round_timeout)
            reply = decode_response(_recv_exact(sock, RESPONSE_SIZE))
            if reply.seq != seq:
                self.rejected += 1
                log.info("rejected response for seq %d during round %d", reply.seq, seq)
                return
            self.estimator.update(reply.bit)
            if self.transcript is not None:
                self.transcript.append((threshold, reply.bit))

    def status(self):
        with self._lock:
            n, est = self.estimator.n, self.estimator
            record = {"n": n, "estimate": None, "ci_lo": None, "ci_hi": None, "alpha": self.alpha}
            if n >= 1:
                record["estimate"] = est.qbar
            if n >= 2 and self.pivot is not None:
                ci = sn_interval(est, self.pivot, self.alpha)
                record["ci_lo"], record["ci_hi"] = ci.lo, ci.hi
            return record

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._server.serve_forever()

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(bind_address, config, pivot=None, alpha=0.05, **kwargs):
    """Start a curator in a background thread and return it."""
    return CuratorServer(bind_address, config, pivot, alpha, **kwargs).start()


class _LoggedSocket:
    """Socket wrapper that copies every outbound byte into ``log``."""

    def __init__(self, sock, log):
        self._sock = sock
        self._log = log

    def sendall(self, data):
        self._log.extend(data)
        self._sock.sendall(data)

    def __getattr__(self, name):
        return getattr(self._sock, name)


@dataclass(frozen=True)
class RoundResult:
    seq: int
    threshold: float
    bit: int
    rate: float = field(default=None)


def _connect(address, timeout, retries):
    last = None
    for _ in range(retries + 1):
        try:
            sock = socket.create_connection(tuple(address), timeout=timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as exc:
            last = exc
    raise ConnectionError(f"could not reach curator at {address} after {retries + 1} attempts") from last


def user_client(address, x, rng, retries=3, timeout=10.0, max_rate=None, wire_log=None):
    """Take part in one round as the user holding ``x``.

    Connection problems before the inquiry arrives are retried up to
    ``retries`` times. Once the inquiry has been answered locally the datum
    counts as spent: any later failure raises :class:`RoundAbortedError` and
    the round is never replayed. ``max_rate`` lets the user refuse
    inquiries that ask for a higher truthful rate than they accept.
    """
    query = None
    for attempt in range(retries + 1):
        sock = _connect(address, timeout, retries)
        out = _LoggedSocket(sock, wire_log) if wire_log is not None else sock
        try:
            out.sendall(bytes([HELLO_ROUND]))
            query = decode_query(_recv_exact(sock, QUERY_SIZE))
            break
        except (OSError, DecodeError) as exc:
            sock.close()
            if attempt == retries:
                raise ConnectionError(f"no inquiry received from curator: {exc}") from exc
    rate = query.rate
    with sock:
        if max_rate is not None and rate > max_rate:
            raise RoundAbortedError(f"curator asked for r={rate}, above the accepted {max_rate}")
        bit = lrc_respond(query.threshold, PrivacyLevel(rate), x, rng)
        try:
            out.sendall(encode_response(ResponseMessage(query.seq, bit)))
        except OSError as exc:
            raise RoundAbortedError(f"round {query.seq} aborted after answering: {exc}") from exc
    return RoundResult(query.seq, query.threshold, bit, rate)


def fetch_status(address, timeout=10.0):
    with socket.create_connection(tuple(address), timeout=timeout) as sock:
        sock.sendall(bytes([HELLO_STATUS]))
        (length,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
        return json.loads(_recv_exact(sock, length).decode())

