"""Event model, trace parsing/serialization, and UDP checksum math.

Trace files are UTF-8 JSONL, one event per line. Every line carries
``event_id, ts, kind, src_ip, dst_ip, src_port, dst_port`` plus per-kind
fields:

  tcp   flags (string over "SAFRPU"), seq, ack, urgent_ptr, payload_b64
  udp   length, checksum, payload_b64
  http  method, uri, version, headers ([[name, value], ...]), body_b64,
        duration_ms

An optional ``label`` field ("benign" or "attack:<type>") is generator
ground truth and is never consulted by any defense layer.

Verdict log lines carry ``event_id, decision, layer, reason`` and an
optional ``rule_id``.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

# TCP flag bits, letter-coded "SAFRPU" in traces.
SYN = 0x01
ACK = 0x02
FIN = 0x04
RST = 0x08
PSH = 0x10
URG = 0x20

_FLAG_BY_LETTER = {"S": SYN, "A": ACK, "F": FIN, "R": RST, "P": PSH, "U": URG}
_LETTER_ORDER = "SAFRPU"

# Verdict decisions (wire spelling).
FORWARD = "forward"
DROP_RATE_LIMITED = "drop_rate_limited"
REJECT_BLACKLISTED = "reject_blacklisted"
SANDBOX = "sandbox"


class TraceParseError(ValueError):
    """A trace line could not be turned into a TraceEvent."""

    def __init__(self, message: str, field: str | None = None, line_no: int | None = None):
        self.field = field
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class ClockRegressionError(RuntimeError):
    """Event timestamps moved backwards; stateful layers refuse to guess."""


@dataclass(frozen=True, slots=True)
class TcpInfo:
    flags: int  # bitmask of SYN/ACK/FIN/RST/PSH/URG; empty set is legal
    seq: int
    ack: int
    urgent_ptr: int
    payload: bytes


@dataclass(frozen=True, slots=True)
class UdpInfo:
    length: int  # UDP length field; may disagree with 8+len(payload)
    checksum: int
    payload: bytes


@dataclass(frozen=True, slots=True)
class HttpInfo:
    method: str
    uri: str
    version: str
    headers: tuple[tuple[str, str], ...]
    body: bytes
    duration_ms: int  # time the client took to deliver the full request


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Directional 5-tuple; no normalization of direction."""

    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    proto: str


@dataclass(frozen=True, slots=True)
class TraceEvent:
    event_id: int
    ts: float
    kind: str  # "tcp" | "udp" | "http"
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    body: TcpInfo | UdpInfo | HttpInfo
    label: str | None = None


@dataclass(frozen=True, slots=True)
class Verdict:
    decision: str  # forward | drop_rate_limited | reject_blacklisted | sandbox
    layer: int  # 0 for forward, else 1..4
    reason: str  # machine-readable code, "" for forward
    rule_id: int | None = None


def flags_from_str(s: str) -> int:
    mask = 0
    for ch in s:
        bit = _FLAG_BY_LETTER.get(ch)
        if bit is None:
            raise TraceParseError(f"unknown TCP flag letter {ch!r}", field="flags")
        mask |= bit
    return mask


def flags_to_str(mask: int) -> str:
    return "".join(ch for ch in _LETTER_ORDER if mask & _FLAG_BY_LETTER[ch])


def _require(obj: dict, key: str, line_no: int | None):
    try:
        return obj[key]
    except KeyError:
        raise TraceParseError(f"missing required field {key!r}", field=key, line_no=line_no) from None


def _check_ipv4(value, field: str, line_no: int | None) -> str:
    if not isinstance(value, str):
        raise TraceParseError(f"{field} must be a dotted-quad string", field=field, line_no=line_no)
    parts = value.split(".")
    if len(parts) != 4:
        raise TraceParseError(f"{field} is not a valid IPv4 address: {value!r}", field=field, line_no=line_no)
    for p in parts:
        if not p.isdigit() or (len(p) > 1 and p[0] == "0") or int(p) > 255:
            raise TraceParseError(f"{field} is not a valid IPv4 address: {value!r}", field=field, line_no=line_no)
    return value


def _check_int(value, field: str, line_no: int | None, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TraceParseError(f"{field} must be an integer", field=field, line_no=line_no)
    if not lo <= value <= hi:
        raise TraceParseError(f"{field} out of range", field=field, line_no=line_no)
    return value


def _decode_b64(value, field: str, line_no: int | None) -> bytes:
    if not isinstance(value, str):
        raise TraceParseError(f"{field} must be a base64 string", field=field, line_no=line_no)
    try:
        return base64.b64decode(value, validate=True)
    except Exception:
        raise TraceParseError(f"{field} is not valid base64", field=field, line_no=line_no) from None


def parse_trace_event(line: str, line_no: int | None = None) -> TraceEvent:
    """Parse one JSONL trace line. Unknown fields are ignored.

    Malformed-but-parseable packets (empty flag set, UDP length that
    disagrees with the payload) are preserved; flagging them is the
    analyzer's job, not the parser's.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"malformed JSON: {exc.msg}", line_no=line_no) from None
    if not isinstance(obj, dict):
        raise TraceParseError("trace line is not a JSON object", line_no=line_no)

    event_id = _check_int(_require(obj, "event_id", line_no), "event_id", line_no, 0, 2**63 - 1)
    ts = _require(obj, "ts", line_no)
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts < 0:
        raise TraceParseError("ts must be a non-negative number", field="ts", line_no=line_no)
    kind = _require(obj, "kind", line_no)
    src_ip = _check_ipv4(_require(obj, "src_ip", line_no), "src_ip", line_no)
    dst_ip = _check_ipv4(_require(obj, "dst_ip", line_no), "dst_ip", line_no)
    src_port = _check_int(_require(obj, "src_port", line_no), "src_port", line_no, 0, 65535)
    dst_port = _check_int(_require(obj, "dst_port", line_no), "dst_port", line_no, 0, 65535)

    if kind == "tcp":
        flags_s = _require(obj, "flags", line_no)
        if not isinstance(flags_s, str):
            raise TraceParseError("flags must be a string over 'SAFRPU'", field="flags", line_no=line_no)
        try:
            flags = flags_from_str(flags_s)
        except TraceParseError as exc:
            raise TraceParseError(str(exc), field="flags", line_no=line_no) from None
        body: TcpInfo | UdpInfo | HttpInfo = TcpInfo(
            flags=flags,
            seq=_check_int(_require(obj, "seq", line_no), "seq", line_no, 0, 2**32 - 1),
            ack=_check_int(_require(obj, "ack", line_no), "ack", line_no, 0, 2**32 - 1),
            urgent_ptr=_check_int(_require(obj, "urgent_ptr", line_no), "urgent_ptr", line_no, 0, 2**16 - 1),
            payload=_decode_b64(_require(obj, "payload_b64", line_no), "payload_b64", line_no),
        )
    elif kind == "udp":
        body = UdpInfo(
            length=_check_int(_require(obj, "length", line_no), "length", line_no, 0, 2**16 - 1),
            checksum=_check_int(_require(obj, "checksum", line_no), "checksum", line_no, 0, 2**16 - 1),
            payload=_decode_b64(_require(obj, "payload_b64", line_no), "payload_b64", line_no),
        )
    elif kind == "http":
        method = _require(obj, "method", line_no)
        if not isinstance(method, str) or not method:
            raise TraceParseError("method must be a non-empty string", field="method", line_no=line_no)
        raw_headers = _require(obj, "headers", line_no)
        if not isinstance(raw_headers, list):
            raise TraceParseError("headers must be an array of [name, value] pairs", field="headers", line_no=line_no)
        headers = []
        for pair in raw_headers:
            if not isinstance(pair, list) or len(pair) != 2 or not all(isinstance(x, str) for x in pair):
                raise TraceParseError("headers must be an array of [name, value] pairs", field="headers", line_no=line_no)
            headers.append((pair[0], pair[1]))
        uri = _require(obj, "uri", line_no)
        version = _require(obj, "version", line_no)
        if not isinstance(uri, str) or not isinstance(version, str):
            raise TraceParseError("uri and version must be strings", field="uri", line_no=line_no)
        body = HttpInfo(
            method=method,
            uri=uri,
            version=version,
            headers=tuple(headers),
            body=_decode_b64(_require(obj, "body_b64", line_no), "body_b64", line_no),
            duration_ms=_check_int(_require(obj, "duration_ms", line_no), "duration_ms", line_no, 0, 2**63 - 1),
        )
    else:
        raise TraceParseError(f"unknown event kind {kind!r}", field="kind", line_no=line_no)

    label = obj.get("label")
    if label is not None and not isinstance(label, str):
        raise TraceParseError("label must be a string", field="label", line_no=line_no)
    return TraceEvent(
        event_id=event_id,
        ts=float(ts),
        kind=kind,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=src_port,
        dst_port=dst_port,
        body=body,
        label=label,
    )


def serialize_trace_event(event: TraceEvent) -> str:
    """Inverse of parse_trace_event; stable key order, compact separators."""
    obj: dict = {
        "event_id": event.event_id,
        "ts": event.ts,
        "kind": event.kind,
        "src_ip": event.src_ip,
        "dst_ip": event.dst_ip,
        "src_port": event.src_port,
        "dst_port": event.dst_port,
    }
    body = event.body
    if event.kind == "tcp":
        assert isinstance(body, TcpInfo)
        obj["flags"] = flags_to_str(body.flags)
        obj["seq"] = body.seq
        obj["ack"] = body.ack
        obj["urgent_ptr"] = body.urgent_ptr
        obj["payload_b64"] = base64.b64encode(body.payload).decode("ascii")
    elif event.kind == "udp":
        assert isinstance(body, UdpInfo)
        obj["length"] = body.length
        obj["checksum"] = body.checksum
        obj["payload_b64"] = base64.b64encode(body.payload).decode("ascii")
    else:
        assert isinstance(body, HttpInfo)
        obj["method"] = body.method
        obj["uri"] = body.uri
        obj["version"] = body.version
        obj["headers"] = [[n, v] for n, v in body.headers]
        obj["body_b64"] = base64.b64encode(body.body).decode("ascii")
        obj["duration_ms"] = body.duration_ms
    if event.label is not None:
        obj["label"] = event.label
    return json.dumps(obj, separators=(",", ":"))


def flow_key(event: TraceEvent) -> FlowKey:
    """Directional 5-tuple key for tcp/udp events; http has no flow."""
    if event.kind not in ("tcp", "udp"):
        raise ValueError(f"flow_key is only defined for tcp/udp events, got {event.kind!r}")
    return FlowKey(event.src_ip, event.src_port, event.dst_ip, event.dst_port, event.kind)


def _ipv4_words(ip: str) -> tuple[int, int]:
    a, b, c, d = ip.split(".")
    return (int(a) << 8) | int(b), (int(c) << 8) | int(d)


def _ones_complement_sum(src_ip: str, dst_ip: str, src_port: int, dst_port: int,
                         length: int, checksum: int, payload: bytes) -> int:
    # Pseudo-header (src, dst, zero byte + protocol 17, UDP length),
    # UDP header, payload padded with one zero byte if odd.
    s1, s2 = _ipv4_words(src_ip)
    d1, d2 = _ipv4_words(dst_ip)
    total = s1 + s2 + d1 + d2 + 0x0011 + length + src_port + dst_port + length + checksum
    n = len(payload)
    data = payload if n % 2 == 0 else payload + b"\x00"
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def compute_udp_checksum(src_ip: str, dst_ip: str, src_port: int, dst_port: int,
                         length: int, payload: bytes) -> int:
    """Internet one's-complement checksum over pseudo-header + UDP header + payload.

    A computed value of 0 is transmitted as 0xFFFF, so 0 is never returned.
    Requires length == 8 + len(payload); packets violating that are an
    analyzer finding, not something this function will sign.
    """
    if length != 8 + len(payload):
        raise ValueError(f"length field {length} != 8 + payload size {len(payload)}")
    value = (~_ones_complement_sum(src_ip, dst_ip, src_port, dst_port, length, 0, payload)) & 0xFFFF
    return 0xFFFF if value == 0 else value


def validate_udp_checksum(src_ip: str, dst_ip: str, src_port: int, dst_port: int,
                          length: int, checksum: int, payload: bytes) -> bool:
    """True iff re-summing with the checksum field in place yields 0xFFFF."""
    return _ones_complement_sum(src_ip, dst_ip, src_port, dst_port, length, checksum, payload) == 0xFFFF


def serialize_verdict_record(event: TraceEvent, verdict: Verdict) -> str:
    """One verdict-log JSONL line; byte-identical for identical inputs."""
    obj: dict = {
        "event_id": event.event_id,
        "decision": verdict.decision,
        "layer": verdict.layer,
        "reason": verdict.reason,
    }
    if verdict.rule_id is not None:
        obj["rule_id"] = verdict.rule_id
    return json.dumps(obj, separators=(",", ":"))
