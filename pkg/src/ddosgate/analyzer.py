"""TCP/UDP header analysis, the third line of defense.

Stateful TCP side: a handshake table tracks SYNs awaiting their
completing ACK; entries that outlive the handshake timeout are folded
into a per-source sliding window of incomplete handshakes. Per-source
windows also count bare ACKs, RSTs, empty-payload PSHs and URG misuse.
When the global half-open count crosses its threshold the engine flips
into SYN-cookie mode and models a stateless server until the count
decays below half the threshold.

Stateless UDP side: port, size, and checksum filtering.

Sliding windows are rings of bucket_count counters over window_secs, so
threshold decisions are exact to within one bucket. A half-open finding
additionally depends on entries created up to handshake_timeout_secs
before the window, since a SYN only folds into the window when it
expires.

All time comes from packet timestamps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .events import (
    ACK,
    PSH,
    RST,
    SYN,
    URG,
    ClockRegressionError,
    FlowKey,
    TcpInfo,
    TraceEvent,
    UdpInfo,
    flow_key,
    validate_udp_checksum,
)

# TCP finding codes
SYN_HALF_OPEN = "syn_half_open"
ACK_FLOOD = "ack_flood"
RST_FLOOD = "rst_flood"
PSH_ANOMALY = "psh_anomaly"
URG_ANOMALY = "urg_anomaly"
PAYLOAD_SIGNATURE = "payload_signature"
COOKIE_INVALID = "cookie_invalid"

# UDP finding codes
UDP_BLOCKED_PORT = "udp_blocked_port"
UDP_SIZE_VIOLATION = "udp_size_violation"
UDP_BAD_CHECKSUM = "udp_bad_checksum"

_MASK64 = 0xFFFFFFFFFFFFFFFF
COOKIE_COUNTER_SECS = 64  # cookie counter advances once per 64 s of trace time
COOKIE_MAX_SKEW = 1

DEFAULT_SIGNATURES: tuple[bytes, ...] = (
    b"() {",          # bash function-definition injection
    b"/bin/sh",
    b"; rm -rf",
    b"cmd.exe /c",
    b"\x90\x90\x90\x90\x90\x90\x90\x90",  # NOP sled
)


@dataclass(frozen=True, slots=True)
class Finding:
    code: str
    detail: int | None = None


@dataclass(frozen=True)
class AnalyzerConfig:
    window_secs: float = 10.0
    bucket_count: int = 10
    syn_half_open_per_source: int = 50
    syn_half_open_global: int = 500
    ack_flood_per_source: int = 100
    rst_flood_per_source: int = 100
    psh_anomaly_per_source: int = 50
    urg_anomaly_per_source: int = 20
    handshake_timeout_secs: float = 5.0
    conn_table_max_entries: int = 65536
    udp_min_len: int = 8
    udp_max_len: int = 1500
    udp_validate_checksum: bool = True
    udp_blocked_ports: frozenset[int] = frozenset()
    syncookie_secret: int = 0x9E3779B97F4A7C15
    payload_signatures: tuple[bytes, ...] = DEFAULT_SIGNATURES

    def __post_init__(self):
        for name in ("syn_half_open_per_source", "syn_half_open_global", "ack_flood_per_source",
                     "rst_flood_per_source", "psh_anomaly_per_source", "urg_anomaly_per_source"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.bucket_count < 1:
            raise ValueError("bucket_count must be at least 1")
        if self.udp_min_len < 8:
            raise ValueError("udp_min_len must be at least 8 (UDP header size)")
        if self.window_secs <= 0 or self.handshake_timeout_secs <= 0:
            raise ValueError("window_secs and handshake_timeout_secs must be positive")


def parse_signatures(text: str) -> tuple[bytes, ...]:
    r"""Signature file: one byte pattern per line, '#' comments, \xNN escapes."""
    patterns = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        patterns.append(line.encode("utf-8").decode("unicode_escape").encode("latin-1"))
    return tuple(patterns)


def _mix64(z: int) -> int:
    # splitmix64 finalizer: two multiply-xor-shift rounds, published constants
    z &= _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _ip_int(ip: str) -> int:
    a, b, c, d = ip.split(".")
    return (int(a) << 24) | (int(b) << 16) | (int(c) << 8) | int(d)


def _cookie_hash(secret: int, flow: FlowKey, counter: int) -> int:
    addrs = (_ip_int(flow.src_ip) << 32) | _ip_int(flow.dst_ip)
    ports = (flow.src_port << 48) | (flow.dst_port << 32) | (counter & 0xFFFFFFFF)
    h = _mix64(secret ^ 0x9E3779B97F4A7C15)
    h = _mix64(h ^ addrs)
    h = _mix64(h ^ ports)
    return h


def make_syn_cookie(secret: int, flow: FlowKey, counter: int, mss_idx: int) -> int:
    """32-bit cookie: counter mod 8 in bits 31..29, mss_idx in 28..26,
    low 26 bits from the keyed mixer over (secret, flow 4-tuple, counter)."""
    if not 0 <= mss_idx < 8:
        raise ValueError(f"mss_idx must be in 0..7, got {mss_idx}")
    return ((counter % 8) << 29) | (mss_idx << 26) | (_cookie_hash(secret, flow, counter) & 0x03FFFFFF)


def check_syn_cookie(secret: int, flow: FlowKey, counter_now: int, value: int) -> int | None:
    """Accept a cookie minted at counter_now or counter_now - 1.

    Returns the embedded mss_idx, or None on rejection (stale counter or
    hash mismatch). Rejection is a value, never an exception.
    """
    top = value >> 29
    mss_idx = (value >> 26) & 7
    low = value & 0x03FFFFFF
    for c in (counter_now, counter_now - 1):
        if c >= 0 and c % 8 == top:
            if _cookie_hash(secret, flow, c) & 0x03FFFFFF == low:
                return mss_idx
            return None
    return None


class _Window:
    """Ring of bucket counters; each bucket spans window_secs / bucket_count."""

    __slots__ = ("counts", "epoch", "total")

    def __init__(self, buckets: int):
        self.counts = [0] * buckets
        self.epoch: int | None = None
        self.total = 0

    def add(self, epoch: int, n: int = 1) -> None:
        counts = self.counts
        size = len(counts)
        if self.epoch is None:
            self.epoch = epoch
        elif epoch > self.epoch:
            steps = epoch - self.epoch
            if steps >= size:
                for i in range(size):
                    counts[i] = 0
                self.total = 0
            else:
                base = self.epoch
                for k in range(1, steps + 1):
                    i = (base + k) % size
                    self.total -= counts[i]
                    counts[i] = 0
            self.epoch = epoch
        elif epoch <= self.epoch - size:
            return  # belongs to a bucket that already rotated out
        counts[epoch % size] += n
        self.total += n

    def advance(self, epoch: int) -> None:
        if self.epoch is not None and epoch > self.epoch:
            self.add(epoch, 0)

    def count(self, epoch: int) -> int:
        self.advance(epoch)
        return self.total


_SYN_INCOMPLETE = 0
_BARE_ACK = 1
_RST = 2
_PSH = 3
_URG = 4
_N_CLASSES = 5


@dataclass(slots=True)
class HandshakeEntry:
    state: str  # "syn_seen" | "established"
    created_ts: float
    last_ts: float


class Analyzer:
    """Single-writer analyzer state; packets must arrive in timestamp order."""

    def __init__(self, config: AnalyzerConfig | None = None):
        self.config = config or AnalyzerConfig()
        self._bucket_width = self.config.window_secs / self.config.bucket_count
        self.entries: dict[FlowKey, HandshakeEntry] = {}
        # (created_ts, flow) in creation order; stale records skipped on pop
        self._syn_queue: deque[tuple[float, FlowKey]] = deque()
        self._est_queue: deque[tuple[float, FlowKey]] = deque()
        self._pending_by_source: dict[str, int] = {}
        self._pending_global = 0
        self._windows: dict[str, list[_Window]] = {}
        self.cookie_mode = False
        self._last_ts: float | None = None
        self._signatures = list(enumerate(self.config.payload_signatures, start=1))

    # -- window helpers ----------------------------------------------------

    def _epoch(self, ts: float) -> int:
        return int(ts / self._bucket_width)

    def _window(self, src_ip: str, cls: int) -> _Window:
        rings = self._windows.get(src_ip)
        if rings is None:
            rings = [_Window(self.config.bucket_count) for _ in range(_N_CLASSES)]
            self._windows[src_ip] = rings
        return rings[cls]

    def _bump(self, src_ip: str, cls: int, ts: float) -> int:
        w = self._window(src_ip, cls)
        w.add(self._epoch(ts))
        return w.total

    # -- handshake table ---------------------------------------------------

    def _drop_pending(self, src_ip: str) -> None:
        self._pending_global -= 1
        n = self._pending_by_source.get(src_ip, 0) - 1
        if n <= 0:
            self._pending_by_source.pop(src_ip, None)
        else:
            self._pending_by_source[src_ip] = n

    def _fold_incomplete(self, src_ip: str, fold_ts: float) -> None:
        self._window(src_ip, _SYN_INCOMPLETE).add(self._epoch(fold_ts))

    def _expire(self, now: float) -> None:
        timeout = self.config.handshake_timeout_secs
        q = self._syn_queue
        while q:
            created, flow = q[0]
            if created + timeout >= now:
                break
            q.popleft()
            entry = self.entries.get(flow)
            if entry is None or entry.state != "syn_seen" or entry.created_ts != created:
                continue  # completed or superseded since queueing
            del self.entries[flow]
            self._drop_pending(flow.src_ip)
            self._fold_incomplete(flow.src_ip, created + timeout)

    def _evict_for_capacity(self, now: float) -> None:
        while len(self.entries) >= self.config.conn_table_max_entries:
            while self._syn_queue:
                created, flow = self._syn_queue.popleft()
                entry = self.entries.get(flow)
                if entry is not None and entry.state == "syn_seen" and entry.created_ts == created:
                    del self.entries[flow]
                    self._drop_pending(flow.src_ip)
                    self._fold_incomplete(flow.src_ip, now)
                    break
            else:
                while self._est_queue:
                    _, flow = self._est_queue.popleft()
                    entry = self.entries.get(flow)
                    if entry is not None and entry.state == "established":
                        del self.entries[flow]
                        break
                else:
                    return

    def _update_cookie_mode(self) -> None:
        threshold = self.config.syn_half_open_global
        if not self.cookie_mode:
            if self._pending_global >= threshold:
                self.cookie_mode = True
        elif self._pending_global < threshold / 2:
            self.cookie_mode = False

    def _advance_clock(self, now: float) -> None:
        if self._last_ts is not None and now < self._last_ts:
            raise ClockRegressionError(f"packet ts {now} is earlier than {self._last_ts}")
        self._last_ts = now
        self._expire(now)
        self._update_cookie_mode()

    # -- public observers --------------------------------------------------

    def half_open_count(self, source: str | None = None) -> int:
        if source is None:
            return self._pending_global
        return self._pending_by_source.get(source, 0)

    def incomplete_count(self, src_ip: str, now: float) -> int:
        """Incomplete handshakes charged to a source: window-folded
        expiries plus half-open entries still pending."""
        w = self._window(src_ip, _SYN_INCOMPLETE)
        return w.count(self._epoch(now)) + self._pending_by_source.get(src_ip, 0)

    def observe_tcp(self, pkt: TraceEvent, now: float) -> Finding | None:
        """Fixed check order, first hit wins; at most one finding per packet."""
        cfg = self.config
        self._advance_clock(now)
        body = pkt.body
        assert isinstance(body, TcpInfo)
        flags = body.flags
        payload = body.payload
        src = pkt.src_ip

        # (1) concrete maliciousness beats rate anomalies
        if flags & PSH and payload:
            for sig_id, sig in self._signatures:
                if sig in payload:
                    return Finding(PAYLOAD_SIGNATURE, sig_id)

        # (2) connection-opening SYN
        if flags & SYN and not flags & ACK:
            if self.cookie_mode:
                return None  # stateless server: cookie goes out, nothing stored
            flow = flow_key(pkt)
            entry = self.entries.get(flow)
            if entry is not None and entry.state == "syn_seen":
                # retransmitted/superseded SYN: the old pending one never
                # completed, charge it now and restart the clock
                self._fold_incomplete(src, now)
                entry.created_ts = now
                entry.last_ts = now
                self._syn_queue.append((now, flow))
            else:
                if entry is None:
                    self._evict_for_capacity(now)
                    self._pending_global += 1
                    self._pending_by_source[src] = self._pending_by_source.get(src, 0) + 1
                    self.entries[flow] = HandshakeEntry("syn_seen", now, now)
                    self._syn_queue.append((now, flow))
                # SYN on an established flow: ignore for state, still thresholded
            if self.incomplete_count(src, now) >= cfg.syn_half_open_per_source:
                return Finding(SYN_HALF_OPEN)
            return None

        if flags & ACK:
            flow = flow_key(pkt)
            entry = self.entries.get(flow)
            # (3) handshake completion
            if entry is not None and entry.state == "syn_seen":
                if self.cookie_mode:
                    mss = check_syn_cookie(cfg.syncookie_secret, flow,
                                           int(now // COOKIE_COUNTER_SECS), (body.ack - 1) & 0xFFFFFFFF)
                    if mss is None:
                        return Finding(COOKIE_INVALID)
                entry.state = "established"
                entry.last_ts = now
                self._drop_pending(flow.src_ip)
                self._est_queue.append((now, flow))
                return None
            if entry is None:
                if self.cookie_mode:
                    # stateless completion attempt: the ACK must carry a valid cookie
                    mss = check_syn_cookie(cfg.syncookie_secret, flow,
                                           int(now // COOKIE_COUNTER_SECS), (body.ack - 1) & 0xFFFFFFFF)
                    if mss is None:
                        return Finding(COOKIE_INVALID)
                    self._evict_for_capacity(now)
                    self.entries[flow] = HandshakeEntry("established", now, now)
                    self._est_queue.append((now, flow))
                    return None
                # (4) bare ACK with no flow behind it
                if not payload:
                    if self._bump(src, _BARE_ACK, now) >= cfg.ack_flood_per_source:
                        return Finding(ACK_FLOOD)
                    return None
            else:
                entry.last_ts = now

        # (5) reset frequency
        if flags & RST:
            if self._bump(src, _RST, now) >= cfg.rst_flood_per_source:
                return Finding(RST_FLOOD)
            return None

        # (6) push with nothing pushed
        if flags & PSH and not payload:
            if self._bump(src, _PSH, now) >= cfg.psh_anomaly_per_source:
                return Finding(PSH_ANOMALY)
            return None

        # (7) urgent-pointer misuse
        if flags & URG and (body.urgent_ptr == 0 or not flags & ACK):
            if self._bump(src, _URG, now) >= cfg.urg_anomaly_per_source:
                return Finding(URG_ANOMALY)
            return None

        return None

    def observe_udp(self, pkt: TraceEvent) -> Finding | None:
        """Stateless checks: blocked port, then size, then checksum."""
        cfg = self.config
        body = pkt.body
        assert isinstance(body, UdpInfo)
        if pkt.dst_port in cfg.udp_blocked_ports:
            return Finding(UDP_BLOCKED_PORT)
        if (body.length < cfg.udp_min_len or body.length > cfg.udp_max_len
                or body.length != 8 + len(body.payload)):
            return Finding(UDP_SIZE_VIOLATION)
        if cfg.udp_validate_checksum and body.checksum != 0:
            # checksum 0 means "not computed" and passes
            if not validate_udp_checksum(pkt.src_ip, pkt.dst_ip, pkt.src_port, pkt.dst_port,
                                         body.length, body.checksum, body.payload):
                return Finding(UDP_BAD_CHECKSUM)
        return None
