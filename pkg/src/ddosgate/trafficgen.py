"""Seeded synthetic traffic: benign baseline plus canned attack patterns.

Every scenario is a pure function of (name, params, seed, duration):
identical inputs give byte-identical traces. Randomness comes from a
splitmix64 stream (golden-gamma increment, two multiply-xor-shift
finalizer rounds, constants in _Rng) — never the platform RNG or the
wall clock. Attack schedules are exact arithmetic sequences so event
counts are provable; benign inter-arrival jitter uses inverse-CDF
exponentials on the same stream.

Scenarios: normal, syn_flood, ack_flood, udp_flood, low_rate_pulse,
blacklist_mix, http_attack, mixed. Attack scenarios carry a concurrent
benign stream; source pools never overlap. Each event is labeled
"benign" or "attack:<lane>" for offline scoring; the pipeline never
reads labels.

Benign sources are built to stay under every default threshold: they
complete handshakes, keep per-source averages at or below their rate
parameter (which sits below the limiter refill rate), and emit only
well-formed UDP and inoffensive HTTP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import blacklist as bl
from .events import compute_udp_checksum, HttpInfo, TcpInfo, TraceEvent, UdpInfo

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15

SERVER_IP = "10.0.0.1"
HTTP_PORT = 80
DNS_PORT = 53

SCENARIO_NAMES = ("normal", "syn_flood", "ack_flood", "udp_flood",
                  "low_rate_pulse", "blacklist_mix", "http_attack", "mixed")

_COMMON_BENIGN = {"benign_sources": 3.0, "benign_rate": 2.0}

_PARAM_DEFAULTS: dict[str, dict] = {
    "normal": {"sources": 3.0, "rate": 2.0},
    "syn_flood": {"sources": 1.0, "rate": 100.0, **_COMMON_BENIGN},
    "ack_flood": {"sources": 1.0, "rate": 150.0, **_COMMON_BENIGN},
    "udp_flood": {"sources": 2.0, "rate": 100.0, **_COMMON_BENIGN},
    "low_rate_pulse": {"sources": 2.0, "period": 5.0, "width": 0.2, "burst_rate": 200.0,
                       **_COMMON_BENIGN},
    "http_attack": {"sources": 2.0, "rate": 2.0, **_COMMON_BENIGN},
    "blacklist_mix": {"sources": 4.0, "fraction": 0.5, "rate": 2.0, "feed": None,
                      **_COMMON_BENIGN},
    "mixed": {"benign_sources": 5.0, "benign_rate": 2.0,
              "syn_sources": 2.0, "syn_rate": 100.0,
              "ack_sources": 2.0, "ack_rate": 150.0,
              "udp_sources": 2.0, "udp_rate": 100.0,
              "pulse_sources": 2.0, "pulse_period": 5.0, "pulse_width": 0.2,
              "pulse_burst_rate": 200.0,
              "http_sources": 2.0, "http_rate": 2.0,
              "bl_sources": 4.0, "bl_fraction": 0.5, "bl_rate": 2.0, "feed": None},
}

# Lane ranks break timestamp ties deterministically during the merge.
_LANE_BENIGN = 0
_LANE_SYN = 1
_LANE_ACK = 2
_LANE_UDP = 3
_LANE_PULSE = 4
_LANE_HTTP = 5
_LANE_BL = 6


class _Rng:
    """splitmix64: state += golden gamma; output = finalizer(state)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next64() % n

    def randint(self, lo: int, hi: int) -> int:
        return lo + self.next64() % (hi - lo + 1)

    def uniform(self) -> float:
        return self.next64() / 2.0**64

    def expovariate(self, rate: float) -> float:
        return -math.log(1.0 - self.uniform()) / rate


def _sub_rng(seed: int, lane: int) -> _Rng:
    # decorrelate lanes so one lane's draw count never shifts another's
    z = (seed ^ ((lane + 1) * _GAMMA)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    return _Rng(z ^ (z >> 27))


@dataclass(frozen=True)
class Scenario:
    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    duration_secs: float = 10.0


def resolve_params(name: str, overrides: dict | None) -> dict:
    if name not in _PARAM_DEFAULTS:
        raise ValueError(f"unknown scenario {name!r} (expected one of {', '.join(SCENARIO_NAMES)})")
    resolved = dict(_PARAM_DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in resolved:
            raise ValueError(f"scenario {name!r} has no parameter {key!r}")
        resolved[key] = value if key == "feed" else float(value)
    return resolved


# Pending event rows: (t_us, lane, seq_no, TraceEvent with placeholder id)


def _row(t_us: int, lane: int, seq_no: int, kind: str, src_ip: str, src_port: int,
         dst_port: int, body, label: str):
    return (t_us, lane, seq_no, TraceEvent(
        event_id=0, ts=t_us / 1e6, kind=kind, src_ip=src_ip, dst_ip=SERVER_IP,
        src_port=src_port, dst_port=dst_port, body=body, label=label))


_BENIGN_PATHS = (
    "/", "/index.html", "/products?id=3", "/products?id=17&sort=price",
    "/search?q=deterministic+networks", "/api/v1/items/42", "/static/app.css",
    "/account/settings", "/docs/getting-started", "/cart",
)
_BENIGN_AGENTS = (
    "Mozilla/5.0 (X11; Linux x86_64; rv:115.0) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 Chrome/117.0",
    "curl/8.1.2",
)


def _benign_http(rng: _Rng) -> HttpInfo:
    if rng.below(8) == 0:
        return HttpInfo("POST", "/cart", "HTTP/1.1",
                        (("host", "example.test"),
                         ("user-agent", _BENIGN_AGENTS[rng.below(len(_BENIGN_AGENTS))]),
                         ("content-type", "application/x-www-form-urlencoded")),
                        b"item=7&quantity=2", rng.randint(20, 600))
    return HttpInfo("GET", _BENIGN_PATHS[rng.below(len(_BENIGN_PATHS))], "HTTP/1.1",
                    (("host", "example.test"),
                     ("user-agent", _BENIGN_AGENTS[rng.below(len(_BENIGN_AGENTS))]),
                     ("accept", "text/html,application/xhtml+xml")),
                    b"", rng.randint(20, 600))


def _session_lane(rng: _Rng, ips: list[tuple[str, str]], rate: float, duration: float,
                  lane: int) -> list:
    """Well-behaved request/response traffic: complete handshakes, polite
    pacing, a hard per-source budget of rate * duration events."""
    rows = []
    seq_no = 0
    dur_us = int(duration * 1e6)
    for src_ip, label in ips:
        budget = int(rate * duration)
        emitted = 0
        t_us = rng.below(500_000)  # staggered start
        while emitted < budget and t_us < dur_us:
            if rng.below(3) == 2 and emitted + 1 <= budget:
                # standalone DNS-style lookup, checksum computed for real
                sport = 30000 + rng.below(20000)
                payload = bytes(rng.below(256) for _ in range(16 + rng.below(24)))
                length = 8 + len(payload)
                csum = compute_udp_checksum(src_ip, SERVER_IP, sport, DNS_PORT, length, payload)
                rows.append(_row(t_us, lane, seq_no, "udp", src_ip, sport, DNS_PORT,
                                 UdpInfo(length, csum, payload), label))
                seq_no += 1
                emitted += 1
            elif emitted + 2 <= budget:
                sport = 40000 + rng.below(20000)
                isn = rng.next64() & 0xFFFFFFFF
                rtt_us = rng.randint(20_000, 80_000)
                ack_t = t_us + rtt_us
                if ack_t >= dur_us:
                    break  # never leave a half-open handshake behind
                rows.append(_row(t_us, lane, seq_no, "tcp", src_ip, sport, HTTP_PORT,
                                 TcpInfo(0x01, isn, 0, 0, b""), label))  # SYN
                seq_no += 1
                rows.append(_row(ack_t, lane, seq_no, "tcp", src_ip, sport, HTTP_PORT,
                                 TcpInfo(0x02, (isn + 1) & 0xFFFFFFFF,
                                         rng.next64() & 0xFFFFFFFF, 0, b""), label))  # ACK
                seq_no += 1
                emitted += 2
                req_t = ack_t + rng.randint(5_000, 40_000)
                if emitted + 1 <= budget and req_t < dur_us:
                    rows.append(_row(req_t, lane, seq_no, "http", src_ip, sport, HTTP_PORT,
                                     _benign_http(rng), label))
                    seq_no += 1
                    emitted += 1
            else:
                break
            gap = max(1.0, rng.expovariate(max(rate, 0.1) / 3.5))
            t_us += int(gap * 1e6)
    return rows


def _schedule(rate: float, duration: float) -> list[int]:
    n = int(rate * duration + 1e-9)
    return [round(i * 1e6 / rate) for i in range(n)]


def _syn_flood_lane(rng: _Rng, sources: int, rate: float, duration: float, lane: int) -> list:
    rows = []
    seq_no = 0
    label = "attack:syn_flood"
    for k in range(sources):
        src_ip = f"10.2.{k // 250}.{1 + k % 250}"
        for i, t_us in enumerate(_schedule(rate, duration)):
            # fresh port per SYN: every flow stays half-open forever
            rows.append(_row(t_us, lane, seq_no, "tcp", src_ip, 1024 + i % 64512, HTTP_PORT,
                             TcpInfo(0x01, rng.next64() & 0xFFFFFFFF, 0, 0, b""), label))
            seq_no += 1
    return rows


def _ack_flood_lane(rng: _Rng, sources: int, rate: float, duration: float, lane: int) -> list:
    rows = []
    seq_no = 0
    label = "attack:ack_flood"
    for k in range(sources):
        src_ip = f"10.3.{k // 250}.{1 + k % 250}"
        for i, t_us in enumerate(_schedule(rate, duration)):
            rows.append(_row(t_us, lane, seq_no, "tcp", src_ip, 2048 + i % 60000, HTTP_PORT,
                             TcpInfo(0x02, rng.next64() & 0xFFFFFFFF,
                                     rng.next64() & 0xFFFFFFFF, 0, b""), label))
            seq_no += 1
    return rows


def _udp_flood_lane(rng: _Rng, sources: int, rate: float, duration: float, lane: int) -> list:
    rows = []
    seq_no = 0
    label = "attack:udp_flood"
    for k in range(sources):
        src_ip = f"10.4.{k // 250}.{1 + k % 250}"
        for i, t_us in enumerate(_schedule(rate, duration)):
            sport = 1024 + i % 60000
            variant = i % 3
            if variant == 0:
                # length field claims far more than any sane datagram
                payload = bytes(rng.below(256) for _ in range(64))
                info = UdpInfo(2000, 0, payload)
            elif variant == 1:
                payload = bytes(rng.below(256) for _ in range(32))
                good = compute_udp_checksum(src_ip, SERVER_IP, sport, DNS_PORT, 40, payload)
                bad = good ^ 0x5555
                if bad == 0:
                    bad = 0x2AAA
                info = UdpInfo(40, bad, payload)
            else:
                # header length disagrees with what is actually carried
                payload = bytes(rng.below(256) for _ in range(24))
                info = UdpInfo(24, 0, payload)
            rows.append(_row(t_us, lane, seq_no, "udp", src_ip, sport, DNS_PORT, info, label))
            seq_no += 1
    return rows


_PULSE_PAYLOAD = b"GET / HTTP/1.1\r\nHost: example.test\r\n\r\n"


def _pulse_lane(rng: _Rng, sources: int, period: float, width: float, burst_rate: float,
                duration: float, lane: int) -> list:
    """Quiet sources that wake up for short square-wave bursts — the
    low-rate pattern that stays invisible to volume-only thresholds."""
    rows = []
    seq_no = 0
    label = "attack:low_rate_pulse"
    per_burst = int(burst_rate * width + 1e-9)
    for k in range(sources):
        src_ip = f"10.5.{k // 250}.{1 + k % 250}"
        sport = 3000 + k
        phase_us = rng.below(int(period * 2e5) or 1)
        burst = 0
        while True:
            start_us = phase_us + round(burst * period * 1e6)
            if start_us >= duration * 1e6:
                break
            for i in range(per_burst):
                t_us = start_us + round(i * 1e6 / burst_rate)
                if t_us >= duration * 1e6:
                    break
                rows.append(_row(t_us, lane, seq_no, "tcp", src_ip, sport, HTTP_PORT,
                                 TcpInfo(0x02 | 0x10, rng.next64() & 0xFFFFFFFF,
                                         rng.next64() & 0xFFFFFFFF, 0, _PULSE_PAYLOAD), label))
                seq_no += 1
            burst += 1
    return rows


def _http_attack_requests() -> list[HttpInfo]:
    base = (("host", "example.test"), ("user-agent", "Mozilla/5.0 (X11; Linux x86_64)"))
    return [
        HttpInfo("GET", "/products?id=1%20UNION%20SELECT%20name,pass%20FROM%20users",
                 "HTTP/1.1", base, b"", 45),
        HttpInfo("GET", "/search?q=%3Cscript%3Ealert(1)%3C%2Fscript%3E", "HTTP/1.1", base, b"", 50),
        HttpInfo("GET", "/static/../../../etc/passwd", "HTTP/1.1", base, b"", 40),
        HttpInfo("POST", "/login", "HTTP/1.1",
                 base + (("content-type", "application/x-www-form-urlencoded"),),
                 b"username=admin&password=%27%20OR%201%3D1--", 60),
        HttpInfo("GET", "/" + "A" * 2100, "HTTP/1.1", base, b"", 35),
        HttpInfo("GET", "/download?file=report.pdf", "HTTP/1.1", base, b"", 45000),
        HttpInfo("GET", "/cgi-bin/status", "HTTP/1.1",
                 base + (("x-probe", "() { :; }; /bin/id"),), b"", 55),
        HttpInfo("GET", "/admin", "HTTP/1.1",
                 (("host", "example.test"), ("user-agent", "sqlmap/1.6.12#stable (http://sqlmap.org)")),
                 b"", 65),
    ]


def _http_attack_lane(rng: _Rng, sources: int, rate: float, duration: float, lane: int) -> list:
    rows = []
    seq_no = 0
    label = "attack:http_attack"
    requests = _http_attack_requests()
    for k in range(sources):
        src_ip = f"10.7.{k // 250}.{1 + k % 250}"
        phase_us = rng.below(200_000)
        for i, t_us in enumerate(_schedule(rate, duration)):
            rows.append(_row(phase_us + t_us, lane, seq_no, "http", src_ip,
                             40000 + i % 20000, HTTP_PORT, requests[i % len(requests)], label))
            seq_no += 1
    return rows


def _int_to_ip(value: int) -> str:
    return f"{value >> 24 & 255}.{value >> 16 & 255}.{value >> 8 & 255}.{value & 255}"


def _blacklist_sources(feed_path: str, sources: int, fraction: float) -> list[tuple[str, str]]:
    with open(feed_path, encoding="utf-8") as fh:
        entries, _skipped = bl.parse_feed(fh.read())
    if not entries:
        raise ValueError(f"feed {feed_path!r} contains no usable entries")
    listed_count = round(sources * fraction)
    ips = []
    for i in range(sources):
        if i < listed_count:
            entry = entries[i % len(entries)]
            span = entry.last - entry.base
            offset = min(1 + i // len(entries), span)
            ips.append((_int_to_ip(entry.base + offset), "attack:blacklist_mix"))
        else:
            ips.append((f"198.51.100.{1 + i}", "benign"))
    return ips


def _benign_ips(sources: int) -> list[tuple[str, str]]:
    return [(f"10.1.{s // 250}.{1 + s % 250}", "benign") for s in range(sources)]


def generate(scenario: Scenario) -> list[TraceEvent]:
    """Build the full ts-sorted trace with 1-based, strictly increasing ids."""
    name = scenario.name
    p = resolve_params(name, scenario.params)
    seed = scenario.seed
    duration = scenario.duration_secs
    rows: list = []

    def benign(lane_sources_key: str, lane_rate_key: str):
        n = int(p[lane_sources_key])
        if n > 0:
            rows.extend(_session_lane(_sub_rng(seed, _LANE_BENIGN), _benign_ips(n),
                                      p[lane_rate_key], duration, _LANE_BENIGN))

    if name == "normal":
        rows.extend(_session_lane(_sub_rng(seed, _LANE_BENIGN), _benign_ips(int(p["sources"])),
                                  p["rate"], duration, _LANE_BENIGN))
    elif name == "syn_flood":
        benign("benign_sources", "benign_rate")
        rows.extend(_syn_flood_lane(_sub_rng(seed, _LANE_SYN), int(p["sources"]), p["rate"],
                                    duration, _LANE_SYN))
    elif name == "ack_flood":
        benign("benign_sources", "benign_rate")
        rows.extend(_ack_flood_lane(_sub_rng(seed, _LANE_ACK), int(p["sources"]), p["rate"],
                                    duration, _LANE_ACK))
    elif name == "udp_flood":
        benign("benign_sources", "benign_rate")
        rows.extend(_udp_flood_lane(_sub_rng(seed, _LANE_UDP), int(p["sources"]), p["rate"],
                                    duration, _LANE_UDP))
    elif name == "low_rate_pulse":
        benign("benign_sources", "benign_rate")
        rows.extend(_pulse_lane(_sub_rng(seed, _LANE_PULSE), int(p["sources"]), p["period"],
                                p["width"], p["burst_rate"], duration, _LANE_PULSE))
    elif name == "http_attack":
        benign("benign_sources", "benign_rate")
        rows.extend(_http_attack_lane(_sub_rng(seed, _LANE_HTTP), int(p["sources"]), p["rate"],
                                      duration, _LANE_HTTP))
    elif name == "blacklist_mix":
        if not p["feed"]:
            raise ValueError("blacklist_mix requires a feed parameter (path to a CIDR feed file)")
        benign("benign_sources", "benign_rate")
        ips = _blacklist_sources(p["feed"], int(p["sources"]), p["fraction"])
        rows.extend(_session_lane(_sub_rng(seed, _LANE_BL), ips, p["rate"], duration, _LANE_BL))
    else:  # mixed
        benign("benign_sources", "benign_rate")
        rows.extend(_syn_flood_lane(_sub_rng(seed, _LANE_SYN), int(p["syn_sources"]),
                                    p["syn_rate"], duration, _LANE_SYN))
        rows.extend(_ack_flood_lane(_sub_rng(seed, _LANE_ACK), int(p["ack_sources"]),
                                    p["ack_rate"], duration, _LANE_ACK))
        rows.extend(_udp_flood_lane(_sub_rng(seed, _LANE_UDP), int(p["udp_sources"]),
                                    p["udp_rate"], duration, _LANE_UDP))
        rows.extend(_pulse_lane(_sub_rng(seed, _LANE_PULSE), int(p["pulse_sources"]),
                                p["pulse_period"], p["pulse_width"], p["pulse_burst_rate"],
                                duration, _LANE_PULSE))
        rows.extend(_http_attack_lane(_sub_rng(seed, _LANE_HTTP), int(p["http_sources"]),
                                      p["http_rate"], duration, _LANE_HTTP))
        if p["feed"]:
            ips = _blacklist_sources(p["feed"], int(p["bl_sources"]), p["bl_fraction"])
            rows.extend(_session_lane(_sub_rng(seed, _LANE_BL), ips, p["bl_rate"], duration, _LANE_BL))

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return [replace(row[3], event_id=i) for i, row in enumerate(rows, start=1)]


def summarize(scenario: Scenario, events: list[TraceEvent]) -> dict:
    """Ground-truth sidecar: label totals and the per-source label map."""
    label_counts: dict[str, int] = {}
    source_labels: dict[str, str] = {}
    for ev in events:
        label = ev.label or "benign"
        label_counts[label] = label_counts.get(label, 0) + 1
        source_labels.setdefault(ev.src_ip, label)
    params = {k: v for k, v in resolve_params(scenario.name, scenario.params).items()
              if v is not None}
    return {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "duration_secs": scenario.duration_secs,
        "params": params,
        "events": len(events),
        "label_counts": dict(sorted(label_counts.items())),
        "source_labels": dict(sorted(source_labels.items())),
    }


def scenario_manifest(scenario: Scenario) -> dict:
    return summarize(scenario, generate(scenario))
