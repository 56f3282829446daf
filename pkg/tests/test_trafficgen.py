"""Generator determinism, schedules, labels, and benign well-formedness."""

import pytest

from ddosgate.blacklist import CidrSnapshot, parse_feed
from ddosgate.events import SYN, TcpInfo, serialize_trace_event, validate_udp_checksum
from ddosgate.trafficgen import Scenario, generate, resolve_params, scenario_manifest, summarize


def _trace_bytes(scenario):
    return "\n".join(serialize_trace_event(e) for e in generate(scenario))


def test_unknown_scenario_and_param_rejected():
    with pytest.raises(ValueError):
        resolve_params("teardrop", None)
    with pytest.raises(ValueError):
        resolve_params("syn_flood", {"warp": 9})


def test_blacklist_mix_requires_feed():
    with pytest.raises(ValueError):
        generate(Scenario("blacklist_mix", seed=1))


def test_same_inputs_same_bytes():
    sc = Scenario("mixed", seed=123, duration_secs=3.0)
    assert _trace_bytes(sc) == _trace_bytes(sc)


def test_different_seed_different_bytes():
    a = Scenario("normal", seed=1, duration_secs=5.0)
    b = Scenario("normal", seed=2, duration_secs=5.0)
    assert _trace_bytes(a) != _trace_bytes(b)


def test_ids_increase_and_ts_never_decreases():
    events = generate(Scenario("mixed", seed=5, duration_secs=3.0))
    assert [e.event_id for e in events] == list(range(1, len(events) + 1))
    assert all(a.ts <= b.ts for a, b in zip(events, events[1:]))


def test_syn_flood_count_is_exact():
    events = generate(Scenario("syn_flood", seed=42, duration_secs=10.0,
                               params={"benign_sources": 0}))
    attack = [e for e in events if e.label == "attack:syn_flood"]
    assert len(events) == len(attack) == 1000  # 1 source * 100/s * 10 s
    assert all(isinstance(e.body, TcpInfo) and e.body.flags == SYN for e in attack)
    # zero completions: the flood never ACKs
    srcs = {e.src_ip for e in attack}
    assert len(srcs) == 1


def test_attack_rate_parameter_scales_count():
    events = generate(Scenario("ack_flood", seed=3, duration_secs=4.0,
                               params={"rate": 50, "sources": 2, "benign_sources": 0}))
    assert len(events) == 2 * 50 * 4


def test_normal_sources_stay_under_their_rate_and_complete_handshakes():
    duration = 10.0
    events = generate(Scenario("normal", seed=1, duration_secs=duration,
                               params={"sources": 3, "rate": 2.0}))
    assert events and all(e.label == "benign" for e in events)
    per_source: dict = {}
    for e in events:
        per_source.setdefault(e.src_ip, []).append(e)
    assert len(per_source) == 3
    for src, evs in per_source.items():
        assert len(evs) / duration <= 2.0 + 1e-9
        # every SYN is completed by an ACK on the same flow, afterwards
        syns = {(e.src_port): e.ts for e in evs
                if e.kind == "tcp" and e.body.flags == SYN}
        acks = {(e.src_port): e.ts for e in evs
                if e.kind == "tcp" and e.body.flags == 0x02}
        for port, ts in syns.items():
            assert port in acks and acks[port] > ts, (src, port)


def test_benign_udp_checksums_are_valid():
    events = generate(Scenario("normal", seed=8, duration_secs=20.0,
                               params={"sources": 4, "rate": 3.0}))
    udp = [e for e in events if e.kind == "udp"]
    assert udp, "expected some benign lookups"
    for e in udp:
        assert e.body.length == 8 + len(e.body.payload)
        assert validate_udp_checksum(e.src_ip, e.dst_ip, e.src_port, e.dst_port,
                                     e.body.length, e.body.checksum, e.body.payload)


def test_udp_flood_contains_all_malformation_kinds():
    events = generate(Scenario("udp_flood", seed=2, duration_secs=2.0,
                               params={"benign_sources": 0, "sources": 1, "rate": 30}))
    oversize = [e for e in events if e.body.length > 1500]
    mismatch = [e for e in events if e.body.length <= 1500
                and e.body.length != 8 + len(e.body.payload)]
    badsum = [e for e in events if e.body.length == 8 + len(e.body.payload)
              and e.body.checksum != 0
              and not validate_udp_checksum(e.src_ip, e.dst_ip, e.src_port, e.dst_port,
                                            e.body.length, e.body.checksum, e.body.payload)]
    assert oversize and mismatch and badsum
    assert len(oversize) + len(mismatch) + len(badsum) == len(events) == 60


def test_pulse_stays_quiet_between_bursts():
    events = generate(Scenario("low_rate_pulse", seed=4, duration_secs=10.0,
                               params={"benign_sources": 0, "sources": 1}))
    # 2 bursts in 10 s at period 5; 40 packets per 0.2 s burst
    assert len(events) == 80
    ts = [e.ts for e in events]
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    assert max(gaps) > 4.0  # the inter-burst silence


def test_http_attack_hits_every_sandbox_rule():
    events = generate(Scenario("http_attack", seed=6, duration_secs=10.0,
                               params={"benign_sources": 0, "sources": 1, "rate": 2.0}))
    assert all(e.kind == "http" for e in events)
    uris = {e.body.uri for e in events}
    assert any("UNION" in u for u in uris)
    assert any(u.startswith("/" + "A" * 10) for u in uris)
    durations = {e.body.duration_ms for e in events}
    assert 45000 in durations


def test_blacklist_mix_draws_sources_from_feed(tmp_path):
    feed = tmp_path / "feed.txt"
    feed.write_text("203.0.113.0/24\n192.0.2.0/25\n")
    events = generate(Scenario("blacklist_mix", seed=9, duration_secs=10.0,
                               params={"feed": str(feed), "sources": 4, "fraction": 0.5,
                                       "benign_sources": 0}))
    entries, _ = parse_feed(feed.read_text())
    snap = CidrSnapshot(entries)
    listed = {e.src_ip for e in events if e.label == "attack:blacklist_mix"}
    clean = {e.src_ip for e in events if e.label == "benign"}
    assert len(listed) == 2 and all(snap.contains(ip) for ip in listed)
    assert len(clean) == 2 and not any(snap.contains(ip) for ip in clean)


def test_manifest_totals_match_trace():
    sc = Scenario("mixed", seed=11, duration_secs=3.0)
    events = generate(sc)
    manifest = summarize(sc, events)
    assert manifest["events"] == len(events)
    assert sum(manifest["label_counts"].values()) == len(events)
    # disjoint pools: each source carries exactly one label
    for e in events:
        assert manifest["source_labels"][e.src_ip] == (e.label or "benign")


def test_scenario_manifest_regenerates_consistently():
    sc = Scenario("syn_flood", seed=42, duration_secs=2.0)
    assert scenario_manifest(sc) == summarize(sc, generate(sc))
