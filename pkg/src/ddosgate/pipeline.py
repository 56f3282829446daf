"""Four-layer zero-trust pipeline over an ordered event stream.

Per event, short-circuiting on the first non-pass:

  L1  token-bucket rate limit   -> drop_rate_limited
  L2  CIDR blacklist            -> reject_blacklisted
  L3  tcp/udp header analysis   -> sandbox(finding)
  L4  http WAF rules            -> sandbox(waf_rule_<id>)
  --  otherwise                 -> forward

HTTP events skip L3 and packet events skip L4; every event passes L1 and
L2. One verdict line is written per consumed event, forwards included,
so the verdict log is a complete audit trail. Sandboxed events are
persisted to the capture sink before their verdict is emitted.

All timing derives from event timestamps; the blacklist refresh clock is
the trace clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, TextIO

from . import blacklist as bl
from .analyzer import Analyzer, AnalyzerConfig
from .events import (
    DROP_RATE_LIMITED,
    FORWARD,
    REJECT_BLACKLISTED,
    SANDBOX,
    TraceEvent,
    TraceParseError,
    Verdict,
    parse_trace_event,
    serialize_trace_event,
    serialize_verdict_record,
)
from .ratelimit import LimiterConfig, LimiterTable
from .waf import RuleSet, default_ruleset, evaluate

RATE_LIMITED = "rate_limited"
BLACKLISTED = "blacklisted"


class OutOfOrderError(RuntimeError):
    def __init__(self, event_id: int, ts: float, last_ts: float):
        self.event_id = event_id
        super().__init__(f"event {event_id}: ts {ts} is earlier than previous event ts {last_ts}")


class SandboxSink:
    """Append-only capture of sandboxed traffic: the event verbatim, the
    reason it was caught, and the trace time of the verdict."""

    def __init__(self, stream: TextIO):
        self._stream = stream
        self.captured = 0
        self.by_reason: dict[str, int] = {}

    def capture(self, event: TraceEvent, reason: str, verdict_ts: float) -> None:
        self._stream.write('{"event":%s,"reason":%s,"verdict_ts":%s}\n'
                           % (serialize_trace_event(event), json.dumps(reason), json.dumps(verdict_ts)))
        self.captured += 1
        self.by_reason[reason] = self.by_reason.get(reason, 0) + 1


@dataclass
class Stats:
    events: int = 0
    verdict_totals: dict[str, int] = field(default_factory=lambda: {
        FORWARD: 0, DROP_RATE_LIMITED: 0, REJECT_BLACKLISTED: 0, SANDBOX: 0})
    examined: list[int] = field(default_factory=lambda: [0] * 5)  # index 1..4
    blocked: list[int] = field(default_factory=lambda: [0] * 5)
    blocked_by_source: dict[str, int] = field(default_factory=dict)
    waf_log_hits: dict[int, int] = field(default_factory=dict)
    first_ts: float | None = None
    last_ts: float | None = None
    skipped_lines: int = 0


@dataclass(frozen=True)
class EngineConfig:
    limiter: LimiterConfig = LimiterConfig()
    analyzer: AnalyzerConfig = AnalyzerConfig()
    rate_drop_to_sandbox: bool = False
    blacklist_locator: str | None = None  # file path or http(s) URL
    blacklist_refresh_secs: float = bl.DEFAULT_REFRESH_SECS
    top_n: int = 10


class Engine:
    def __init__(self, config: EngineConfig | None = None, ruleset: RuleSet | None = None,
                 sandbox: SandboxSink | None = None,
                 fetcher: Callable[[str], str] | None = None):
        self.config = config or EngineConfig()
        self.limiter = LimiterTable(self.config.limiter)
        self.analyzer = Analyzer(self.config.analyzer)
        self.ruleset = ruleset if ruleset is not None else default_ruleset()
        self.sandbox = sandbox
        self.stats = Stats()
        self._fetch = fetcher or bl.fetch_feed
        self.blacklist = bl.BlacklistState(
            refresh_interval_secs=self.config.blacklist_refresh_secs,
            source_locator=self.config.blacklist_locator,
        )
        self._last_ts: float | None = None

    # -- blacklist refresh -------------------------------------------------

    def _maybe_refresh_blacklist(self, now: float) -> None:
        state = self.blacklist
        if not state.refresh_due(now):
            return
        try:
            text: str | None = self._fetch(state.source_locator)
        except (OSError, ValueError):
            text = None  # keep serving the last good snapshot
        self.blacklist = bl.refresh(state, text, now)

    # -- verdicts ----------------------------------------------------------

    def _sandbox(self, event: TraceEvent, layer: int, reason: str, rule_id: int | None = None) -> Verdict:
        if self.sandbox is not None:
            self.sandbox.capture(event, reason, event.ts)  # persist before the verdict exists
        return Verdict(SANDBOX, layer, reason, rule_id)

    def process_event(self, event: TraceEvent) -> Verdict:
        """Apply the layers in order; exactly one verdict per event."""
        if self._last_ts is not None and event.ts < self._last_ts:
            raise OutOfOrderError(event.event_id, event.ts, self._last_ts)
        self._last_ts = event.ts
        stats = self.stats
        stats.events += 1
        if stats.first_ts is None:
            stats.first_ts = event.ts
        stats.last_ts = event.ts

        verdict = self._decide(event)

        stats.verdict_totals[verdict.decision] += 1
        if verdict.decision != FORWARD:
            stats.blocked[verdict.layer] += 1
            src = event.src_ip
            stats.blocked_by_source[src] = stats.blocked_by_source.get(src, 0) + 1
        return verdict

    def _decide(self, event: TraceEvent) -> Verdict:
        stats = self.stats
        now = event.ts

        stats.examined[1] += 1
        decision = self.limiter.acquire(event.src_ip, now)
        if not decision.allowed:
            if self.config.rate_drop_to_sandbox:
                return self._sandbox(event, 1, RATE_LIMITED)
            return Verdict(DROP_RATE_LIMITED, 1, RATE_LIMITED)

        self._maybe_refresh_blacklist(now)
        stats.examined[2] += 1
        if self.blacklist.current.contains(event.src_ip):
            return Verdict(REJECT_BLACKLISTED, 2, BLACKLISTED)

        if event.kind == "http":
            stats.examined[4] += 1
            waf = evaluate(self.ruleset, event.body)
            for rid in waf.log_fired:
                stats.waf_log_hits[rid] = stats.waf_log_hits.get(rid, 0) + 1
            if waf.matched:
                return self._sandbox(event, 4, f"waf_rule_{waf.rule_id}", waf.rule_id)
        else:
            stats.examined[3] += 1
            if event.kind == "tcp":
                finding = self.analyzer.observe_tcp(event, now)
            else:
                finding = self.analyzer.observe_udp(event)
            if finding is not None:
                return self._sandbox(event, 3, finding.code, finding.detail)

        return Verdict(FORWARD, 0, "")

    # -- stream driver -----------------------------------------------------

    def run_trace(self, lines: Iterable[str], verdict_out: TextIO, strict: bool = True) -> Stats:
        """Process a JSONL trace; one verdict line per event.

        Strict mode aborts on the first malformed or out-of-order line;
        lenient mode skips it and counts it in stats.skipped_lines.
        """
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                event = parse_trace_event(line, line_no=line_no)
                verdict = self.process_event(event)
            except (TraceParseError, OutOfOrderError):
                if strict:
                    raise
                self.stats.skipped_lines += 1
                continue
            verdict_out.write(serialize_verdict_record(event, verdict))
            verdict_out.write("\n")
        return self.stats

    def stats_snapshot(self) -> dict:
        """Point-in-time JSON-ready stats with a stable key order."""
        stats = self.stats
        top = sorted(stats.blocked_by_source.items(), key=lambda kv: (-kv[1], kv[0]))
        snapshot: dict = {
            "events": stats.events,
            "verdicts": dict(stats.verdict_totals),
            "layers": {
                str(layer): {"examined": stats.examined[layer], "blocked": stats.blocked[layer]}
                for layer in (1, 2, 3, 4)
            },
            "sandbox_reasons": dict(sorted(self.sandbox.by_reason.items())) if self.sandbox else {},
            "waf_log_hits": {str(k): v for k, v in sorted(stats.waf_log_hits.items())},
            "top_offenders": [[ip, count] for ip, count in top[:self.config.top_n]],
            "first_ts": stats.first_ts,
            "last_ts": stats.last_ts,
            "skipped_lines": stats.skipped_lines,
        }
        return snapshot
