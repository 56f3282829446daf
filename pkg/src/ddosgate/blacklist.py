"""Dynamic IP blacklisting against a refreshed CIDR feed, the second line of defense.

The feed is plain text: one CIDR or bare IPv4 per line, '#' comments.
A parsed feed becomes an immutable snapshot; refresh swaps whole
snapshots atomically so a lookup never sees a half-updated list.
Fetch failures keep the previous snapshot: a stale blacklist beats an
empty one.
"""

from __future__ import annotations

import urllib.request
from bisect import bisect_right
from dataclasses import dataclass, field, replace

DEFAULT_REFRESH_SECS = 300.0
DEFAULT_FETCH_TIMEOUT_SECS = 10.0


def _parse_ipv4(text: str) -> int | None:
    parts = text.split(".")
    if len(parts) != 4:
        return None
    value = 0
    for p in parts:
        if not p.isdigit() or (len(p) > 1 and p[0] == "0") or int(p) > 255:
            return None
        value = (value << 8) | int(p)
    return value


def _ipv4_to_str(value: int) -> str:
    return f"{value >> 24}.{(value >> 16) & 0xFF}.{(value >> 8) & 0xFF}.{value & 0xFF}"


@dataclass(frozen=True, slots=True, order=True)
class Cidr:
    base: int  # network address as 32-bit int, host bits zero
    prefix_len: int

    def __str__(self) -> str:
        return f"{_ipv4_to_str(self.base)}/{self.prefix_len}"

    @property
    def last(self) -> int:
        return self.base | ((1 << (32 - self.prefix_len)) - 1)


def parse_cidr(text: str) -> Cidr | None:
    """One CIDR or bare IP (treated as /32); host bits are cleared."""
    addr, sep, plen = text.partition("/")
    ip = _parse_ipv4(addr.strip())
    if ip is None:
        return None
    if not sep:
        return Cidr(base=ip, prefix_len=32)
    plen = plen.strip()
    if not plen.isdigit() or int(plen) > 32:
        return None
    n = int(plen)
    mask = 0 if n == 0 else (0xFFFFFFFF << (32 - n)) & 0xFFFFFFFF
    return Cidr(base=ip & mask, prefix_len=n)


class CidrSnapshot:
    """Immutable, deduplicated set of prefixes with sublinear lookup.

    Entries are kept in canonical sorted order. Lookup goes through a
    merged-interval table built once at construction: overlapping or
    adjacent prefixes collapse into disjoint [start, end] ranges, so a
    query is a single binary search regardless of entry count.
    """

    __slots__ = ("entries", "version", "loaded_at_ts", "_starts", "_ends")

    def __init__(self, entries: list[Cidr], version: int = 0, loaded_at_ts: float = 0.0):
        self.entries: tuple[Cidr, ...] = tuple(sorted(set(entries)))
        self.version = version
        self.loaded_at_ts = loaded_at_ts
        starts: list[int] = []
        ends: list[int] = []
        for c in self.entries:
            lo, hi = c.base, c.last
            if starts and lo <= ends[-1] + 1:
                if hi > ends[-1]:
                    ends[-1] = hi
            else:
                starts.append(lo)
                ends.append(hi)
        self._starts = starts
        self._ends = ends

    def __len__(self) -> int:
        return len(self.entries)

    def contains(self, ip: str | int) -> bool:
        """True iff any entry's prefix covers ip."""
        value = ip if isinstance(ip, int) else _parse_ipv4(ip)
        if value is None:
            return False
        i = bisect_right(self._starts, value) - 1
        return i >= 0 and value <= self._ends[i]


def contains(snapshot: CidrSnapshot, ip: str | int) -> bool:
    return snapshot.contains(ip)


def parse_feed(text: str) -> tuple[list[Cidr], list[tuple[int, str]]]:
    """Parse feed text into entries plus a (line_no, reason) skip report.

    Never fatal: bad lines are skipped and reported, blank lines and
    '#' comments are ignored.
    """
    entries: list[Cidr] = []
    skipped: list[tuple[int, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cidr = parse_cidr(line)
        if cidr is None:
            skipped.append((line_no, "bad_address"))
        else:
            entries.append(cidr)
    return entries, skipped


def serialize_feed(entries: list[Cidr] | tuple[Cidr, ...]) -> str:
    """Canonical feed text: sorted, deduplicated, one entry per line."""
    return "".join(f"{c}\n" for c in sorted(set(entries)))


def fetch_feed(locator: str, timeout: float = DEFAULT_FETCH_TIMEOUT_SECS) -> str:
    """Read the feed from a local path or an http(s) URL with a bounded timeout."""
    if locator.startswith(("http://", "https://")):
        with urllib.request.urlopen(locator, timeout=timeout) as resp:
            return resp.read().decode("utf-8", errors="replace")
    with open(locator, encoding="utf-8") as fh:
        return fh.read()


@dataclass(frozen=True)
class BlacklistState:
    current: CidrSnapshot = field(default_factory=lambda: CidrSnapshot([]))
    refresh_interval_secs: float = DEFAULT_REFRESH_SECS
    source_locator: str | None = None
    error_count: int = 0
    last_attempt_ts: float | None = None

    def refresh_due(self, now: float) -> bool:
        # Attempt time, not load time, gates retries: a failing feed is
        # re-tried once per interval instead of on every event.
        if self.source_locator is None:
            return False
        if self.last_attempt_ts is None:
            return True
        return now - self.last_attempt_ts >= self.refresh_interval_secs


def refresh(state: BlacklistState, fetched: str | None, now: float) -> BlacklistState:
    """Swap in a new snapshot on success; keep the old one on failure.

    ``fetched`` is the feed text, or None when the fetch failed. A
    failure only bumps error_count; the data path never sees partial
    state and never loses its current list.
    """
    if fetched is None:
        return replace(state, error_count=state.error_count + 1, last_attempt_ts=now)
    entries, _skipped = parse_feed(fetched)
    snapshot = CidrSnapshot(entries, version=state.current.version + 1, loaded_at_ts=now)
    return replace(state, current=snapshot, last_attempt_ts=now)
