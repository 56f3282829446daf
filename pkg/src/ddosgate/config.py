"""Flat key=value configuration with dotted keys and strict validation.

Example file::

    # limiter
    rate.rps = 5
    rate.burst = 10
    blacklist.path = /var/lib/feeds/drop.txt
    udp.blocked_ports = 19,1900

Lines starting with '#' and blank lines are ignored. Every key has a
built-in default; an unknown key is an error, not a warning, so typos
cannot silently disable a layer. Command-line ``--set key=value``
overrides beat the file, which beats the defaults.
"""

from __future__ import annotations

from typing import Callable, TextIO

from .analyzer import DEFAULT_SIGNATURES, AnalyzerConfig, parse_signatures
from .pipeline import Engine, EngineConfig, SandboxSink
from .ratelimit import LimiterConfig
from .waf import default_ruleset, parse_ruleset


class ConfigError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    return int(text, 0)  # base 0 admits hex for the cookie secret


def _parse_ports(text: str) -> frozenset[int]:
    if not text.strip():
        return frozenset()
    ports = set()
    for part in text.split(","):
        port = int(part.strip())
        if not 0 <= port <= 65535:
            raise ValueError(f"port {port} out of range")
        ports.add(port)
    return frozenset(ports)


_KEYS: dict[str, tuple[Callable[[str], object], object]] = {
    "rate.rps": (float, 5.0),
    "rate.burst": (_parse_int, 10),
    "rate.idle_evict_secs": (float, 60.0),
    "rate.drop_to_sandbox": (_parse_bool, False),
    "blacklist.path": (str, ""),
    "blacklist.url": (str, ""),
    "blacklist.refresh_secs": (float, 300.0),
    "tcp.window_secs": (float, 10.0),
    "tcp.bucket_count": (_parse_int, 10),
    "tcp.syn_half_open_per_source": (_parse_int, 50),
    "tcp.syn_half_open_global": (_parse_int, 500),
    "tcp.ack_flood_per_source": (_parse_int, 100),
    "tcp.rst_flood_per_source": (_parse_int, 100),
    "tcp.psh_anomaly_per_source": (_parse_int, 50),
    "tcp.urg_anomaly_per_source": (_parse_int, 20),
    "tcp.handshake_timeout_secs": (float, 5.0),
    "tcp.conn_table_max_entries": (_parse_int, 65536),
    "tcp.syncookie_secret": (_parse_int, 0x9E3779B97F4A7C15),
    "tcp.signatures_path": (str, ""),
    "udp.min_len": (_parse_int, 8),
    "udp.max_len": (_parse_int, 1500),
    "udp.validate_checksum": (_parse_bool, True),
    "udp.blocked_ports": (_parse_ports, frozenset()),
    "waf.ruleset_path": (str, ""),
    "sandbox.log_path": (str, "sandbox.jsonl"),
    "stats.top_n": (_parse_int, 10),
}


def default_config() -> dict:
    return {key: default for key, (_, default) in _KEYS.items()}


def _assign(cfg: dict, key: str, raw: str, line_no: int | None) -> None:
    entry = _KEYS.get(key)
    if entry is None:
        raise ConfigError(f"unknown config key {key!r}", line_no)
    coerce, _ = entry
    try:
        cfg[key] = coerce(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", line_no) from None


def parse_config(text: str, cfg: dict | None = None) -> dict:
    cfg = cfg if cfg is not None else default_config()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", line_no)
        _assign(cfg, key.strip(), value.strip(), line_no)
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        _assign(cfg, key.strip(), value.strip(), None)
    return cfg


def build_engine(cfg: dict, sandbox_stream: TextIO,
                 fetcher: Callable[[str], str] | None = None) -> Engine:
    """Assemble an Engine from a validated config map.

    File-shaped values (ruleset, signatures) are read here; unreadable
    files surface as OSError for the caller to map to a runtime exit.
    """
    if cfg["blacklist.path"] and cfg["blacklist.url"]:
        raise ConfigError("set blacklist.path or blacklist.url, not both")
    locator = cfg["blacklist.path"] or cfg["blacklist.url"] or None

    signatures = DEFAULT_SIGNATURES
    if cfg["tcp.signatures_path"]:
        with open(cfg["tcp.signatures_path"], encoding="utf-8") as fh:
            signatures = parse_signatures(fh.read())

    ruleset = default_ruleset()
    if cfg["waf.ruleset_path"]:
        with open(cfg["waf.ruleset_path"], encoding="utf-8") as fh:
            ruleset = parse_ruleset(fh.read())

    try:
        limiter = LimiterConfig(rps=cfg["rate.rps"], burst=cfg["rate.burst"],
                                idle_evict_secs=cfg["rate.idle_evict_secs"])
        analyzer = AnalyzerConfig(
            window_secs=cfg["tcp.window_secs"],
            bucket_count=cfg["tcp.bucket_count"],
            syn_half_open_per_source=cfg["tcp.syn_half_open_per_source"],
            syn_half_open_global=cfg["tcp.syn_half_open_global"],
            ack_flood_per_source=cfg["tcp.ack_flood_per_source"],
            rst_flood_per_source=cfg["tcp.rst_flood_per_source"],
            psh_anomaly_per_source=cfg["tcp.psh_anomaly_per_source"],
            urg_anomaly_per_source=cfg["tcp.urg_anomaly_per_source"],
            handshake_timeout_secs=cfg["tcp.handshake_timeout_secs"],
            conn_table_max_entries=cfg["tcp.conn_table_max_entries"],
            udp_min_len=cfg["udp.min_len"],
            udp_max_len=cfg["udp.max_len"],
            udp_validate_checksum=cfg["udp.validate_checksum"],
            udp_blocked_ports=cfg["udp.blocked_ports"],
            syncookie_secret=cfg["tcp.syncookie_secret"],
            payload_signatures=signatures,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    engine_cfg = EngineConfig(
        limiter=limiter,
        analyzer=analyzer,
        rate_drop_to_sandbox=cfg["rate.drop_to_sandbox"],
        blacklist_locator=locator,
        blacklist_refresh_secs=cfg["blacklist.refresh_secs"],
        top_n=cfg["stats.top_n"],
    )
    return Engine(engine_cfg, ruleset=ruleset, sandbox=SandboxSink(sandbox_stream), fetcher=fetcher)
