"""Admission filter in front of the main service.

Each new flow is verified once, on its first packet; admitted flows are tracked
until they end or go idle.  With the used-address cache enabled, destinations
of recently ended (and currently active) flows are refused, closing the fast
replay gap left by the verification window.
"""

import enum
import itertools
import logging
import socket
import struct
import threading
import time
from collections import Counter
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import NamedTuple

import numpy as np

from .addrcodec import (
    CipherKey,
    RoutingPrefix,
    SaltParams,
    hash_source,
    to_address,
    verify_address,
    verify_suffixes,
)

log = logging.getLogger(__name__)

DEFAULT_IDLE_TIMEOUT_MS = 300_000


class Verdict(enum.Enum):
    ADMIT_NEW = "admit"
    PASS_ESTABLISHED = "pass"
    DROP = "drop"


class FlowKey(NamedTuple):
    src: object
    dst: object
    sport: int
    dport: int
    proto: str = "tcp"

    @classmethod
    def make(cls, src, dst, sport, dport, proto="tcp"):
        return cls(to_address(src), to_address(dst), int(sport), int(dport), proto)


@dataclass
class FlowEntry:
    admitted_at: int
    last_seen: int


class ExpireCounts(NamedTuple):
    flows: int
    cache_entries: int

    @property
    def total(self):
        return self.flows + self.cache_entries


@dataclass
class GatewayConfig:
    prefix: RoutingPrefix
    key: CipherKey
    params: SaltParams
    cache: bool = False
    idle_timeout_ms: int = DEFAULT_IDLE_TIMEOUT_MS

    def __post_init__(self):
        if self.prefix.length != 64:
            raise ValueError(f"gateway prefix must be a /64, got {self.prefix}")
        if self.idle_timeout_ms <= 0:
            raise ValueError("idle_timeout_ms must be positive")


class Gateway:
    """Thread-safe flow admission.

    ``verifier`` defaults to :func:`verify_address`; tests swap in an
    instrumented one.  All table operations happen under one lock, which also
    makes verification at-most-once per flow under concurrent first packets.
    """

    def __init__(self, config, verifier=None):
        self.config = config
        self._verify = verifier or verify_address
        self.flows = {}
        self.used = {}  # dst -> flow end time
        self._active_dst = Counter()
        self._lock = threading.Lock()
        self.stats = Counter()

    @property
    def retention_ms(self):
        return self.config.params.window_length

    def _log(self, verdict, key, reason):
        level = logging.INFO if verdict is Verdict.ADMIT_NEW else logging.DEBUG
        if log.isEnabledFor(level):
            log.log(level, "verdict=%s src=%s dst=%s reason=%s", verdict.value, key.src, key.dst, reason)

    def _evict_cache(self, now_ms):
        # ``used`` is kept in stamping order, so stale entries sit at the front;
        # an out-of-order stamp only delays eviction, never shortens it
        horizon = now_ms - self.retention_ms
        n = 0
        for dst, ended in self.used.items():
            if ended >= horizon:
                break
            n += 1
        for dst in list(itertools.islice(self.used, n)):
            del self.used[dst]
        return n

    def _cache_blocks(self, dst, now_ms):
        if not self.config.cache:
            return False
        self._evict_cache(now_ms)
        return dst in self.used or self._active_dst[dst] > 0

    def _finish(self, verdict, key, reason):
        self.stats[reason] += 1
        self._log(verdict, key, reason)
        return verdict

    def _insert(self, key, now_ms):
        self.flows[key] = FlowEntry(now_ms, now_ms)
        if self.config.cache:
            self._active_dst[key.dst] += 1

    def admit_packet(self, key, is_flow_start, now_ms):
        cfg = self.config
        with self._lock:
            entry = self.flows.get(key)
            if entry is not None:
                entry.last_seen = now_ms
                return self._finish(Verdict.PASS_ESTABLISHED, key, "table")
            if not is_flow_start:
                # mid-flow packet with no tracked flow: never verified, never admitted
                return self._finish(Verdict.DROP, key, "untracked")
            if self._cache_blocks(key.dst, now_ms):
                return self._finish(Verdict.DROP, key, "cache")
            try:
                ok = self._verify(key.src, key.dst, cfg.prefix, cfg.key, cfg.params, now_ms)
            except Exception:
                ok = False
            self.stats["verifications"] += 1
            if not ok:
                return self._finish(Verdict.DROP, key, "out-of-window")
            self._insert(key, now_ms)
            return self._finish(Verdict.ADMIT_NEW, key, "in-window")

    def admit_batch(self, src, suffixes, sports, dport, now_ms, proto="tcp"):
        """Flow starts from one source to many destinations, verified vectorized.

        Used by the simulator for scan traffic.  Returns a boolean mask of
        admitted flows.  Flows already tracked count as passes, not admissions.
        """
        cfg = self.config
        suffixes = np.asarray(suffixes, dtype=np.uint64)
        src = to_address(src)
        ok = verify_suffixes(hash_source(src), suffixes, cfg.key, cfg.params, now_ms)
        admitted = np.zeros(suffixes.shape, dtype=bool)
        with self._lock:
            self.stats["verifications"] += int(suffixes.size)
            self.stats["out-of-window"] += int((~ok).sum())
            for i in np.flatnonzero(ok):
                dst = to_address(cfg.prefix.base | int(suffixes[i]))
                key = FlowKey(src, dst, int(sports[i]), dport, proto)
                if key in self.flows:
                    self.flows[key].last_seen = now_ms
                    self._finish(Verdict.PASS_ESTABLISHED, key, "table")
                elif self._cache_blocks(dst, now_ms):
                    self._finish(Verdict.DROP, key, "cache")
                else:
                    self._insert(key, now_ms)
                    self._finish(Verdict.ADMIT_NEW, key, "in-window")
                    admitted[i] = True
        return admitted

    def record_flow_end(self, key, now_ms):
        with self._lock:
            self._end(key, now_ms)

    def _end(self, key, now_ms):
        if self.flows.pop(key, None) is None:
            return False
        if self.config.cache:
            self._active_dst[key.dst] -= 1
            if self._active_dst[key.dst] <= 0:
                del self._active_dst[key.dst]
            self.used.pop(key.dst, None)
            self.used[key.dst] = now_ms
        return True

    def expire(self, now_ms):
        with self._lock:
            idle = [
                k for k, e in self.flows.items()
                if now_ms - e.last_seen > self.config.idle_timeout_ms
            ]
            for k in idle:
                self._end(k, now_ms)
            return ExpireCounts(len(idle), self._evict_cache(now_ms))

    def __len__(self):
        return len(self.flows)


# -- demo TCP front end ------------------------------------------------------


def _now_ms():
    return time.time_ns() // 1_000_000


class _DemoHandler(BaseHTTPRequestHandler):
    server_version = "addressless-demo"

    def do_GET(self):
        body = (
            "<html><body><h1>addressless main service</h1>"
            f"<p>source {self.client_address[0]}</p>"
            f"<p>destination {self.connection.getsockname()[0]}</p>"
            "</body></html>\n"
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.client_address[0], fmt % args)


class GatewayServer(ThreadingHTTPServer):
    """Demo HTTP service listening on every address of the prefix.

    The host must deliver the whole /64 to this process, e.g. on Linux
    ``ip -6 route add local <prefix> dev lo``.  Connections that fail
    admission are reset without a single payload byte.  Each TCP connection
    is one flow; it ends when the connection closes.
    """

    address_family = socket.AF_INET6
    daemon_threads = True

    def __init__(self, gateway, host="::", port=80, handler=_DemoHandler):
        self.gateway = gateway
        self._flow_of = {}
        super().__init__((host, port), handler)

    def _flow_key(self, request, client_address):
        dst, dport = request.getsockname()[:2]
        return FlowKey.make(client_address[0], dst, client_address[1], dport, "tcp")

    def verify_request(self, request, client_address):
        key = self._flow_key(request, client_address)
        verdict = self.gateway.admit_packet(key, True, _now_ms())
        if verdict is Verdict.DROP:
            request.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
            request.close()
            return False
        self._flow_of[id(request)] = key
        return True

    def shutdown_request(self, request):
        key = self._flow_of.pop(id(request), None)
        super().shutdown_request(request)
        if key is not None:
            self.gateway.record_flow_end(key, _now_ms())
