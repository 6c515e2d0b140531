"""The exposed entrance: answers every request with a 307 to a fresh address.

The entrance never serves main-service content.  It authenticates (optionally),
picks a destination /64 via a load-balancing strategy, encrypts the client's
source address into a suffix under that prefix and redirects the client there.
"""

import hmac
import logging
import socket
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from .addrcodec import (
    CipherKey,
    CodecError,
    RoutingPrefix,
    SaltParams,
    generate_address,
    to_address,
)

log = logging.getLogger(__name__)

LB_KINDS = ("static", "round-robin", "least-connections")
AUTH_MODES = ("off", "token-list")


class EntranceConfigError(ValueError):
    pass


class LbStrategy:
    """Destination-prefix selection.

    ``static`` always returns its one prefix, ``round-robin`` cycles,
    ``least-connections`` picks the smallest live counter (lowest index wins
    ties).  Counters are an advisory load signal: :meth:`select` increments
    the chosen prefix and :meth:`release` decrements it when a flow ends.
    """

    def __init__(self, kind, prefixes):
        if kind not in LB_KINDS:
            raise EntranceConfigError(f"unknown LB strategy {kind!r}")
        prefixes = list(prefixes)
        if kind == "static" and len(prefixes) != 1:
            raise EntranceConfigError("static strategy takes exactly one prefix")
        if kind != "static" and len(prefixes) < 2:
            raise EntranceConfigError(f"{kind} needs at least two prefixes")
        for p in prefixes:
            if p.length != 64:
                raise EntranceConfigError(f"destination prefix {p} is not a /64")
        self.kind = kind
        self.prefixes = prefixes
        self.counters = [0] * len(prefixes)
        self._next = 0
        self._lock = threading.Lock()

    def select(self):
        with self._lock:
            if self.kind == "static":
                i = 0
            elif self.kind == "round-robin":
                i = self._next
                self._next = (i + 1) % len(self.prefixes)
            else:
                i = min(range(len(self.counters)), key=self.counters.__getitem__)
            self.counters[i] += 1
            return self.prefixes[i]

    def release(self, prefix):
        with self._lock:
            i = self.prefixes.index(prefix)
            if self.counters[i] > 0:
                self.counters[i] -= 1

    def set_counters(self, counters):
        with self._lock:
            if len(counters) != len(self.prefixes):
                raise ValueError("one counter per prefix")
            self.counters = list(counters)


def select_prefix(strategy):
    return strategy.select()


@dataclass
class EntranceConfig:
    key: CipherKey
    params: SaltParams
    strategy: LbStrategy
    service_port: int = 80
    listen_host: str = "::"
    listen_port: int = 8080
    auth_mode: str = "off"
    tokens: tuple = ()

    def __post_init__(self):
        if self.auth_mode not in AUTH_MODES:
            raise EntranceConfigError(f"auth mode must be one of {AUTH_MODES}")
        if self.auth_mode == "token-list" and not self.tokens:
            raise EntranceConfigError("token-list auth needs at least one token")
        if not 0 < self.service_port < 65536:
            raise EntranceConfigError(f"bad service port {self.service_port}")


@dataclass(frozen=True)
class RedirectDecision:
    target: object  # IPv6Address
    port: int
    location: str
    status: int = 307


@dataclass(frozen=True)
class Deny:
    status: int = 403
    reason: str = "forbidden"


def auth_gate(credential, config):
    """Pass/deny a credential; token comparison is constant time."""
    if config.auth_mode == "off":
        return True
    if not credential:
        return False
    given = credential.encode()
    ok = False
    for token in config.tokens:
        # no early exit, so timing does not reveal which token matched
        ok |= hmac.compare_digest(given, token.encode())
    return ok


def build_location(target, port, path="/", query=""):
    path = path or "/"
    if not path.startswith("/"):
        path = "/" + path
    loc = f"http://[{target}]:{port}{path}"
    if query:
        loc += f"?{query}"
    return loc


class Entrance:
    def __init__(self, config):
        self.config = config

    def handle_request(self, client, path="/", query="", credential=None, now_ms=None):
        """Decide the response for one request; ``now_ms`` is the entrance clock."""
        cfg = self.config
        if not auth_gate(credential, cfg):
            return Deny()
        if now_ms is None:
            now_ms = time.time_ns() // 1_000_000
        prefix = cfg.strategy.select()
        target = generate_address(to_address(client), prefix, cfg.key, cfg.params, now_ms)
        return RedirectDecision(target, cfg.service_port, build_location(target, cfg.service_port, path, query))


class _EntranceHandler(BaseHTTPRequestHandler):
    server_version = "entrance"
    protocol_version = "HTTP/1.1"

    def _respond(self):
        url = urlsplit(self.path)
        auth = self.headers.get("Authorization", "")
        credential = auth[7:].strip() if auth.lower().startswith("bearer ") else None
        try:
            decision = self.server.entrance.handle_request(
                self.client_address[0], url.path, url.query, credential
            )
        except CodecError:
            log.exception("address generation failed")
            decision = Deny(500, "internal error")
        if isinstance(decision, RedirectDecision):
            self.send_response(decision.status)
            self.send_header("Location", decision.location)
        else:
            self.send_response(decision.status)
        self.send_header("Content-Length", "0")
        self.send_header("Cache-Control", "no-store")
        self.end_headers()

    do_GET = do_HEAD = do_POST = do_PUT = do_DELETE = do_OPTIONS = _respond

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.client_address[0], fmt % args)


class EntranceServer(ThreadingHTTPServer):
    address_family = socket.AF_INET6
    daemon_threads = True

    def __init__(self, entrance, host=None, port=None):
        self.entrance = entrance
        cfg = entrance.config
        super().__init__((host or cfg.listen_host, cfg.listen_port if port is None else port), _EntranceHandler)


def make_entrance(key, params, prefixes, lb="static", **kwargs):
    """Convenience constructor; ``prefixes`` may be strings or RoutingPrefix."""
    prefixes = [p if isinstance(p, RoutingPrefix) else RoutingPrefix.parse(p) for p in prefixes]
    return Entrance(EntranceConfig(key, params, LbStrategy(lb, prefixes), **kwargs))
