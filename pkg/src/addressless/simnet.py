"""Seeded discrete-event simulation of clients, attackers, entrance and gateways.

Virtual time is integer milliseconds.  All randomness comes from one
``numpy.random.Generator`` seeded by the scenario, so a (scenario, seed) pair
always yields identical metrics.  Flows are start/end events, not packets.

Scenario JSON (all keys optional except ``kind``)::

    {
      "kind": "legit",              # legit | brute_scan | hitlist_scan | replay
                                    # | stateful_race | random_lb | dynamic_lb
      "seed": 0,
      "cipher": "reference-des",    # or "toy16"
      "key": null,                  # hex; drawn from the seed when null
      "salt": {"t0_ms": 0, "step_x_ms": 5,
               "window": {"kind": "symmetric", "threshold_ms": 10000}},
      "start_ms": 3600000,          # virtual time of the first event
      "prefix": "2001:db8:1::/64",
      "devices": null,              # random_lb: sub-prefixes of prefix
                                    # dynamic_lb: one /64 per device
      "lb_strategy": "round-robin", # dynamic_lb only
      "clients": 100,               # spread uniformly over duration_ms
      "client_list": null,          # [{"src": ..., "at_ms": ..., "delay_ms": ...}]
      "duration_ms": 1000,
      "link_entrance": {"fixed": 5},            # or {"uniform": [lo, hi]}
      "link_gateway": {"fixed": 5},
      "client_processing": {"fixed": 0},
      "flow_duration": {"fixed": 100},
      "t_syn_ms": 0, "t_pro_en_ms": 0, "t_pro_ma_ms": 0,
      "cache": false, "idle_timeout_ms": 300000,
      "intercept_prob": null,       # required by replay and hitlist_scan
      "replay_lag_ms": null,        # required by replay; counted from flow end
      "scan_mode": "random",        # brute_scan: random (with replacement) | sweep
      "trials": 0, "batch_size": 1000000, "scan_at_ms": 0,
      "scan_source": "2001:db8:c11e::1",
      "attacker_src": "2001:db8:bad::1",
      "hitlist_lag_ms": 1, "pattern_probes": 1000,
      "salt_mode": "stateless"      # stateful_race: stateless | stateful
    }

In ``client_list`` entries ``delay_ms`` is the client's one-way delay to the
gateway; it overrides ``link_gateway`` for that client.
"""

import heapq
import ipaddress
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .addrcodec import (
    CIPHERS,
    MASK64,
    CipherKey,
    CodecError,
    RoutingPrefix,
    decrypt_block,
    generate_suffix,
    get_cipher,
    hash_source,
    to_address,
)
from .config import ConfigError, salt_params_from_dict
from .entrance import Entrance, EntranceConfig, LbStrategy
from .gateway import FlowKey, Gateway, GatewayConfig, Verdict

KINDS = ("legit", "brute_scan", "hitlist_scan", "replay", "stateful_race", "random_lb", "dynamic_lb")
DEFAULT_SALT = {"t0_ms": 0, "step_x_ms": 5, "window": {"kind": "symmetric", "threshold_ms": 10_000}}
CLIENT_NET = int(ipaddress.IPv6Address("2001:db8:cafe::"))


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ZeroFlowError(ValueError):
    pass


# -- clock and links ---------------------------------------------------------


class SimClock:
    """Event queue ordered by (time, insertion sequence)."""

    def __init__(self, start_ms=0):
        self.now = start_ms
        self._queue = []
        self._seq = 0

    def at(self, when, fn, *args):
        if when < self.now:
            raise ValueError(f"event at {when} is before now={self.now}")
        heapq.heappush(self._queue, (when, self._seq, fn, args))
        self._seq += 1

    def after(self, delay, fn, *args):
        self.at(self.now + delay, fn, *args)

    def run(self):
        q = self._queue
        while q:
            when, _, fn, args = heapq.heappop(q)
            self.now = when
            fn(*args)

    def __len__(self):
        return len(self._queue)


@dataclass(frozen=True)
class Link:
    lo: int
    hi: int

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, Link):
            return spec
        if isinstance(spec, dict) and len(spec) == 1:
            if "fixed" in spec:
                v = spec["fixed"]
                if isinstance(v, int) and v >= 0:
                    return cls(v, v)
            elif "uniform" in spec:
                v = spec["uniform"]
                if (isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v)
                        and 0 <= v[0] <= v[1]):
                    return cls(v[0], v[1])
        raise ValueError(f"link must be {{'fixed': ms}} or {{'uniform': [lo, hi]}} with 0 <= lo <= hi, got {spec!r}")

    def sample(self, rng):
        if self.lo == self.hi:
            return self.lo
        return int(rng.integers(self.lo, self.hi + 1))

    def to_dict(self):
        return {"fixed": self.lo} if self.lo == self.hi else {"uniform": [self.lo, self.hi]}


# -- scenario ----------------------------------------------------------------


@dataclass
class Scenario:
    kind: str
    seed: int = 0
    cipher: str = "reference-des"
    key: str = None
    salt: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_SALT)))
    start_ms: int = None
    prefix: str = "2001:db8:1::/64"
    devices: list = None
    lb_strategy: str = "round-robin"
    clients: int = 100
    client_list: list = None
    duration_ms: int = 1000
    link_entrance: dict = field(default_factory=lambda: {"fixed": 5})
    link_gateway: dict = field(default_factory=lambda: {"fixed": 5})
    client_processing: dict = field(default_factory=lambda: {"fixed": 0})
    flow_duration: dict = field(default_factory=lambda: {"fixed": 100})
    t_syn_ms: int = 0
    t_pro_en_ms: int = 0
    t_pro_ma_ms: int = 0
    cache: bool = False
    idle_timeout_ms: int = 300_000
    intercept_prob: float = None
    replay_lag_ms: int = None
    scan_mode: str = "random"
    trials: int = 0
    batch_size: int = 1_000_000
    scan_at_ms: int = 0
    scan_source: str = "2001:db8:c11e::1"
    attacker_src: str = "2001:db8:bad::1"
    hitlist_lag_ms: int = 1
    pattern_probes: int = 1000
    salt_mode: str = "stateless"

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ScenarioError(["scenario must be a JSON object"])
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ScenarioError([f"unknown field {k!r}" for k in unknown])
        if "kind" not in d:
            raise ScenarioError(["kind: required"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ScenarioError([f"invalid JSON: {e}"]) from e

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Return the resolved pieces, or raise ScenarioError listing every problem."""
        errs = []
        r = {}
        if self.kind not in KINDS:
            errs.append(f"kind: must be one of {KINDS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            errs.append("seed: non-negative integer required")
        if self.cipher not in CIPHERS:
            errs.append(f"cipher: unknown {self.cipher!r}")
        r["params"] = params = salt_params_from_dict(self.salt, errs)
        if self.key is not None and self.cipher in CIPHERS:
            try:
                r["key"] = CipherKey.from_hex(self.key, self.cipher)
            except (CodecError, ValueError) as e:
                errs.append(f"key: {e}")
        start = self.start_ms
        if start is None and params is not None:
            start = params.t0 + 3_600_000
        if params is not None and (not isinstance(start, int) or start < params.t0):
            errs.append("start_ms: integer >= salt.t0_ms required")
        r["start"] = start
        try:
            prefix = RoutingPrefix.parse(self.prefix)
            if prefix.length != 64:
                errs.append(f"prefix: {prefix} must be a /64")
            r["prefix"] = prefix
        except (ValueError, CodecError) as e:
            errs.append(f"prefix: {e}")
            prefix = None
        for name in ("link_entrance", "link_gateway", "client_processing", "flow_duration"):
            try:
                r[name] = Link.parse(getattr(self, name))
            except ValueError as e:
                errs.append(f"{name}: {e}")
        for name in ("t_pro_en_ms", "t_pro_ma_ms", "hitlist_lag_ms", "scan_at_ms"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                errs.append(f"{name}: non-negative integer required")
        if not isinstance(self.t_syn_ms, int):
            errs.append("t_syn_ms: integer required")
        for name in ("clients", "trials", "pattern_probes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                errs.append(f"{name}: non-negative integer required")
        for name in ("duration_ms", "batch_size", "idle_timeout_ms"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                errs.append(f"{name}: positive integer required")
        r["clients"] = self._validate_clients(errs)
        r["devices"] = self._validate_devices(prefix, errs)

        if self.kind in ("replay", "hitlist_scan"):
            p = self.intercept_prob
            if not isinstance(p, (int, float)) or not 0 <= p <= 1:
                errs.append("intercept_prob: required for this kind, in [0, 1]")
        if self.kind == "replay":
            if not isinstance(self.replay_lag_ms, int) or self.replay_lag_ms < 0:
                errs.append("replay_lag_ms: non-negative integer required for replay")
        if self.kind == "brute_scan":
            if self.scan_mode not in ("random", "sweep"):
                errs.append("scan_mode: must be 'random' or 'sweep'")
            elif self.scan_mode == "sweep" and self.cipher in CIPHERS:
                space = 1 << get_cipher(self.cipher).block_bits
                if self.trials > space:
                    errs.append(f"trials: a sweep visits each of {space} suffixes at most once")
            if self.trials < 1:
                errs.append("trials: brute_scan needs at least one probe")
        for name in ("scan_source", "attacker_src"):
            try:
                to_address(getattr(self, name))
            except ValueError as e:
                errs.append(f"{name}: {e}")
        if self.salt_mode not in ("stateless", "stateful"):
            errs.append("salt_mode: must be 'stateless' or 'stateful'")
        elif self.salt_mode == "stateful" and self.kind != "stateful_race":
            errs.append("salt_mode: stateful is only modelled by stateful_race")
        if errs:
            raise ScenarioError(errs)
        return r

    def _validate_clients(self, errs):
        if self.client_list is None:
            return None
        if not isinstance(self.client_list, list):
            errs.append("client_list: list required")
            return None
        out = []
        for i, c in enumerate(self.client_list):
            try:
                src = to_address(c["src"])
                at = c["at_ms"]
                delay = c.get("delay_ms")
                if not isinstance(at, int) or at < 0:
                    raise ValueError("at_ms must be a non-negative integer")
                if delay is not None and (not isinstance(delay, int) or delay < 0):
                    raise ValueError("delay_ms must be a non-negative integer")
                out.append((src, at, delay))
            except (KeyError, TypeError, ValueError) as e:
                errs.append(f"client_list[{i}]: {e}")
        return out

    def _validate_devices(self, prefix, errs):
        if self.kind not in ("random_lb", "dynamic_lb"):
            if self.devices is not None:
                errs.append("devices: only used by random_lb and dynamic_lb")
            return [prefix] if prefix is not None else []
        if not isinstance(self.devices, list) or not self.devices:
            errs.append("devices: non-empty list of prefixes required")
            return []
        devs = []
        for i, text in enumerate(self.devices):
            try:
                devs.append(RoutingPrefix.parse(str(text)))
            except (ValueError, CodecError) as e:
                errs.append(f"devices[{i}]: {e}")
        if len(devs) != len(self.devices):
            return devs
        if self.kind == "random_lb" and prefix is not None:
            for d in devs:
                if d.length < 64 or not prefix.contains(d.base):
                    errs.append(f"devices: {d} is not inside {prefix}")
            if not errs and not covers_prefix(devs, prefix):
                errs.append(f"devices: sub-prefixes do not cover all of {prefix}")
        if self.kind == "dynamic_lb":
            for d in devs:
                if d.length != 64:
                    errs.append(f"devices: {d} must be a /64")
            if self.lb_strategy not in ("static", "round-robin", "least-connections"):
                errs.append("lb_strategy: unknown")
            elif (self.lb_strategy == "static") != (len(devs) == 1):
                errs.append(f"lb_strategy: {self.lb_strategy} does not fit {len(devs)} devices")
        return devs


def covers_prefix(subs, prefix):
    """True iff the union of ``subs`` is the whole of ``prefix``."""
    spans = sorted((p.base, p.base + (1 << (128 - p.length))) for p in subs)
    reach = prefix.base
    for lo, hi in spans:
        if lo > reach:
            return False
        reach = max(reach, hi)
    return reach >= prefix.base + (1 << (128 - prefix.length))


def longest_prefix_match(address, table):
    """Index of the longest entry of ``table`` containing ``address``, or None."""
    a = int(address)
    best, best_len = None, -1
    for i, p in enumerate(table):
        if p.length > best_len and (a & ~p.host_mask) == p.base:
            best, best_len = i, p.length
    return best


# -- stateful salt -----------------------------------------------------------


class StatefulSaltCodec:
    """Sequence-counter salt shared by entrance and gateway.

    The entrance stamps its counter into each address and advances it.  The
    gateway accepts only its own current counter and advances only on success,
    so one out-of-order arrival leaves it permanently behind.
    """

    def __init__(self, key, prefix, counter=0):
        self.key = key
        self.prefix = prefix
        self.entrance_counter = counter
        self.gateway_counter = counter
        self._mask = get_cipher(key.cipher).block_mask

    def generate(self, sa):
        s = self.entrance_counter
        self.entrance_counter += 1
        return to_address(self.prefix.base | generate_suffix(hash_source(sa), s, self.key))

    def verify(self, sa, da):
        da = int(to_address(da))
        if (da & ~MASK64) != self.prefix.base:
            return False
        salt = decrypt_block(da & MASK64, self.key) ^ (hash_source(sa) & self._mask)
        if salt != self.gateway_counter & self._mask:
            return False
        self.gateway_counter += 1
        return True


def stateful_salt_codec(key, prefix, counter=0):
    codec = StatefulSaltCodec(key, prefix, counter)
    return codec.generate, codec.verify


# -- metrics -----------------------------------------------------------------


@dataclass
class SimMetrics:
    requests: int = 0
    redirects: int = 0
    flow_starts: int = 0
    admits: int = 0
    drops: int = 0
    false_rejects: int = 0
    scan_trials: int = 0
    scan_hits: int = 0
    replay_trials: int = 0
    replay_hits: int = 0
    live_salts: int = 0
    device_flows: dict = field(default_factory=dict)
    latency_ms: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        lat = np.asarray(self.latency_ms, dtype=np.float64)
        d["latency_ms"] = {
            "count": int(lat.size),
            "mean": float(lat.mean()) if lat.size else None,
            "max": float(lat.max()) if lat.size else None,
        }
        return d


def lb_shares(metrics, topology):
    """Fraction of admitted legitimate flows landing on each device, in topology order."""
    names = [str(p) for p in topology]
    counts = np.array([metrics.device_flows.get(n, 0) for n in names], dtype=np.float64)
    total = counts.sum()
    if total == 0:
        raise ZeroFlowError("no flows reached any device")
    return counts / total


# -- world -------------------------------------------------------------------


class _World:
    def __init__(self, s, resolved):
        self.s = s
        self.rng = np.random.default_rng(s.seed)
        self.params = resolved["params"]
        self.prefix = resolved["prefix"]
        self.key = resolved.get("key") or self._draw_key()
        self.links = {k: resolved[k] for k in ("link_entrance", "link_gateway", "client_processing", "flow_duration")}
        self.clock = SimClock(resolved["start"])
        self.m = SimMetrics()
        self.devices = resolved["devices"]
        self.client_list = resolved["clients"]
        self.observed = []

        if s.kind == "dynamic_lb":
            strategy = LbStrategy(s.lb_strategy, self.devices)
            gw_prefixes = self.devices
        else:
            strategy = LbStrategy("static", [self.prefix])
            gw_prefixes = [self.prefix] * len(self.devices)
        self.strategy = strategy
        self.entrance = Entrance(EntranceConfig(self.key, self.params, strategy))
        self.codec = None
        verifier = None
        if s.salt_mode == "stateful":
            self.codec = StatefulSaltCodec(self.key, self.prefix)
            verifier = lambda sa, da, *_: self.codec.verify(sa, da)  # noqa: E731
        self.gateways = [
            Gateway(GatewayConfig(p, self.key, self.params, s.cache, s.idle_timeout_ms), verifier)
            for p in gw_prefixes
        ]
        self.device_names = [str(d) for d in self.devices]
        self.m.device_flows = dict.fromkeys(self.device_names, 0)

    def _draw_key(self):
        nbytes = get_cipher(self.s.cipher).key_bytes
        return CipherKey(bytes(self.rng.integers(0, 256, nbytes, dtype=np.uint8)), self.s.cipher)

    def gw_now(self):
        return self.clock.now + self.s.t_syn_ms

    def route(self, dst):
        return longest_prefix_match(dst, self.devices)

    # legitimate flows

    def schedule_clients(self):
        s = self.s
        if self.client_list is not None:
            for src, at, delay in self.client_list:
                self.clock.after(at, self.client_request, src, delay)
            return
        offsets = np.sort(self.rng.integers(0, s.duration_ms, s.clients))
        hosts = self.rng.integers(0, 2**63, s.clients, dtype=np.int64)
        for i in range(s.clients):
            src = to_address(CLIENT_NET | (int(hosts[i]) << 1 | (i & 1)))
            self.clock.after(int(offsets[i]), self.client_request, src, None)

    def client_request(self, src, gw_delay):
        self.m.requests += 1
        self.clock.after(self.links["link_entrance"].sample(self.rng), self.entrance_receive, src, gw_delay)

    def entrance_receive(self, src, gw_delay):
        t_gen = self.clock.now
        if self.codec is not None:
            da = self.codec.generate(src)
            prefix = self.prefix
        else:
            d = self.entrance.handle_request(src, "/", "", None, t_gen)
            da = d.target
            prefix = next(p for p in self.strategy.prefixes if p.contains(da))
        self.m.redirects += 1
        back = self.s.t_pro_en_ms + self.links["link_entrance"].sample(self.rng)
        self.clock.after(back, self.client_redirected, src, da, prefix, t_gen, gw_delay)

    def client_redirected(self, src, da, prefix, t_gen, gw_delay):
        delay = self.links["client_processing"].sample(self.rng)
        delay += gw_delay if gw_delay is not None else self.links["link_gateway"].sample(self.rng)
        delay += self.s.t_pro_ma_ms
        sport = int(self.rng.integers(32768, 61000))
        key = FlowKey(src, da, sport, 80, "tcp")
        self.clock.after(delay, self.gateway_flow_start, key, prefix, t_gen)

    def gateway_flow_start(self, key, prefix, t_gen):
        self.m.flow_starts += 1
        self.m.latency_ms.append(self.clock.now - t_gen)
        dev = self.route(key.dst)
        verdict = Verdict.DROP if dev is None else self.gateways[dev].admit_packet(key, True, self.gw_now())
        if verdict is not Verdict.ADMIT_NEW:
            self.m.drops += 1
            self.m.false_rejects += 1
            self.strategy.release(prefix)
            return
        self.m.admits += 1
        self.m.device_flows[self.device_names[dev]] += 1
        observed = self.s.intercept_prob is not None and self.rng.random() < self.s.intercept_prob
        self.clock.after(self.links["flow_duration"].sample(self.rng), self.flow_end, key, dev, prefix, observed)

    def flow_end(self, key, dev, prefix, observed):
        self.gateways[dev].record_flow_end(key, self.gw_now())
        self.strategy.release(prefix)
        if not observed:
            return
        if self.s.kind == "replay":
            self.clock.after(self.s.replay_lag_ms, self.replay, key)
        elif self.s.kind == "hitlist_scan":
            self.clock.after(self.s.hitlist_lag_ms, self.hitlist_probe, key.dst)

    # attacks

    def _probe(self, key):
        """One attacker flow start; returns True on admission (then resets it)."""
        self.m.flow_starts += 1
        dev = self.route(key.dst)
        gw = self.gateways[dev] if dev is not None else None
        if gw is not None and gw.admit_packet(key, True, self.gw_now()) is Verdict.ADMIT_NEW:
            self.m.admits += 1
            gw.record_flow_end(key, self.gw_now())
            return True
        self.m.drops += 1
        return False

    def replay(self, key):
        self.m.replay_trials += 1
        spoofed = key._replace(sport=int(self.rng.integers(1024, 32768)))
        self.m.replay_hits += self._probe(spoofed)

    def hitlist_probe(self, dst):
        self.m.scan_trials += 1
        key = FlowKey(to_address(self.s.attacker_src), dst, int(self.rng.integers(1024, 65536)), 80)
        self.m.scan_hits += self._probe(key)

    def pattern_probes(self):
        n = self.s.pattern_probes
        third = n // 3
        low = np.arange(1, third + 1, dtype=np.uint64)
        rand = self.rng.integers(0, 2**32, n - third, dtype=np.uint64)
        half = (n - third) // 2
        high_zero = rand[:half]
        low_zero = rand[half:] << np.uint64(32)
        for suffix in np.concatenate([low, high_zero, low_zero]):
            self.hitlist_probe(to_address(self.prefix.base | int(suffix)))

    def brute_batch(self, count, suffixes):
        s = self.s
        gw = self.gateways[0]
        self.m.live_salts = self.params.live_salts(self.gw_now())
        if suffixes is None:
            bits = get_cipher(self.key.cipher).block_bits
            suffixes = self.rng.integers(0, 1 << bits, count, dtype=np.uint64)
        sports = self.rng.integers(1024, 65536, count)
        now = self.gw_now()
        admitted = gw.admit_batch(s.scan_source, suffixes, sports, 80, now)
        hits = int(admitted.sum())
        for i in np.flatnonzero(admitted):
            dst = to_address(self.prefix.base | int(suffixes[i]))
            gw.record_flow_end(FlowKey(to_address(s.scan_source), dst, int(sports[i]), 80, "tcp"), now)
        self.m.scan_trials += count
        self.m.scan_hits += hits
        self.m.flow_starts += count
        self.m.admits += hits
        self.m.drops += count - hits

    def schedule_brute(self):
        s = self.s
        bits = get_cipher(self.key.cipher).block_bits
        order = None
        if s.scan_mode == "sweep":
            # a uniformly random subset of the space, each suffix once
            order = self.rng.permutation(1 << bits)[: s.trials].astype(np.uint64)
        for lo in range(0, s.trials, s.batch_size):
            n = min(s.trials - lo, s.batch_size)
            chunk = None if order is None else order[lo:lo + n]
            self.clock.after(s.scan_at_ms, self.brute_batch, n, chunk)


def run_scenario(scenario):
    """Execute ``scenario`` to completion; raises ScenarioError before any event on bad input."""
    if isinstance(scenario, dict):
        scenario = Scenario.from_dict(scenario)
    try:
        resolved = scenario.validate()
    except ConfigError as e:
        raise ScenarioError(e.errors) from e
    w = _World(scenario, resolved)
    if scenario.kind == "brute_scan":
        w.schedule_brute()
    else:
        w.schedule_clients()
        if scenario.kind == "hitlist_scan":
            w.clock.after(scenario.duration_ms + w.params.window_length, w.pattern_probes)
    w.clock.run()
    return w.m
