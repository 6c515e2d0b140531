"""Shared configuration file: schema, loading and the scan-margin policy.

Example::

    {
      "cipher": "reference-des",
      "key_file": "secret.key",
      "salt": {"t0_ms": 1700000000000, "step_x_ms": 1,
               "window": {"kind": "symmetric", "threshold_ms": 10000}},
      "prefixes": ["2001:db8:1::/64"],
      "ports": {"entrance": 8080, "service": 80},
      "lb_strategy": "static",
      "cache_mode": "off",
      "idle_timeout": 300000,
      "insecure": false
    }

``key_file`` is resolved relative to the config file.  ``window`` may instead
be ``{"kind": "asymmetric", "threshold1_ms": ..., "threshold2_ms": ...}``.
"""

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .addrcodec import CIPHERS, CipherKey, CodecError, RoutingPrefix, SaltParams, get_cipher
from .analysis import MIN_MARGIN_BITS, security_margin

CACHE_MODES = ("off", "on")
LB_KINDS = ("static", "round-robin", "least-connections")


class ConfigError(ValueError):
    """Carries every violation found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def salt_params_from_dict(d, errors, where="salt"):
    """Parse the ``salt`` object; append problems to ``errors`` and return None on failure."""
    if not isinstance(d, dict):
        errors.append(f"{where}: expected an object")
        return None
    n = len(errors)
    t0 = d.get("t0_ms")
    step = d.get("step_x_ms")
    window = d.get("window")
    if not isinstance(t0, int) or t0 < 0:
        errors.append(f"{where}.t0_ms: non-negative integer required")
    if not isinstance(step, int) or step < 1:
        errors.append(f"{where}.step_x_ms: integer >= 1 required")
    if not isinstance(window, dict):
        errors.append(f"{where}.window: object required")
        return None
    kind = window.get("kind")
    if kind == "symmetric":
        th = window.get("threshold_ms")
        if not isinstance(th, int) or th <= 0:
            errors.append(f"{where}.window.threshold_ms: positive integer required")
        bounds = (0, th)
    elif kind == "asymmetric":
        t1, t2 = window.get("threshold1_ms"), window.get("threshold2_ms")
        for name, v in (("threshold1_ms", t1), ("threshold2_ms", t2)):
            if not isinstance(v, int) or v <= 0:
                errors.append(f"{where}.window.{name}: positive integer required")
        bounds = (-t1 if isinstance(t1, int) else 0, t2)
    else:
        errors.append(f"{where}.window.kind: must be 'symmetric' or 'asymmetric'")
        return None
    if len(errors) > n:
        return None
    return SaltParams(t0, step, bounds)


def salt_params_to_dict(params):
    low, high = params.window
    if low == 0:
        window = {"kind": "symmetric", "threshold_ms": high}
    else:
        window = {"kind": "asymmetric", "threshold1_ms": -low, "threshold2_ms": high}
    return {"t0_ms": params.t0, "step_x_ms": params.step_x, "window": window}


def p_bound(params):
    """Worst-case live salt count used by the margin policy."""
    return max(math.ceil(params.window_length / params.step_x), 1)


def margin_violation(suffix_bits, params):
    """Error text if (suffix_bits, params) falls below the scan margin, else None."""
    p = p_bound(params)
    m = security_margin(suffix_bits, p)
    if m.safe:
        return None
    return f"salt: scan margin {m.margin:.2f} bits < {MIN_MARGIN_BITS} (suffix {suffix_bits} bits, up to {p} live salts)"


@dataclass
class SharedConfig:
    cipher: str
    key_file: Path
    key: CipherKey
    salt: SaltParams
    prefixes: list
    ports: dict = field(default_factory=lambda: {"entrance": 8080, "service": 80})
    lb_strategy: str = "static"
    cache_mode: str = "off"
    idle_timeout: int = 300_000
    insecure: bool = False
    margin: float = 0.0

    @property
    def cache(self):
        return self.cache_mode == "on"


def read_key_file(path, cipher):
    text = Path(path).read_text().strip()
    return CipherKey.from_hex(text, cipher)


def write_key_file(path, key):
    """Create ``path`` readable by the owner only; refuses to overwrite."""
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    with os.fdopen(fd, "w") as f:
        f.write(key.hex() + "\n")


def validate_config(raw, base_dir=".", insecure=False):
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected an object"])
    insecure = insecure or bool(raw.get("insecure", False))

    cipher = raw.get("cipher", "reference-des")
    if cipher not in CIPHERS:
        errors.append(f"cipher: unknown {cipher!r}, expected one of {sorted(CIPHERS)}")
        cipher = None

    key = None
    key_file = raw.get("key_file")
    if not isinstance(key_file, str):
        errors.append("key_file: path required")
    else:
        key_file = Path(base_dir) / key_file
        if cipher is not None:
            try:
                key = read_key_file(key_file, cipher)
            except OSError as e:
                errors.append(f"key_file: {e.strerror}: {key_file}")
            except CodecError as e:
                errors.append(f"key_file: {e}")

    salt = salt_params_from_dict(raw.get("salt"), errors)

    prefixes = []
    plist = raw.get("prefixes")
    if not isinstance(plist, list) or not plist:
        errors.append("prefixes: non-empty list required")
        plist = []
    for i, text in enumerate(plist):
        try:
            p = RoutingPrefix.parse(str(text))
        except (ValueError, CodecError) as e:
            errors.append(f"prefixes[{i}]: {e}")
            continue
        if p.length != 64:
            errors.append(f"prefixes[{i}]: {p} must be a /64")
        prefixes.append(p)

    ports = raw.get("ports", {"entrance": 8080, "service": 80})
    if not isinstance(ports, dict):
        errors.append("ports: object required")
        ports = {}
    for name in ("entrance", "service"):
        v = ports.setdefault(name, {"entrance": 8080, "service": 80}[name])
        if not isinstance(v, int) or not 0 < v < 65536:
            errors.append(f"ports.{name}: 1..65535 required")

    lb = raw.get("lb_strategy", "static")
    if lb not in LB_KINDS:
        errors.append(f"lb_strategy: must be one of {LB_KINDS}")
    elif lb == "static" and len(plist) != 1:
        errors.append("lb_strategy: static takes exactly one prefix")
    elif lb != "static" and len(plist) < 2:
        errors.append(f"lb_strategy: {lb} needs at least two prefixes")

    cache_mode = raw.get("cache_mode", "off")
    if cache_mode not in CACHE_MODES:
        errors.append(f"cache_mode: must be one of {CACHE_MODES}")

    idle = raw.get("idle_timeout", 300_000)
    if not isinstance(idle, int) or idle <= 0:
        errors.append("idle_timeout: positive integer (ms) required")

    margin = None
    if cipher is not None and salt is not None:
        bits = get_cipher(cipher).block_bits
        margin = security_margin(bits, p_bound(salt)).margin
        if cipher == "toy16" and not insecure:
            errors.append("cipher: toy16 is for experiments only; set insecure to use it")
        elif not insecure and (msg := margin_violation(bits, salt)):
            errors.append(msg)

    if errors:
        raise ConfigError(errors)
    return SharedConfig(
        cipher=cipher, key_file=key_file, key=key, salt=salt, prefixes=prefixes,
        ports=ports, lb_strategy=lb, cache_mode=cache_mode, idle_timeout=idle,
        insecure=insecure, margin=margin,
    )


def load_config(path, insecure=False):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror}"]) from e
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: invalid JSON: {e}"]) from e
    return validate_config(raw, path.parent, insecure=insecure)
