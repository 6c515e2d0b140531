"""Address generation and verification.

Generation (entrance side)::

    h      = djb2(source address bytes)
    salt   = (now - t0) // step_x
    suffix = E_key(h ^ salt)
    dest   = prefix || suffix

Verification (gateway side) decrypts the suffix, strips the source hash to
recover the salt, maps the salt back to its send time and accepts iff
``now - send_time`` lies strictly inside the configured window.

The clock is always an argument.  Nothing in this module reads the time.
"""

import ipaddress
import secrets
from dataclasses import dataclass, field

import numpy as np

from . import des, toy16

MASK64 = (1 << 64) - 1
TIMESTAMP_MAX = (1 << 63) - 1
DJB2_INIT = 5381


class CodecError(ValueError):
    pass


class ClockBeforeEpochError(CodecError):
    pass


class KeySizeError(CodecError):
    pass


class PrefixLengthError(CodecError):
    pass


def to_address(value):
    """Coerce text, int, 16 raw bytes or an address into ``IPv6Address``."""
    if isinstance(value, ipaddress.IPv6Address):
        return value
    if isinstance(value, (bytes, bytearray)):
        if len(value) != 16:
            raise CodecError(f"expected 16 address bytes, got {len(value)}")
        return ipaddress.IPv6Address(bytes(value))
    if isinstance(value, str):
        return ipaddress.IPv6Address(value.strip().strip("[]").split("%")[0])
    return ipaddress.IPv6Address(int(value))


@dataclass(frozen=True)
class RoutingPrefix:
    """An IPv6 prefix ``base/length`` with all host bits zero."""

    base: int
    length: int

    def __post_init__(self):
        if not 1 <= self.length <= 128:
            raise PrefixLengthError(f"prefix length {self.length} outside 1..128")
        if self.base & self.host_mask:
            raise CodecError(f"host bits set in {ipaddress.IPv6Address(self.base)}/{self.length}")

    @classmethod
    def parse(cls, text):
        net = ipaddress.IPv6Network(text.strip(), strict=True)
        return cls(int(net.network_address), net.prefixlen)

    @property
    def host_mask(self):
        return (1 << (128 - self.length)) - 1

    @property
    def network(self):
        return ipaddress.IPv6Network((self.base, self.length))

    def contains(self, address):
        return (int(to_address(address)) & ~self.host_mask) == self.base

    def subnet64(self, index=0):
        """The ``index``-th /64 under a prefix no longer than /64."""
        if self.length > 64:
            raise PrefixLengthError(f"/{self.length} has no /64 subnets")
        if not 0 <= index < 1 << (64 - self.length):
            raise CodecError(f"subnet index {index} out of range for /{self.length}")
        return RoutingPrefix(self.base | (index << 64), 64)

    def __str__(self):
        return f"{ipaddress.IPv6Address(self.base)}/{self.length}"


class BlockCipher:
    """A keyed permutation of ``block_bits``-bit words."""

    def __init__(self, name, module, insecure=False):
        self.name = name
        self.block_bits = module.BLOCK_BITS
        self.key_bytes = module.KEY_BYTES
        self.insecure = insecure
        self._mod = module

    @property
    def block_mask(self):
        return (1 << self.block_bits) - 1

    def encrypt(self, block, key):
        return self._mod.encrypt(block, key)

    def decrypt(self, block, key):
        return self._mod.decrypt(block, key)

    def encrypt_batch(self, blocks, key):
        return self._mod.encrypt_batch(blocks, key)

    def decrypt_batch(self, blocks, key):
        return self._mod.decrypt_batch(blocks, key)

    def __repr__(self):
        flag = ", INSECURE" if self.insecure else ""
        return f"<BlockCipher {self.name} {self.block_bits}-bit{flag}>"


CIPHERS = {
    "reference-des": BlockCipher("reference-des", des),
    "toy16": BlockCipher("toy16", toy16, insecure=True),
}


def get_cipher(cipher):
    if isinstance(cipher, BlockCipher):
        return cipher
    try:
        return CIPHERS[cipher]
    except KeyError:
        raise CodecError(f"unknown cipher {cipher!r}; choose from {sorted(CIPHERS)}") from None


@dataclass(frozen=True)
class CipherKey:
    material: bytes
    cipher: str = "reference-des"

    def __post_init__(self):
        expected = get_cipher(self.cipher).key_bytes
        if len(self.material) != expected:
            raise KeySizeError(
                f"{self.cipher} needs a {expected}-byte key, got {len(self.material)} bytes"
            )

    @property
    def value(self):
        return int.from_bytes(self.material, "big")

    @classmethod
    def from_hex(cls, text, cipher="reference-des"):
        try:
            material = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise CodecError(f"key is not valid hex: {exc}") from None
        return cls(material, cipher)

    @classmethod
    def generate(cls, cipher="reference-des"):
        return cls(secrets.token_bytes(get_cipher(cipher).key_bytes), cipher)

    def hex(self):
        return self.material.hex()

    def __repr__(self):
        return f"CipherKey(cipher={self.cipher!r}, material=<{len(self.material)} bytes>)"


@dataclass(frozen=True)
class SaltParams:
    """Secret time parameters shared by entrance and gateway.

    ``window`` is the open interval ``(low, high)`` of accepted lags
    ``now - send_time`` in ms: ``(0, threshold)`` for the symmetric form,
    ``(-threshold1, threshold2)`` when the two clocks may disagree.
    """

    t0: int
    step_x: int
    window: tuple = field(default=(0, 10_000))

    def __post_init__(self):
        if self.step_x < 1:
            raise CodecError(f"step_x must be >= 1 ms, got {self.step_x}")
        low, high = self.window
        if low > 0 or high <= 0:
            raise CodecError(f"window {self.window} must satisfy low <= 0 < high")
        object.__setattr__(self, "window", (int(low), int(high)))

    @classmethod
    def symmetric(cls, t0, step_x, threshold):
        if threshold <= 0:
            raise CodecError("threshold must be > 0")
        return cls(t0, step_x, (0, threshold))

    @classmethod
    def asymmetric(cls, t0, step_x, threshold1, threshold2):
        if threshold1 <= 0 or threshold2 <= 0:
            raise CodecError("threshold1 and threshold2 must be > 0")
        return cls(t0, step_x, (-threshold1, threshold2))

    @property
    def symmetric_window(self):
        return self.window[0] == 0

    @property
    def window_length(self):
        return self.window[1] - self.window[0]

    def salt_range(self, now_ms):
        """Inclusive ``(smin, smax)`` of salts accepted at ``now_ms``; empty if smax < smin."""
        low, high = self.window
        d = now_ms - self.t0
        smin = max((d - high) // self.step_x + 1, 0)
        smax = min(-((low - d) // self.step_x) - 1, MASK64)
        return smin, smax

    def live_salts(self, now_ms):
        smin, smax = self.salt_range(now_ms)
        return max(smax - smin + 1, 0)

    def accepts_salt(self, salt, now_ms, bits=64):
        """Window test on a salt known only modulo ``2**bits``."""
        smin, smax = self.salt_range(now_ms)
        if smax < smin:
            return False
        span = smax - smin
        if span >> bits:
            return True
        return ((salt - smin) & ((1 << bits) - 1)) <= span


def hash_source(sa):
    """64-bit DJB2 (h = h*33 + byte, h0 = 5381) over the 16 address bytes."""
    h = DJB2_INIT
    for byte in to_address(sa).packed:
        h = (h * 33 + byte) & MASK64
    return h


def hash_sources(addresses):
    """Vectorized :func:`hash_source`.

    ``addresses`` is an ``(n, 16)`` uint8 array or an iterable of anything
    :func:`to_address` accepts.
    """
    raw = _address_bytes(addresses)
    h = np.full(raw.shape[0], DJB2_INIT, dtype=np.uint64)
    for i in range(16):
        h = h * np.uint64(33) + raw[:, i].astype(np.uint64)
    return h


def _address_bytes(addresses):
    if isinstance(addresses, np.ndarray) and addresses.dtype == np.uint8:
        if addresses.ndim != 2 or addresses.shape[1] != 16:
            raise CodecError("address byte array must have shape (n, 16)")
        return addresses
    packed = b"".join(to_address(a).packed for a in addresses)
    return np.frombuffer(packed, dtype=np.uint8).reshape(-1, 16)


def compute_salt(now_ms, params):
    if now_ms < params.t0:
        raise ClockBeforeEpochError(f"clock {now_ms} is before t0 {params.t0}")
    return (now_ms - params.t0) // params.step_x


def recover_send_time(salt, params):
    t = salt * params.step_x + params.t0
    if t > TIMESTAMP_MAX:
        raise OverflowError(f"send time for salt {salt} exceeds the timestamp domain")
    return t


def apply_salt(h_sa, salt):
    return (h_sa ^ salt) & MASK64


def _cipher_for(key, cipher):
    c = get_cipher(cipher if cipher is not None else key.cipher)
    if len(key.material) != c.key_bytes:
        raise KeySizeError(f"{c.name} needs a {c.key_bytes}-byte key, got {len(key.material)}")
    return c


def encrypt_block(p, key, cipher=None):
    c = _cipher_for(key, cipher)
    return c.encrypt(p & c.block_mask, key.value)


def decrypt_block(c_word, key, cipher=None):
    c = _cipher_for(key, cipher)
    return c.decrypt(c_word & c.block_mask, key.value)


def generate_suffix(h_sa, salt, key):
    """Ciphertext suffix for a source hash and salt.

    Ciphers narrower than 64 bits see the low ``block_bits`` of the salted
    hash and leave the upper suffix bits zero.
    """
    return encrypt_block(apply_salt(h_sa, salt), key)


def verify_suffix(h_sa, suffix, key, params, now_ms):
    c = _cipher_for(key, None)
    if suffix >> c.block_bits:
        return False
    salt = apply_salt(c.decrypt(suffix, key.value), h_sa) & c.block_mask
    return params.accepts_salt(salt, now_ms, c.block_bits)


def _require_canonical(prefix):
    if prefix.length != 64:
        raise PrefixLengthError(
            f"address generation needs a /64 routing prefix, got /{prefix.length}"
        )


def generate_address(sa, prefix, key, params, now_ms):
    _require_canonical(prefix)
    suffix = generate_suffix(hash_source(sa), compute_salt(now_ms, params), key)
    return ipaddress.IPv6Address(prefix.base | suffix)


def verify_address(sa, da, prefix, key, params, now_ms):
    """True iff ``da`` was generated for ``sa`` within the window.  Never raises."""
    try:
        _require_canonical(prefix)
        da = int(to_address(da))
        if (da & ~MASK64) != prefix.base:
            return False
        return verify_suffix(hash_source(sa), da & MASK64, key, params, now_ms)
    except Exception:
        return False


def generate_suffixes(hashes, salts, key, keys=None):
    """Batch suffix generation.

    ``keys`` optionally overrides ``key`` with one 64-bit reference-cipher key
    per row (uint64 array); ``key`` still selects the cipher.
    """
    c = get_cipher(key.cipher)
    plain = (np.asarray(hashes, dtype=np.uint64) ^ np.asarray(salts, dtype=np.uint64))
    plain &= np.uint64(c.block_mask)
    if keys is not None:
        if c.name != "reference-des":
            raise CodecError("per-row keys are only supported by reference-des")
        return c.encrypt_batch(plain, np.asarray(keys, dtype=np.uint64))
    return c.encrypt_batch(plain, key.value).astype(np.uint64)


def verify_suffixes(hashes, suffixes, key, params, now_ms, keys=None):
    """Batch window check; ``hashes`` and ``now_ms`` may be scalars or arrays."""
    c = get_cipher(key.cipher)
    bits = c.block_bits
    mask = np.uint64(c.block_mask)
    suffixes = np.asarray(suffixes, dtype=np.uint64)
    in_block = (suffixes >> np.uint64(bits)) == 0 if bits < 64 else np.ones(suffixes.shape, bool)
    if keys is not None:
        if c.name != "reference-des":
            raise CodecError("per-row keys are only supported by reference-des")
        plain = c.decrypt_batch(suffixes, np.asarray(keys, dtype=np.uint64))
    else:
        plain = c.decrypt_batch(suffixes & mask, key.value).astype(np.uint64)
    salts = (plain ^ np.asarray(hashes, dtype=np.uint64)) & mask

    low, high = params.window
    d = np.asarray(now_ms, dtype=np.int64) - np.int64(params.t0)
    x = np.int64(params.step_x)
    smin = np.maximum((d - high) // x + 1, 0)
    smax = -((low - d) // x) - 1
    nonempty = smax >= smin
    span = np.where(nonempty, smax - smin, 0).astype(np.uint64)
    diff = (salts - smin.astype(np.uint64)) & mask
    covers_all = span >= mask if bits < 64 else np.zeros(span.shape, bool)
    return in_block & nonempty & ((diff <= span) | covers_all)


def live_salt_count(params, now_ms):
    """Number of distinct salts the gateway accepts at ``now_ms`` (the scan multiplier P)."""
    return params.live_salts(now_ms)
