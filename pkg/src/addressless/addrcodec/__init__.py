"""Per-connection address generation (entrance) and verification (gateway)."""

from .core import (
    CIPHERS,
    MASK64,
    BlockCipher,
    CipherKey,
    ClockBeforeEpochError,
    CodecError,
    KeySizeError,
    PrefixLengthError,
    RoutingPrefix,
    SaltParams,
    apply_salt,
    compute_salt,
    decrypt_block,
    encrypt_block,
    generate_address,
    generate_suffix,
    generate_suffixes,
    get_cipher,
    hash_source,
    hash_sources,
    live_salt_count,
    recover_send_time,
    to_address,
    verify_address,
    verify_suffix,
    verify_suffixes,
)

__all__ = [
    "CIPHERS",
    "MASK64",
    "BlockCipher",
    "CipherKey",
    "ClockBeforeEpochError",
    "CodecError",
    "KeySizeError",
    "PrefixLengthError",
    "RoutingPrefix",
    "SaltParams",
    "apply_salt",
    "compute_salt",
    "decrypt_block",
    "encrypt_block",
    "generate_address",
    "generate_suffix",
    "generate_suffixes",
    "get_cipher",
    "hash_source",
    "hash_sources",
    "live_salt_count",
    "recover_send_time",
    "to_address",
    "verify_address",
    "verify_suffix",
    "verify_suffixes",
]
