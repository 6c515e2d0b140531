"""Per-connection IPv6 destination addresses: generation, verification, simulation."""

from ._accel import backend
from .addrcodec import (
    CipherKey,
    RoutingPrefix,
    SaltParams,
    generate_address,
    verify_address,
)

__version__ = "0.1.0"

__all__ = [
    "CipherKey",
    "RoutingPrefix",
    "SaltParams",
    "backend",
    "generate_address",
    "verify_address",
]
