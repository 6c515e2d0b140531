import warnings

import pytest

from addressless.addrcodec import CipherKey, RoutingPrefix, SaltParams

T0 = 1_600_000_000_000


@pytest.fixture
def des_key():
    return CipherKey.from_hex("133457799bbcdff1")


@pytest.fixture
def toy_key():
    return CipherKey.from_hex("a5c3", "toy16")


@pytest.fixture
def prefix():
    return RoutingPrefix.parse("2001:da8::/64")


@pytest.fixture
def params():
    return SaltParams.symmetric(T0, 5, 10_000)


def des_oracle():
    """Encrypt/decrypt callables backed by the ``cryptography`` package.

    Three-key TDES with K1 = K2 = K3 collapses to single DES, which gives an
    implementation independent of ours.
    """
    pytest.importorskip("cryptography")
    from cryptography.hazmat.decrepit.ciphers.algorithms import TripleDES
    from cryptography.hazmat.primitives.ciphers import Cipher, modes

    def run(block, key, encrypt):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = Cipher(TripleDES(key.to_bytes(8, "big") * 3), modes.ECB())
        op = c.encryptor() if encrypt else c.decryptor()
        return int.from_bytes(op.update(block.to_bytes(8, "big")) + op.finalize(), "big")

    return (lambda b, k: run(b, k, True)), (lambda b, k: run(b, k, False))
