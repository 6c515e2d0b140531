import numpy as np
import pytest

from addressless import _accel
from addressless.addrcodec import (
    CipherKey,
    KeySizeError,
    decrypt_block,
    encrypt_block,
)
from addressless.addrcodec import des, toy16

from conftest import des_oracle

BACKENDS = [des.crypt_batch_numpy]
if _accel.HAVE_NUMBA:
    BACKENDS.append(des.crypt_batch_numba)


def test_des_known_answer():
    # FIPS 81 "Now is t" vector, confirmed against the cryptography package
    assert des.encrypt(0x4E6F772069732074, 0x0123456789ABCDEF) == 0x3FA40E8A984D4815
    assert des.decrypt(0x3FA40E8A984D4815, 0x0123456789ABCDEF) == 0x4E6F772069732074


def test_des_known_answer_python_core():
    sched = des.key_schedule(0x0123456789ABCDEF)
    hi, lo = des._des_core(0x4E6F7720, 0x69732074, sched.py, False, *des._PY_TABLES)
    assert (hi << 32) | lo == 0x3FA40E8A984D4815


def test_des_matches_independent_oracle():
    enc, dec = des_oracle()
    rng = np.random.default_rng(7)
    for p, k in rng.integers(0, 2**64, size=(200, 2), dtype=np.uint64):
        p, k = int(p), int(k)
        c = enc(p, k)
        assert des.encrypt(p, k) == c
        assert des.decrypt(c, k) == dec(c, k) == p


def test_parity_bits_ignored():
    key = 0x0123456789ABCDEF
    assert des.encrypt(0x1122334455667788, key) == des.encrypt(0x1122334455667788, key ^ 0x0101010101010101)


@pytest.mark.parametrize("crypt", BACKENDS, ids=lambda f: f.__name__)
def test_batch_backends_match_oracle_per_row_keys(crypt):
    enc, _ = des_oracle()
    rng = np.random.default_rng(11)
    blocks = rng.integers(0, 2**64, 300, dtype=np.uint64)
    keys = rng.integers(0, 2**64, 300, dtype=np.uint64)
    expected = np.array([enc(int(p), int(k)) for p, k in zip(blocks, keys)], dtype=np.uint64)
    got = crypt(blocks, keys)
    np.testing.assert_array_equal(got, expected)
    np.testing.assert_array_equal(crypt(got, keys, decrypt=True), blocks)


@pytest.mark.parametrize("crypt", BACKENDS, ids=lambda f: f.__name__)
def test_batch_backends_shared_key_and_shape(crypt):
    rng = np.random.default_rng(3)
    blocks = rng.integers(0, 2**64, (4, 25), dtype=np.uint64)
    out = crypt(blocks, 0xDEADBEEFCAFEF00D)
    assert out.shape == blocks.shape
    assert [int(v) for v in out.ravel()[:5]] == [
        des.encrypt(int(b), 0xDEADBEEFCAFEF00D) for b in blocks.ravel()[:5]
    ]


def test_batch_rejects_mismatched_key_count():
    with pytest.raises(ValueError):
        des.crypt_batch_numpy(np.arange(4, dtype=np.uint64), np.arange(3, dtype=np.uint64))


def test_inverse_property_random_blocks(des_key):
    rng = np.random.default_rng(0)
    for x in rng.integers(0, 2**64, 1000, dtype=np.uint64):
        x = int(x)
        assert decrypt_block(encrypt_block(x, des_key), des_key) == x


def test_toy16_is_a_permutation(toy_key):
    image = toy16.encrypt_batch(np.arange(65536), toy_key.value)
    assert len(np.unique(image)) == 65536
    np.testing.assert_array_equal(toy16.decrypt_batch(image, toy_key.value), np.arange(65536))


@pytest.mark.parametrize("key", [0x0000, 0x0001, 0xFFFF, 0x1234])
def test_toy16_scalar_matches_batch(key):
    xs = np.arange(0, 65536, 257)
    assert [toy16.encrypt(int(x), key) for x in xs] == toy16.encrypt_batch(xs, key).tolist()
    assert toy16.decrypt(toy16.encrypt(0xBEEF, key), key) == 0xBEEF


def test_toy16_keys_give_distinct_permutations():
    xs = np.arange(65536)
    assert not np.array_equal(toy16.encrypt_batch(xs, 0x0001), toy16.encrypt_batch(xs, 0x0100))


def test_toy16_sbox_is_aes():
    assert toy16._SBOX[0x00] == 0x63
    assert toy16._SBOX[0x01] == 0x7C
    assert toy16._SBOX[0x53] == 0xED
    assert sorted(toy16._SBOX) == list(range(256))


def test_key_size_mismatch():
    with pytest.raises(KeySizeError):
        CipherKey(b"\x00" * 7)
    with pytest.raises(KeySizeError):
        CipherKey(b"\x00" * 8, "toy16")
    key = CipherKey(b"\x01\x02", "toy16")
    with pytest.raises(KeySizeError):
        encrypt_block(5, key, "reference-des")
