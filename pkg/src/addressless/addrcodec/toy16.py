"""toy16: a keyed 16-bit Feistel permutation.

INSECURE BY DESIGN.  It exists only so that scanning statistics over the
whole ciphertext space (65536 suffixes) can be measured on a laptop.  Never
deploy it.

Six rounds over 8-bit halves; the round function is the AES S-box applied to
``half ^ round_key``.  Round keys alternate between the two key bytes, each
mixed with a round constant.
"""

import numpy as np

BLOCK_BITS = 16
KEY_BYTES = 2
ROUNDS = 6


def _gf_mul(a, b):
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = ((a << 1) ^ 0x11B) if a & 0x80 else a << 1
        b >>= 1
    return out


def _aes_sbox():
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gf_mul(a, b) == 1:
                inv[a] = b
                break
    box = []
    for x in inv:
        y = x
        for shift in range(1, 5):
            y ^= ((x << shift) | (x >> (8 - shift))) & 0xFF
        box.append(y ^ 0x63)
    return box


_SBOX = _aes_sbox()
_SBOX_NP = np.array(_SBOX, dtype=np.int64)


def round_keys(key):
    k0, k1 = key >> 8, key & 0xFF
    return [((k0 if i % 2 == 0 else k1) ^ (0x3B * (i + 1))) & 0xFF for i in range(ROUNDS)]


def _encrypt(x, rk, sbox):
    left = (x >> 8) & 0xFF
    right = x & 0xFF
    for i in range(ROUNDS):
        left, right = right, left ^ sbox[right ^ rk[i]]
    return (left << 8) | right


def _decrypt(x, rk, sbox):
    left = (x >> 8) & 0xFF
    right = x & 0xFF
    for i in range(ROUNDS - 1, -1, -1):
        left, right = right ^ sbox[left ^ rk[i]], left
    return (left << 8) | right


def encrypt(block, key):
    return _encrypt(block, round_keys(key), _SBOX)


def decrypt(block, key):
    return _decrypt(block, round_keys(key), _SBOX)


def crypt_batch(blocks, key, decrypt=False):
    """Vectorized toy16 over an integer array (values < 2**16); single key."""
    blocks = np.asarray(blocks)
    x = blocks.astype(np.int64)
    fn = _decrypt if decrypt else _encrypt
    return fn(x, round_keys(int(key)), _SBOX_NP).astype(blocks.dtype if blocks.dtype.kind in "iu" else np.int64)


def encrypt_batch(blocks, key):
    return crypt_batch(blocks, key, False)


def decrypt_batch(blocks, key):
    return crypt_batch(blocks, key, True)
