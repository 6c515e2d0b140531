"""Single-block DES (FIPS 46-3), the reference suffix cipher.

All permutations are applied through per-byte lookup tables and the S-boxes
are fused with the P permutation, so one round is twelve table lookups.  The
same round function runs in three modes:

* plain Python ints with list tables (single blocks, no numba),
* numpy int64 arrays with array tables (vectorized batch fallback),
* numba nopython with array tables (compiled batch and single blocks).

Blocks travel as two 32-bit halves held in int64 so that every intermediate
value stays non-negative and numba never mixes signed and unsigned types.
Key parity bits are ignored.
"""

from functools import lru_cache

import numpy as np

from .._accel import HAVE_NUMBA, njit

BLOCK_BITS = 64
KEY_BYTES = 8

_IP = (
    58, 50, 42, 34, 26, 18, 10, 2,
    60, 52, 44, 36, 28, 20, 12, 4,
    62, 54, 46, 38, 30, 22, 14, 6,
    64, 56, 48, 40, 32, 24, 16, 8,
    57, 49, 41, 33, 25, 17, 9, 1,
    59, 51, 43, 35, 27, 19, 11, 3,
    61, 53, 45, 37, 29, 21, 13, 5,
    63, 55, 47, 39, 31, 23, 15, 7,
)

_E = (
    32, 1, 2, 3, 4, 5,
    4, 5, 6, 7, 8, 9,
    8, 9, 10, 11, 12, 13,
    12, 13, 14, 15, 16, 17,
    16, 17, 18, 19, 20, 21,
    20, 21, 22, 23, 24, 25,
    24, 25, 26, 27, 28, 29,
    28, 29, 30, 31, 32, 1,
)

_P = (
    16, 7, 20, 21, 29, 12, 28, 17,
    1, 15, 23, 26, 5, 18, 31, 10,
    2, 8, 24, 14, 32, 27, 3, 9,
    19, 13, 30, 6, 22, 11, 4, 25,
)

_PC1 = (
    57, 49, 41, 33, 25, 17, 9,
    1, 58, 50, 42, 34, 26, 18,
    10, 2, 59, 51, 43, 35, 27,
    19, 11, 3, 60, 52, 44, 36,
    63, 55, 47, 39, 31, 23, 15,
    7, 62, 54, 46, 38, 30, 22,
    14, 6, 61, 53, 45, 37, 29,
    21, 13, 5, 28, 20, 12, 4,
)

_PC2 = (
    14, 17, 11, 24, 1, 5,
    3, 28, 15, 6, 21, 10,
    23, 19, 12, 4, 26, 8,
    16, 7, 27, 20, 13, 2,
    41, 52, 31, 37, 47, 55,
    30, 40, 51, 45, 33, 48,
    44, 49, 39, 56, 34, 53,
    46, 42, 50, 36, 29, 32,
)

_SHIFTS = (1, 1, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 1)

_SBOXES = (
    (14, 4, 13, 1, 2, 15, 11, 8, 3, 10, 6, 12, 5, 9, 0, 7,
     0, 15, 7, 4, 14, 2, 13, 1, 10, 6, 12, 11, 9, 5, 3, 8,
     4, 1, 14, 8, 13, 6, 2, 11, 15, 12, 9, 7, 3, 10, 5, 0,
     15, 12, 8, 2, 4, 9, 1, 7, 5, 11, 3, 14, 10, 0, 6, 13),
    (15, 1, 8, 14, 6, 11, 3, 4, 9, 7, 2, 13, 12, 0, 5, 10,
     3, 13, 4, 7, 15, 2, 8, 14, 12, 0, 1, 10, 6, 9, 11, 5,
     0, 14, 7, 11, 10, 4, 13, 1, 5, 8, 12, 6, 9, 3, 2, 15,
     13, 8, 10, 1, 3, 15, 4, 2, 11, 6, 7, 12, 0, 5, 14, 9),
    (10, 0, 9, 14, 6, 3, 15, 5, 1, 13, 12, 7, 11, 4, 2, 8,
     13, 7, 0, 9, 3, 4, 6, 10, 2, 8, 5, 14, 12, 11, 15, 1,
     13, 6, 4, 9, 8, 15, 3, 0, 11, 1, 2, 12, 5, 10, 14, 7,
     1, 10, 13, 0, 6, 9, 8, 7, 4, 15, 14, 3, 11, 5, 2, 12),
    (7, 13, 14, 3, 0, 6, 9, 10, 1, 2, 8, 5, 11, 12, 4, 15,
     13, 8, 11, 5, 6, 15, 0, 3, 4, 7, 2, 12, 1, 10, 14, 9,
     10, 6, 9, 0, 12, 11, 7, 13, 15, 1, 3, 14, 5, 2, 8, 4,
     3, 15, 0, 6, 10, 1, 13, 8, 9, 4, 5, 11, 12, 7, 2, 14),
    (2, 12, 4, 1, 7, 10, 11, 6, 8, 5, 3, 15, 13, 0, 14, 9,
     14, 11, 2, 12, 4, 7, 13, 1, 5, 0, 15, 10, 3, 9, 8, 6,
     4, 2, 1, 11, 10, 13, 7, 8, 15, 9, 12, 5, 6, 3, 0, 14,
     11, 8, 12, 7, 1, 14, 2, 13, 6, 15, 0, 9, 10, 4, 5, 3),
    (12, 1, 10, 15, 9, 2, 6, 8, 0, 13, 3, 4, 14, 7, 5, 11,
     10, 15, 4, 2, 7, 12, 9, 5, 6, 1, 13, 14, 0, 11, 3, 8,
     9, 14, 15, 5, 2, 8, 12, 3, 7, 0, 4, 10, 1, 13, 11, 6,
     4, 3, 2, 12, 9, 5, 15, 10, 11, 14, 1, 7, 6, 0, 8, 13),
    (4, 11, 2, 14, 15, 0, 8, 13, 3, 12, 9, 7, 5, 10, 6, 1,
     13, 0, 11, 7, 4, 9, 1, 10, 14, 3, 5, 12, 2, 15, 8, 6,
     1, 4, 11, 13, 12, 3, 7, 14, 10, 15, 6, 8, 0, 5, 9, 2,
     6, 11, 13, 8, 1, 4, 10, 7, 9, 5, 0, 15, 14, 2, 3, 12),
    (13, 2, 8, 4, 6, 15, 11, 1, 10, 9, 3, 14, 5, 0, 12, 7,
     1, 15, 13, 8, 10, 3, 7, 4, 12, 5, 6, 11, 0, 14, 9, 2,
     7, 11, 4, 1, 9, 12, 14, 2, 0, 6, 10, 13, 15, 3, 5, 8,
     2, 1, 14, 7, 4, 10, 8, 13, 15, 12, 9, 0, 3, 5, 6, 11),
)


def _byte_tables(perm, in_bits):
    """Flat ``(in_bits // 8) * 256`` table applying the bit selection ``perm``.

    ``perm`` lists 1-based source positions counted from the input MSB.  The
    permuted word is the OR of one entry per input byte.
    """
    out_bits = len(perm)
    table = [0] * (in_bits // 8 * 256)
    for out_pos, src in enumerate(perm):
        byte, bit = divmod(src - 1, 8)
        out_mask = 1 << (out_bits - 1 - out_pos)
        in_mask = 0x80 >> bit
        for v in range(256):
            if v & in_mask:
                table[byte * 256 + v] |= out_mask
    return table


def _permute(value, perm, in_bits):
    out = 0
    for src in perm:
        out = (out << 1) | ((value >> (in_bits - src)) & 1)
    return out


def _sp_table():
    table = [0] * (8 * 64)
    for s, box in enumerate(_SBOXES):
        for v in range(64):
            row = ((v >> 4) & 2) | (v & 1)
            col = (v >> 1) & 0xF
            nib = box[row * 16 + col] << (28 - 4 * s)
            table[s * 64 + v] = _permute(nib, _P, 32)
    return table


_FP = tuple(_IP.index(i) + 1 for i in range(1, 65))

_ip = _byte_tables(_IP, 64)
_fp = _byte_tables(_FP, 64)

# list tables drive the pure-Python path, int64 arrays the numpy/numba paths
_PY_TABLES = (
    [t >> 32 for t in _ip],
    [t & 0xFFFFFFFF for t in _ip],
    _byte_tables(_E, 32),
    _sp_table(),
    [t >> 32 for t in _fp],
    [t & 0xFFFFFFFF for t in _fp],
)
_NP_TABLES = tuple(np.array(t, dtype=np.int64) for t in _PY_TABLES)

_PC1_PY = _byte_tables(_PC1, 64)
_PC2_PY = _byte_tables(_PC2, 56)
_PC1_NP = np.array(_PC1_PY, dtype=np.int64)
_PC2_NP = np.array(_PC2_PY, dtype=np.int64)


def _des_core(hi, lo, ks, decrypt, ip_hi, ip_lo, e_tab, sp, fp_hi, fp_lo):
    left = 0
    right = 0
    for j in range(4):
        b = (hi >> (24 - 8 * j)) & 0xFF
        left |= ip_hi[256 * j + b]
        right |= ip_lo[256 * j + b]
    for j in range(4):
        b = (lo >> (24 - 8 * j)) & 0xFF
        left |= ip_hi[256 * (j + 4) + b]
        right |= ip_lo[256 * (j + 4) + b]

    for i in range(16):
        k = ks[15 - i] if decrypt else ks[i]
        x = (
            e_tab[(right >> 24) & 0xFF]
            | e_tab[256 + ((right >> 16) & 0xFF)]
            | e_tab[512 + ((right >> 8) & 0xFF)]
            | e_tab[768 + (right & 0xFF)]
        ) ^ k
        f = 0
        for s in range(8):
            f |= sp[64 * s + ((x >> (42 - 6 * s)) & 0x3F)]
        left, right = right, left ^ f

    # preoutput is R16 || L16
    out_hi = 0
    out_lo = 0
    for j in range(4):
        b = (right >> (24 - 8 * j)) & 0xFF
        out_hi |= fp_hi[256 * j + b]
        out_lo |= fp_lo[256 * j + b]
    for j in range(4):
        b = (left >> (24 - 8 * j)) & 0xFF
        out_hi |= fp_hi[256 * (j + 4) + b]
        out_lo |= fp_lo[256 * (j + 4) + b]
    return out_hi, out_lo


def _key_schedule(hi, lo, pc1, pc2):
    cd = 0
    for j in range(4):
        cd |= pc1[256 * j + ((hi >> (24 - 8 * j)) & 0xFF)]
    for j in range(4):
        cd |= pc1[256 * (j + 4) + ((lo >> (24 - 8 * j)) & 0xFF)]
    c = cd >> 28
    d = cd & 0xFFFFFFF
    keys = []
    for s in _SHIFTS:
        c = ((c << s) | (c >> (28 - s))) & 0xFFFFFFF
        d = ((d << s) | (d >> (28 - s))) & 0xFFFFFFF
        cd = (c << 28) | d
        k = 0
        for j in range(7):
            k |= pc2[256 * j + ((cd >> (48 - 8 * j)) & 0xFF)]
        keys.append(k)
    return keys


_des_core_jit = njit(_des_core)


def _des_loop(hi, lo, ks, decrypt, ip_hi, ip_lo, e_tab, sp, fp_hi, fp_lo):
    n = hi.shape[0]
    out_hi = np.empty(n, dtype=np.int64)
    out_lo = np.empty(n, dtype=np.int64)
    shared = ks.shape[0] == 1
    for i in range(n):
        k = ks[0] if shared else ks[i]
        a, b = _des_core_jit(hi[i], lo[i], k, decrypt, ip_hi, ip_lo, e_tab, sp, fp_hi, fp_lo)
        out_hi[i] = a
        out_lo[i] = b
    return out_hi, out_lo


_des_loop_jit = njit(_des_loop)


class _Schedule:
    __slots__ = ("py", "arr")

    def __init__(self, subkeys):
        self.py = tuple(subkeys)
        self.arr = np.array(subkeys, dtype=np.int64)


@lru_cache(maxsize=4096)
def key_schedule(key):
    """Sixteen 48-bit round keys for the 64-bit integer ``key``."""
    return _Schedule(_key_schedule(key >> 32, key & 0xFFFFFFFF, _PC1_PY, _PC2_PY))


def key_schedule_batch(keys):
    """Round keys for an array of 64-bit keys, shape ``(n, 16)`` int64."""
    keys = np.asarray(keys, dtype=np.uint64).ravel()
    hi = (keys >> np.uint64(32)).astype(np.int64)
    lo = (keys & np.uint64(0xFFFFFFFF)).astype(np.int64)
    return np.ascontiguousarray(np.stack(_key_schedule(hi, lo, _PC1_NP, _PC2_NP), axis=1))


def _crypt(block, key, decrypt):
    sched = key_schedule(key)
    hi = block >> 32
    lo = block & 0xFFFFFFFF
    if HAVE_NUMBA:
        a, b = _des_core_jit(hi, lo, sched.arr, decrypt, *_NP_TABLES)
        return (int(a) << 32) | int(b)
    a, b = _des_core(hi, lo, sched.py, decrypt, *_PY_TABLES)
    return (a << 32) | b


def encrypt(block, key):
    """Encrypt one 64-bit block (int) under the 64-bit integer ``key``."""
    return _crypt(block, key, False)


def decrypt(block, key):
    return _crypt(block, key, True)


def _split(blocks):
    blocks = np.asarray(blocks, dtype=np.uint64)
    hi = (blocks >> np.uint64(32)).astype(np.int64)
    lo = (blocks & np.uint64(0xFFFFFFFF)).astype(np.int64)
    return blocks.shape, hi.ravel(), lo.ravel()


def _join(shape, hi, lo):
    out = (hi.astype(np.uint64) << np.uint64(32)) | lo.astype(np.uint64)
    return out.reshape(shape)


def _subkeys(keys, n):
    if isinstance(keys, (int, np.integer)):
        return key_schedule(int(keys)).arr.reshape(1, 16)
    sched = key_schedule_batch(keys)
    if sched.shape[0] not in (1, n):
        raise ValueError(f"expected 1 or {n} keys, got {sched.shape[0]}")
    return sched


def crypt_batch_numpy(blocks, keys, decrypt=False):
    """Vectorized numpy DES over a uint64 array; one key or one per block."""
    shape, hi, lo = _split(blocks)
    ks = _subkeys(keys, hi.shape[0])
    # round r consumes ks.T[r]: a length-1 or length-n vector that broadcasts
    a, b = _des_core(hi, lo, ks.T, decrypt, *_NP_TABLES)
    return _join(shape, np.broadcast_to(a, hi.shape), np.broadcast_to(b, hi.shape))


def crypt_batch_numba(blocks, keys, decrypt=False):
    """Compiled DES over a uint64 array; one key or one per block."""
    if _des_loop_jit is None:
        raise RuntimeError("numba is not available or disabled")
    shape, hi, lo = _split(blocks)
    ks = _subkeys(keys, hi.shape[0])
    a, b = _des_loop_jit(hi, lo, ks, decrypt, *_NP_TABLES)
    return _join(shape, a, b)


crypt_batch = crypt_batch_numba if HAVE_NUMBA else crypt_batch_numpy


def encrypt_batch(blocks, keys):
    return crypt_batch(blocks, keys, False)


def decrypt_batch(blocks, keys):
    return crypt_batch(blocks, keys, True)
