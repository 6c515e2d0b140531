"""Compare the numba and pure-numpy DES batch kernels, plus scalar generate/verify.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 3]

Both batch kernels are checked against each other before timing.
"""

import argparse
import statistics
import time

import numpy as np

from addressless._accel import HAVE_NUMBA
from addressless.addrcodec import CipherKey, RoutingPrefix, SaltParams, generate_address, verify_address
from addressless.addrcodec.des import crypt_batch_numba, crypt_batch_numpy, key_schedule


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    blocks = rng.integers(0, 2**64, args.n, dtype=np.uint64)
    key = 0x133457799BBCDFF1
    key_schedule(key)

    print(f"DES batch, {args.n} blocks, best of {args.repeat}")
    t_np = best_of(lambda: crypt_batch_numpy(blocks, key), args.repeat)
    print(f"  numpy : {t_np:8.3f} s  {args.n / t_np / 1e6:6.2f} Mblock/s")
    if HAVE_NUMBA:
        ref = crypt_batch_numpy(blocks[:10_000], key)
        assert np.array_equal(crypt_batch_numba(blocks[:10_000], key), ref), "kernels disagree"
        t_nb = best_of(lambda: crypt_batch_numba(blocks, key), args.repeat)
        print(f"  numba : {t_nb:8.3f} s  {args.n / t_nb / 1e6:6.2f} Mblock/s  ({t_np / t_nb:.1f}x)")
    else:
        print("  numba : unavailable or disabled")

    prefix = RoutingPrefix.parse("2001:db8:1::/64")
    ck = CipherKey.from_hex("133457799bbcdff1")
    params = SaltParams.symmetric(0, 1, 10_000)
    gen, ver = [], []
    for i in range(2000):
        now = 10**9 + i
        t = time.perf_counter()
        da = generate_address("2001:db8::a", prefix, ck, params, now)
        gen.append(time.perf_counter() - t)
        t = time.perf_counter()
        verify_address("2001:db8::a", da, prefix, ck, params, now + 5)
        ver.append(time.perf_counter() - t)
    print(f"scalar generate median {statistics.median(gen) * 1e3:.4f} ms, "
          f"verify median {statistics.median(ver) * 1e3:.4f} ms")


if __name__ == "__main__":
    main()
