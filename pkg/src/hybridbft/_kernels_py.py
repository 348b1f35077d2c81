"""Reference (numpy / pure Python) versions of the compiled kernels."""
import numpy as np

NEVER = 1 << 62
_MASK = (1 << 64) - 1


def kth_arrivals(send, lat, k):
    arrivals = send[:, None] + lat
    arrivals[send >= NEVER, :] = NEVER
    n = send.shape[0]
    if k > n:
        return np.full(n, NEVER, dtype=np.int64)
    kth = np.partition(arrivals, k - 1, axis=0)[k - 1]
    return np.minimum(kth, NEVER).astype(np.int64)


def covered_sum(points, amounts, nrows, state):
    if nrows == 0:
        return 0
    mask = (points[:nrows] <= state).all(axis=1)
    return int(amounts[:nrows][mask].sum())


def mix64(key_hash, value):
    z = (key_hash ^ ((value * 0x9E3779B97F4A7C15) & _MASK)) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
