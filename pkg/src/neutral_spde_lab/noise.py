"""Counter-based Brownian increments.

Increment ``j`` of replica ``i`` is a pure function of ``(seed, i, j)``:
Philox-4x64 keyed by ``(seed, i)`` produces raw word ``j`` from counter
block ``j // 4``; the word is mapped to a uniform on (0, 1) and through the
normal quantile.  Any block of steps can be regenerated independently, so
results do not depend on chunking or on how replicas are scheduled.
"""
import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def standard_normals(seed, replica, start, count):
    """Standard normal draws ``start .. start+count-1`` of one stream."""
    if count <= 0:
        return np.empty(0)
    block, lane = divmod(int(start), 4)
    key = np.array([int(seed) & _MASK64, int(replica) & _MASK64], dtype=np.uint64)
    counter = np.array([block, 0, 0, 0], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    raw = bg.random_raw(lane + count)[lane:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def brownian_increments(seed, replica, start, count, h):
    """Increments ``dW_j ~ N(0, h)`` for steps ``start .. start+count-1``."""
    return np.sqrt(h) * standard_normals(seed, replica, start, count)
