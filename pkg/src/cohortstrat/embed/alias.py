"""Walker/Vose alias tables for O(1) sampling from a discrete distribution."""

import numpy as np


def build_alias(weights):
    """Return ``(accept, alias)`` for unnormalized non-negative ``weights``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if n == 0:
        raise ValueError("empty distribution")
    total = w.sum()
    if not total > 0 or (w < 0).any():
        raise ValueError("weights must be non-negative with positive sum")
    scaled = (w * (n / total)).tolist()
    accept = [1.0] * n
    alias = list(range(n))
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers sit at 1 up to rounding
    return np.array(accept), np.array(alias, dtype=np.int64)


def alias_draw(accept, alias, u: float) -> int:
    """Draw with a single uniform ``u`` in [0, 1)."""
    x = u * len(accept)
    i = int(x)
    return i if x - i < accept[i] else int(alias[i])


def alias_probabilities(accept, alias) -> np.ndarray:
    """Distribution encoded by an alias table (used by tests)."""
    n = len(accept)
    p = accept / n
    np.add.at(p, alias, (1.0 - accept) / n)
    return p
