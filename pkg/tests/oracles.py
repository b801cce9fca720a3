"""Standalone reference implementations used to cross-check the engine.

Each function follows the textbook description of its procedure directly
and shares no code with the package.
"""

import itertools

import numpy as np


def holm_direct(p, alpha):
    """Holm: walk up the sorted p-values, stop at the first failure."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    rejected = set()
    for i, h in enumerate(np.argsort(p, kind="stable")):
        if p[h] <= alpha / (n - i):
            rejected.add(int(h))
        else:
            break
    return rejected


def hochberg_direct(p, alpha):
    """Hochberg: largest i with p_(i) <= alpha / (n - i + 1), reject the i smallest."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    order = np.argsort(p, kind="stable")
    for i in range(n, 0, -1):
        if p[order[i - 1]] <= alpha / (n - i + 1):
            cut = p[order[i - 1]]
            return {h for h in range(n) if p[h] <= cut}
    return set()


def sidak_direct(p, alpha):
    p = np.asarray(p, dtype=float)
    n = len(p)
    rejected = set()
    for i, h in enumerate(np.argsort(p, kind="stable")):
        if p[h] <= 1 - (1 - alpha) ** (1 / (n - i)):
            rejected.add(int(h))
        else:
            break
    return rejected


def holm_adjusted(p):
    """Classical formula: running maximum of ``(n - j + 1) p_(j)``, capped at 1."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    order = np.argsort(p, kind="stable")
    out = np.empty(n)
    running = 0.0
    for j, h in enumerate(order):
        running = max(running, (n - j) * p[h])
        out[h] = min(1.0, running)
    return out


def closed_testing_direct(n, local_p, alpha):
    """Reject ``H_i`` iff every intersection ``H_J`` with ``i`` in ``J`` has local p <= alpha.

    ``local_p`` maps frozensets of elementary ids to local p-values and must
    cover every nonempty subset (free logical structure).
    """
    rejected = set()
    for i in range(n):
        ok = True
        for size in range(1, n + 1):
            for J in itertools.combinations(range(n), size):
                if i in J and local_p[frozenset(J)] > alpha:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            rejected.add(i)
    return rejected


def mask_to_set(mask):
    return {h for h in range(mask.bit_length()) if mask >> h & 1}


def random_tree(rng, max_nodes=10):
    """Random rooted tree: labels and child -> parent map (ids)."""
    n = int(rng.integers(2, max_nodes + 1))
    parent = {c: int(rng.integers(0, c)) for c in range(1, n)}
    return [f"N{i}" for i in range(n)], parent
