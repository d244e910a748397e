"""Independent brute-force and finite-difference oracles used by the tests.

These deliberately avoid the library's own search machinery: dense scans,
exhaustive lattice enumeration, and central differences only.
"""

import itertools

import numpy as np


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def dense_block_gap(game, i, x, n=200_001):
    """Best-response gap of a 1-D block by a dense scan (no refinement)."""
    sl = game.space.block_slice(i)
    assert sl.stop - sl.start == 1
    lo, hi = game.space.blocks[i].bounds[0]
    best = -np.inf
    for t in np.linspace(lo, hi, n):
        v = x.copy()
        v[sl.start] = t
        best = max(best, game.utility(i, v))
    return max(best - game.utility(i, x), 0.0)


def lattice_points(game):
    """All feasible lattice points of a fully lattice-constrained game."""
    axes = []
    for blk in game.space.blocks:
        for lo, hi in blk.bounds:
            kmin, kmax = blk._k_range(lo, hi)
            axes.append(blk.lattice.origin + blk.lattice.step * np.arange(kmin, kmax + 1))
    return (np.array(p) for p in itertools.product(*axes))


def lattice_potential_argmax(game):
    best, best_val = None, -np.inf
    for p in lattice_points(game):
        v = game.potential(p)
        if v > best_val:
            best, best_val = p, v
    return best, best_val
