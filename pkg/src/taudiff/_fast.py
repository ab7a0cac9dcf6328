"""Compiled O(n log n) concordance-counting kernels.

Everything in this module works on integer orderings (argsort permutations
and dense ranks), so results are exact integers: bit-identical no matter
how pairs are scheduled across threads.  The public entry points are
``prepare_columns`` (pure numpy preprocessing) and the ``@njit`` drivers
``pair_stats`` / ``profile_counts`` / ``count_inversions``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "prepare_columns",
    "pair_stats",
    "profile_counts",
    "count_inversions",
]


def prepare_columns(values: np.ndarray):
    """Precompute per-column sort orders, dense ranks, and tie metadata.

    Parameters
    ----------
    values : float ndarray, shape (n, d)

    Returns
    -------
    orders : int64 ndarray, shape (d, n)
        ``orders[j]`` is the stable argsort of column j.
    ranks : int64 ndarray, shape (d, n)
        ``ranks[j, a]`` is the dense (tie-sharing) 0-based rank of sample a
        in column j.
    starts : bool ndarray, shape (d, n)
        ``starts[j, k]`` marks sorted position k as the start of a run of
        equal values in column j.
    has_ties : bool ndarray, shape (d,)
    """
    n, d = values.shape
    orders = np.argsort(values, axis=0, kind="stable")
    svals = np.take_along_axis(values, orders, axis=0)
    starts = np.empty((n, d), dtype=np.bool_)
    starts[0, :] = True
    np.not_equal(svals[1:], svals[:-1], out=starts[1:])
    dense = np.cumsum(starts, axis=0, dtype=np.int64) - 1
    ranks = np.empty((n, d), dtype=np.int64)
    np.put_along_axis(ranks, orders, dense, axis=0)
    has_ties = starts.sum(axis=0) < n
    return (
        np.ascontiguousarray(orders.T.astype(np.int64)),
        np.ascontiguousarray(ranks.T),
        np.ascontiguousarray(starts.T),
        has_ties,
    )


@njit(cache=True, nogil=True, inline="always")
def _fw_prefix(tree, i):
    # Count of inserted ranks with 1-based index <= i.
    total = 0
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@njit(cache=True, nogil=True, inline="always")
def _fw_add(tree, i, hi):
    while i <= hi:
        tree[i] += 1
        i += i & (-i)


@njit(cache=True, nogil=True)
def _pair_notie(order_x, rank_y, tree):
    # Single ascending sweep for tie-free columns.  With t = #[x smaller],
    # r = #[y smaller] and ll = #[x and y both smaller], the per-sample
    # concordant-minus-discordant balance is s = 4*ll - 2*t - 2*r + (n-1),
    # and c = (s + n - 1) / 2 since c + d = n - 1 without ties.
    n = order_x.shape[0]
    for k in range(n + 1):
        tree[k] = 0
    nm1 = n - 1
    s_sum = 0
    s_sq = 0
    c_sum = 0
    c_pair = 0
    for t in range(n):
        a = order_x[t]
        r = rank_y[a]
        ll = _fw_prefix(tree, r)
        s = 4 * ll - 2 * t - 2 * r + nm1
        c = (s + nm1) >> 1
        s_sum += s
        s_sq += s * s
        c_sum += c
        c_pair += c * (c - 1)
        _fw_add(tree, r + 1, n)
    return s_sum, s_sq, c_sum, c_pair


@njit(cache=True, nogil=True)
def _pair_ties(order_x, starts_x, rank_y, tree, low_c, low_d):
    # General two-sweep counting: ascending over x-groups for pairs with
    # strictly smaller x, descending for strictly greater x.  A group of
    # tied x values is inserted only after every member is queried, so tied
    # pairs contribute to neither count.
    n = order_x.shape[0]
    nm1 = n - 1
    for k in range(n + 1):
        tree[k] = 0
    lo = 0
    while lo < n:
        hi = lo + 1
        while hi < n and not starts_x[hi]:
            hi += 1
        for k in range(lo, hi):
            a = order_x[k]
            r = rank_y[a]
            le = _fw_prefix(tree, r + 1)
            ll = _fw_prefix(tree, r)
            low_c[a] = ll
            low_d[a] = lo - le
        for k in range(lo, hi):
            _fw_add(tree, rank_y[order_x[k]] + 1, n)
        lo = hi
    for k in range(n + 1):
        tree[k] = 0
    s_sum = 0
    s_sq = 0
    c_sum = 0
    c_pair = 0
    t_sum = 0
    hi = n
    while hi > 0:
        lo = hi - 1
        while not starts_x[lo]:
            lo -= 1
        inserted = n - hi
        for k in range(lo, hi):
            a = order_x[k]
            r = rank_y[a]
            le = _fw_prefix(tree, r + 1)
            ll = _fw_prefix(tree, r)
            c = low_c[a] + (inserted - le)
            d = low_d[a] + ll
            s = c - d
            s_sum += s
            s_sq += s * s
            c_sum += c
            c_pair += c * (c - 1)
            t_sum += nm1 - c - d
        for k in range(lo, hi):
            _fw_add(tree, rank_y[order_x[k]] + 1, n)
        hi = lo
    return s_sum, s_sq, c_sum, c_pair, t_sum


@njit(cache=True, nogil=True)
def pair_stats(orders, ranks, starts, has_ties, idx_i, idx_j, out):
    """Fill ``out[p] = [S, S2, C, C2, T]`` for each variable pair.

    S = sum of per-sample (c - d), S2 = sum of squares, C = sum of
    concordant counts, C2 = sum of c*(c-1), T = sum of per-sample tie
    counts (each tied pair counted twice).  All exact int64.
    """
    n = orders.shape[1]
    tree = np.zeros(n + 1, dtype=np.int64)
    low_c = np.empty(n, dtype=np.int64)
    low_d = np.empty(n, dtype=np.int64)
    for p in range(idx_i.shape[0]):
        i = idx_i[p]
        j = idx_j[p]
        if has_ties[i] or has_ties[j]:
            s_sum, s_sq, c_sum, c_pair, t_sum = _pair_ties(
                orders[i], starts[i], ranks[j], tree, low_c, low_d
            )
        else:
            s_sum, s_sq, c_sum, c_pair = _pair_notie(orders[i], ranks[j], tree)
            t_sum = 0
        out[p, 0] = s_sum
        out[p, 1] = s_sq
        out[p, 2] = c_sum
        out[p, 3] = c_pair
        out[p, 4] = t_sum


@njit(cache=True, nogil=True)
def profile_counts(order_x, starts_x, rank_y):
    """Per-sample concordant/discordant counts for one variable pair."""
    n = order_x.shape[0]
    tree = np.zeros(n + 1, dtype=np.int64)
    low_c = np.empty(n, dtype=np.int64)
    low_d = np.empty(n, dtype=np.int64)
    conc = np.zeros(n, dtype=np.int64)
    disc = np.zeros(n, dtype=np.int64)
    lo = 0
    while lo < n:
        hi = lo + 1
        while hi < n and not starts_x[hi]:
            hi += 1
        for k in range(lo, hi):
            a = order_x[k]
            r = rank_y[a]
            le = _fw_prefix(tree, r + 1)
            ll = _fw_prefix(tree, r)
            low_c[a] = ll
            low_d[a] = lo - le
        for k in range(lo, hi):
            _fw_add(tree, rank_y[order_x[k]] + 1, n)
        lo = hi
    for k in range(n + 1):
        tree[k] = 0
    hi = n
    while hi > 0:
        lo = hi - 1
        while not starts_x[lo]:
            lo -= 1
        inserted = n - hi
        for k in range(lo, hi):
            a = order_x[k]
            r = rank_y[a]
            le = _fw_prefix(tree, r + 1)
            ll = _fw_prefix(tree, r)
            conc[a] = low_c[a] + (inserted - le)
            disc[a] = low_d[a] + ll
        for k in range(lo, hi):
            _fw_add(tree, rank_y[order_x[k]] + 1, n)
        hi = lo
    return conc, disc


@njit(cache=True, nogil=True)
def count_inversions(a, buf):
    """Count strict inversions (a[k] > a[l] for k < l); sorts ``a`` in place."""
    n = a.shape[0]
    inv = 0
    width = 1
    while width < n:
        lo = 0
        while lo + width < n:
            mid = lo + width
            hi = min(lo + 2 * width, n)
            x = lo
            y = mid
            z = lo
            while x < mid and y < hi:
                if a[y] < a[x]:
                    inv += mid - x
                    buf[z] = a[y]
                    y += 1
                else:
                    buf[z] = a[x]
                    x += 1
                z += 1
            while x < mid:
                buf[z] = a[x]
                x += 1
                z += 1
            while y < hi:
                buf[z] = a[y]
                y += 1
                z += 1
            for k in range(lo, hi):
                a[k] = buf[k]
            lo += 2 * width
        width *= 2
    return inv
