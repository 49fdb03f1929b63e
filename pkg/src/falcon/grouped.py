"""Per-group sorted representation and selection across sorted arrays.

The importance vector is pre-sorted inside each group once; because a
group's entries all share one FLOP cost, subtracting any multiple of the
cost vector preserves within-group order, so every dual query can reuse
the same arrays with a per-group scalar shift.  Selection of the S-th
largest element across the implicitly shifted arrays runs on index views
and discards at least a quarter of the remaining elements per recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import GroupedInstance


@dataclass(frozen=True)
class GroupedSorted:
    """Descending per-group importance with original indices and prefix sums.

    ``prefix[j][k]`` is the sum of the k largest importances in group j.
    """

    values: list        # per group: float64 array, non-increasing
    orig_index: list    # per group: int64 array, positions in the instance
    prefix: list        # per group: float64 array of length len+1
    group_flop_cost: np.ndarray
    p: int


def build_grouped_sorted(inst: GroupedInstance) -> GroupedSorted:
    """Sort each group descending (ties by ascending original index)."""
    values, orig_index, prefix = [], [], []
    offs = inst.group_offsets
    for j in range(inst.num_groups):
        lo, hi = int(offs[j]), int(offs[j + 1])
        chunk = inst.importance[lo:hi]
        order = np.argsort(-chunk, kind="stable")
        sorted_vals = np.ascontiguousarray(chunk[order])
        values.append(sorted_vals)
        orig_index.append((order + lo).astype(np.int64))
        pref = np.empty(hi - lo + 1, dtype=np.float64)
        pref[0] = 0.0
        np.cumsum(sorted_vals, out=pref[1:])
        prefix.append(pref)
    return GroupedSorted(values=values, orig_index=orig_index, prefix=prefix,
                         group_flop_cost=inst.group_flop_cost.copy(), p=inst.p)


def _count_gt(a: np.ndarray, lo: int, hi: int, t: float) -> int:
    """Number of entries of the descending slice a[lo:hi] strictly above t."""
    base = lo
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] > t:
            lo = mid + 1
        else:
            hi = mid
    return lo - base


def _count_ge(a: np.ndarray, lo: int, hi: int, t: float) -> int:
    base = lo
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] >= t:
            lo = mid + 1
        else:
            hi = mid
    return lo - base


def _select_views(views: list[list], S: int) -> tuple[float, int]:
    """S-th largest over views [vals, shift, lo, hi]; returns (value, depth).

    Each view exposes the shifted array vals[lo:hi] - shift, descending.
    """
    depth = 0
    while True:
        depth += 1
        views = [v for v in views if v[3] > v[2]]
        total = sum(v[3] - v[2] for v in views)
        if len(views) == 1:
            vals, shift, lo, _hi = views[0]
            return float(vals[lo + S - 1]) - shift, depth
        if total <= 16:
            pool = sorted(
                (float(vals[k]) - shift
                 for vals, shift, lo, hi in views for k in range(lo, hi)),
                reverse=True)
            return pool[S - 1], depth

        # Median pivot: per-group medians, sorted descending (ties by group
        # order), then the first group whose cumulative size reaches half.
        medians = [(float(v[0][v[2] + (v[3] - v[2] - 1) // 2]) - v[1], j)
                   for j, v in enumerate(views)]
        medians.sort(key=lambda mj: (-mj[0], mj[1]))
        acc = 0
        pivot = medians[-1][0]
        for m, j in medians:
            acc += views[j][3] - views[j][2]
            if acc * 2 >= total:
                pivot = m
                break

        cnt_ge = [_count_ge(v[0], v[2], v[3], pivot + v[1]) for v in views]
        cnt_gt = [_count_gt(v[0], v[2], v[3], pivot + v[1]) for v in views]
        n_ge = sum(cnt_ge)
        n_gt = sum(cnt_gt)
        if n_ge <= S - 1:
            # Target lies strictly below the pivot.
            views = [[v[0], v[1], v[2] + c, v[3]] for v, c in zip(views, cnt_ge)]
            S -= n_ge
        elif n_gt >= S:
            # Target lies strictly above the pivot.
            views = [[v[0], v[1], v[2], v[2] + c] for v, c in zip(views, cnt_gt)]
        else:
            return pivot, depth


def largesort(arrays: list[np.ndarray], S: int) -> float:
    """S-th largest element of the multiset union of descending arrays."""
    value, _depth = largesort_with_depth(arrays, S)
    return value


def largesort_with_depth(arrays: list[np.ndarray], S: int) -> tuple[float, int]:
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    total = sum(a.shape[0] for a in arrays)
    if not 1 <= S <= total:
        raise DomainError(f"S = {S} outside [1, {total}]")
    views = [[a, 0.0, 0, a.shape[0]] for a in arrays if a.shape[0] > 0]
    return _select_views(views, S)


def shifted_sth_largest(gs: GroupedSorted, lam2: float, S: int) -> float:
    """S-th largest entry of importance - lam2 * per-parameter cost.

    The shifted vector is never materialized; each group contributes its
    pre-sorted array with scalar shift lam2 * group cost.
    """
    if not 1 <= S <= gs.p:
        raise DomainError(f"S = {S} outside [1, {gs.p}]")
    views = [[vals, lam2 * float(gs.group_flop_cost[j]), 0, vals.shape[0]]
             for j, vals in enumerate(gs.values) if vals.shape[0] > 0]
    value, _depth = _select_views(views, S)
    return value


def positive_part_sum(gs: GroupedSorted, lam1: float, lam2: float) -> tuple[float, int]:
    """Sum and count of strictly positive terms importance - lam1 - cost*lam2.

    Per-group binary search for the threshold plus prefix sums; the group
    reduction order is fixed (serial) for bit-reproducibility.
    """
    total = 0.0
    count = 0
    for j, vals in enumerate(gs.values):
        t = lam1 + lam2 * float(gs.group_flop_cost[j])
        k = _count_gt(vals, 0, vals.shape[0], t)
        if k:
            total += float(gs.prefix[j][k]) - k * t
            count += k
    return total, count
