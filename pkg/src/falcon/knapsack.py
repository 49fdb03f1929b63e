"""Budgeted selection: LP dual, golden-section search, KKT recovery, rounding.

The selection problem maximizes total importance subject to a count cap S
and a weighted (FLOP) cap F.  Its LP relaxation is solved through the
Lagrangian dual: the multiplier for the count constraint has a closed form
(the S-th largest shifted importance), leaving a one-dimensional convex
function of the FLOP multiplier that a golden-section search minimizes.
A feasible binary mask is then recovered from the KKT index partition and
improved by a greedy fill, with a certified optimality-gap bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import CertificateError, DomainError, SizeError
from .grouped import (GroupedSorted, _count_ge, _count_gt, build_grouped_sorted,
                      positive_part_sum, shifted_sth_largest)
from .model import Budgets, GroupedInstance, eval_mask

_GOLDEN_ALPHA = (3.0 - math.sqrt(5.0)) / 2.0
_GOLDEN_SHRINK = (math.sqrt(5.0) - 1.0) / 2.0

MODE_SPARSITY = "sparsity-only"
MODE_FLOP = "flop-only"
MODE_JOINT = "joint"


@dataclass(frozen=True)
class DualPoint:
    lam1: float
    lam2: float
    value: float


@dataclass(frozen=True)
class SelectionResult:
    mask: np.ndarray          # uint8, length p
    objective: float
    upper_bound: float
    gap_bound: float
    dual: DualPoint | None
    mode: str


def dual_value(gs: GroupedSorted, b: Budgets, lam1: float, lam2: float) -> float:
    """S*lam1 + F*lam2 + sum of positive reduced importances."""
    if lam1 < 0 or lam2 < 0:
        raise DomainError("dual multipliers must be nonnegative")
    total, _count = positive_part_sum(gs, lam1, lam2)
    value = total
    if lam1 > 0:
        if b.nnz is None:
            raise DomainError("lam1 > 0 requires a bounded NNZ budget")
        value += b.nnz * lam1
    if lam2 > 0:
        if b.flops is None:
            raise DomainError("lam2 > 0 requires a bounded FLOP budget")
        value += b.flops * lam2
    return value


def g_of_lambda2(gs: GroupedSorted, b: Budgets, lam2: float) -> tuple[float, float]:
    """Partial dual minimum over lam1 at fixed lam2; returns (g, lam1_star)."""
    if b.nnz is None or b.nnz >= gs.p:
        lam1_star = 0.0
    else:
        lam1_star = max(shifted_sth_largest(gs, lam2, b.nnz), 0.0)
    return dual_value(gs, b, lam1_star, lam2), lam1_star


def solve_dual(gs: GroupedSorted, b: Budgets, eps: float) -> DualPoint:
    """Golden-section search for the FLOP multiplier minimizing the dual.

    The bracket starts at [0, max importance/cost]; each iteration shrinks
    it by (sqrt(5)-1)/2 until its width is at most eps.  On a flat valley
    the smallest lam2 among the final bracket points is reported.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    lam_hi = 0.0
    for j, vals in enumerate(gs.values):
        if vals.shape[0]:
            lam_hi = max(lam_hi, float(vals[0]) / float(gs.group_flop_cost[j]))
    lo, hi = 0.0, lam_hi

    if hi - lo > eps:
        a = lo + _GOLDEN_ALPHA * (hi - lo)
        bpt = hi - _GOLDEN_ALPHA * (hi - lo)
        ga, _ = g_of_lambda2(gs, b, a)
        gb, _ = g_of_lambda2(gs, b, bpt)
        max_iter = math.ceil(math.log((hi - lo) / eps) / math.log(1.0 / _GOLDEN_SHRINK)) + 2
        for _ in range(max_iter):
            if hi - lo <= eps:
                break
            if ga <= gb:
                hi = bpt
                bpt, gb = a, ga
                a = lo + _GOLDEN_ALPHA * (hi - lo)
                ga, _ = g_of_lambda2(gs, b, a)
            else:
                lo = a
                a, ga = bpt, gb
                bpt = hi - _GOLDEN_ALPHA * (hi - lo)
                gb, _ = g_of_lambda2(gs, b, bpt)
        candidates = sorted({lo, a, bpt, hi})
    else:
        candidates = sorted({lo, hi})

    evals = [(lam2,) + tuple(reversed(g_of_lambda2(gs, b, lam2))) for lam2 in candidates]
    best = min(v for _lam2, _lam1, v in evals)
    tol = 1e-12 * (1.0 + abs(best))
    for lam2, lam1, v in evals:  # candidates ascend, so this picks smallest lam2
        if v <= best + tol:
            return DualPoint(lam1=lam1, lam2=lam2, value=v)
    raise AssertionError("unreachable")


def recover_fractional_primal(
    gs: GroupedSorted,
    b: Budgets,
    dual: DualPoint,
    eps_kkt: float,
    enforce_equality: bool = True,
):
    """Fractional LP primal from the KKT partition at a near-optimal dual.

    Indices with reduced importance above +eps_kkt get mass 1, below
    -eps_kkt get 0; the boundary set receives fractional mass meeting the
    active budgets, consolidated to at most one fractional index per group.

    Returns (z, (z1_idx, z2_idx, z3_idx)).
    """
    lam1, lam2 = dual.lam1, dual.lam2
    p = gs.p
    z = np.zeros(p, dtype=np.float64)
    z1_parts, z2_parts = [], []
    z2_groups = []   # (group j, candidate orig indices sorted by descending importance)
    n1 = 0
    f1 = 0.0
    for j, vals in enumerate(gs.values):
        fj = float(gs.group_flop_cost[j])
        thr = lam1 + lam2 * fj
        k1 = _count_gt(vals, 0, vals.shape[0], thr + eps_kkt)
        k2 = _count_ge(vals, 0, vals.shape[0], thr - eps_kkt)
        idx = gs.orig_index[j]
        if k1:
            z1_parts.append(idx[:k1])
            n1 += k1
            f1 += fj * k1
        if k2 > k1:
            z2_parts.append(idx[k1:k2])
            z2_groups.append((j, idx[k1:k2]))
    z1_idx = np.concatenate(z1_parts) if z1_parts else np.empty(0, dtype=np.int64)
    z2_idx = np.concatenate(z2_parts) if z2_parts else np.empty(0, dtype=np.int64)
    in_z12 = np.zeros(p, dtype=bool)
    in_z12[z1_idx] = True
    in_z12[z2_idx] = True
    z3_idx = np.nonzero(~in_z12)[0].astype(np.int64)
    z[z1_idx] = 1.0

    # Remaining budget headroom for the boundary set.
    cap_nnz = None if b.nnz is None else max(float(b.nnz) - n1, 0.0)
    cap_flops = None if b.flops is None else max(float(b.flops) - f1, 0.0)
    # Multipliers below the classification tolerance count as slack.
    tight_nnz = lam1 > eps_kkt and b.nnz is not None
    tight_flops = lam2 > eps_kkt and b.flops is not None

    if z2_groups and (cap_nnz is None or cap_nnz > 0) and (cap_flops is None or cap_flops > 0):
        mass = _allocate_boundary_mass(
            gs, z2_groups, cap_nnz, cap_flops,
            tight_nnz and enforce_equality, tight_flops and enforce_equality)
        for (j, idx), m in zip(z2_groups, mass):
            # Fill whole units first so each group has at most one fractional index.
            whole = int(math.floor(m + 1e-12))
            whole = min(whole, idx.shape[0])
            z[idx[:whole]] = 1.0
            rem = m - whole
            if rem > 1e-12 and whole < idx.shape[0]:
                z[idx[whole]] = rem
    elif enforce_equality and ((tight_nnz and cap_nnz and cap_nnz > 1e-9 * max(1.0, b.nnz or 1))
                               or (tight_flops and cap_flops
                                   and cap_flops > 1e-9 * max(1.0, abs(b.flops or 1.0)))):
        raise CertificateError(
            "boundary set empty but an active budget has slack; "
            "loosen eps_kkt or solve the dual more accurately")
    return z, (z1_idx, z2_idx, z3_idx)


def _allocate_boundary_mass(gs, z2_groups, cap_nnz, cap_flops, eq_nnz, eq_flops):
    """Per-group fractional mass on the boundary set via a tiny LP.

    Maximizes placed importance subject to the remaining budget headroom;
    budgets whose multiplier is strictly positive are enforced as
    equalities (complementary slackness).
    """
    caps = np.array([float(idx.shape[0]) for _j, idx in z2_groups])
    costs = np.array([float(gs.group_flop_cost[j]) for j, _idx in z2_groups])
    # Per-unit importance of a group's boundary candidates (equal up to eps_kkt).
    unit = np.empty(len(z2_groups))
    for k, (j, idx) in enumerate(z2_groups):
        where = int(np.nonzero(gs.orig_index[j] == idx[0])[0][0])
        unit[k] = float(gs.values[j][where])

    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    if cap_nnz is not None:
        (a_eq if eq_nnz else a_ub).append(np.ones_like(caps))
        (b_eq if eq_nnz else b_ub).append(cap_nnz)
    if cap_flops is not None:
        (a_eq if eq_flops else a_ub).append(costs)
        (b_eq if eq_flops else b_ub).append(cap_flops)
    res = linprog(
        c=-unit,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=[(0.0, c) for c in caps],
        method="highs",
    )
    if not res.success:
        raise CertificateError(
            "boundary feasibility subproblem inconsistent; "
            "loosen eps_kkt or solve the dual more accurately")
    return np.clip(res.x, 0.0, caps)


def round_to_binary(
    z_frac: np.ndarray,
    inst: GroupedInstance,
    b: Budgets,
    fill_candidates: np.ndarray | None = None,
) -> np.ndarray:
    """Feasible binary mask from a fractional LP solution.

    Base rounding keeps exactly the indices at mass one; a greedy pass then
    adds remaining positive-importance candidates in descending importance
    order whenever both budgets still permit.
    """
    z_frac = np.asarray(z_frac, dtype=np.float64)
    mask = (z_frac >= 1.0 - 1e-12).astype(np.uint8)
    if fill_candidates is None:
        fill_candidates = np.nonzero((mask == 0) & (inst.importance > 0))[0]
    else:
        fill_candidates = fill_candidates[mask[fill_candidates] == 0]

    nnz = int(mask.sum())
    costs = inst.per_param_cost()
    flops = float(costs @ mask)

    # Defensive trim: with a loose eps_kkt the mass-one set can overshoot.
    if (b.nnz is not None and nnz > b.nnz) or \
       (b.flops is not None and flops > b.flops + 1e-9 * max(1.0, abs(b.flops))):
        kept = np.nonzero(mask)[0]
        order = np.lexsort((-kept, inst.importance[kept]))  # worst first
        for i in kept[order]:
            mask[i] = 0
            nnz -= 1
            flops -= costs[i]
            ok_nnz = b.nnz is None or nnz <= b.nnz
            ok_fl = b.flops is None or flops <= b.flops + 1e-9 * max(1.0, abs(b.flops))
            if ok_nnz and ok_fl:
                break

    if fill_candidates.shape[0]:
        order = np.lexsort((fill_candidates, -inst.importance[fill_candidates]))
        ftol = 1e-9 * max(1.0, abs(b.flops)) if b.flops is not None else 0.0
        min_cost = float(inst.group_flop_cost.min())
        for i in fill_candidates[order]:
            if b.nnz is not None and nnz >= b.nnz:
                break
            if inst.importance[i] <= 0:
                break
            if b.flops is not None and flops + min_cost > b.flops + ftol:
                break
            fi = costs[i]
            if b.flops is not None and flops + fi > b.flops + ftol:
                continue
            mask[i] = 1
            nnz += 1
            flops += fi
    return mask


def _topk_mask(inst: GroupedInstance, order: np.ndarray, k: int) -> np.ndarray:
    mask = np.zeros(inst.p, dtype=np.uint8)
    mask[order[:k]] = 1
    return mask


def solve_ilp(inst: GroupedInstance, b: Budgets, eps: float | None = None) -> SelectionResult:
    """Budgeted selection with a certified gap.

    Dispatch: a slack FLOP budget reduces to top-S importance; a slack NNZ
    budget to a density-greedy FLOP knapsack; the joint case goes through
    the dual solve, KKT recovery, and rounding.
    """
    p = inst.p
    total_flops = inst.total_flops()
    L = inst.num_groups
    l_f = float(inst.group_flop_cost.sum())

    nnz_bound = b.nnz_bounded_for(p)
    flop_bound = b.flops_bounded_for(total_flops)
    gap_bound = 0.0
    if nnz_bound and b.nnz > 0:
        gap_bound = max(gap_bound, L / b.nnz)
    if flop_bound and b.flops > 0:
        gap_bound = max(gap_bound, l_f / b.flops)
    mode = MODE_JOINT if (nnz_bound and flop_bound) else \
        (MODE_FLOP if flop_bound else MODE_SPARSITY)

    # Degenerate budgets: the zero mask is the only feasible point.
    if (b.nnz is not None and b.nnz <= 0) or (b.flops is not None and b.flops <= 0):
        return SelectionResult(mask=np.zeros(p, dtype=np.uint8), objective=0.0,
                               upper_bound=0.0, gap_bound=0.0, dual=None, mode=mode)
    if not np.any(inst.importance > 0):
        return SelectionResult(mask=np.zeros(p, dtype=np.uint8), objective=0.0,
                               upper_bound=0.0, gap_bound=0.0, dual=None, mode=mode)

    if not flop_bound and not nnz_bound:
        mask = np.ones(p, dtype=np.uint8)
        obj = float(inst.importance.sum())
        return SelectionResult(mask=mask, objective=obj, upper_bound=obj,
                               gap_bound=0.0, dual=None, mode=mode)

    if not flop_bound:
        # Top-S by importance (ties by ascending index).
        order = np.lexsort((np.arange(p), -inst.importance))
        mask = _topk_mask(inst, order, b.nnz)
        obj = float(inst.importance @ mask)
        return SelectionResult(mask=mask, objective=obj, upper_bound=obj,
                               gap_bound=gap_bound, dual=None, mode=mode)

    costs = inst.per_param_cost()
    if not nnz_bound:
        # Density-greedy under the FLOP cap; skip items that no longer fit.
        density = np.where(costs > 0, inst.importance / costs, 0.0)
        order = np.lexsort((np.arange(p), -density))
        mask = np.zeros(p, dtype=np.uint8)
        used = 0.0
        ub = 0.0
        frac_spent = 0.0
        ftol = 1e-9 * max(1.0, abs(b.flops))
        for i in order:
            if inst.importance[i] <= 0:
                break
            # Fractional greedy value is the LP optimum for a single constraint.
            if frac_spent < b.flops:
                take = min(1.0, (b.flops - frac_spent) / costs[i])
                ub += take * inst.importance[i]
                frac_spent += take * costs[i]
            if used + costs[i] <= b.flops + ftol:
                mask[i] = 1
                used += costs[i]
        obj = float(inst.importance @ mask)
        return SelectionResult(mask=mask, objective=obj, upper_bound=max(ub, obj),
                               gap_bound=gap_bound, dual=None, mode=mode)

    # Joint mode: dual solve, KKT recovery (escalating the classification
    # tolerance if the boundary subproblem is inconsistent), then rounding.
    gs = build_grouped_sorted(inst)
    max_imp = float(max(float(v[0]) for v in gs.values if v.shape[0]))
    width0 = max(float(np.max([float(v[0]) / float(gs.group_flop_cost[j])
                               for j, v in enumerate(gs.values) if v.shape[0]])), 1e-300)
    if eps is None:
        eps = 1e-10 * width0
    dual = solve_dual(gs, b, eps)
    eps_kkt0 = 1e-9 * max(max_imp, 1e-300)
    z_frac = z2_idx = None
    for scale in (1.0, 1e3, 1e6):
        try:
            z_frac, (_z1, z2_idx, _z3) = recover_fractional_primal(
                gs, b, dual, eps_kkt0 * scale)
            break
        except CertificateError:
            continue
    if z_frac is None:
        z_frac, (_z1, z2_idx, _z3) = recover_fractional_primal(
            gs, b, dual, eps_kkt0, enforce_equality=False)
    mask = round_to_binary(z_frac, inst, b)
    obj = float(inst.importance @ mask)
    return SelectionResult(mask=mask, objective=obj, upper_bound=dual.value,
                           gap_bound=gap_bound, dual=dual, mode=MODE_JOINT)


_BITS_CACHE: dict[int, np.ndarray] = {}


def _mask_bits(pw: int) -> np.ndarray:
    if pw not in _BITS_CACHE:
        n = 1 << pw
        _BITS_CACHE[pw] = ((np.arange(n, dtype=np.uint32)[:, None]
                            >> np.arange(pw, dtype=np.uint32)) & 1).astype(np.float64)
    return _BITS_CACHE[pw]


def brute_force_ilp(inst: GroupedInstance, b: Budgets) -> SelectionResult:
    """Exact optimum by enumeration; ties broken by lexicographically
    smallest mask.  Test oracle only."""
    p = inst.p
    if p > 25:
        raise SizeError(f"brute force limited to p <= 25, got {p}")
    costs = inst.per_param_cost()
    s_cap = p if b.nnz is None else min(b.nnz, p)
    f_cap = math.inf if b.flops is None else b.flops
    ftol = 0.0 if b.flops is None else 1e-9 * max(1.0, abs(f_cap))

    best_obj = -1.0
    best_key = None
    best_mask = None
    chunk_pw = min(p, 18)
    bits = _mask_bits(chunk_pw)
    lex_weights = np.array([1 << (p - 1 - i) for i in range(p)], dtype=np.float64)
    # Statistics of the low chunk_pw coordinates, shared across chunks.
    obj_lo = bits @ inst.importance[:chunk_pw]
    flops_lo = bits @ costs[:chunk_pw]
    nnz_lo = bits.sum(axis=1)
    for base in range(0, 1 << (p - chunk_pw)):
        hi = np.array([(base >> i) & 1 for i in range(p - chunk_pw)],
                      dtype=np.float64)
        hi_nnz = float(hi.sum())
        hi_flops = float(hi @ costs[chunk_pw:])
        hi_obj = float(hi @ inst.importance[chunk_pw:])
        hi_key = float(hi @ lex_weights[chunk_pw:])
        ok = (nnz_lo <= s_cap - hi_nnz) & (flops_lo <= f_cap - hi_flops + ftol)
        if not ok.any():
            continue
        obj_ok = np.where(ok, obj_lo, -np.inf)
        cand = float(obj_ok.max()) + hi_obj
        if cand < best_obj:
            continue
        ties = np.nonzero(obj_ok == obj_ok.max())[0]
        keys = bits[ties] @ lex_weights[:chunk_pw] + hi_key
        kmin = int(np.argmin(keys))
        key = float(keys[kmin])
        if cand > best_obj or (cand == best_obj
                               and (best_key is None or key < best_key)):
            best_obj = cand
            best_key = key
            best_mask = np.concatenate(
                (bits[ties[kmin]], hi)).astype(np.uint8)

    report = eval_mask(best_mask, inst, b)
    nnz_bound = b.nnz_bounded_for(p)
    flop_bound = b.flops_bounded_for(inst.total_flops())
    mode = MODE_JOINT if (nnz_bound and flop_bound) else \
        (MODE_FLOP if flop_bound else MODE_SPARSITY)
    return SelectionResult(mask=best_mask, objective=report.objective,
                           upper_bound=report.objective, gap_bound=0.0,
                           dual=None, mode=mode)
