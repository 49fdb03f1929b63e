"""Core domain types: grouped instances, budgets, masks and mask reports.

Parameters are stored pre-permuted into group order: group j owns the
contiguous index range [group_offsets[j], group_offsets[j+1]).  Every
parameter in a group shares the group's FLOP cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

#: Sentinel for an unbounded budget (explicit, not a huge float).
UNBOUNDED = None


@dataclass(frozen=True)
class GroupedInstance:
    """Importance scores partitioned into contiguous equal-cost groups."""

    importance: np.ndarray          # length p, nonnegative
    group_offsets: np.ndarray       # length L+1, strictly increasing, [0..p]
    group_flop_cost: np.ndarray     # length L, positive FLOPs per parameter

    def __post_init__(self):
        object.__setattr__(self, "importance",
                           np.asarray(self.importance, dtype=np.float64))
        object.__setattr__(self, "group_offsets",
                           np.asarray(self.group_offsets, dtype=np.int64))
        object.__setattr__(self, "group_flop_cost",
                           np.asarray(self.group_flop_cost, dtype=np.float64))

    @property
    def p(self) -> int:
        return int(self.importance.shape[0])

    @property
    def num_groups(self) -> int:
        return int(self.group_flop_cost.shape[0])

    def group_sizes(self) -> np.ndarray:
        return np.diff(self.group_offsets)

    def per_param_cost(self) -> np.ndarray:
        """Expand per-group cost to a length-p vector."""
        return np.repeat(self.group_flop_cost, self.group_sizes())

    def total_flops(self) -> float:
        return float(self.group_flop_cost @ self.group_sizes())


@dataclass(frozen=True)
class Budgets:
    """NNZ cap and FLOP cap; ``None`` means unbounded."""

    nnz: int | None = UNBOUNDED
    flops: float | None = UNBOUNDED

    def nnz_bounded_for(self, p: int) -> bool:
        # An NNZ cap of p or more never binds.
        return self.nnz is not None and self.nnz < p

    def flops_bounded_for(self, total: float) -> bool:
        return self.flops is not None and self.flops < total


@dataclass(frozen=True)
class MaskReport:
    """Exact accounting of a binary keep/prune decision."""

    nnz: int
    flops: float
    objective: float
    feasible: bool


def validate_instance(inst: GroupedInstance) -> list[str]:
    """Return every invariant violation; an empty list means the instance is ok."""
    violations = []
    offs = inst.group_offsets
    costs = inst.group_flop_cost
    imp = inst.importance

    if offs.ndim != 1 or offs.shape[0] != costs.shape[0] + 1:
        violations.append(
            f"group_offsets length {offs.shape} inconsistent with "
            f"{costs.shape[0]} groups")
        return violations
    if offs.shape[0] < 2:
        violations.append("at least one group required")
        return violations
    if offs[0] != 0:
        violations.append(f"group_offsets[0] = {offs[0]}, expected 0")
    if offs[-1] != imp.shape[0]:
        violations.append(
            f"group_offsets[-1] = {offs[-1]}, expected p = {imp.shape[0]}")
    if np.any(np.diff(offs) <= 0):
        violations.append("offsets not increasing")
    for j in np.nonzero(~(costs > 0))[0]:
        violations.append(f"nonpositive cost in group {j + 1}")
    if np.any(imp < 0) or not np.all(np.isfinite(imp)):
        violations.append("importance contains negative or non-finite entries")
    return violations


def eval_mask(z: np.ndarray, inst: GroupedInstance, b: Budgets) -> MaskReport:
    """Exact NNZ / FLOP / objective accounting of mask ``z`` against budgets."""
    z = np.asarray(z)
    if z.shape != (inst.p,):
        raise DimensionError(f"mask length {z.shape} != p = {inst.p}")
    zb = z.astype(np.float64)
    nnz = int(round(float(zb.sum())))
    flops = 0.0
    offs = inst.group_offsets
    for j in range(inst.num_groups):
        flops += float(inst.group_flop_cost[j]) * float(zb[offs[j]:offs[j + 1]].sum())
    objective = float(inst.importance @ zb)
    feasible = True
    if b.nnz is not None and nnz > b.nnz:
        feasible = False
    if b.flops is not None and flops > b.flops + 1e-9 * max(1.0, abs(b.flops)):
        feasible = False
    return MaskReport(nnz=nnz, flops=flops, objective=objective, feasible=feasible)
