"""Euclidean projection onto the joint NNZ/FLOP-budgeted set.

Keeping the squared magnitudes of the surviving entries is equivalent to
the budgeted selection problem with importance equal to the squared input,
so the projection reuses the ILP machinery and inherits its gap
certificate.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .knapsack import SelectionResult, solve_ilp
from .model import Budgets, GroupedInstance


def project(
    x_bar: np.ndarray,
    inst: GroupedInstance,
    b: Budgets,
    eps: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Project x_bar onto {at most S nonzeros, FLOP cost at most F}.

    ``inst`` supplies the group structure; its importance field is ignored.
    Returns (x, mask) with x_i = x_bar_i * mask_i.
    """
    x_bar = np.asarray(x_bar, dtype=np.float64)
    if x_bar.shape != (inst.p,):
        raise DimensionError(f"vector length {x_bar.shape} != p = {inst.p}")
    sel = project_select(x_bar, inst, b, eps)
    return x_bar * sel.mask, sel.mask


def project_select(
    x_bar: np.ndarray,
    inst: GroupedInstance,
    b: Budgets,
    eps: float | None = None,
) -> SelectionResult:
    """Selection result (mask + certificate) of the projection ILP."""
    imp_inst = GroupedInstance(
        importance=np.square(np.asarray(x_bar, dtype=np.float64)),
        group_offsets=inst.group_offsets,
        group_flop_cost=inst.group_flop_cost,
    )
    return solve_ilp(imp_inst, b, eps)
