"""Discrete first-order solvers over the block low-rank quadratic model.

A DFO step is a gradient step followed by the budgeted projection.  The
active-set loop keeps steps restricted to a working coordinate set and
expands it through line-searched full-vector steps; once the support
settles, an exact per-block backsolve (sample-space Woodbury solve)
refines the surviving weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DomainError, SingularityError
from .knapsack import SelectionResult
from .model import Budgets, GroupedInstance, eval_mask
from .projection import project
from .quadratic import LowRankQuadratic

_DEFAULT_GRID = tuple(float(1 << k) for k in range(11))


@dataclass(frozen=True)
class DfoConfig:
    tau: float = 1e-3               # base step size
    inner_iters: int = 1            # DFO iterations per active-set round
    max_rounds: int = 20            # cap on active-set expansion rounds
    line_search_grid: tuple = _DEFAULT_GRID   # ascending multipliers on tau
    active_init_scale: float = 2.0  # budget multiplier for the initial active set
    ilp_eps: float | None = None    # tolerance forwarded to projections

    def __post_init__(self):
        if self.tau <= 0:
            raise DomainError("tau must be positive")
        if self.inner_iters < 1:
            raise DomainError("inner_iters must be >= 1")
        if not self.line_search_grid or \
                list(self.line_search_grid) != sorted(self.line_search_grid):
            raise DomainError("line_search_grid must be nonempty ascending")


@dataclass
class RoundRecord:
    objective: float
    active_size: int
    accepted_tau: float | None
    support_size: int
    flops: float


@dataclass
class SolveTrace:
    rounds: list = field(default_factory=list)

    def record(self, objective, active_size, accepted_tau, support_size, flops):
        self.rounds.append(RoundRecord(objective, active_size, accepted_tau,
                                       support_size, flops))


def dfo_step(
    m: LowRankQuadratic,
    w: np.ndarray,
    tau: float,
    inst: GroupedInstance,
    b: Budgets,
    eps: float | None = None,
) -> np.ndarray:
    """Gradient step of size tau followed by the budgeted projection."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    y = np.asarray(w, dtype=np.float64)
    if tau > 0:
        y = y - tau * m.gradient(w)
    x, _mask = project(y, inst, b, eps)
    return x


def _restricted_structure(inst: GroupedInstance, active: np.ndarray):
    """Group structure of the subvector indexed by the sorted active set."""
    gid = np.searchsorted(inst.group_offsets, active, side="right") - 1
    counts = np.bincount(gid, minlength=inst.num_groups)
    keep = counts > 0
    sub_offsets = np.concatenate(([0], np.cumsum(counts[keep])))
    sub_costs = inst.group_flop_cost[keep]
    return GroupedInstance(importance=np.zeros(active.shape[0]),
                           group_offsets=sub_offsets, group_flop_cost=sub_costs)


def _restricted_project(y, active, sub_inst, b, eps):
    x_sub, _mask = project(y[active], sub_inst, b, eps)
    out = np.zeros_like(y)
    out[active] = x_sub
    return out


def act_dfo(
    m: LowRankQuadratic,
    w0: np.ndarray,
    cfg: DfoConfig,
    inst: GroupedInstance,
    b: Budgets,
    active0: np.ndarray,
) -> tuple[np.ndarray, SolveTrace]:
    """Active-set DFO loop.

    Restricted steps are accepted only when they decrease the objective;
    each round then line-searches a full-vector step that both decreases
    the objective and moves support off the active set, which triggers an
    active-set expansion.  Terminates when no such step exists or the
    round cap is reached.
    """
    active = np.unique(np.asarray(active0, dtype=np.int64))
    sub_inst = _restricted_structure(inst, active)
    trace = SolveTrace()

    w = _restricted_project(np.asarray(w0, dtype=np.float64), active, sub_inst,
                            b, cfg.ilp_eps)
    q = m.objective(w)
    costs = inst.per_param_cost()
    trace.record(q, active.shape[0], None, int(np.count_nonzero(w)),
                 float(costs @ (w != 0)))

    for _round in range(cfg.max_rounds):
        w_inner = w
        for _t in range(cfg.inner_iters):
            y = w_inner - cfg.tau * m.gradient(w_inner)
            w_inner = _restricted_project(y, active, sub_inst, b, cfg.ilp_eps)
        q_inner = m.objective(w_inner)
        if q_inner < q:
            w, q = w_inner, q_inner

        grad = m.gradient(w)
        accepted = None
        for mult in cfg.line_search_grid:
            tau2 = cfg.tau * mult
            cand, _mask = project(w - tau2 * grad, inst, b, cfg.ilp_eps)
            supp = np.nonzero(cand)[0]
            if supp.shape[0] and np.setdiff1d(supp, active, assume_unique=True).shape[0] == 0:
                continue  # support stayed inside the active set
            qc = m.objective(cand)
            if qc < q:
                accepted = (tau2, cand, qc, supp)
                break
        if accepted is None:
            trace.record(q, active.shape[0], None, int(np.count_nonzero(w)),
                         float(costs @ (w != 0)))
            break
        tau2, w, q, supp = accepted
        active = np.union1d(active, supp)
        sub_inst = _restricted_structure(inst, active)
        trace.record(q, active.shape[0], tau2, int(supp.shape[0]),
                     float(costs @ (w != 0)))
    return w, trace


def backsolve_block(
    m: LowRankQuadratic,
    j: int,
    support: np.ndarray,
) -> np.ndarray:
    """Exact minimizer of the model restricted to ``support`` inside block j.

    Off-support coordinates of the block are held at zero, so their
    displacement from the reference point feeds back into the right hand
    side through the block Gram matrix.  The solve runs in sample space
    (an n x n SPD system), so the cost is O(n^3 + n^2 |support|).
    """
    nl = m.n_lambda
    if nl <= 0:
        raise SingularityError("backsolve requires n * ridge > 0")
    support = np.asarray(support, dtype=np.int64)
    if support.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    lo = int(m.block_offsets[j])
    cols = m.block_columns(j, support)      # n x s
    wb_sub = m.w_bar[support].astype(np.float64)
    # Rows times the zeroed-out part of the block, X_c wb_c.
    y_off = m.block_times(j, m.w_bar[lo:int(m.block_offsets[j + 1])].astype(np.float64))
    y_off -= cols @ wb_sub
    rhs = m.g[support].astype(np.float64) - m.rho * (cols.T @ y_off)
    gram = m.rho * (cols @ cols.T)
    gram[np.diag_indices_from(gram)] += nl
    # (rho C'C + nl I)^-1 v = (v - rho C'(nl I + rho CC')^-1 C v) / nl
    factor = cho_factor(gram, lower=True)
    inner = cho_solve(factor, cols @ rhs)
    minv = (rhs - m.rho * (cols.T @ inner)) / nl
    return wb_sub - minv


def _backsolve_support(m: LowRankQuadratic, support: np.ndarray) -> np.ndarray:
    """Blockwise backsolve over a sorted global support set."""
    out = np.zeros(m.p, dtype=np.float64)
    offs = m.block_offsets
    pos = np.searchsorted(support, offs)
    for j in range(m.num_blocks):
        idx = support[pos[j]:pos[j + 1]]
        if idx.shape[0]:
            out[idx] = backsolve_block(m, j, idx)
    return out


def bso_dfo(
    m: LowRankQuadratic,
    w0: np.ndarray,
    cfg: DfoConfig,
    inst: GroupedInstance,
    b: Budgets,
) -> tuple[np.ndarray, SolveTrace]:
    """Active-set DFO followed by an exact backsolve on the settled support.

    The plain projection of the reference weights is kept as a second
    support candidate; the backsolve is exact per support, so returning
    the better of the two never loses to direct magnitude-style pruning.
    """
    if m.n_lambda <= 0:
        raise SingularityError("bso_dfo requires n * ridge > 0")
    p = m.p
    scale = cfg.active_init_scale
    total = inst.total_flops()
    wide = Budgets(
        nnz=None if b.nnz is None else min(int(round(scale * b.nnz)), p),
        flops=None if b.flops is None else min(scale * b.flops, total))
    w_init, _mask = project(m.w_bar, inst, wide, cfg.ilp_eps)
    active0 = np.nonzero(w_init)[0]
    if active0.shape[0] == 0:
        active0 = np.arange(min(p, 1), dtype=np.int64)

    w_act, trace = act_dfo(m, w0, cfg, inst, b, active0)
    if not eval_mask((w_act != 0).astype(np.uint8), inst, b).feasible:
        w_act, _mask = project(w_act, inst, b, cfg.ilp_eps)  # defensive

    support = np.nonzero(w_act)[0]
    w_star = _backsolve_support(m, support)
    q_star = m.objective(w_star)

    w_proj, _mask = project(m.w_bar, inst, b, cfg.ilp_eps)
    proj_support = np.nonzero(w_proj)[0]
    if proj_support.shape[0] and not np.array_equal(proj_support, support):
        alt = _backsolve_support(m, proj_support)
        q_alt = m.objective(alt)
        if q_alt < q_star:
            w_star, q_star = alt, q_alt

    costs = inst.per_param_cost()
    trace.record(q_star, int(support.shape[0]), None,
                 int(np.count_nonzero(w_star)), float(costs @ (w_star != 0)))
    return w_star, trace
