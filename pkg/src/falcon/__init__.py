"""Joint NNZ+FLOP budgeted pruning solvers."""

__version__ = "0.1.0"

from .model import (Budgets, GroupedInstance, MaskReport, UNBOUNDED,
                    eval_mask, validate_instance)
from .grouped import (GroupedSorted, build_grouped_sorted, largesort,
                      positive_part_sum, shifted_sth_largest)
from .knapsack import (DualPoint, SelectionResult, brute_force_ilp, dual_value,
                       g_of_lambda2, recover_fractional_primal, round_to_binary,
                       solve_dual, solve_ilp)
from .projection import project, project_select
from .quadratic import LowRankQuadratic, block_partition, build_model
from .dfo import DfoConfig, SolveTrace, act_dfo, backsolve_block, bso_dfo, dfo_step
from .multistage import (BudgetSchedule, StaticProvider, SubprocessProvider,
                         falcon_pp, schedule_budgets)
from .bundle import ProblemBundle, read_bundle, write_bundle, write_result

__all__ = [
    "Budgets", "GroupedInstance", "MaskReport", "UNBOUNDED",
    "eval_mask", "validate_instance",
    "GroupedSorted", "build_grouped_sorted", "largesort",
    "positive_part_sum", "shifted_sth_largest",
    "DualPoint", "SelectionResult", "brute_force_ilp", "dual_value",
    "g_of_lambda2", "recover_fractional_primal", "round_to_binary",
    "solve_dual", "solve_ilp",
    "project", "project_select",
    "LowRankQuadratic", "block_partition", "build_model",
    "DfoConfig", "SolveTrace", "act_dfo", "backsolve_block", "bso_dfo", "dfo_step",
    "BudgetSchedule", "StaticProvider", "SubprocessProvider",
    "falcon_pp", "schedule_budgets",
    "ProblemBundle", "read_bundle", "write_bundle", "write_result",
]
