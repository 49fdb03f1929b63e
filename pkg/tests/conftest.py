"""Shared fixtures and independent oracles for the solver test suite."""

import numpy as np
import pytest

from falcon import Budgets, GroupedInstance


@pytest.fixture
def instance_a():
    """Four parameters, two groups of two, costs 2 and 1."""
    return GroupedInstance(
        importance=np.array([4.0, 3.0, 2.0, 1.0]),
        group_offsets=np.array([0, 2, 4]),
        group_flop_cost=np.array([2.0, 1.0]),
    )


@pytest.fixture
def budgets_a():
    return Budgets(nnz=2, flops=3.0)


def random_instance(rng, p_max=20, l_max=4, p_min=2):
    """Small random grouped instance with strictly positive costs."""
    p = int(rng.integers(p_min, p_max + 1))
    num_groups = int(rng.integers(1, min(l_max, p) + 1))
    cuts = np.sort(rng.choice(np.arange(1, p), size=num_groups - 1, replace=False))
    offsets = np.concatenate(([0], cuts, [p]))
    return GroupedInstance(
        importance=rng.uniform(0.0, 10.0, size=p),
        group_offsets=offsets,
        group_flop_cost=rng.uniform(0.5, 5.0, size=num_groups),
    )


def random_budgets(rng, inst):
    """Budgets that are neither trivially empty nor trivially slack."""
    nnz = int(rng.integers(1, inst.p + 1))
    flops = float(rng.uniform(inst.per_param_cost().min(), inst.total_flops()))
    return Budgets(nnz=nnz, flops=flops)


def mask_objective(inst, mask):
    return float(inst.importance @ mask)


def mask_flops(inst, mask):
    return float(inst.per_param_cost() @ mask)
