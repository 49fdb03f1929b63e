"""Secondary acceptance: end-to-end toy pruning and FLOP accounting.

Each criterion prints a "[PASS]/[FAIL]" line with the measured counts
before asserting.
"""

import copy
import sys

import numpy as np
import pytest
import torch
from torch import nn

from falcon import (
    Budgets,
    DfoConfig,
    SubprocessProvider,
    bso_dfo,
    build_model,
    falcon_pp,
    read_bundle,
    schedule_budgets,
    solve_ilp,
)
from falcon_exporter import ExportSpec, export_bundle, load_weights_into
from falcon_exporter.export import dense_flop_count, flatten_weights

from conftest import make_mlp, make_two_class_data, train_briefly, training_loss

N_SAMPLES = 200
SEEDS = range(10)


def verdict(ok, name, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def loss_with_weights(model, w, x, y):
    probe = copy.deepcopy(model)
    load_weights_into(probe, np.asarray(w, dtype=np.float32))
    return training_loss(probe, x, y)


def solve_seed(seed, tmp_path):
    model = make_mlp(seed)
    x, y = make_two_class_data(seed)
    train_briefly(model, x, y)

    spec = ExportSpec(model=model, n=N_SAMPLES)
    batch = (torch.from_numpy(x[:N_SAMPLES]), torch.from_numpy(y[:N_SAMPLES]))
    bundle_dir = tmp_path / f"bundle_{seed}"
    bundle = export_bundle(spec, batch, bundle_dir)
    inst = bundle.instance()
    b = Budgets(nnz=None, flops=0.5 * inst.total_flops())

    mp = solve_ilp(inst, b)
    w_mp = np.asarray(bundle.weights, dtype=np.float64) * mp.mask

    m = build_model(bundle, ridge=1e-2, rho=1.0, block_size=2000)
    w_falcon, _ = bso_dfo(m, m.w_bar.copy(), DfoConfig(), inst, b)

    model_path = tmp_path / f"model_{seed}.pt"
    data_path = tmp_path / f"data_{seed}.npz"
    torch.save(model, model_path)
    np.savez(data_path, x=x, y=y)
    cmd = (f"{sys.executable} -m falcon_exporter.provider "
           f"{model_path} {data_path} {tmp_path} --n {N_SAMPLES}")
    sched = schedule_budgets(bundle.p, None, inst.total_flops(),
                             0.5 * inst.total_flops(), stages=5)
    w_multi, _ = falcon_pp(SubprocessProvider(cmd, bundle), sched,
                           ridge=1e-2, rho=1.0, block_size=2000,
                           cfg=DfoConfig())

    return {
        "mp": loss_with_weights(model, w_mp, x, y),
        "falcon": loss_with_weights(model, w_falcon, x, y),
        "multi": loss_with_weights(model, w_multi, x, y),
    }


@pytest.fixture(scope="module")
def seed_results(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("toy")
    return [solve_seed(seed, tmp_path) for seed in SEEDS]


def test_end_to_end_toy_single_stage(seed_results):
    wins = sum(r["falcon"] <= r["mp"] + 1e-9 for r in seed_results)
    verdict(wins >= 8, "End-to-end toy, single stage vs magnitude pruning",
            f"model-based pruning loss <= magnitude pruning loss on "
            f"{wins}/10 seeds (required >= 8)")


def test_end_to_end_toy_multi_stage(seed_results):
    wins = sum(r["multi"] <= r["falcon"] + 1e-6 for r in seed_results)
    verdict(wins >= 7, "End-to-end toy, multi-stage vs single stage",
            f"5-stage loss matches or beats single-stage on "
            f"{wins}/10 seeds (required >= 7)")


def test_flop_accounting(tmp_path):
    model = make_mlp(42)
    x, y = make_two_class_data(42)
    spec = ExportSpec(model=model, n=8)
    batch = (torch.from_numpy(x[:8]), torch.from_numpy(y[:8]))
    bundle = export_bundle(spec, batch, tmp_path / "bundle")
    group_total = float(bundle.group_flop_cost @ np.diff(bundle.group_offsets))
    independent = float(sum(m.in_features * m.out_features
                            for m in model if isinstance(m, nn.Linear)))
    verdict(group_total == independent, "FLOP accounting",
            f"group totals {group_total} vs independent count {independent} "
            "(required: exactly equal)")
