"""Command line front end: subcommands, exit codes, determinism."""

import json

import numpy as np
import pytest

from falcon import ProblemBundle, write_bundle
from falcon.bundle import read_mask
from falcon.cli import main


@pytest.fixture
def bundle_a(tmp_path):
    """Structure-A bundle: squared weights give importances (4, 3, 2, 1)."""
    weights = np.sqrt(np.array([4.0, 3.0, 2.0, 1.0])).astype(np.float32)
    bundle = ProblemBundle(
        p=4, n=2, group_offsets=np.array([0, 2, 4]),
        group_flop_cost=np.array([2.0, 1.0]),
        block_offsets=np.array([0, 2, 4]),
        weights=weights,
        gradsamples=np.array([[0.1, 0.2, -0.1, 0.3],
                              [0.0, -0.2, 0.1, 0.1]], dtype=np.float32))
    path = tmp_path / "bundle"
    write_bundle(bundle, path)
    return str(path)


def test_prune_mp_instance_a(bundle_a, tmp_path, capsys):
    out = str(tmp_path / "out")
    rc = main(["prune-mp", bundle_a, "--nnz", "2", "--flops", "3",
               "--out", out, "--threads", "1"])
    assert rc == 0
    mask = read_mask(f"{out}/mask.bin", 4)
    np.testing.assert_array_equal(mask, np.array([1, 0, 1, 0]))
    printed = capsys.readouterr().out
    assert "objective" in printed


def test_prune_runs_and_is_feasible(bundle_a, tmp_path):
    out = str(tmp_path / "out")
    rc = main(["prune", bundle_a, "--nnz", "2", "--flops", "3",
               "--ridge", "1e-2", "--out", out, "--threads", "1"])
    assert rc == 0
    mask = read_mask(f"{out}/mask.bin", 4)
    assert mask.sum() <= 2
    costs = np.repeat([2.0, 1.0], 2)
    assert costs @ mask <= 3.0 + 1e-9


def test_prune_multi_static(bundle_a, tmp_path):
    out = str(tmp_path / "out")
    rc = main(["prune-multi", bundle_a, "--nnz", "2", "--flops", "3",
               "--ridge", "1e-2", "--stages", "3", "--out", out,
               "--threads", "1"])
    assert rc == 0
    mask = read_mask(f"{out}/mask.bin", 4)
    assert mask.sum() <= 2


def test_project_subcommand(bundle_a, tmp_path):
    out = str(tmp_path / "out")
    rc = main(["project", bundle_a, "--nnz", "2", "--flops", "3", "--out", out])
    assert rc == 0
    mask = read_mask(f"{out}/mask.bin", 4)
    np.testing.assert_array_equal(mask, np.array([1, 0, 1, 0]))


def test_eval_zero_mask(bundle_a, tmp_path, capsys):
    mask_path = tmp_path / "mask.bin"
    mask_path.write_bytes(bytes(4))
    rc = main(["eval", bundle_a, str(mask_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "nnz 0" in out
    assert "flops 0" in out


def test_fraction_budget_syntax(bundle_a, tmp_path, capsys):
    # dense FLOPs = 2*2 + 2*1 = 6, so 0.5x means F = 3.
    out = str(tmp_path / "out")
    rc = main(["prune-mp", bundle_a, "--nnz", "2", "--flops", "0.5x",
               "--out", out])
    assert rc == 0
    mask = read_mask(f"{out}/mask.bin", 4)
    np.testing.assert_array_equal(mask, np.array([1, 0, 1, 0]))


def test_verify_subcommand(bundle_a, capsys):
    rc = main(["verify", bundle_a, "--nnz", "2", "--flops", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "within_bound true" in out


def test_usage_error_without_budgets(bundle_a):
    assert main(["prune-mp", bundle_a]) == 1


def test_usage_error_unknown_subcommand():
    assert main(["shrink"]) == 1


def test_format_error_exit_code(tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "meta.json").write_text("{}")
    assert main(["prune-mp", str(bad), "--nnz", "1"]) == 2


def test_corrupt_meta_exit_code(bundle_a):
    meta_path = f"{bundle_a}/meta.json"
    with open(meta_path) as fh:
        meta = json.load(fh)
    meta["block_offsets"] = [0, 3, 4]
    with open(meta_path, "w") as fh:
        json.dump(meta, fh)
    assert main(["prune-mp", bundle_a, "--nnz", "2"]) == 2


def test_stage_provider_failure_exit_code(bundle_a, tmp_path):
    import sys
    script = tmp_path / "dead.py"
    script.write_text("import sys; sys.exit(9)\n")
    rc = main(["prune-multi", bundle_a, "--nnz", "2", "--flops", "3",
               "--ridge", "1e-2", "--stages", "3",
               "--provider", f"{sys.executable} {script}"])
    assert rc == 4


def test_deterministic_output(bundle_a, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        rc = main(["prune", bundle_a, "--nnz", "2", "--flops", "3",
                   "--ridge", "1e-2", "--out", str(out), "--threads", "1"])
        assert rc == 0
        outs.append((out / "mask.bin").read_bytes()
                    + (out / "weights.bin").read_bytes()
                    + (out / "report.txt").read_bytes())
    assert outs[0] == outs[1]


def test_result_dir_passes_eval(bundle_a, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["prune", bundle_a, "--nnz", "2", "--flops", "3",
                 "--ridge", "1e-2", "--out", str(out)]) == 0
    capsys.readouterr()
    rc = main(["eval", bundle_a, str(out / "mask.bin"),
               "--nnz", "2", "--flops", "3"])
    assert rc == 0
    assert "feasible true" in capsys.readouterr().out
