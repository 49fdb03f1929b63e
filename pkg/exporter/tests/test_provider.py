"""Subprocess stage-provider protocol conformance."""

import io
import os
import struct
import subprocess
import sys

import numpy as np
import pytest
import torch

from falcon import read_bundle
from falcon_exporter.provider import main as provider_main
from falcon_exporter.provider import read_weights, serve_one_stage
from falcon_exporter.export import ExportSpec, flatten_weights

from conftest import make_mlp, make_two_class_data


def write_weights_file(path, values):
    blob = struct.pack("<Q", len(values)) + np.asarray(
        values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


@pytest.fixture
def saved_problem(tmp_path):
    model = make_mlp(3)
    x, y = make_two_class_data(3)
    model_path = tmp_path / "model.pt"
    data_path = tmp_path / "data.npz"
    torch.save(model, model_path)
    np.savez(data_path, x=x, y=y)
    return model, str(model_path), str(data_path), tmp_path


def test_read_weights_roundtrip(tmp_path):
    w = np.random.default_rng(0).normal(size=13).astype(np.float32)
    path = tmp_path / "w.bin"
    write_weights_file(path, w)
    np.testing.assert_array_equal(read_weights(str(path)), w)


def test_serve_one_stage_writes_valid_bundle(saved_problem):
    model, _, data_path, tmp_path = saved_problem
    w = flatten_weights(ExportSpec(model=model, n=1))
    wfile = tmp_path / "weights.bin"
    write_weights_file(wfile, w * 0.5)
    data = dict(np.load(data_path))
    out = serve_one_stage(model, data, n=16, workdir=str(tmp_path),
                          rng=np.random.default_rng(1),
                          stdin=io.StringIO(f"{wfile.resolve()}\n"))
    bundle = read_bundle(out)
    np.testing.assert_allclose(bundle.weights, (w * 0.5).astype(np.float32))
    assert bundle.n == 16


def test_provider_main_emits_bundle_path(saved_problem):
    model, model_path, data_path, tmp_path = saved_problem
    w = flatten_weights(ExportSpec(model=model, n=1))
    wfile = tmp_path / "weights.bin"
    write_weights_file(wfile, w)
    proc = subprocess.run(
        [sys.executable, "-m", "falcon_exporter.provider",
         model_path, data_path, str(tmp_path), "--n", "8", "--seed", "0"],
        input=f"{wfile.resolve()}\n", capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    out = proc.stdout.strip()
    assert os.path.isabs(out)
    bundle = read_bundle(out)
    assert bundle.n == 8


def test_malformed_input_line_fails(saved_problem):
    _, model_path, data_path, tmp_path = saved_problem
    proc = subprocess.run(
        [sys.executable, "-m", "falcon_exporter.provider",
         model_path, data_path, str(tmp_path)],
        input="not-an-absolute-path\n", capture_output=True, text=True)
    assert proc.returncode != 0


def test_three_consecutive_stages(saved_problem):
    model, model_path, data_path, tmp_path = saved_problem
    w = flatten_weights(ExportSpec(model=model, n=1))
    paths = set()
    for stage in range(3):
        wfile = tmp_path / f"w{stage}.bin"
        write_weights_file(wfile, w * (1.0 - 0.1 * stage))
        proc = subprocess.run(
            [sys.executable, "-m", "falcon_exporter.provider",
             model_path, data_path, str(tmp_path), "--n", "8"],
            input=f"{wfile.resolve()}\n", capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        out = proc.stdout.strip()
        read_bundle(out)
        paths.add(out)
    assert len(paths) == 3
