"""Stage provider: speak the solver's subprocess protocol.

The parent writes one line to stdin with the path of a weights file
(8-byte little-endian count header, then float32 values).  We load those
weights into the model, resample a data batch, export a fresh bundle and
print its directory path.  Any failure exits nonzero.
"""

from __future__ import annotations

import argparse
import os
import struct
import sys
import tempfile

import numpy as np
import torch

from .export import ExportSpec, export_bundle, load_weights_into


def read_weights(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(4 * count), dtype="<f4")
    if data.shape[0] != count:
        raise ValueError(f"weights file holds {data.shape[0]} values, "
                         f"header says {count}")
    return data


def sample_batch(data: dict, n: int, rng: np.random.Generator):
    x, y = data["x"], data["y"]
    idx = rng.choice(x.shape[0], size=min(n, x.shape[0]), replace=False)
    return (torch.from_numpy(x[idx].astype(np.float32)),
            torch.from_numpy(y[idx].astype(np.int64)))


def serve_one_stage(model, data, n, workdir, rng=None, stdin=None) -> str:
    rng = rng or np.random.default_rng()
    line = (stdin or sys.stdin).readline().strip()
    if not line or not os.path.isabs(line):
        raise ValueError(f"expected an absolute weights path, got {line!r}")
    weights = read_weights(line)
    load_weights_into(model, weights)
    spec = ExportSpec(model=model, n=n)
    batch = sample_batch(data, n, rng)
    out = tempfile.mkdtemp(prefix="stage_bundle_", dir=workdir)
    export_bundle(spec, batch, out)
    return os.path.abspath(out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="falcon-export-provider",
        description="Serve one multi-stage bundle request on stdin/stdout.")
    parser.add_argument("model", help="torch.save()d model file")
    parser.add_argument("data", help="npz file with arrays x and y")
    parser.add_argument("workdir", help="directory for the fresh bundle")
    parser.add_argument("--n", type=int, default=200, help="samples per bundle")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        model = torch.load(args.model, weights_only=False)
        data = dict(np.load(args.data))
        rng = np.random.default_rng(args.seed)
        path = serve_one_stage(model, data, args.n, args.workdir, rng)
    except Exception as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
