"""Command line entry for one-off bundle exports."""

from __future__ import annotations

import argparse
import sys

import numpy as np
import torch

from .export import ExportSpec, dense_flop_count, export_bundle
from .provider import sample_batch


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="falcon-export",
        description="Export a solver bundle from a saved torch model.")
    parser.add_argument("model", help="torch.save()d model file")
    parser.add_argument("data", help="npz file with arrays x and y")
    parser.add_argument("out", help="bundle directory to create")
    parser.add_argument("--n", type=int, default=200, help="samples per bundle")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        model = torch.load(args.model, weights_only=False)
        data = dict(np.load(args.data))
        rng = np.random.default_rng(args.seed)
        spec = ExportSpec(model=model, n=args.n)
        batch = sample_batch(data, args.n, rng)
        bundle = export_bundle(spec, batch, args.out)
    except Exception as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 1
    print(f"p {bundle.p}")
    print(f"n {bundle.n}")
    print(f"groups {bundle.group_offsets.shape[0] - 1}")
    print(f"dense_flops {dense_flop_count(spec, batch)}")
    print(f"bundle {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
