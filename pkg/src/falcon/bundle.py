"""On-disk problem bundles and result artifacts.

A bundle directory holds a strict JSON meta descriptor plus headerless raw
little-endian float32 arrays: ``weights.bin`` (length p) and
``gradsamples.bin`` (n x p, row-major).  Large sample matrices are opened
memory-mapped; writes go through temporary names with an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .model import Budgets, GroupedInstance

META_NAME = "meta.json"
WEIGHTS_NAME = "weights.bin"
GRADSAMPLES_NAME = "gradsamples.bin"
FORMAT_VERSION = 1

_META_FIELDS = {"format_version", "p", "n", "num_groups", "group_offsets",
                "group_flop_cost", "block_offsets", "dtype"}

# Sample matrices above this size are memory-mapped instead of loaded.
_MMAP_THRESHOLD = 1 << 30


@dataclass(frozen=True)
class ProblemBundle:
    p: int
    n: int
    group_offsets: np.ndarray    # L+1
    group_flop_cost: np.ndarray  # L
    block_offsets: np.ndarray    # K+1, nested in groups
    weights: np.ndarray          # length p
    gradsamples: np.ndarray      # n x p (ndarray or read-only memmap)

    def instance(self, importance: np.ndarray | None = None) -> GroupedInstance:
        """Grouped instance over this bundle's structure.

        Defaults to squared-weight importance (generalized magnitude pruning).
        """
        if importance is None:
            importance = np.square(np.asarray(self.weights, dtype=np.float64))
        return GroupedInstance(importance=importance,
                               group_offsets=self.group_offsets,
                               group_flop_cost=self.group_flop_cost)


def _check_offsets(offs: np.ndarray, p: int, label: str, errors: list[str]):
    if offs.ndim != 1 or offs.shape[0] < 2:
        errors.append(f"{label}: need at least two offsets")
        return
    if offs[0] != 0:
        errors.append(f"{label}: first offset {offs[0]} != 0")
    if offs[-1] != p:
        errors.append(f"{label}: last offset {offs[-1]} != p = {p}")
    if np.any(np.diff(offs) <= 0):
        errors.append(f"{label}: offsets not strictly increasing")


def validate_structure(meta: dict) -> list[str]:
    """Structural violations of a parsed meta descriptor."""
    errors: list[str] = []
    unknown = set(meta) - _META_FIELDS
    missing = _META_FIELDS - set(meta)
    if unknown:
        errors.append(f"unknown meta fields: {sorted(unknown)}")
    if missing:
        errors.append(f"missing meta fields: {sorted(missing)}")
        return errors
    if meta["format_version"] != FORMAT_VERSION:
        errors.append(f"unsupported format_version {meta['format_version']!r}")
    if meta["dtype"] != "f32":
        errors.append(f"unsupported dtype {meta['dtype']!r}")
    if not (isinstance(meta["p"], int) and meta["p"] > 0):
        errors.append(f"invalid p: {meta['p']!r}")
    if not (isinstance(meta["n"], int) and meta["n"] > 0):
        errors.append(f"invalid n: {meta['n']!r}")
    if errors:
        return errors

    p = meta["p"]
    goffs = np.asarray(meta["group_offsets"], dtype=np.int64)
    boffs = np.asarray(meta["block_offsets"], dtype=np.int64)
    costs = np.asarray(meta["group_flop_cost"], dtype=np.float64)
    _check_offsets(goffs, p, "group_offsets", errors)
    _check_offsets(boffs, p, "block_offsets", errors)
    if costs.shape[0] != meta["num_groups"] or goffs.shape[0] != meta["num_groups"] + 1:
        errors.append(
            f"num_groups = {meta['num_groups']} inconsistent with "
            f"{costs.shape[0]} costs / {goffs.shape[0]} offsets")
    if np.any(~(costs > 0)):
        errors.append("nonpositive group FLOP cost")
    if not errors:
        # Every group boundary must be a block boundary (blocks nest in groups).
        block_set = set(int(x) for x in boffs)
        for j in range(goffs.shape[0]):
            if int(goffs[j]) not in block_set:
                k = int(np.searchsorted(boffs, goffs[j], side="right")) - 1
                g1 = int(np.searchsorted(goffs, boffs[k], side="right"))
                g2 = int(np.searchsorted(goffs, boffs[k + 1] - 1, side="right"))
                errors.append(f"block {k + 1} spans groups {g1},{g2}")
                break
    return errors


def read_bundle(path: str | os.PathLike) -> ProblemBundle:
    """Load and fully validate a bundle directory; raises FormatError."""
    path = os.fspath(path)
    meta_path = os.path.join(path, META_NAME)
    if not os.path.isdir(path) or not os.path.exists(meta_path):
        raise FormatError(f"not a bundle directory: {path}")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"invalid meta descriptor: {exc}") from exc
    if not isinstance(meta, dict):
        raise FormatError("meta descriptor must be a JSON object")
    errors = validate_structure(meta)
    if errors:
        raise FormatError("; ".join(errors))

    p, n = meta["p"], meta["n"]
    wpath = os.path.join(path, WEIGHTS_NAME)
    xpath = os.path.join(path, GRADSAMPLES_NAME)
    for fpath, count, label in ((wpath, p, "weights"), (xpath, n * p, "gradsamples")):
        if not os.path.exists(fpath):
            raise FormatError(f"missing {os.path.basename(fpath)}")
        actual = os.path.getsize(fpath)
        if actual != 4 * count:
            raise FormatError(
                f"{label} length: expected {'4*p' if label == 'weights' else '4*n*p'}"
                f" = {4 * count} bytes, found {actual}")
    weights = np.fromfile(wpath, dtype="<f4")
    if os.path.getsize(xpath) > _MMAP_THRESHOLD:
        grads = np.memmap(xpath, dtype="<f4", mode="r", shape=(n, p))
    else:
        grads = np.fromfile(xpath, dtype="<f4").reshape(n, p)
    return ProblemBundle(
        p=p, n=n,
        group_offsets=np.asarray(meta["group_offsets"], dtype=np.int64),
        group_flop_cost=np.asarray(meta["group_flop_cost"], dtype=np.float64),
        block_offsets=np.asarray(meta["block_offsets"], dtype=np.int64),
        weights=weights, gradsamples=grads)


def _write_atomic(path: str, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(bundle: ProblemBundle, path: str | os.PathLike):
    """Write a bundle directory (atomic per file)."""
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "p": int(bundle.p),
        "n": int(bundle.n),
        "num_groups": int(bundle.group_flop_cost.shape[0]),
        "group_offsets": [int(x) for x in bundle.group_offsets],
        "group_flop_cost": [float(x) for x in bundle.group_flop_cost],
        "block_offsets": [int(x) for x in bundle.block_offsets],
        "dtype": "f32",
    }
    _write_atomic(os.path.join(path, META_NAME),
                  json.dumps(meta, indent=1).encode("utf-8"))
    _write_atomic(os.path.join(path, WEIGHTS_NAME),
                  np.asarray(bundle.weights, dtype="<f4").tobytes())
    xpath = os.path.join(path, GRADSAMPLES_NAME)
    fd, tmp = tempfile.mkstemp(dir=path, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            chunk = max(1, (64 << 20) // max(4 * bundle.p, 1))
            for i0 in range(0, bundle.n, chunk):
                fh.write(np.asarray(bundle.gradsamples[i0:i0 + chunk, :],
                                    dtype="<f4").tobytes())
        os.replace(tmp, xpath)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_result(
    path: str | os.PathLike,
    mask: np.ndarray,
    weights: np.ndarray,
    scalars: dict,
    inst: GroupedInstance,
):
    """Result directory: mask.bin (0/1 bytes), weights.bin (f32), report.txt.

    The report is deterministic key-value text followed by a per-group
    sparsity table.
    """
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    mask = np.asarray(mask).astype(np.uint8)
    _write_atomic(os.path.join(path, "mask.bin"), mask.tobytes())
    _write_atomic(os.path.join(path, "weights.bin"),
                  np.asarray(weights, dtype="<f4").tobytes())
    lines = [f"{key} {_fmt(value)}" for key, value in scalars.items()]
    lines.append("group size kept sparsity flop_cost")
    offs = inst.group_offsets
    for j in range(inst.num_groups):
        lo, hi = int(offs[j]), int(offs[j + 1])
        kept = int(mask[lo:hi].sum())
        size = hi - lo
        lines.append(
            f"{j + 1} {size} {kept} {_fmt(1.0 - kept / size)} "
            f"{_fmt(float(inst.group_flop_cost[j]))}")
    _write_atomic(os.path.join(path, "report.txt"),
                  ("\n".join(lines) + "\n").encode("utf-8"))


def read_mask(path: str | os.PathLike, p: int) -> np.ndarray:
    """Read a mask.bin (or a result directory containing one)."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, "mask.bin")
    if not os.path.exists(path):
        raise FormatError(f"mask file not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.shape[0] != p:
        raise FormatError(f"mask length: expected p = {p} bytes, found {raw.shape[0]}")
    if np.any(raw > 1):
        raise FormatError("mask entries must be 0 or 1")
    return raw
