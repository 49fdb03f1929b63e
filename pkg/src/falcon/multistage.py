"""Multi-stage pruning driver: decreasing budget schedules with per-stage
model rebuilds supplied by a stage provider."""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from .bundle import ProblemBundle, read_bundle
from .dfo import DfoConfig, SolveTrace, bso_dfo
from .errors import DomainError, StageError
from .model import Budgets
from .quadratic import build_model


@dataclass(frozen=True)
class BudgetSchedule:
    """Non-increasing per-stage budgets ending at the targets."""

    nnz_seq: tuple       # ints, or Nones when the NNZ budget is unbounded
    flops_seq: tuple     # floats, or Nones

    @property
    def num_stages(self) -> int:
        return len(self.nnz_seq)

    def stage_budgets(self, t: int) -> Budgets:
        return Budgets(nnz=self.nnz_seq[t], flops=self.flops_seq[t])


def _poly_seq(start, target, stages, exponent):
    if start is None or target is None:
        return [None] * stages
    vals = []
    running = float("inf")
    for t in range(1, stages + 1):
        v = target + (start - target) * (1.0 - t / stages) ** exponent
        running = min(running, v)
        vals.append(running)
    vals[-1] = float(target)
    return vals


def schedule_budgets(
    nnz_init: int | None,
    nnz: int | None,
    flops_init: float | None,
    flops: float | None,
    stages: int,
    exponent: float = 3.0,
) -> BudgetSchedule:
    """Polynomial interpolation from initial to target budgets.

    Stage t gets target + (init - target) * (1 - t/stages)^exponent,
    rounded for the NNZ sequence; monotonicity is enforced by cumulative
    minimum and the final stage hits the targets exactly.
    """
    if stages < 1:
        raise DomainError("stages must be >= 1")
    if exponent <= 0:
        raise DomainError("exponent must be positive")
    if nnz_init is not None and nnz is not None and nnz_init < nnz:
        raise DomainError("initial NNZ budget below target")
    if flops_init is not None and flops is not None and flops_init < flops:
        raise DomainError("initial FLOP budget below target")
    nnz_seq = [None if v is None else int(round(v))
               for v in _poly_seq(nnz_init, nnz, stages, exponent)]
    flops_seq = [None if v is None else float(v)
                 for v in _poly_seq(flops_init, flops, stages, exponent)]
    return BudgetSchedule(nnz_seq=tuple(nnz_seq), flops_seq=tuple(flops_seq))


class StaticProvider:
    """Returns the original bundle at every stage (pure one-shot behavior)."""

    def __init__(self, bundle: ProblemBundle):
        self._bundle = bundle

    def bundle_for(self, weights: np.ndarray | None, stage: int) -> ProblemBundle:
        return self._bundle


def write_weights_file(weights: np.ndarray, path: str):
    """Raw little-endian float32 with an 8-byte little-endian count header."""
    weights = np.asarray(weights, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", weights.shape[0]))
        fh.write(weights.tobytes())


def read_weights_file(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError("truncated weights file header")
        (count,) = struct.unpack("<Q", header)
        data = np.frombuffer(fh.read(4 * count), dtype="<f4")
    if data.shape[0] != count:
        raise ValueError(f"weights file: expected {count} entries, got {data.shape[0]}")
    return data.astype(np.float64)


class SubprocessProvider:
    """Stage provider backed by an external command.

    Per stage the command is spawned once; it receives on its input stream
    one line with the absolute path of a weights file (8-byte little-endian
    count header followed by float32 data) and must print the absolute path
    of a fresh bundle directory, then exit 0.
    """

    def __init__(self, command: str | list, initial_bundle: ProblemBundle,
                 workdir: str | None = None, timeout: float | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._initial = initial_bundle
        self._workdir = workdir
        self._timeout = timeout

    def bundle_for(self, weights: np.ndarray | None, stage: int) -> ProblemBundle:
        if weights is None:
            return self._initial
        tmpdir = self._workdir or tempfile.gettempdir()
        wpath = os.path.abspath(os.path.join(
            tmpdir, f"falcon-stage-{stage}-{os.getpid()}.weights"))
        write_weights_file(weights, wpath)
        try:
            proc = subprocess.run(
                self.command, input=wpath + "\n", capture_output=True,
                text=True, timeout=self._timeout)
            if proc.returncode != 0:
                raise RuntimeError(
                    f"provider exited {proc.returncode}: {proc.stderr.strip()[:500]}")
            line = proc.stdout.strip().splitlines()
            if not line:
                raise RuntimeError("provider printed no bundle path")
            bundle_path = line[-1].strip()
            if not os.path.isabs(bundle_path) or not os.path.isdir(bundle_path):
                raise RuntimeError(f"provider returned malformed path: {bundle_path!r}")
            return read_bundle(bundle_path)
        finally:
            if os.path.exists(wpath):
                os.unlink(wpath)


def falcon_pp(
    provider,
    schedule: BudgetSchedule,
    ridge: float,
    rho: float,
    block_size: int,
    cfg: DfoConfig,
) -> tuple[np.ndarray, list[SolveTrace]]:
    """Multi-stage solve: rebuild the quadratic model at the current weights
    each stage and run the DFO+backsolve pipeline under that stage's budgets."""
    traces: list[SolveTrace] = []
    w = None
    for t in range(schedule.num_stages):
        try:
            bundle = provider.bundle_for(None if t == 0 else w, t + 1)
            m = build_model(bundle, ridge=ridge, rho=rho, block_size=block_size)
            inst = bundle.instance()
            if w is None:
                w = m.w_bar.copy()
            w, trace = bso_dfo(m, w, cfg, inst, schedule.stage_budgets(t))
            traces.append(trace)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(t + 1, str(exc), traces) from exc
    return w, traces
