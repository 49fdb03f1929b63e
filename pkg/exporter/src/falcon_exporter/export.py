"""Turn a small torch model into an on-disk pruning problem bundle.

Each prunable layer becomes one FLOP group.  A linear weight costs one
FLOP (one multiply-accumulate per forward pass); a conv kernel weight
costs output_height * output_width, since the kernel slides over every
output position.  Biases are left out of the groups and stay dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from falcon import ProblemBundle, write_bundle
from falcon.quadratic import block_partition


class UnsupportedLayerError(ValueError):
    """A parameterized layer the exporter has no FLOP rule for."""


_PRUNABLE = (nn.Linear, nn.Conv2d)
# Layers with parameters that are deliberately kept dense.
_PASSTHROUGH = (nn.BatchNorm1d, nn.BatchNorm2d, nn.LayerNorm)


@dataclass
class ExportSpec:
    """Model plus the sampling and grouping choices for one export."""

    model: nn.Module
    n: int
    loss_fn: object = field(default_factory=nn.CrossEntropyLoss)
    block_size: int = 2000

    def prunable_layers(self) -> list[nn.Module]:
        layers = []
        for module in self.model.modules():
            if isinstance(module, _PRUNABLE):
                layers.append(module)
            elif list(module.parameters(recurse=False)) and \
                    not isinstance(module, _PASSTHROUGH):
                raise UnsupportedLayerError(
                    f"no FLOP rule for layer {module.__class__.__name__}")
        return layers


def _conv_output_hw(spec: ExportSpec, sample: torch.Tensor) -> dict:
    """Output spatial size of every conv layer on one forward pass."""
    sizes = {}
    hooks = []
    for layer in spec.prunable_layers():
        if isinstance(layer, nn.Conv2d):
            hooks.append(layer.register_forward_hook(
                lambda mod, inp, out: sizes.__setitem__(
                    id(mod), int(out.shape[-2]) * int(out.shape[-1]))))
    with torch.no_grad():
        spec.model(sample)
    for h in hooks:
        h.remove()
    return sizes


def layer_flop_costs(spec: ExportSpec, data_batch) -> np.ndarray:
    """Per-weight FLOP cost of each prunable layer, in layer order."""
    layers = spec.prunable_layers()
    conv_hw = {}
    if any(isinstance(l, nn.Conv2d) for l in layers):
        x, _ = data_batch
        conv_hw = _conv_output_hw(spec, x[:1])
    costs = []
    for layer in layers:
        if isinstance(layer, nn.Linear):
            costs.append(1.0)
        else:
            costs.append(float(conv_hw[id(layer)]))
    return np.asarray(costs, dtype=np.float64)


def flatten_weights(spec: ExportSpec) -> np.ndarray:
    parts = [layer.weight.detach().reshape(-1) for layer in spec.prunable_layers()]
    return torch.cat(parts).numpy().astype(np.float32)


def load_weights_into(model: nn.Module, flat: np.ndarray):
    """Inverse of flatten_weights: scatter a flat vector back into the
    prunable layers of ``model``."""
    pos = 0
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, _PRUNABLE):
                count = module.weight.numel()
                chunk = torch.from_numpy(
                    np.array(flat[pos:pos + count], dtype=np.float32))
                module.weight.copy_(chunk.reshape(module.weight.shape))
                pos += count
    if pos != len(flat):
        raise ValueError(f"weight vector length {len(flat)}, model needs {pos}")


def per_sample_gradients(spec: ExportSpec, data_batch) -> np.ndarray:
    """Rows are loss gradients of individual samples at the current weights."""
    x, y = data_batch
    layers = spec.prunable_layers()
    params = [layer.weight for layer in layers]
    rows = []
    for i in range(spec.n):
        loss = spec.loss_fn(spec.model(x[i:i + 1]), y[i:i + 1])
        grads = torch.autograd.grad(loss, params)
        rows.append(torch.cat([g.reshape(-1) for g in grads]).detach().numpy())
    return np.asarray(rows, dtype=np.float32)


def export_bundle(spec: ExportSpec, data_batch, out_path) -> ProblemBundle:
    """Write a solver bundle for the model at its current weights."""
    layers = spec.prunable_layers()
    sizes = [layer.weight.numel() for layer in layers]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    bundle = ProblemBundle(
        p=int(offsets[-1]),
        n=spec.n,
        group_offsets=offsets,
        group_flop_cost=layer_flop_costs(spec, data_batch),
        block_offsets=block_partition(offsets, spec.block_size),
        weights=flatten_weights(spec),
        gradsamples=per_sample_gradients(spec, data_batch),
    )
    write_bundle(bundle, out_path)
    return bundle


def dense_flop_count(spec: ExportSpec, data_batch) -> float:
    """Total forward-pass FLOPs over all prunable weights."""
    layers = spec.prunable_layers()
    costs = layer_flop_costs(spec, data_batch)
    return float(sum(c * layer.weight.numel()
                     for c, layer in zip(costs, layers)))
