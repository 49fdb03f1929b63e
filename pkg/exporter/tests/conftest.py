"""Shared toy models and data for the exporter tests."""

import numpy as np
import pytest
import torch
from torch import nn


def make_mlp(seed, hidden=(32, 16)):
    torch.manual_seed(seed)
    return nn.Sequential(
        nn.Linear(2, hidden[0], bias=True), nn.ReLU(),
        nn.Linear(hidden[0], hidden[1], bias=True), nn.ReLU(),
        nn.Linear(hidden[1], 2, bias=True))


def make_two_class_data(seed, count=400):
    """Two gaussian blobs, labels 0/1."""
    rng = np.random.default_rng(seed)
    half = count // 2
    x0 = rng.normal(loc=(-1.0, -1.0), scale=0.7, size=(half, 2))
    x1 = rng.normal(loc=(1.0, 1.0), scale=0.7, size=(count - half, 2))
    x = np.concatenate([x0, x1]).astype(np.float32)
    y = np.concatenate([np.zeros(half), np.ones(count - half)]).astype(np.int64)
    order = rng.permutation(count)
    return x[order], y[order]


def train_briefly(model, x, y, steps=300, lr=0.05):
    data = torch.from_numpy(x)
    labels = torch.from_numpy(y)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(steps):
        opt.zero_grad()
        loss = loss_fn(model(data), labels)
        loss.backward()
        opt.step()
    return float(loss.item())


def training_loss(model, x, y):
    with torch.no_grad():
        return float(nn.CrossEntropyLoss()(
            model(torch.from_numpy(x)), torch.from_numpy(y)).item())


@pytest.fixture
def toy_problem():
    model = make_mlp(0)
    x, y = make_two_class_data(0)
    train_briefly(model, x, y)
    return model, x, y
