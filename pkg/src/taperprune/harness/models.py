"""Graph specs for the desk-scale reference networks."""

from __future__ import annotations

from ..graph import GraphSpec


def toy_cnn_spec(
    in_channels: int = 3,
    size: int = 16,
    widths: tuple[int, ...] = (32, 32, 32),
    classes: int = 10,
    gated: bool = True,
    seed: int = 0,
) -> GraphSpec:
    """``len(widths)`` conv-relu-pool blocks followed by one dense classifier.

    Gates sit on every pooled block output, i.e. at the input of each
    following conv and of the classifier.
    """
    layers, sites = [], []
    for i, w in enumerate(widths, start=1):
        layers += [
            {"name": f"conv{i}", "kind": "conv", "out_channels": w, "kernel": 3, "pad": 1},
            {"name": f"relu{i}", "kind": "relu"},
            {"name": f"pool{i}", "kind": "maxpool", "kernel": 2},
        ]
        if gated:
            sites.append({"name": f"site{i}", "at": f"pool{i}"})
    layers += [{"name": "flatten", "kind": "flatten"}, {"name": "fc", "kind": "dense", "out_features": classes}]
    return GraphSpec((in_channels, size, size), layers, sites, {"seed": seed})


def grouped_cnn_spec(seed: int = 0) -> GraphSpec:
    """Small net with a two-group conv, gated on both sides of the split."""
    layers = [
        {"name": "conv1", "kind": "conv", "out_channels": 8, "kernel": 3, "pad": 1},
        {"name": "relu1", "kind": "relu"},
        {"name": "conv2", "kind": "conv", "out_channels": 12, "kernel": 3, "pad": 1, "groups": 2},
        {"name": "relu2", "kind": "relu"},
        {"name": "pool2", "kind": "maxpool", "kernel": 2},
        {"name": "conv3", "kind": "conv", "out_channels": 6, "kernel": 3, "pad": 1},
        {"name": "relu3", "kind": "relu"},
        {"name": "pool3", "kind": "maxpool", "kernel": 2},
        {"name": "flatten", "kind": "flatten"},
        {"name": "fc", "kind": "dense", "out_features": 4},
    ]
    sites = [{"name": "a", "at": "relu1"}, {"name": "b", "at": "pool2"}, {"name": "c", "at": "pool3"}]
    return GraphSpec((3, 8, 8), layers, sites, {"seed": seed})
