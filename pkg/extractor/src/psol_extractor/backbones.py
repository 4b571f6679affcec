"""Backbone registry: spatial feature maps, pooled vectors, logits, and
(where the architecture allows) the final classifier weight matrix.

The spatial stage ends at the last convolutional activation *before* any
global pooling; for stride-16 nets a 448 input yields a 28x28 grid. The
grid is always measured from the actual tensors, never assumed.

Classifier weights in the C x d sense only exist for nets ending in
global average pooling plus one linear layer (resnet50, densenet161);
vgg16's MLP classifier head has no such matrix, so CAM-style runs need a
GAP-headed backbone.

The "toy" backbone is a tiny seeded CNN (stride 4, depth 16, 5 classes,
no downloads) for tests and offline smoke runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch import nn

from psol.errors import ConfigError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class Backbone:
    name: str
    spatial: nn.Module  # (N,3,S,S) -> (N,C,H,W)
    head: Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]]
    # head maps spatial features (at the classification resolution) to
    # (pooled (N,d), logits (N,C))
    classifier_weights: np.ndarray | None


def _gap(features: torch.Tensor) -> torch.Tensor:
    return features.mean(dim=(2, 3))


def _build_vgg16(pretrained: bool) -> Backbone:
    from torchvision.models import VGG16_Weights, vgg16

    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1 if pretrained else None)
    model.eval()
    spatial = model.features[:-1]  # stop before the final max-pool: stride 16

    def head(feats: torch.Tensor):
        pooled = _gap(feats)
        full = model.features[-1](feats)
        logits = model.classifier(torch.flatten(model.avgpool(full), 1))
        return pooled, logits

    return Backbone("vgg16", spatial, head, classifier_weights=None)


def _build_resnet50(pretrained: bool) -> Backbone:
    from torchvision.models import ResNet50_Weights, resnet50

    model = resnet50(weights=ResNet50_Weights.IMAGENET1K_V1 if pretrained else None)
    model.eval()
    spatial = nn.Sequential(
        model.conv1, model.bn1, model.relu, model.maxpool,
        model.layer1, model.layer2, model.layer3, model.layer4,
    )

    def head(feats: torch.Tensor):
        pooled = _gap(feats)
        return pooled, model.fc(pooled)

    weights = model.fc.weight.detach().cpu().numpy().astype(np.float32)
    return Backbone("resnet50", spatial, head, classifier_weights=weights)


def _build_densenet161(pretrained: bool) -> Backbone:
    from torchvision.models import DenseNet161_Weights, densenet161

    model = densenet161(weights=DenseNet161_Weights.IMAGENET1K_V1 if pretrained else None)
    model.eval()
    spatial = nn.Sequential(model.features, nn.ReLU(inplace=False))

    def head(feats: torch.Tensor):
        pooled = _gap(feats)
        return pooled, model.classifier(pooled)

    weights = model.classifier.weight.detach().cpu().numpy().astype(np.float32)
    return Backbone("densenet161", spatial, head, classifier_weights=weights)


TOY_CLASSES = 5
TOY_DEPTH = 16


def _build_toy(pretrained: bool) -> Backbone:
    del pretrained  # always the same seeded weights
    gen = torch.Generator().manual_seed(20240)
    spatial = nn.Sequential(
        nn.Conv2d(3, 8, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(8, TOY_DEPTH, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
    )
    fc = nn.Linear(TOY_DEPTH, TOY_CLASSES)
    with torch.no_grad():
        for module in list(spatial) + [fc]:
            if hasattr(module, "weight"):
                module.weight.copy_(
                    torch.randn(module.weight.shape, generator=gen) * 0.2
                )
                module.bias.copy_(torch.randn(module.bias.shape, generator=gen) * 0.1)
    spatial.eval()
    fc.eval()

    def head(feats: torch.Tensor):
        pooled = _gap(feats)
        return pooled, fc(pooled)

    weights = fc.weight.detach().cpu().numpy().astype(np.float32)
    return Backbone("toy", spatial, head, classifier_weights=weights)


_REGISTRY = {
    "vgg16": _build_vgg16,
    "resnet50": _build_resnet50,
    "densenet161": _build_densenet161,
    "toy": _build_toy,
}


def build_backbone(name: str, pretrained: bool = True) -> Backbone:
    if name not in _REGISTRY:
        raise ConfigError(
            f"unknown backbone {name!r}; supported: {sorted(_REGISTRY)}"
        )
    try:
        return _REGISTRY[name](pretrained)
    except Exception as exc:  # weight download failures, offline mirrors
        raise ConfigError(
            f"could not build backbone {name!r} "
            f"(pretrained={pretrained}): {exc}"
        ) from exc
