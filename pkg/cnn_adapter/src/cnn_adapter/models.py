"""Model construction: pretrained backbones with resizable classifier heads."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
import torchvision

from cnn_adapter.config import ARCHITECTURES


class WeightsError(Exception):
    """Requested initial weights are unavailable."""


def _torchvision_weights(architecture: str):
    table = {
        "alexnet": torchvision.models.AlexNet_Weights.IMAGENET1K_V1,
        "vgg16": torchvision.models.VGG16_Weights.IMAGENET1K_V1,
        "googlenet": torchvision.models.GoogLeNet_Weights.IMAGENET1K_V1,
    }
    return table[architecture]


def _kaiming_reinit(model: nn.Module) -> None:
    # torchvision's stock initialization leaves these backbones with
    # near-zero activations when trained from scratch; ReLU-gain init keeps
    # the random-weights path trainable.
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
            if module.bias is not None:
                nn.init.zeros_(module.bias)


def build_model(architecture: str, num_classes: int, weights: str = "none") -> nn.Module:
    """Construct the backbone and size its head to num_classes.

    weights: "imagenet" loads the torchvision pretrained checkpoint (fails
    with WeightsError when it cannot be fetched), "none" draws a fresh
    ReLU-gain initialization, anything else is treated as a state-dict path.
    """
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {architecture!r}")

    pretrained = None
    if weights == "imagenet":
        try:
            pretrained = _torchvision_weights(architecture)
        except Exception as exc:  # pragma: no cover - enum lookup cannot fail today
            raise WeightsError(f"no pretrained weights known for {architecture}") from exc

    try:
        if architecture == "alexnet":
            model = torchvision.models.alexnet(weights=pretrained)
        elif architecture == "vgg16":
            model = torchvision.models.vgg16(weights=pretrained)
        else:
            if pretrained is None:
                model = torchvision.models.googlenet(weights=None, aux_logits=False,
                                                     init_weights=True)
            else:
                model = torchvision.models.googlenet(weights=pretrained)
                model.aux_logits = False
                model.aux1 = model.aux2 = None
    except Exception as exc:
        raise WeightsError(
            f"pretrained weights for {architecture} unavailable "
            f"(offline environment?): {exc}"
        ) from exc

    if weights == "none":
        _kaiming_reinit(model)
    elif weights != "imagenet":
        state_path = Path(weights)
        if not state_path.is_file():
            raise WeightsError(f"weights file not found: {state_path}")
        model.load_state_dict(torch.load(state_path, map_location="cpu"))

    resize_head(model, architecture, num_classes)
    return model


def resize_head(model: nn.Module, architecture: str, num_classes: int) -> None:
    if architecture in ("alexnet", "vgg16"):
        model.classifier[6] = nn.Linear(model.classifier[6].in_features, num_classes)
    else:
        model.fc = nn.Linear(model.fc.in_features, num_classes)


def head_parameters(model: nn.Module, architecture: str):
    head = model.classifier[6] if architecture in ("alexnet", "vgg16") else model.fc
    return list(head.parameters())


def backbone_parameters(model: nn.Module, architecture: str):
    head = set(id(p) for p in head_parameters(model, architecture))
    return [p for p in model.parameters() if id(p) not in head]
