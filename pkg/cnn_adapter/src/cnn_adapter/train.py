"""Two-stage fine-tuning: domain adaptation on an intermediate ear set,
then final adaptation on the target set.

The optimizer is momentum SGD (momentum 0.9) with the classifier head
running at base_lr x last_layer_lr_multiplier; both groups decay by
lr_decay_factor every lr_decay_every iterations, counted per stage.
"""

from __future__ import annotations

import logging
import zlib
from pathlib import Path

import torch
from torch import nn

from cnn_adapter.config import FineTuneConfig
from cnn_adapter.data import CropDataset, training_entries
from cnn_adapter.formats import read_manifest
from cnn_adapter.models import backbone_parameters, build_model, head_parameters, \
    resize_head

log = logging.getLogger(__name__)


def _stage_classes(entries) -> list[str]:
    return sorted({e.subject for e in entries})


def train_stage(model: nn.Module, config: FineTuneConfig, entries, classes,
                stage: str) -> list[float]:
    """Run one fine-tuning stage; returns the mean loss of each epoch."""
    dataset = CropDataset(entries, classes, config.crop_size, "train",
                          train_crops=config.train_crops)
    loss_fn = nn.CrossEntropyLoss()
    optimizer = torch.optim.SGD(
        [
            {"params": backbone_parameters(model, config.architecture),
             "lr": config.base_lr},
            {"params": head_parameters(model, config.architecture),
             "lr": config.base_lr * config.last_layer_lr_multiplier},
        ],
        momentum=config.momentum,
    )
    base_lrs = [group["lr"] for group in optimizer.param_groups]

    batches_per_epoch = max(1, (len(dataset) + config.batch_size - 1) // config.batch_size)
    if config.epochs is not None:
        total_epochs = config.epochs
    else:
        total_epochs = max(1, (config.max_iterations + batches_per_epoch - 1)
                           // batches_per_epoch)

    model.train()
    epoch_losses: list[float] = []
    step = 0
    for epoch in range(total_epochs):
        generator = torch.Generator().manual_seed(config.seed + 1_000_003 * epoch
                                                  + zlib.crc32(stage.encode()) % 65_536)
        order = torch.randperm(len(dataset), generator=generator).tolist()
        running, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            if step >= config.max_iterations:
                break
            indices = order[start : start + config.batch_size]
            batch = [dataset[i] for i in indices]
            inputs = torch.stack([x for x, _ in batch])
            targets = torch.tensor([y for _, y in batch], dtype=torch.long)

            decay = config.lr_decay_factor ** (step // config.lr_decay_every)
            for group, base in zip(optimizer.param_groups, base_lrs):
                group["lr"] = base * decay

            optimizer.zero_grad()
            loss = loss_fn(model(inputs), targets)
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * len(indices)
            seen += len(indices)
            step += 1
        if seen == 0:
            break
        epoch_losses.append(running / seen)
        log.info("%s epoch %d/%d: loss %.4f", stage, epoch + 1, total_epochs,
                 epoch_losses[-1])
    return epoch_losses


def finetune_two_stage(config: FineTuneConfig) -> dict:
    """pretrained -> stage 1 (intermediate ear set) -> stage 2 (target set).

    With skip_stage1 the first fine-tuning stage is omitted, giving the
    one-stage baseline. The classifier head is resized to the subject count
    of each stage's dataset. Returns the saved artifact dictionary.
    """
    torch.manual_seed(config.seed)

    stage2_entries = training_entries(read_manifest(config.stage2_manifest))
    stage2_classes = _stage_classes(stage2_entries)
    history: dict[str, list[float]] = {}

    if config.skip_stage1:
        model = build_model(config.architecture, len(stage2_classes), config.weights)
    else:
        stage1_entries = training_entries(read_manifest(config.stage1_manifest))
        stage1_classes = _stage_classes(stage1_entries)
        model = build_model(config.architecture, len(stage1_classes), config.weights)
        history["stage1_loss"] = train_stage(model, config, stage1_entries,
                                             stage1_classes, "stage1")
        resize_head(model, config.architecture, len(stage2_classes))

    history["stage2_loss"] = train_stage(model, config, stage2_entries,
                                         stage2_classes, "stage2")

    artifact = {
        "architecture": config.architecture,
        "classes": stage2_classes,
        "crop_size": config.crop_size,
        "state_dict": model.state_dict(),
        "history": history,
    }
    torch.save(artifact, config.output)
    return artifact


def load_artifact(path: str | Path) -> dict:
    artifact = torch.load(path, map_location="cpu", weights_only=False)
    for key in ("architecture", "classes", "crop_size", "state_dict"):
        if key not in artifact:
            raise ValueError(f"{path}: not a fine-tune artifact (missing {key!r})")
    return artifact


def model_from_artifact(artifact: dict) -> nn.Module:
    model = build_model(artifact["architecture"], len(artifact["classes"]), "none")
    model.load_state_dict(artifact["state_dict"])
    model.eval()
    return model
