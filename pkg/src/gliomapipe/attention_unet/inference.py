from __future__ import annotations

import itertools
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from ..data import LabelVolume, MultiModalVolume, mean_normalize
from ..errors import ShapeError
from .model import UNet3d
from .training import CLASS_TO_LABEL


def window_starts(n: int, window: int) -> list:
    """Half-overlapping window origins covering [0, n); the last window is flush with the end."""
    if n <= window:
        return [0]
    stride = max(window // 2, 1)
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def _forward_padded(model: UNet3d, x: torch.Tensor) -> torch.Tensor:
    mult = 2 ** (model.config.depth - 1)
    shape = x.shape[-3:]
    pads = [(-s) % mult for s in shape]
    if any(pads):
        x = F.pad(x, [0, pads[2], 0, pads[1], 0, pads[0]])
    out = model(x)
    return out[..., : shape[0], : shape[1], : shape[2]]


@torch.no_grad()
def predict_logits(model: UNet3d, volume: MultiModalVolume, window: Optional[tuple] = None,
                   normalize: bool = True) -> np.ndarray:
    if any(s < model.config.min_footprint for s in volume.shape):
        raise ShapeError(f"volume {volume.shape} smaller than the minimum footprint "
                         f"{model.config.min_footprint} per axis")
    if normalize:
        volume = mean_normalize(volume)
    model.eval()
    dtype = next(model.parameters()).dtype
    image = torch.from_numpy(np.ascontiguousarray(volume.intensities)).to(dtype)[None]
    shape = volume.shape
    if window is None or all(s <= w for s, w in zip(shape, window)):
        return _forward_padded(model, image)[0].numpy()

    window = tuple(min(int(w), s) for w, s in zip(window, shape))
    if any(w < model.config.min_footprint for w in window):
        raise ShapeError(f"window {window} smaller than the minimum footprint")
    k = model.config.num_classes
    acc = np.zeros((k, *shape), dtype=np.float64)
    counts = np.zeros(shape, dtype=np.float64)
    for origin in itertools.product(*(window_starts(s, w) for s, w in zip(shape, window))):
        sl = tuple(slice(o, o + w) for o, w in zip(origin, window))
        logits = _forward_padded(model, image[(slice(None), slice(None), *sl)])[0]
        acc[(slice(None), *sl)] += logits.double().numpy()
        counts[sl] += 1
    return acc / counts


def predict(model: UNet3d, volume: MultiModalVolume, window: Optional[tuple] = None,
            normalize: bool = True) -> LabelVolume:
    """Per-voxel argmax over class logits, mapped back to labels {0, 1, 2, 4}.

    Volumes larger than ``window`` are tiled with half-overlapping windows and
    the logits averaged where windows overlap.
    """
    logits = predict_logits(model, volume, window, normalize)
    return LabelVolume(CLASS_TO_LABEL[np.argmax(logits, axis=0)], volume.case_id)
