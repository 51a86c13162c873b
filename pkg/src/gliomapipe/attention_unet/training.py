from __future__ import annotations

import contextlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..data import LabelVolume, mean_normalize, random_crop
from ..errors import ConfigError, DataError, DivergenceError, IoError, LabelError, ShapeError
from .model import NetworkConfig, UNet3d, build_model

CHECKPOINT_FORMAT = "gliomapipe-checkpoint"
CHECKPOINT_VERSION = "1"
METADATA_KEY = "gliomapipe"

# label value -> class index; -1 marks values outside {0, 1, 2, 4}
_LABEL_TO_CLASS = torch.tensor([0, 1, 2, -1, 3])
CLASS_TO_LABEL = np.array([0, 1, 2, 4], dtype=np.uint8)


def labels_to_classes(target) -> torch.Tensor:
    if isinstance(target, LabelVolume):
        target = target.labels
    t = torch.as_tensor(np.asarray(target) if not torch.is_tensor(target) else target).long()
    if t.numel() and (t.min() < 0 or t.max() > 4):
        raise LabelError("label values outside {0,1,2,4}")
    cls = _LABEL_TO_CLASS[t]
    if (cls < 0).any():
        raise LabelError("label value 3 is not a valid class")
    return cls


def seg_loss(logits: torch.Tensor, target, smooth: float = 1e-5) -> torch.Tensor:
    """Cross-entropy plus (1 - mean soft Dice over the foreground classes).

    ``logits`` is (K, D, H, W) or (N, K, D, H, W); ``target`` holds labels in
    {0, 1, 2, 4} with the matching spatial shape.
    """
    cls = labels_to_classes(target).to(logits.device)
    if logits.dim() == 4:
        logits = logits.unsqueeze(0)
        cls = cls.unsqueeze(0)
    if logits.dim() != 5 or cls.shape != (logits.shape[0], *logits.shape[2:]):
        raise ShapeError(f"logits {tuple(logits.shape)} incompatible with target {tuple(cls.shape)}")
    k = logits.shape[1]
    ce = F.cross_entropy(logits, cls)
    probs = torch.softmax(logits, dim=1)
    onehot = F.one_hot(cls, k).movedim(-1, 1).to(probs.dtype)
    dims = (0, 2, 3, 4)
    inter = (probs * onehot).sum(dims)[1:]
    denom = probs.sum(dims)[1:] + onehot.sum(dims)[1:]
    dice = (2 * inter + smooth) / (denom + smooth)
    return ce + (1 - dice.mean())


@dataclass
class TrainConfig:
    learning_rate: float = 0.00015
    weight_decay: float = 0.005
    optimizer: str = "adam"
    max_steps: int = 100
    batch_size: int = 2
    crop_dims: Optional[tuple] = None
    seed: int = 0
    deterministic: bool = True

    def validate(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.optimizer.lower() != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.max_steps < 0 or self.batch_size < 1:
            raise ConfigError("max_steps must be >= 0 and batch_size >= 1")


@dataclass
class Checkpoint:
    config: NetworkConfig
    state: dict
    step: int = 0
    history: list = field(default_factory=list)
    train_config: Optional[dict] = None

    def model(self) -> UNet3d:
        model = build_model(self.config)
        model.load_state_dict(self.state)
        return model


@contextlib.contextmanager
def deterministic_mode(enabled: bool = True):
    if not enabled:
        yield
        return
    threads = torch.get_num_threads()
    was_det = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.set_num_threads(threads)
        torch.use_deterministic_algorithms(was_det)


def snapshot(model: UNet3d, step=0, history=None, train_config=None) -> Checkpoint:
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(model.config, state, step, list(history or []), train_config)


def train(model: UNet3d, dataset: Sequence, tc: TrainConfig, callback=None):
    """Adam over seeded random crops of mean-normalized cases.

    ``dataset`` is a sequence of (MultiModalVolume, LabelVolume) pairs.
    Returns the final checkpoint and the per-step loss history.
    """
    tc.validate()
    if len(dataset) == 0:
        raise DataError("training dataset is empty")
    prepared = [(mean_normalize(v), lab) for v, lab in dataset]
    crop = tuple(tc.crop_dims) if tc.crop_dims else prepared[0][0].shape
    dtype = next(model.parameters()).dtype
    history = []
    with deterministic_mode(tc.deterministic):
        torch.manual_seed(tc.seed)
        rng = np.random.default_rng(tc.seed)
        opt = torch.optim.Adam(model.parameters(), lr=tc.learning_rate, weight_decay=tc.weight_decay)
        model.train()
        for step in range(tc.max_steps):
            idx = rng.choice(len(prepared), size=tc.batch_size, replace=len(prepared) < tc.batch_size)
            xs, ys = [], []
            for i in idx:
                vol, lab = random_crop(*prepared[i], crop, seed=int(rng.integers(2 ** 31)))
                xs.append(vol.intensities)
                ys.append(lab.labels)
            x = torch.from_numpy(np.stack(xs)).to(dtype)
            opt.zero_grad()
            loss = seg_loss(model(x), np.stack(ys))
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(step, value)
            loss.backward()
            opt.step()
            history.append(value)
            if callback is not None:
                callback(step, value)
    model.eval()
    ckpt = snapshot(model, tc.max_steps, history, _train_config_dict(tc))
    return ckpt, history


def _train_config_dict(tc: TrainConfig) -> dict:
    d = asdict(tc)
    d["crop_dims"] = list(tc.crop_dims) if tc.crop_dims else None
    return d


def save_checkpoint(ckpt: Checkpoint, path):
    from safetensors.torch import save_file

    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "history": ckpt.history,
        "train_config": ckpt.train_config,
    }
    # safetensors writes metadata keys in hash order; a single key keeps the file byte-stable
    metadata = {METADATA_KEY: json.dumps(header, sort_keys=True)}
    tensors = {k: v.detach().contiguous() for k, v in ckpt.state.items()}
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_file(tensors, str(path), metadata=metadata)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path, expected_config: Optional[NetworkConfig] = None) -> Checkpoint:
    from safetensors import safe_open

    path = Path(path)
    if not path.is_file():
        raise IoError(f"checkpoint not found: {path}")
    try:
        with safe_open(str(path), framework="pt") as f:
            raw = (f.metadata() or {}).get(METADATA_KEY, "{}")
            state = {k: f.get_tensor(k) for k in f.keys()}
        meta = json.loads(raw)
    except Exception as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format/version "
                          f"{meta.get('format')!r}/{meta.get('version')!r}")
    config = NetworkConfig.from_dict(meta["config"])
    if expected_config is not None:
        ours, theirs = expected_config.to_dict(), config.to_dict()
        ours.pop("seed"), theirs.pop("seed")
        if ours != theirs:
            raise ConfigError(f"{path}: checkpoint config {theirs} does not match requested {ours}")
    return Checkpoint(config, state, int(meta["step"]), list(meta["history"]), meta.get("train_config"))
