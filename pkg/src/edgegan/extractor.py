"""Fixed feature extractor shared by the perceptual loss and FID.

The default network is a small convolutional stack with frozen random
weights drawn from a recorded seed, so tests and desk-scale runs need no
downloaded assets. Pretrained weights for the same architecture can be
loaded from a file instead. Distances computed with different extractors
are not comparable.
"""

from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_tensors, save_tensors
from .errors import CheckpointError, ConfigError

DEFAULT_WIDTHS = (32, 64, 128, 128)
DEFAULT_TAP_WEIGHTS = (1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0)


class PerceptualExtractor(nn.Module):
    def __init__(self, widths=DEFAULT_WIDTHS, tap_weights=DEFAULT_TAP_WEIGHTS, seed=0):
        super().__init__()
        if len(widths) != len(tap_weights):
            raise ValueError("one tap weight per stage is required")
        self.widths = tuple(widths)
        self.tap_weights = tuple(float(w) for w in tap_weights)
        self.source = f"random(seed={seed})"
        gen = torch.Generator().manual_seed(seed)
        convs = []
        fin = 3
        for fout in self.widths:
            conv = nn.Conv2d(fin, fout, 3, padding=1)
            with torch.no_grad():
                std = (2.0 / (fin * 9)) ** 0.5
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.zero_()
            convs.append(conv)
            fin = fout
        self.convs = nn.ModuleList(convs)
        self.requires_grad_(False)
        self.eval()

    @classmethod
    def from_config(cls, config):
        path = config["loss.perceptual.weights_path"]
        if path is not None:
            return cls.load(path)
        return cls(seed=config["loss.perceptual.random_seed"])

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"perceptual extractor weights not found: {path}")
        try:
            tensors, meta = load_tensors(path)
            net = cls(meta["widths"], meta["tap_weights"])
            net.load_state_dict(tensors)
        except (CheckpointError, KeyError, RuntimeError, ValueError) as exc:
            raise ConfigError(f"cannot load perceptual extractor from {path}: {exc}") from exc
        net.source = f"file({path.name})"
        net.requires_grad_(False)
        return net.eval()

    def save(self, path):
        meta = {"widths": list(self.widths), "tap_weights": list(self.tap_weights)}
        return save_tensors(path, self.state_dict(), meta)

    def train(self, mode=True):
        # Always frozen.
        return super().train(False)

    @property
    def embedding_dim(self):
        return sum(self.widths)

    def forward(self, x):
        taps = []
        for i, conv in enumerate(self.convs):
            if i:
                x = F.avg_pool2d(x, 2)
            x = F.relu(conv(x))
            taps.append(x)
        return taps

    def embed(self, x):
        """Global-average-pooled taps, concatenated: (B, 3, H, W) -> (B, embedding_dim)."""
        return torch.cat([t.mean(dim=(-2, -1)) for t in self(x)], dim=1)
