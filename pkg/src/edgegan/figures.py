"""Tiled qualitative figures: layout, edge map, attention, images, ground truth."""

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import palette

COLUMNS = ("layout", "edge", "attention", "intermediate", "final", "ground_truth")
PAD = 2


def colorize_layout(layout):
    """(N, H, W) one-hot or (H, W) index map -> uint8 (H, W, 3) using the fixed class palette."""
    t = torch.as_tensor(layout)
    if t.dim() == 3:
        n = t.shape[0]
        idx = t.argmax(dim=0).cpu().numpy()
    else:
        idx = t.cpu().numpy().astype(np.int64)
        n = int(idx.max()) + 1
    return palette(max(n, 1))[idx]


def to_uint8(image):
    """(3, H, W) tensor in [-1, 1] -> uint8 (H, W, 3); values outside the range are clipped."""
    arr = torch.as_tensor(image).detach().cpu().double().numpy().transpose(1, 2, 0)
    return np.round((arr.clip(-1, 1) + 1) * 127.5).astype(np.uint8)


def heat_map(attention):
    """Channel-mean of an attention tensor in [0, 1] drawn with a black-red-yellow-white ramp."""
    a = torch.as_tensor(attention).detach().cpu().double()
    if a.dim() == 3:
        a = a.mean(dim=0)
    x = a.numpy().clip(0, 1)
    rgb = np.stack([np.clip(3 * x, 0, 1), np.clip(3 * x - 1, 0, 1), np.clip(3 * x - 2, 0, 1)], -1)
    return np.round(rgb * 255).astype(np.uint8)


def _tiles(sample):
    layout, edge, attention, intermediate, final, truth = sample
    return [
        colorize_layout(layout),
        to_uint8(edge),
        heat_map(attention),
        to_uint8(intermediate),
        to_uint8(final),
        to_uint8(truth),
    ]


def grid_size(rows, cols, height, width, pad=PAD):
    return rows * height + (rows + 1) * pad, cols * width + (cols + 1) * pad


def emit_figure_grid(samples, path, pad=PAD):
    """Write one row per sample with the six :data:`COLUMNS` and return the path."""
    if not samples:
        raise ValueError("no samples to draw")
    rows = [_tiles(s) for s in samples]
    h, w = rows[0][0].shape[:2]
    height, width = grid_size(len(rows), len(COLUMNS), h, w, pad)
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    for r, tiles in enumerate(rows):
        for c, tile in enumerate(tiles):
            if tile.shape[:2] != (h, w):
                raise ValueError("all tiles must share one size")
            y, x = pad + r * (h + pad), pad + c * (w + pad)
            canvas[y:y + h, x:x + w] = tile
    path = Path(path)
    Image.fromarray(canvas).save(path, format="PNG")
    return path


@torch.no_grad()
def figure_samples(generator, batch):
    """Build :func:`emit_figure_grid` rows from a generator and a data batch."""
    generator.eval()
    dtype = next(generator.parameters()).dtype
    out = generator(batch.layout.to(dtype))
    edge = out.edge if out.edge is not None else torch.zeros_like(out.intermediate_image)
    samples = []
    for i in range(len(batch)):
        samples.append((
            batch.layout[i], edge[i], torch.sigmoid(edge[i]),
            out.intermediate_image[i], out.final_image[i], batch.image[i],
        ))
    return samples
