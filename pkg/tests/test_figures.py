import hashlib

import numpy as np
import pytest
import torch
from PIL import Image

from edgegan.data import palette
from edgegan.figures import (
    COLUMNS,
    PAD,
    colorize_layout,
    emit_figure_grid,
    figure_samples,
    grid_size,
    heat_map,
    to_uint8,
)
from edgegan.generator import Generator


def _sample(seed, n=4, h=8, w=10):
    gen = torch.Generator().manual_seed(seed)
    labels = torch.randint(0, n, (h, w), generator=gen)
    layout = torch.nn.functional.one_hot(labels, n).permute(2, 0, 1).float()
    edge = torch.rand(3, h, w, generator=gen) * 2 - 1
    return (layout, edge, torch.sigmoid(edge),
            torch.rand(3, h, w, generator=gen) * 4 - 2,
            torch.rand(3, h, w, generator=gen) * 2 - 1,
            torch.rand(3, h, w, generator=gen) * 2 - 1)


def test_grid_dimensions(tmp_path):
    path = emit_figure_grid([_sample(0), _sample(1)], tmp_path / "g.png")
    with Image.open(path) as im:
        assert im.size == (6 * 10 + 7 * PAD, 2 * 8 + 3 * PAD)
    assert grid_size(2, len(COLUMNS), 8, 10) == (2 * 8 + 3 * PAD, 6 * 10 + 7 * PAD)


def test_grid_is_byte_identical_on_rerun(tmp_path):
    a = emit_figure_grid([_sample(3)], tmp_path / "a.png").read_bytes()
    b = emit_figure_grid([_sample(3)], tmp_path / "b.png").read_bytes()
    assert hashlib.sha256(a).digest() == hashlib.sha256(b).digest()


def test_layout_tile_uses_fixed_palette(tmp_path):
    sample = _sample(4)
    path = emit_figure_grid([sample], tmp_path / "g.png")
    with Image.open(path) as im:
        arr = np.asarray(im)
    tile = arr[PAD:PAD + 8, PAD:PAD + 10]
    labels = sample[0].argmax(0).numpy()
    assert np.array_equal(tile, palette(4)[labels])
    assert np.array_equal(colorize_layout(labels), colorize_layout(sample[0]))


def test_to_uint8_clips_and_scales():
    img = torch.tensor([-2.0, -1.0, 0.0, 1.0, 2.0]).reshape(1, 1, 5).expand(3, 1, 5)
    assert to_uint8(img)[0, :, 0].tolist() == [0, 0, 128, 255, 255]


def test_heat_map_ramp():
    a = torch.tensor([[0.0, 1.0]])
    hm = heat_map(a)
    assert hm[0, 0].tolist() == [0, 0, 0] and hm[0, 1].tolist() == [255, 255, 255]
    assert heat_map(torch.full((3, 2, 2), 0.5)).shape == (2, 2, 3)


def test_rejects_empty_and_mixed_sizes(tmp_path):
    with pytest.raises(ValueError):
        emit_figure_grid([], tmp_path / "x.png")
    with pytest.raises(ValueError):
        emit_figure_grid([_sample(0), _sample(1, h=6)], tmp_path / "x.png")


def test_figure_samples_from_generator(toy16_batch, tmp_path):
    torch.manual_seed(0)
    gen = Generator(4, 8, num_down=2, spade_hidden=8)
    samples = figure_samples(gen, toy16_batch)
    assert len(samples) == 8 and all(len(s) == 6 for s in samples)
    attention = samples[0][2]
    assert float(attention.min()) > 0 and float(attention.max()) < 1
    path = emit_figure_grid(samples[:2], tmp_path / "fig.png")
    with Image.open(path) as im:
        assert im.size == (6 * 16 + 7 * PAD, 2 * 16 + 3 * PAD)
