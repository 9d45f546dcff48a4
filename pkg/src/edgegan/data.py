"""Label encoding, Canny edge targets, the procedural toy dataset and batch loading."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from skimage.color import rgb2gray
from skimage.feature import canny

from .errors import DataError

# Class colours for the toy scenes and figure label maps. Luminances of the
# first eight entries are spaced 0.12 apart so every class boundary is a
# Canny-visible step at the default thresholds.
_BASE_PALETTE = [
    (15, 15, 22),
    (157, 17, 17),
    (39, 79, 197),
    (21, 145, 41),
    (203, 115, 238),
    (221, 176, 22),
    (94, 237, 237),
    (239, 239, 227),
]

MANIFEST_NAME = "manifest.tsv"


def palette(num_classes):
    """uint8 array (num_classes, 3); class k gets the same colour for every num_classes."""
    colors = list(_BASE_PALETTE[:num_classes])
    for k in range(len(colors), num_classes):
        colors.append(tuple(int(c) for c in np.random.default_rng(1000 + k).integers(0, 256, 3)))
    return np.asarray(colors, dtype=np.uint8)


def encode_onehot(label_indices, num_classes, dtype=torch.float32):
    """One-hot encode an integer map of shape (H, W) or (B, H, W) to (N, H, W) or (B, N, H, W)."""
    idx = torch.as_tensor(np.array(label_indices, dtype=np.int64))
    bad = (idx < 0) | (idx >= num_classes)
    if bool(bad.any()):
        coord = tuple(int(c) for c in torch.nonzero(bad)[0])
        raise DataError(
            f"label index {int(idx[coord])} at pixel {coord} outside [0, {num_classes})"
        )
    onehot = torch.nn.functional.one_hot(idx, num_classes).to(dtype)
    return onehot.movedim(-1, -3).contiguous()


def decode_onehot(layout):
    return layout.argmax(dim=-3)


def check_onehot(layout):
    """Raise DataError unless every pixel of ``layout`` (..., N, H, W) is exactly one-hot."""
    if layout.shape[-3] < 2:
        raise DataError("a semantic layout needs at least 2 classes")
    binary = (layout == 0) | (layout == 1)
    if not bool(binary.all()):
        raise DataError("layout values must be 0 or 1")
    if not bool((layout.sum(dim=-3) == 1).all()):
        raise DataError("layout channel sum must equal 1 at every pixel")


def extract_canny_edges(image, low_threshold=0.1, high_threshold=0.2, gaussian_sigma=1.0):
    """Canny edges of an RGB image in [-1, 1] as a 3-channel {-1, +1} tensor.

    Thresholds apply to the gradient magnitude of the [0, 1] luminance image.
    Accepts (3, H, W) or (B, 3, H, W) tensors or arrays.
    """
    if not low_threshold < high_threshold:
        raise ValueError("low_threshold must be below high_threshold")
    if gaussian_sigma <= 0:
        raise ValueError("gaussian_sigma must be positive")
    img = torch.as_tensor(image)
    if img.dim() == 4:
        return torch.stack(
            [extract_canny_edges(im, low_threshold, high_threshold, gaussian_sigma) for im in img]
        )
    if img.dim() != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a 3xHxW image, got shape {tuple(img.shape)}")
    rgb = ((img.detach().cpu().double().numpy().transpose(1, 2, 0) + 1.0) / 2.0).clip(0.0, 1.0)
    gray = rgb2gray(rgb)
    edges = canny(
        gray, sigma=gaussian_sigma, low_threshold=low_threshold, high_threshold=high_threshold
    )
    out = torch.from_numpy(np.where(edges, 1.0, -1.0)).to(img.dtype if img.is_floating_point() else torch.float32)
    return out.unsqueeze(0).expand(3, -1, -1).contiguous()


def default_class_priors(num_classes):
    """Background (class 0) gets 0.3 of the mass, the rest is shared evenly."""
    rest = (1.0 - 0.3) / (num_classes - 1)
    return np.array([0.3] + [rest] * (num_classes - 1))


def render_toy_scene(rng, num_classes, size, class_priors=None):
    """Paint a random scene and return (label index map, uint8 RGB image).

    A full-canvas base layer is followed by 3-6 rectangles, ellipses or stripe
    patches. Every layer's class is drawn i.i.d. from ``class_priors`` and the
    geometry is drawn independently of the class, so the expected fraction of
    pixels carrying class k is exactly ``class_priors[k]``.
    """
    h, w = size
    priors = default_class_priors(num_classes) if class_priors is None else np.asarray(class_priors, float)
    priors = priors / priors.sum()
    labels = np.full((h, w), rng.choice(num_classes, p=priors), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(3, 7)):
        kind = rng.integers(3)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.1, 0.35) * h, rng.uniform(0.1, 0.35) * w
        if kind == 0:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        elif kind == 1:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            period = rng.integers(4, 9)
            coord = yy if rng.integers(2) else xx
            box = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
            mask = box & ((coord // (period // 2)) % 2 == 0)
        labels[mask] = rng.choice(num_classes, p=priors)
    image = palette(num_classes)[labels]
    return labels, image


@dataclass
class DatasetManifest:
    entries: list
    num_classes: int
    target_size: tuple
    root: Path = field(default=None)

    def __len__(self):
        return len(self.entries)

    def save(self, path):
        path = Path(path)
        base = path.parent
        lines = []
        for img, lab in self.entries:
            lines.append(f"{_relative(img, base)}\t{_relative(lab, base)}\n")
        path.write_text("".join(lines))
        return path

    @classmethod
    def load(cls, path, num_classes, target_size):
        """Read a ``image_path<TAB>label_path`` manifest and validate every entry.

        Relative paths resolve against the manifest's directory.
        """
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected image_path<TAB>label_path")
            img, lab = (Path(p) if Path(p).is_absolute() else path.parent / p for p in parts)
            for p in (img, lab):
                if not p.is_file():
                    raise DataError(f"{path}:{lineno}: missing file {p}")
            top = int(_read_label(lab).max())
            if top >= num_classes:
                raise DataError(f"{lab}: label index {top} but num_classes={num_classes}")
            entries.append((img, lab))
        return cls(entries, num_classes, tuple(target_size), path.parent)


def _relative(p, base):
    p = Path(p)
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


def make_toy_dataset(root, seed, count, num_classes, size, class_priors=None):
    """Render ``count`` toy (image, label) pairs under ``root`` and write its manifest."""
    if count <= 0:
        raise ValueError("count must be positive")
    if num_classes < 3:
        raise ValueError("the toy dataset needs background plus at least two shape classes")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(count):
        labels, image = render_toy_scene(rng, num_classes, size, class_priors)
        img_path = root / f"{i:05d}_image.png"
        lab_path = root / f"{i:05d}_label.png"
        Image.fromarray(image, mode="RGB").save(img_path)
        Image.fromarray(labels.astype(np.uint8), mode="L").save(lab_path)
        entries.append((img_path, lab_path))
    manifest = DatasetManifest(entries, num_classes, tuple(size), root)
    manifest.save(root / MANIFEST_NAME)
    return manifest


@dataclass
class Batch:
    layout: torch.Tensor
    image: torch.Tensor
    edge: torch.Tensor
    indices: list

    def to(self, dtype):
        return Batch(self.layout.to(dtype), self.image.to(dtype), self.edge.to(dtype), self.indices)

    def __len__(self):
        return self.layout.shape[0]


def _read_label(path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataError(f"label file {path} must be single-channel, got shape {arr.shape}")
    return arr


def _read_image(path, size):
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (size[1], size[0]):
                im = im.resize((size[1], size[0]), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image file {path}: {exc}") from exc
    return arr / 127.5 - 1.0


def read_label_map(path, size=None):
    labels = _read_label(path)
    if size is not None and labels.shape != tuple(size):
        labels = np.asarray(
            Image.fromarray(labels).resize((size[1], size[0]), Image.NEAREST)
        )
    return labels.astype(np.int64)


def load_batch(manifest, indices, canny=(1.0, 0.1, 0.2), dtype=torch.float32):
    """Load ``indices`` from ``manifest`` as a Batch at the manifest's target size.

    ``canny`` is (sigma, low, high). Edges come from the resized image.
    """
    sigma, low, high = canny
    layouts, images, edges = [], [], []
    for i in indices:
        if not 0 <= i < len(manifest):
            raise IndexError(f"sample index {i} outside manifest of length {len(manifest)}")
        img_path, lab_path = manifest.entries[i]
        labels = read_label_map(lab_path, manifest.target_size)
        layouts.append(encode_onehot(labels, manifest.num_classes, torch.float64))
        img = torch.from_numpy(_read_image(img_path, manifest.target_size).transpose(2, 0, 1).copy())
        images.append(img)
        edges.append(extract_canny_edges(img, low, high, sigma))
    return Batch(
        torch.stack(layouts).to(dtype),
        torch.stack(images).to(dtype),
        torch.stack(edges).to(dtype),
        list(indices),
    )
