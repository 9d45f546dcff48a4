"""Attention guided edge transfer.

Both operations gate a tensor with the sigmoid of its edge counterpart and
add the gated term back onto the original, ``sigmoid(edge) * x + x``. They
hold no parameters.
"""

import torch


def _gate(edge, x):
    if edge.shape != x.shape:
        raise ValueError(f"shape mismatch: edge {tuple(edge.shape)} vs operand {tuple(x.shape)}")
    return torch.sigmoid(edge) * x + x


def attention_map(edge):
    return torch.sigmoid(edge)


def transfer_features(edge_feature, image_feature):
    """Refine an image-branch feature map with the same-layer edge feature map."""
    return _gate(edge_feature, image_feature)


def transfer_image(edge_map, intermediate_image):
    """Refine the image-branch output with the generated edge map.

    The result lies in [-2, 2] for inputs in [-1, 1] and is not clamped.
    """
    return _gate(edge_map, intermediate_image)
