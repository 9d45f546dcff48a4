"""Semantic preserving module.

Fuses layout, edge map, intermediate image and deep feature, projects the
fusion to one channel per class, re-weights those channels by pooled
sigmoid scale factors and renders the final image.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import SNConv2d, avg_pool_global


def build_concat(layout, edge, intermediate, deep):
    """Channel-concatenate in the fixed order [layout, edge, intermediate image, deep feature]."""
    parts = (layout, edge, intermediate, deep)
    sizes = {tuple(p.shape[-2:]) for p in parts}
    if len(sizes) != 1:
        raise ValueError(f"spatial size mismatch in concatenation: {sorted(sizes)}")
    if edge.shape[-3] != 3 or intermediate.shape[-3] != 3:
        raise ValueError("edge map and intermediate image must have 3 channels")
    return torch.cat(parts, dim=-3)


def split_concat(concat, num_classes, channels):
    """Inverse of :func:`build_concat`; returns (layout, edge, intermediate, deep)."""
    sizes = [num_classes, 3, 3, channels]
    if concat.shape[-3] != sum(sizes):
        raise ValueError(f"expected {sum(sizes)} channels, got {concat.shape[-3]}")
    return torch.split(concat, sizes, dim=-3)


def scale_factors(class_feature):
    return torch.sigmoid(avg_pool_global(class_feature))


def reweight(class_feature, gamma):
    if gamma.shape[-1] != class_feature.shape[-3]:
        raise ValueError(
            f"{gamma.shape[-1]} scale factors for {class_feature.shape[-3]} class channels"
        )
    return class_feature * gamma[..., None, None] + class_feature


class SemanticPreserving(nn.Module):
    def __init__(self, num_classes, channels, slope=0.2, power_iterations=1):
        super().__init__()
        self.num_classes = num_classes
        self.channels = channels
        width = channels + num_classes + 6
        self.slope = slope
        self.project = SNConv2d(width, num_classes, 3, power_iterations=power_iterations)
        self.enhance = SNConv2d(num_classes, width, 3, power_iterations=power_iterations)
        self.render = SNConv2d(width, 3, 3, power_iterations=power_iterations)

    def class_project(self, concat):
        return self.project(concat)

    def enhance_and_render(self, fc_prime, reference=None):
        enhanced = self.enhance(fc_prime)
        if reference is not None and enhanced.shape != reference.shape:
            raise ValueError(f"enhanced feature {tuple(enhanced.shape)} != input {tuple(reference.shape)}")
        image = torch.tanh(self.render(F.leaky_relu(enhanced, self.slope)))
        return enhanced, image

    def forward(self, layout, edge, intermediate, deep):
        """Return (final image, scale factors, enhanced feature)."""
        concat = build_concat(layout, edge, intermediate, deep)
        fc = self.class_project(concat)
        gamma = scale_factors(fc)
        enhanced, image = self.enhance_and_render(reweight(fc, gamma), concat)
        return image, gamma, enhanced
