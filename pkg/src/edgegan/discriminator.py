"""Multi-modality discriminator and the conditional adversarial terms.

One multi-scale patch discriminator scores both (layout, edge map) and
(layout, image) pairs with the same weights. Patch logits are squashed
with a sigmoid and clamped to (EPS, 1 - EPS) before taking logs. Every
expectation is a mean over patches and batch, then over scales.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import SNConv2d

EPS = 1e-7


class PatchDiscriminator(nn.Module):
    def __init__(self, in_channels, ndf=64, n_layers=3, slope=0.2, power_iterations=1):
        super().__init__()
        kw = dict(padding=2, power_iterations=power_iterations)
        self.slope = slope
        layers = [SNConv2d(in_channels, ndf, 4, stride=2, **kw)]
        nf = ndf
        for i in range(1, n_layers):
            nf_prev, nf = nf, min(nf * 2, 512)
            layers.append(SNConv2d(nf_prev, nf, 4, stride=2, **kw))
        nf_prev, nf = nf, min(nf * 2, 512)
        layers.append(SNConv2d(nf_prev, nf, 4, stride=1, **kw))
        self.layers = nn.ModuleList(layers)
        self.score = SNConv2d(nf, 1, 4, stride=1, **kw)

    def forward(self, x):
        features = []
        for conv in self.layers:
            x = F.leaky_relu(conv(x), self.slope)
            features.append(x)
        return self.score(x), features


@dataclass
class DiscOutput:
    scores: list
    features: list


class MultiscaleDiscriminator(nn.Module):
    """``num_scales`` patch discriminators on successively 2x average-pooled inputs."""

    min_side = 4

    def __init__(self, num_classes, ndf=64, n_layers=3, num_scales=2, slope=0.2,
                 power_iterations=1, size=None):
        super().__init__()
        self.num_classes = num_classes
        self.num_scales = num_scales
        if size is not None:
            self.check_size(size)
        self.nets = nn.ModuleList(
            PatchDiscriminator(num_classes + 3, ndf, n_layers, slope, power_iterations)
            for _ in range(num_scales)
        )

    @classmethod
    def from_config(cls, config):
        return cls(
            num_classes=config["data.num_classes"],
            ndf=config["disc.ndf"],
            n_layers=config["disc.n_layers"],
            num_scales=config["disc.num_scales"],
            slope=config["model.slope"],
            power_iterations=config["nn.power_iterations"],
            size=tuple(config["data.size"]),
        )

    def check_size(self, size):
        coarse = min(size) / 2 ** (self.num_scales - 1)
        if coarse < self.min_side:
            raise ValueError(
                f"input {size[0]}x{size[1]} is below the {self.min_side}px minimum at the "
                f"coarsest of {self.num_scales} scales"
            )

    def forward(self, layout, candidate):
        if candidate.shape[-3] != 3:
            raise ValueError("candidate must have 3 channels")
        x = torch.cat([layout, candidate], dim=-3)
        scores, features = [], []
        for i, net in enumerate(self.nets):
            if i:
                x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
            s, f = net(x)
            scores.append(s)
            features.extend(f)
        return DiscOutput(scores, features)


def discriminate(disc, layout, candidate):
    return disc(layout, candidate)


def _mean_log(scores, fake):
    vals = []
    for s in scores:
        p = torch.sigmoid(s).clamp(EPS, 1 - EPS)
        vals.append(torch.log(1 - p if fake else p).mean())
    return torch.stack(vals).mean()


def expected_log_d(scores):
    """E[log D] over a list of patch-logit maps."""
    return _mean_log(scores, fake=False)


def expected_log_one_minus_d(scores):
    """E[log(1 - D)] over a list of patch-logit maps."""
    return _mean_log(scores, fake=True)


@dataclass
class AdversarialTerms:
    """``d_term`` is maximised by the discriminator, ``g_term`` by the generator."""

    d_term: torch.Tensor
    g_term: torch.Tensor

    def __add__(self, other):
        return AdversarialTerms(self.d_term + other.d_term, self.g_term + other.g_term)


def edge_adversarial_terms(real_scores, fake_scores):
    d_term = expected_log_d(real_scores) + expected_log_one_minus_d(fake_scores)
    return AdversarialTerms(d_term, expected_log_d(fake_scores))


def image_adversarial_terms(real_scores, intermediate_scores, final_scores, lam=2.0):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    d_term = (
        (lam + 1) * expected_log_d(real_scores)
        + expected_log_one_minus_d(intermediate_scores)
        + lam * expected_log_one_minus_d(final_scores)
    )
    g_term = expected_log_d(intermediate_scores) + lam * expected_log_d(final_scores)
    return AdversarialTerms(d_term, g_term)


def edge_adversarial_loss(disc, layout, real_edge, fake_edge):
    return edge_adversarial_terms(disc(layout, real_edge).scores, disc(layout, fake_edge).scores)


def image_adversarial_loss(disc, layout, real, intermediate, final, lam=2.0):
    return image_adversarial_terms(
        disc(layout, real).scores,
        disc(layout, intermediate).scores,
        disc(layout, final).scores,
        lam,
    )


def total_adversarial_loss(edge_terms, image_terms):
    return edge_terms + image_terms
