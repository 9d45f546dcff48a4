"""Feature matching, perceptual loss and the weighted total objective."""

from dataclasses import asdict, dataclass

import torch


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_f: float = 10.0
    lambda_p: float = 10.0
    lam: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_config(cls, config):
        return cls(config["loss.lambda_c"], config["loss.lambda_f"],
                   config["loss.lambda_p"], config["loss.lambda"])


def feature_matching_loss(real_feats, fake_feats):
    """Mean absolute difference per layer, averaged over layers. Real features are detached."""
    if len(real_feats) != len(fake_feats):
        raise ValueError(f"{len(real_feats)} real vs {len(fake_feats)} fake feature maps")
    if not real_feats:
        raise ValueError("no features to match")
    per_layer = []
    for r, f in zip(real_feats, fake_feats):
        if r.shape != f.shape:
            raise ValueError(f"feature shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
        per_layer.append((f - r.detach()).abs().mean())
    return torch.stack(per_layer).mean()


def perceptual_loss(real, fake, extractor):
    """Tap-weighted mean of per-tap L1 distances between extractor features."""
    with torch.no_grad():
        real_taps = extractor(real)
    fake_taps = extractor(fake)
    weights = extractor.tap_weights
    total = sum(w * (f - r).abs().mean() for w, r, f in zip(weights, real_taps, fake_taps))
    return total / sum(weights)


_TERMS = ("adv_edge", "adv_image", "fm_edge", "fm_intermediate", "fm_final",
          "perc_edge", "perc_intermediate", "perc_final")


@dataclass
class LossReport:
    """Named generator loss terms and their weighted total.

    ``adv_*`` are the generator's adversarial losses (negated log terms, to be
    minimised). ``*_intermediate`` and ``*_final`` refer to the refined
    intermediate image and the final image respectively.
    """

    adv_edge: torch.Tensor
    adv_image: torch.Tensor
    fm_edge: torch.Tensor
    fm_intermediate: torch.Tensor
    fm_final: torch.Tensor
    perc_edge: torch.Tensor
    perc_intermediate: torch.Tensor
    perc_final: torch.Tensor
    total: torch.Tensor

    @property
    def adv(self):
        return self.adv_edge + self.adv_image

    @property
    def fm(self):
        return self.fm_edge + self.fm_intermediate + self.fm_final

    @property
    def perc(self):
        return self.perc_edge + self.perc_intermediate + self.perc_final

    def as_floats(self):
        return {k: float(torch.as_tensor(getattr(self, k)).detach()) for k in _TERMS + ("total",)}


def weighted_total(terms, weights):
    adv = terms["adv_edge"] + terms["adv_image"]
    fm = terms["fm_edge"] + terms["fm_intermediate"] + weights.lam * terms["fm_final"]
    perc = terms["perc_edge"] + terms["perc_intermediate"] + weights.lam * terms["perc_final"]
    return weights.lambda_c * adv + weights.lambda_f * fm + weights.lambda_p * perc


def total_objective(adv_edge, adv_image, fm_edge, fm_intermediate, fm_final,
                    perc_edge, perc_intermediate, perc_final, weights=LossWeights()):
    terms = dict(
        adv_edge=adv_edge, adv_image=adv_image,
        fm_edge=fm_edge, fm_intermediate=fm_intermediate, fm_final=fm_final,
        perc_edge=perc_edge, perc_intermediate=perc_intermediate, perc_final=perc_final,
    )
    return LossReport(**terms, total=weighted_total(terms, weights))
