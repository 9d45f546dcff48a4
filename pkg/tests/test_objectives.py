import numpy as np
import pytest
import torch

from conftest import tiny_config
from edgegan.config import Config
from edgegan.discriminator import MultiscaleDiscriminator
from edgegan.errors import ConfigError
from edgegan.extractor import PerceptualExtractor
from edgegan.objectives import (
    LossReport,
    LossWeights,
    feature_matching_loss,
    perceptual_loss,
    total_objective,
)

TERMS = ["adv_edge", "adv_image", "fm_edge", "fm_intermediate", "fm_final",
         "perc_edge", "perc_intermediate", "perc_final"]


def _feats(seed, shapes=((2, 4, 5, 5), (2, 8, 3, 3), (2, 1, 2, 2))):
    gen = torch.Generator().manual_seed(seed)
    return [torch.randn(*s, generator=gen, dtype=torch.float64) for s in shapes]


def test_weights_defaults_and_validation():
    w = LossWeights()
    assert (w.lambda_c, w.lambda_f, w.lambda_p, w.lam) == (1.0, 10.0, 10.0, 2.0)
    assert LossWeights.from_config(Config()) == w
    with pytest.raises(ValueError):
        LossWeights(lambda_f=-1)


def test_feature_matching_examples():
    real = _feats(0)
    assert float(feature_matching_loss(real, real)) == 0.0
    assert float(feature_matching_loss(real, [r + 1 for r in real])) == 1.0


def test_feature_matching_scalar_oracle():
    real, fake = _feats(1), _feats(2)
    per_layer = []
    for r, f in zip(real, fake):
        a, b = r.reshape(-1).tolist(), f.reshape(-1).tolist()
        per_layer.append(sum(abs(x - y) for x, y in zip(a, b)) / len(a))
    assert abs(float(feature_matching_loss(real, fake)) - sum(per_layer) / len(per_layer)) < 1e-12


def test_feature_matching_rejects_mismatch():
    real = _feats(0)
    with pytest.raises(ValueError):
        feature_matching_loss(real, real[:2])
    with pytest.raises(ValueError):
        feature_matching_loss(real[:1], [real[1]])


def test_feature_matching_gradient_stays_on_generator_path():
    torch.manual_seed(0)
    d = MultiscaleDiscriminator(3, ndf=4, n_layers=2).double().eval()
    layout = torch.zeros(1, 3, 16, 16, dtype=torch.float64)
    layout[:, 0] = 1
    real = (torch.rand(1, 3, 16, 16, dtype=torch.float64) * 2 - 1).requires_grad_(True)
    fake = (torch.rand(1, 3, 16, 16, dtype=torch.float64) * 2 - 1).requires_grad_(True)
    real_f = d(layout, real).features
    fake_f = [f.detach() for f in d(layout, fake).features]
    loss = feature_matching_loss(real_f, fake_f)
    assert not loss.requires_grad
    # with the fake path live, the gradient on fake is unaffected by what D does to real
    fake_f = d(layout, fake).features
    g1 = torch.autograd.grad(feature_matching_loss(real_f, fake_f), fake)[0]
    assert real.grad is None
    with torch.no_grad():
        for p in d.parameters():
            p.add_(1e-3 * torch.randn_like(p))
    fake_f = d(layout, fake).features
    real_f = [f.detach() for f in real_f]
    g2 = torch.autograd.grad(feature_matching_loss(real_f, fake_f), fake)[0]
    assert torch.isfinite(g2).all() and not torch.equal(g1, g2)


@pytest.fixture(scope="module")
def extractor():
    return PerceptualExtractor(seed=0).double()


def test_perceptual_zero_and_symmetric(extractor):
    gen = torch.Generator().manual_seed(0)
    a = torch.rand(2, 3, 32, 32, generator=gen, dtype=torch.float64) * 2 - 1
    b = torch.rand(2, 3, 32, 32, generator=gen, dtype=torch.float64) * 2 - 1
    assert float(perceptual_loss(a, a, extractor)) == 0.0
    assert abs(float(perceptual_loss(a, b, extractor)) - float(perceptual_loss(b, a, extractor))) < 1e-12
    assert float(perceptual_loss(a, b, extractor)) > 0


def test_perceptual_monotone_under_interpolation(extractor):
    ts = [0.0, 0.25, 0.5, 1.0]
    curve = np.zeros(len(ts))
    for seed in range(20):
        gen = torch.Generator().manual_seed(seed)
        real = torch.rand(1, 3, 32, 32, generator=gen, dtype=torch.float64) * 2 - 1
        fake = torch.rand(1, 3, 32, 32, generator=gen, dtype=torch.float64) * 2 - 1
        with torch.no_grad():
            curve += [float(perceptual_loss(real, torch.lerp(real, fake, t), extractor)) for t in ts]
    curve /= 20
    assert curve[0] == 0.0
    assert np.all(np.diff(curve) > 0), curve


def test_perceptual_accepts_edge_maps(extractor):
    edge = torch.where(torch.rand(1, 3, 16, 16) > 0.9, 1.0, -1.0).double()
    assert float(perceptual_loss(edge, -edge, extractor)) > 0


def test_extractor_is_frozen(extractor):
    assert all(not p.requires_grad for p in extractor.parameters())
    extractor.train()
    assert not extractor.training


def test_extractor_save_load_roundtrip(tmp_path):
    ex = PerceptualExtractor(seed=3)
    path = tmp_path / "ex.safetensors"
    ex.save(path)
    loaded = PerceptualExtractor.load(path)
    x = torch.rand(1, 3, 16, 16) * 2 - 1
    for a, b in zip(ex(x), loaded(x)):
        assert torch.equal(a, b)
    assert path.name in loaded.source


def test_extractor_corrupt_weights_is_configuration_error(tmp_path):
    path = tmp_path / "bad.safetensors"
    path.write_bytes(b"garbage")
    with pytest.raises(ConfigError):
        PerceptualExtractor.load(path)


def test_extractor_missing_weights_is_configuration_error(tmp_path):
    with pytest.raises(ConfigError, match="missing"):
        PerceptualExtractor.load(tmp_path / "missing.safetensors")
    cfg = tiny_config(**{"loss.perceptual.weights_path": str(tmp_path / "missing.safetensors")})
    with pytest.raises(ConfigError):
        PerceptualExtractor.from_config(cfg)


def test_extractor_seed_is_recorded():
    a, b = PerceptualExtractor(seed=5), PerceptualExtractor(seed=5)
    assert all(torch.equal(p, q) for p, q in zip(a.state_dict().values(), b.state_dict().values()))
    assert "5" in a.source


def test_total_of_ones_is_81():
    # the adversarial loss is the sum of its edge and image parts; make that sum 1
    half, one = torch.tensor(0.5, dtype=torch.float64), torch.tensor(1.0, dtype=torch.float64)
    report = total_objective(half, half, *[one] * 6)
    assert float(report.adv) == 1.0
    assert float(report.total) == 81.0


def test_total_without_fm_and_perceptual_is_adversarial():
    vals = [torch.tensor(v, dtype=torch.float64) for v in (0.7, 1.9, 3, 4, 5, 6, 7, 8)]
    report = total_objective(*vals, weights=LossWeights(lambda_f=0.0, lambda_p=0.0))
    assert float(report.total) == float(report.adv) == 0.7 + 1.9


@pytest.mark.parametrize("seed", range(10))
def test_total_matches_structural_identity(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0, 5, 8)
    w = LossWeights(*rng.uniform(0, 20, 4))
    report = total_objective(*[torch.tensor(v, dtype=torch.float64) for v in vals], weights=w)
    t = dict(zip(TERMS, vals))
    want = (w.lambda_c * (t["adv_edge"] + t["adv_image"])
            + w.lambda_f * (t["fm_edge"] + t["fm_intermediate"] + w.lam * t["fm_final"])
            + w.lambda_p * (t["perc_edge"] + t["perc_intermediate"] + w.lam * t["perc_final"]))
    assert abs(float(report.total) - want) < 1e-12
    floats = report.as_floats()
    assert set(floats) == set(TERMS) | {"total"}
    assert isinstance(report, LossReport)
