"""Alternating adversarial training, learning-rate schedule, checkpoints and ablations."""

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint
from .config import Config
from .data import DatasetManifest, load_batch
from .discriminator import (
    MultiscaleDiscriminator,
    edge_adversarial_terms,
    image_adversarial_terms,
)
from .errors import CheckpointError, NonFiniteLossError
from .extractor import PerceptualExtractor
from .generator import Generator
from .metrics import count_parameters, image_fid
from .objectives import LossWeights, feature_matching_loss, perceptual_loss, total_objective

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "epoch", "lr", "adv", "fm", "perc", "total")
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def lr_at_epoch(base_lr, epoch, epochs=200, decay_start_epoch=100):
    """Constant until ``decay_start_epoch``, then linear down to 0 at ``epochs``."""
    if epoch < decay_start_epoch:
        return base_lr
    remaining = max(epochs - epoch, 0)
    return base_lr * remaining / (epochs - decay_start_epoch)


def parameter_checksum(module):
    """SHA-256 over the raw bytes of every parameter and buffer."""
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().reshape(-1).view(torch.uint8).numpy().tobytes())
    return h.hexdigest()


@dataclass
class TrainState:
    epoch: int = 0
    iteration: int = 0
    seed: int = 0
    last_report: dict = field(default_factory=dict)
    last_d_loss: float = None


def _split(tensor, n):
    return list(torch.chunk(tensor, n, dim=0))


class Trainer:
    """Owns the generator, discriminator, optimisers and the training data.

    ``data`` is a preloaded :class:`~edgegan.data.Batch` holding the whole
    training set; batches are drawn from a per-epoch permutation seeded by
    ``(train.seed, epoch)``, so a run is a pure function of config and data.
    """

    def __init__(self, config, data=None):
        self.config = config
        self.dtype = _DTYPES[config["train.dtype"]]
        seed = config["train.seed"]
        torch.manual_seed(seed)
        self.generator = Generator.from_config(config).to(self.dtype)
        self.discriminator = MultiscaleDiscriminator.from_config(config).to(self.dtype)
        self.extractor = PerceptualExtractor.from_config(config).to(self.dtype)
        self.weights = LossWeights.from_config(config)
        betas = (config["train.beta1"], config["train.beta2"])
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config["train.lr_g"], betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config["train.lr_d"], betas=betas)
        self.state = TrainState(seed=seed)
        self.data = data.to(self.dtype) if data is not None else None
        self._log_path = Path(config["train.log_path"]) if config["train.log_path"] else None

    @classmethod
    def from_manifest(cls, config, manifest=None):
        if manifest is None:
            manifest = DatasetManifest.load(
                config["data.manifest"], config["data.num_classes"], config["data.size"]
            )
        data = load_batch(manifest, range(len(manifest)), canny_params(config))
        return cls(config, data)

    # schedule -------------------------------------------------------------

    @property
    def steps_per_epoch(self):
        n = len(self.data) if self.data is not None else self.config["train.batch_size"]
        return max(1, math.ceil(n / self.config["train.batch_size"]))

    def current_lrs(self):
        c = self.config
        args = (self.state.epoch, c["train.epochs"], c["train.decay_start_epoch"])
        return lr_at_epoch(c["train.lr_g"], *args), lr_at_epoch(c["train.lr_d"], *args)

    def _apply_schedule(self):
        lr_g, lr_d = self.current_lrs()
        for group in self.opt_g.param_groups:
            group["lr"] = lr_g
        for group in self.opt_d.param_groups:
            group["lr"] = lr_d
        return lr_g

    def next_batch(self):
        if self.data is None:
            raise ValueError("trainer has no training data")
        n = len(self.data)
        within = self.state.iteration % self.steps_per_epoch
        rng = np.random.default_rng([self.state.seed, self.state.epoch])
        order = rng.permutation(n)
        bs = self.config["train.batch_size"]
        idx = order[within * bs:(within + 1) * bs].tolist()
        d = self.data
        return type(d)(d.layout[idx], d.image[idx], d.edge[idx], [d.indices[i] for i in idx])

    # steps ----------------------------------------------------------------

    def _score_all(self, layout, candidates):
        """One discriminator pass over stacked candidates; returns per-candidate (scores, features)."""
        k = len(candidates)
        out = self.discriminator(layout.repeat(k, 1, 1, 1), torch.cat(candidates, dim=0))
        scores = list(zip(*[_split(s, k) for s in out.scores]))
        feats = list(zip(*[_split(f, k) for f in out.features]))
        return [(list(scores[i]), list(feats[i])) for i in range(k)]

    def generator_losses(self, batch, outputs):
        g = self.generator
        lam = self.weights.lam
        zero = batch.image.new_zeros(())
        candidates = [batch.image, outputs.intermediate_image]
        has_final = g.use_Gs
        if has_final:
            candidates.append(outputs.final_image)
        if g.use_Ge:
            candidates += [batch.edge, outputs.edge]
        scored = self._score_all(batch.layout, candidates)
        real_i, inter = scored[0], scored[1]
        final = scored[2] if has_final else inter
        image_terms = image_adversarial_terms(real_i[0], inter[0], final[0], lam)
        terms = dict(
            adv_image=-image_terms.g_term,
            fm_intermediate=feature_matching_loss(real_i[1], inter[1]),
            fm_final=feature_matching_loss(real_i[1], final[1]),
            perc_intermediate=perceptual_loss(batch.image, outputs.intermediate_image, self.extractor),
            perc_final=perceptual_loss(batch.image, outputs.final_image, self.extractor),
            adv_edge=zero, fm_edge=zero, perc_edge=zero,
        )
        if g.use_Ge:
            real_e, fake_e = scored[-2], scored[-1]
            edge_terms = edge_adversarial_terms(real_e[0], fake_e[0])
            terms.update(
                adv_edge=-edge_terms.g_term,
                fm_edge=feature_matching_loss(real_e[1], fake_e[1]),
                perc_edge=perceptual_loss(batch.edge, outputs.edge, self.extractor),
            )
        return total_objective(weights=self.weights, **terms)

    def discriminator_loss(self, batch, outputs):
        g = self.generator
        candidates = [batch.image, outputs.intermediate_image]
        if g.use_Gs:
            candidates.append(outputs.final_image)
        if g.use_Ge:
            candidates += [batch.edge, outputs.edge]
        scored = self._score_all(batch.layout, candidates)
        final = scored[2][0] if g.use_Gs else scored[1][0]
        d_term = image_adversarial_terms(scored[0][0], scored[1][0], final, self.weights.lam).d_term
        if g.use_Ge:
            d_term = d_term + edge_adversarial_terms(scored[-2][0], scored[-1][0]).d_term
        return -d_term

    def train_step(self, batch=None):
        """One generator update with D fixed, then one discriminator update with G fixed."""
        if batch is None:
            batch = self.next_batch()
        batch = batch.to(self.dtype)
        lr = self._apply_schedule()
        G, D = self.generator, self.discriminator
        edge_target = batch.edge if G.gs_edge_source == "target" else None

        G.train()
        D.eval()
        D.requires_grad_(False)
        outputs = G(batch.layout, edge_target)
        report = self.generator_losses(batch, outputs)
        values = report.as_floats()
        if not all(math.isfinite(v) for v in values.values()):
            raise NonFiniteLossError("generator", values)
        self.opt_g.zero_grad(set_to_none=True)
        report.total.backward()
        self.opt_g.step()
        D.requires_grad_(True)

        G.eval()
        D.train()
        with torch.no_grad():
            outputs = G(batch.layout, edge_target)
        d_loss = self.discriminator_loss(batch, outputs)
        d_value = float(d_loss.detach())
        if not math.isfinite(d_value):
            raise NonFiniteLossError("discriminator", {"d_loss": d_value})
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()
        G.train()

        self.state.last_report = values
        self.state.last_d_loss = d_value
        self._write_log(lr, report)
        self.state.iteration += 1
        self.state.epoch = self.state.iteration // self.steps_per_epoch
        return report

    def _write_log(self, lr, report):
        if self._log_path is None:
            return
        new = not self._log_path.exists()
        with self._log_path.open("a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(LOG_FIELDS)
            writer.writerow([
                self.state.iteration, self.state.epoch, repr(lr),
                repr(float(report.adv.detach())), repr(float(report.fm.detach())),
                repr(float(report.perc.detach())), repr(float(report.total.detach())),
            ])

    def fit(self, steps, checkpoint_path=None, checkpoint_every=0):
        reports = []
        for _ in range(steps):
            reports.append(self.train_step().as_floats())
            it = self.state.iteration
            if checkpoint_path and checkpoint_every and it % checkpoint_every == 0:
                self.save(checkpoint_path)
        if checkpoint_path:
            self.save(checkpoint_path)
        return reports

    # checkpoints ----------------------------------------------------------

    def save(self, path):
        tensors = {}
        for prefix, module in (("G", self.generator), ("D", self.discriminator)):
            for name, t in module.state_dict().items():
                tensors[f"{prefix}/{name}"] = t
        optim_meta = {}
        for prefix, opt in (("optG", self.opt_g), ("optD", self.opt_d)):
            sd = opt.state_dict()
            for idx, st in sd["state"].items():
                for key, t in st.items():
                    tensors[f"{prefix}/{idx}/{key}"] = torch.as_tensor(t)
            optim_meta[prefix] = sd["param_groups"]
        meta = {
            "config": self.config.as_dict(),
            "epoch": self.state.epoch,
            "iteration": self.state.iteration,
            "seed": self.state.seed,
            "last_report": self.state.last_report,
            "last_d_loss": self.state.last_d_loss,
            "optimizers": optim_meta,
        }
        return checkpoint.save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path, data=None):
        tensors, meta = checkpoint.load_tensors(path)
        try:
            config = Config(meta["config"])
            trainer = cls(config, data)
            for prefix, module in (("G", trainer.generator), ("D", trainer.discriminator)):
                sd = {k[len(prefix) + 1:]: v for k, v in tensors.items() if k.startswith(prefix + "/")}
                module.load_state_dict(sd, strict=True)
            for prefix, opt in (("optG", trainer.opt_g), ("optD", trainer.opt_d)):
                state = {}
                for k, v in tensors.items():
                    parts = k.split("/")
                    if parts[0] == prefix:
                        state.setdefault(int(parts[1]), {})[parts[2]] = v
                opt.load_state_dict({"state": state, "param_groups": meta["optimizers"][prefix]})
        except (KeyError, RuntimeError, ValueError) as exc:
            raise CheckpointError(f"checkpoint {path} does not match its recorded config: {exc}") from exc
        trainer.state = TrainState(
            epoch=meta["epoch"], iteration=meta["iteration"], seed=meta["seed"],
            last_report=meta["last_report"], last_d_loss=meta["last_d_loss"],
        )
        return trainer


def canny_params(config):
    return (config["data.canny.sigma"], config["data.canny.low"], config["data.canny.high"])


def load_generator(path):
    """Generator and config from a training checkpoint, in evaluation mode."""
    tensors, meta = checkpoint.load_tensors(path)
    try:
        config = Config(meta["config"])
        gen = Generator.from_config(config).to(_DTYPES[config["train.dtype"]])
        gen.load_state_dict({k[2:]: v for k, v in tensors.items() if k.startswith("G/")})
    except (KeyError, RuntimeError, ValueError) as exc:
        raise CheckpointError(f"cannot restore generator from {path}: {exc}") from exc
    return gen.eval(), config


@torch.no_grad()
def generate(generator, layouts, batch_size=16):
    """Run ``generator`` in evaluation mode over (B, N, H, W) layouts; returns a list of outputs per chunk."""
    generator.eval()
    outs = []
    dtype = next(generator.parameters()).dtype
    for start in range(0, layouts.shape[0], batch_size):
        outs.append(generator(layouts[start:start + batch_size].to(dtype)))
    return outs


def run_ablation(config, variant, train_data, eval_data, steps, checkpoint_path=None):
    """Train one ablation variant for ``steps`` steps and report FID and parameter counts.

    FID compares final generated images on ``eval_data`` layouts against the
    real ``eval_data`` images through the configured fixed extractor.
    """
    cfg = config.variant(variant)
    trainer = Trainer(cfg, train_data)
    reports = trainer.fit(steps, checkpoint_path)
    fakes = torch.cat([o.final_image for o in generate(trainer.generator, eval_data.layout)])
    fid_value = image_fid(trainer.extractor, eval_data.image, fakes.to(eval_data.image.dtype))
    return {
        "variant": variant,
        "steps": steps,
        "fid": fid_value,
        "fid_samples": int(eval_data.image.shape[0]),
        "extractor": trainer.extractor.source,
        "parameters": count_parameters(trainer.generator, trainer.discriminator),
        "final_losses": reports[-1] if reports else {},
        "trainer": trainer,
    }
