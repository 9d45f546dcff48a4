"""
Training on toy scenes
======================

Render a small procedural dataset, train the full generator for a few
alternating steps, and save a qualitative figure with one row per sample:
layout, generated edges, attention, intermediate image, final image and the
real image.

Set ``EDGEGAN_DEMO_STEPS`` to train longer.
"""

import os
import tempfile
from pathlib import Path

from edgegan import Config, Trainer, load_batch, make_toy_dataset
from edgegan.figures import emit_figure_grid, figure_samples

steps = int(os.environ.get("EDGEGAN_DEMO_STEPS", "20"))
work = Path(os.environ.get("EDGEGAN_DEMO_DIR", tempfile.mkdtemp(prefix="edgegan-demo-")))

# Scenes are 32x32 with four classes; widths are reduced for a quick CPU run
manifest = make_toy_dataset(work / "toy", seed=7, count=16, num_classes=4, size=(32, 32))
config = Config({
    "data.num_classes": 4, "data.size": [32, 32],
    "model.C": 16, "nn.spade_hidden": 16, "disc.ndf": 16, "train.batch_size": 8,
})
trainer = Trainer(config, load_batch(manifest, range(len(manifest))))

for step in range(steps):
    report = trainer.train_step().as_floats()
    if step % 5 == 0 or step == steps - 1:
        print(f"step {step:4d}  total {report['total']:.3f}  d_loss {trainer.state.last_d_loss:.3f}")

# One figure row per sample
figure = emit_figure_grid(figure_samples(trainer.generator, load_batch(manifest, range(4))), work / "figure.png")
checkpoint = trainer.save(work / "checkpoint.safetensors")
print("figure:", figure)
print("checkpoint:", checkpoint)
