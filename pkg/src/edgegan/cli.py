"""Command line: train, generate, evaluate, ablate, figures, params.

Every verb reads an optional ``--config`` file plus trailing ``key=value``
overrides. Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import VARIANTS, load_config
from .data import DatasetManifest, encode_onehot, load_batch, make_toy_dataset, read_label_map
from .errors import CheckpointError, ConfigError, DataError
from .extractor import PerceptualExtractor
from .discriminator import MultiscaleDiscriminator
from .figures import emit_figure_grid, figure_samples, to_uint8
from .generator import Generator
from .metrics import ConfusionMatrix, GaussianStats, count_parameters, embed_images, fid, miou_acc
from .trainer import Trainer, canny_params, load_generator, run_ablation

EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("edgegan")


def _image_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        raise DataError(f"no images in {directory}")
    return files


def _read_images(directory, size):
    arrays = []
    for p in _image_files(directory):
        try:
            with Image.open(p) as im:
                im = im.convert("RGB").resize((size[1], size[0]), Image.BILINEAR)
                arrays.append(np.asarray(im, dtype=np.float32).transpose(2, 0, 1) / 127.5 - 1.0)
        except OSError as exc:
            raise DataError(f"cannot read image {p}: {exc}") from exc
    return torch.from_numpy(np.stack(arrays))


def _manifest(config, args):
    if getattr(args, "toy", None):
        root = Path(args.toy)
        if (root / "manifest.tsv").is_file():
            return DatasetManifest.load(root / "manifest.tsv", config["data.num_classes"], config["data.size"])
        return make_toy_dataset(root, args.toy_seed, args.toy_count, config["data.num_classes"],
                                tuple(config["data.size"]))
    if config["data.manifest"] is None:
        raise ConfigError("set data.manifest or pass --toy DIR")
    return DatasetManifest.load(config["data.manifest"], config["data.num_classes"], config["data.size"])


def cmd_train(config, args):
    manifest = _manifest(config, args)
    trainer = Trainer.from_manifest(config, manifest)
    if args.resume:
        trainer = Trainer.load(args.resume, trainer.data)
    steps = args.steps or config["train.max_steps"] or trainer.steps_per_epoch * config["train.epochs"]
    out = args.checkpoint or config["train.checkpoint_path"] or "checkpoint.safetensors"
    trainer.fit(steps, out, config["train.checkpoint_every"])
    print(json.dumps({"checkpoint": str(out), "iteration": trainer.state.iteration,
                      "epoch": trainer.state.epoch, "last_report": trainer.state.last_report}))
    return 0


def cmd_generate(config, args):
    generator, gen_config = load_generator(args.checkpoint)
    size = tuple(gen_config["data.size"])
    n = gen_config["data.num_classes"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype = next(generator.parameters()).dtype
    written = 0
    for path in _image_files(args.labels):
        labels = read_label_map(path, size)
        layout = encode_onehot(labels, n, dtype).unsqueeze(0)
        with torch.no_grad():
            out = generator(layout)
        Image.fromarray(to_uint8(out.final_image[0])).save(out_dir / f"{path.stem}.png")
        if args.save_edges and out.edge is not None:
            Image.fromarray(to_uint8(out.edge[0])).save(out_dir / f"{path.stem}_edge.png")
        if args.save_intermediate:
            Image.fromarray(to_uint8(out.intermediate_image[0])).save(out_dir / f"{path.stem}_intermediate.png")
        written += 1
    print(json.dumps({"written": written, "out": str(out_dir)}))
    return 0


def cmd_evaluate(config, args):
    size = tuple(config["data.size"])
    extractor = PerceptualExtractor.from_config(config)
    report = {"extractor": extractor.source}
    if args.real or args.fake:
        if not (args.real and args.fake):
            raise ConfigError("--real and --fake must be given together")
        real = _read_images(args.real, size)
        fake = _read_images(args.fake, size)
        real_stats = GaussianStats.from_features(embed_images(extractor, real))
        fake_stats = GaussianStats.from_features(embed_images(extractor, fake))
        report.update(fid=fid(real_stats, fake_stats), real_samples=real_stats.sample_count,
                      fake_samples=fake_stats.sample_count, feature_dim=real_stats.dim)
    if args.labels or args.pred:
        if not (args.labels and args.pred):
            raise ConfigError("--labels and --pred must be given together")
        n = config["data.num_classes"]
        confusion = ConfusionMatrix.empty(n)
        pred_dir = Path(args.pred)
        for gt_path in _image_files(args.labels):
            pred_path = pred_dir / gt_path.name
            if not pred_path.is_file():
                raise DataError(f"missing prediction {pred_path}")
            gt = read_label_map(gt_path)
            confusion = confusion + ConfusionMatrix.from_maps(gt, read_label_map(pred_path, gt.shape), n)
        miou, acc = miou_acc(confusion)
        report.update(miou=miou, acc=acc, pixels=confusion.total)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_ablate(config, args):
    manifest = _manifest(config, args)
    data = load_batch(manifest, range(len(manifest)), canny_params(config))
    count = config["eval.num_samples"]
    if args.toy:
        # held-out scenes from the next seed
        eval_manifest = make_toy_dataset(Path(args.toy) / "eval", args.toy_seed + 1, count,
                                         config["data.num_classes"], tuple(config["data.size"]))
        eval_data = load_batch(eval_manifest, range(len(eval_manifest)), canny_params(config))
    else:
        eval_data = load_batch(manifest, range(min(count, len(manifest))), canny_params(config))
    steps = args.steps or config["train.max_steps"] or 300
    results = []
    for variant in args.variants or list(VARIANTS):
        res = run_ablation(config, variant, data, eval_data, steps)
        res.pop("trainer")
        results.append(res)
        log.info("%s: FID %.4f", variant, res["fid"])
    text = json.dumps(results, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_figures(config, args):
    generator, gen_config = load_generator(args.checkpoint)
    manifest = _manifest(gen_config, args)
    batch = load_batch(manifest, range(min(args.count, len(manifest))), canny_params(gen_config))
    path = emit_figure_grid(figure_samples(generator, batch), args.out)
    print(json.dumps({"figure": str(path), "rows": len(batch)}))
    return 0


def cmd_params(config, args):
    if args.checkpoint:
        generator, config = load_generator(args.checkpoint)
        report = {"configured": count_parameters(generator, MultiscaleDiscriminator.from_config(config))}
    else:
        report = {}
        for name in VARIANTS if args.all_variants else [None]:
            cfg = config.variant(name) if name else config
            key = name or "configured"
            report[key] = count_parameters(Generator.from_config(cfg), MultiscaleDiscriminator.from_config(cfg))
    print(json.dumps(report, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="edgegan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def verb(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.set_defaults(func=func)
        return p

    def toy_args(p):
        p.add_argument("--toy", metavar="DIR", help="use (or render) a toy dataset in DIR")
        p.add_argument("--toy-count", type=int, default=64)
        p.add_argument("--toy-seed", type=int, default=7)

    p = verb("train", cmd_train, "train a model")
    toy_args(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint", help="output checkpoint path")
    p.add_argument("--resume", help="checkpoint to resume from")

    p = verb("generate", cmd_generate, "generate images from label maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--labels", required=True, help="directory of index label images")
    p.add_argument("--out", required=True)
    p.add_argument("--save-edges", action="store_true")
    p.add_argument("--save-intermediate", action="store_true")

    p = verb("evaluate", cmd_evaluate, "FID and segmentation scores")
    p.add_argument("--real")
    p.add_argument("--fake")
    p.add_argument("--labels", help="ground-truth label maps for mIoU/Acc")
    p.add_argument("--pred", help="predicted label maps (same file names) for mIoU/Acc")

    p = verb("ablate", cmd_ablate, "train and compare the ablation variants")
    toy_args(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--variants", nargs="+", choices=sorted(VARIANTS))
    p.add_argument("--out", help="write the JSON report here too")

    p = verb("figures", cmd_figures, "qualitative figure grid")
    toy_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--out", required=True)

    p = verb("params", cmd_params, "parameter counts")
    p.add_argument("--checkpoint")
    p.add_argument("--all-variants", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.overrides)
        return args.func(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
