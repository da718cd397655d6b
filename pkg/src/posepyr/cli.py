"""Command-line entry point: gen-data / train / eval / infer / inspect / plot."""

from __future__ import annotations

import json
import os
import tempfile

import click
import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import load_run_config
from .decode import DecodeConfig, decode_image, poses_to_results
from .evaluation import evaluate
from .model import build_model, count_flops, count_params
from .supervision import Annotation
from .synthdata import SceneConfig, export, generate_split, load_dataset
from .train import level_resolutions, train_model
from . import viz


def _write_json(obj, path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".json.tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(obj, f, indent=1)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_cfg(config_path, seed=None):
    try:
        cfg = load_run_config(config_path)
    except (OSError, ValueError) as e:
        raise click.ClickException(f"invalid config {config_path}: {e}")
    if seed is not None:
        cfg.training.seed = seed
        cfg.data.seed = seed
    return cfg


def _load_data(dataset_dir):
    try:
        return load_dataset(dataset_dir)
    except OSError as e:
        raise click.ClickException(str(e))


def _decode_cfg(cfg, no_flip, scales):
    dec = cfg.inference
    if no_flip:
        dec.flip = False
    if scales:
        dec.scales = tuple(float(s) for s in scales.split(","))
    return dec


def _restore_model(cfg, checkpoint):
    model = build_model(cfg.model, rng_seed=cfg.training.seed)
    try:
        load_checkpoint(checkpoint, model, load_adam=False)
    except (OSError, CheckpointError) as e:
        raise click.ClickException(f"cannot load checkpoint: {e}")
    return model


def run_inference(model, images, image_ids, meta, dec_cfg):
    results = []
    flip_index = meta.get("flip_index", list(range(model.config.num_keypoints)))
    for img, iid in zip(images, image_ids):
        poses = decode_image(model, img, flip_index, dec_cfg)
        results.extend(poses_to_results(poses, iid))
    return results


@click.group()
def main():
    """Scale-aware bottom-up pose estimation, desk scale."""


@main.command("gen-data")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--num-images", type=int, default=32)
def gen_data(config_path, seed, out_dir, num_images):
    """Generate a synthetic dataset split (PNGs + COCO-keypoint JSON)."""
    cfg = _load_cfg(config_path, seed)
    ds = generate_split(cfg.data, num_images)
    try:
        export(ds, out_dir)
    except OSError as e:
        raise click.ClickException(str(e))
    click.echo(f"wrote {num_images} images + annotations.json to {out_dir}")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--checkpoint", "resume", default=None, type=click.Path(exists=True),
              help="Resume from this checkpoint.")
def cmd_train(config_path, seed, out_dir, resume):
    """Train; writes checkpoints and a per-epoch loss CSV."""
    cfg = _load_cfg(config_path, seed)
    out_dir = out_dir or cfg.out_dir
    images, annos, meta = _load_data(cfg.dataset_dir)
    if cfg.data.num_keypoints != cfg.model.num_keypoints:
        raise click.ClickException(
            f"dataset has {cfg.data.num_keypoints} keypoints but model expects "
            f"{cfg.model.num_keypoints}")
    _, ckpt = train_model(cfg, images, annos, meta, out_dir, resume=resume)
    click.echo(f"final checkpoint: {ckpt}")


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--no-flip", is_flag=True, default=False)
@click.option("--scales", default=None, help="comma-separated scale factors")
def cmd_eval(config_path, checkpoint, seed, out_dir, no_flip, scales):
    """Run inference on the configured dataset and report AP/AR."""
    cfg = _load_cfg(config_path, seed)
    out_dir = out_dir or cfg.out_dir
    images, annos, meta = _load_data(cfg.dataset_dir)
    model = _restore_model(cfg, checkpoint)
    dec = _decode_cfg(cfg, no_flip, scales)
    image_ids = meta.get("image_ids", list(range(len(images))))
    results = run_inference(model, images, image_ids, meta, dec)
    preds_by_image = {}
    for r in results:
        preds_by_image.setdefault(r["image_id"], []).append(r)
    gts_by_image = {}
    for iid, ann_list in zip(image_ids, annos):
        gts_by_image[iid] = [{
            "keypoints": a.keypoints.reshape(-1).tolist(),
            "area": a.area, "iscrowd": a.iscrowd, "id": a.person_id,
        } for a in ann_list]
    falloff = np.asarray(meta.get("oks_falloff", [0.08] * cfg.model.num_keypoints))
    report = evaluate(preds_by_image, gts_by_image, falloff)
    os.makedirs(out_dir, exist_ok=True)
    _write_json(results, os.path.join(out_dir, "results.json"))
    _write_json(report.to_dict(), os.path.join(out_dir, "report.json"))
    for k, v in report.to_dict().items():
        click.echo(f"{k:5s} {v:.4f}")


@main.command("infer")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--no-flip", is_flag=True, default=False)
@click.option("--scales", default=None)
def cmd_infer(config_path, checkpoint, out_dir, no_flip, scales):
    """Write COCO-keypoint results JSON for the configured dataset."""
    cfg = _load_cfg(config_path)
    out_dir = out_dir or cfg.out_dir
    images, annos, meta = _load_data(cfg.dataset_dir)
    model = _restore_model(cfg, checkpoint)
    dec = _decode_cfg(cfg, no_flip, scales)
    image_ids = meta.get("image_ids", list(range(len(images))))
    results = run_inference(model, images, image_ids, meta, dec)
    _write_json(results, os.path.join(out_dir, "results.json"))
    click.echo(f"wrote {len(results)} detections to {out_dir}/results.json")


@main.command("inspect")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def cmd_inspect(config_path):
    """Print per-stage and total parameter counts and GFLOPs."""
    cfg = _load_cfg(config_path)
    model = build_model(cfg.model, rng_seed=cfg.training.seed)
    rows = model.section_stats(cfg.model.input_size)
    click.echo(f"{'section':<12}{'params':>14}{'GMACs':>12}")
    for name, params, macs in rows:
        click.echo(f"{name:<12}{params:>14,}{macs / 1e9:>12.3f}")
    total_p = count_params(model)
    total_f = count_flops(model, cfg.model.input_size)
    click.echo(f"{'total':<12}{total_p:>14,}{total_f:>12.3f}")


@main.command("plot")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--image-index", type=int, default=0)
@click.option("--keypoints", default=None, help="comma-separated keypoint indices")
def cmd_plot(config_path, checkpoint, out_dir, image_index, keypoints):
    """Emit per-level heatmap PNGs and a pose-overlay PNG for one image."""
    cfg = _load_cfg(config_path)
    images, annos, meta = _load_data(cfg.dataset_dir)
    if not 0 <= image_index < len(images):
        raise click.ClickException(f"image index {image_index} out of range")
    model = _restore_model(cfg, checkpoint)
    model.eval()
    img = images[image_index]
    from .autograd import no_grad
    with no_grad():
        x = img.transpose(2, 0, 1)[None].astype(model.config.np_dtype) * 2.0 - 1.0
        pyr = model.forward(x)
    kidx = [int(s) for s in keypoints.split(",")] if keypoints else None
    written = viz.save_pyramid_pngs([lv.data[0] for lv in pyr.levels], out_dir, kidx)
    flip_index = meta.get("flip_index", list(range(model.config.num_keypoints)))
    poses = decode_image(model, img, flip_index, cfg.inference)
    overlay = os.path.join(out_dir, "overlay.png")
    viz.save_pose_overlay(img, poses, overlay)
    click.echo(f"wrote {len(written)} heatmap PNGs and {overlay}")


if __name__ == "__main__":
    main()
