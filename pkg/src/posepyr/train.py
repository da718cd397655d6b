"""Deterministic single-process training loop."""

from __future__ import annotations

import os
import time

import numpy as np

from . import autograd as ag
from .checkpoint import load_checkpoint, save_checkpoint
from .model import build_model
from .optim import Adam
from .supervision import augment, heatmap_loss, make_targets, tag_loss, total_loss

CSV_HEADER = "epoch,step,heatmap_loss,tag_loss,total_loss,lr"


def level_resolutions(model_cfg):
    base = model_cfg.input_size // 4
    return [base * (2 ** i) for i in range(model_cfg.num_deconv_modules + 1)]


def prepare_batch(images, annos, indices, run_cfg, rng, flip_index):
    """Augment, build target pyramids, and stack one batch."""
    mcfg = run_cfg.model
    tcfg = run_cfg.training
    size = mcfg.input_size
    resolutions = level_resolutions(mcfg)
    xs, tgt_levels, mask_levels, tag_pts = [], [[] for _ in resolutions], [[] for _ in resolutions], []
    for idx in indices:
        img, ann, mask = augment(images[idx], annos[idx], rng, size,
                                 flip_index=flip_index, enabled=tcfg.augment)
        tp = make_targets(ann, resolutions, size, sigma=tcfg.sigma, valid_mask=mask)
        xs.append(img.transpose(2, 0, 1) * 2.0 - 1.0)
        for li in range(len(resolutions)):
            tgt_levels[li].append(tp.heatmaps[li])
            mask_levels[li].append(tp.masks[li])
        tag_pts.append(tp.tag_points)
    x = np.stack(xs).astype(mcfg.np_dtype)
    tgts = [np.stack(t).astype(mcfg.np_dtype) for t in tgt_levels]
    masks = [np.stack(m).astype(mcfg.np_dtype) for m in mask_levels]
    return x, tgts, masks, tag_pts


def train_model(run_cfg, images, annos, meta, out_dir, resume=None,
                progress=None):
    """Train per the run config; writes metrics.csv + checkpoints to out_dir.

    Returns (model, final_checkpoint_path).
    """
    run_cfg.validate()
    tcfg = run_cfg.training
    os.makedirs(out_dir, exist_ok=True)
    flip_index = meta.get("flip_index")

    model = build_model(run_cfg.model, rng_seed=tcfg.seed)
    opt = Adam(list(model.parameters()), lr=tcfg.base_lr)
    rng = np.random.default_rng(tcfg.seed + 1)
    start_epoch = 0
    step = 0
    if resume:
        meta_ck = load_checkpoint(resume, model)
        start_epoch = int(meta_ck.get("epoch", 0))
        step = int(meta_ck.get("step", 0))
        state = meta_ck.get("rng_state")
        if state:
            rng.bit_generator.state = state

    log_path = os.path.join(out_dir, "metrics.csv")
    mode = "a" if resume and os.path.exists(log_path) else "w"
    log_f = open(log_path, mode)
    if mode == "w":
        log_f.write(f"# started {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        log_f.write(CSV_HEADER + "\n")

    n = len(images)
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    try:
        for epoch in range(start_epoch, tcfg.epochs):
            lr = tcfg.lr_at(epoch)
            opt.lr = lr
            order = rng.permutation(n)
            ep_h, ep_t, ep_total, batches = 0.0, 0.0, 0.0, 0
            for b0 in range(0, n, tcfg.batch_size):
                idxs = order[b0:b0 + tcfg.batch_size]
                x, tgts, masks, tag_pts = prepare_batch(
                    images, annos, idxs, run_cfg, rng, flip_index)
                model.train()
                pyr = model.forward(x)
                h_loss = heatmap_loss(pyr.levels, tgts, masks)
                t_loss = tag_loss(pyr.tagmap, tag_pts)
                loss = total_loss(h_loss, t_loss, tcfg.heatmap_weight, tcfg.tag_weight)
                opt.zero_grad()
                loss.backward()
                opt.step()
                step += 1
                ep_h += h_loss.item()
                ep_t += t_loss.item()
                ep_total += loss.item()
                batches += 1
            if (epoch + 1) % max(1, tcfg.log_every) == 0 or epoch == tcfg.epochs - 1:
                log_f.write(f"{epoch},{step},{ep_h / batches:.6g},"
                            f"{ep_t / batches:.6g},{ep_total / batches:.6g},{lr:.6g}\n")
                log_f.flush()
            if progress:
                progress(epoch, step, ep_total / batches)
            last = epoch == tcfg.epochs - 1
            if last or (tcfg.checkpoint_every and (epoch + 1) % tcfg.checkpoint_every == 0):
                save_checkpoint(ckpt_path, model, opt, meta={
                    "epoch": epoch + 1, "step": step,
                    "rng_state": rng.bit_generator.state,
                    "model_config": run_cfg.model.__dict__ | {
                        "stage_blocks": list(run_cfg.model.stage_blocks)},
                })
    finally:
        log_f.close()
    return model, ckpt_path
