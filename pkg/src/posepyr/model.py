"""Multi-branch high-resolution backbone with upsampling deconvolution heads.

The backbone keeps a full-resolution (1/4 input) branch throughout and adds a
half-resolution branch per stage, fusing across resolutions after every block.
One or more deconvolution modules then double the top resolution, each
emitting its own heatmap head; tags are emitted only at the base level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import nn


@dataclass
class ModelConfig:
    base_width: int = 32
    num_keypoints: int = 17
    stage_blocks: tuple = (1, 4, 3)
    units_per_branch: int = 4
    num_deconv_modules: int = 1
    deconv_residual_blocks: int = 4
    concat_heatmaps: bool = True
    input_size: int = 512
    stem_width: int = 64
    stage1_width: int = 64
    stage1_units: int = 4
    expansion: int = 4
    dtype: str = "float32"

    def validate(self):
        if self.base_width < 1 or self.num_keypoints < 1:
            raise ValueError("base_width and num_keypoints must be positive")
        if self.num_deconv_modules < 0:
            raise ValueError("num_deconv_modules must be >= 0")
        if not self.stage_blocks:
            raise ValueError("stage_blocks must name at least one stage")
        if self.input_size % (4 * 2 ** self.num_deconv_modules) != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by "
                f"{4 * 2 ** self.num_deconv_modules}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32/float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def branch_widths(self, num_branches):
        return [self.base_width * (2 ** r) for r in range(num_branches)]

    @classmethod
    def from_dict(cls, d):
        cfg = cls(**{k: tuple(v) if k == "stage_blocks" else v for k, v in d.items()})
        cfg.validate()
        return cfg


@dataclass
class HeatmapPyramid:
    """Per-resolution heatmaps (level 0 = 1/4 input) plus base-level tagmap."""
    levels: list
    tagmap: object

    def level_arrays(self):
        return [lv.data for lv in self.levels]


class BasicBlock(nn.Module):
    def __init__(self, ch, rng, dtype):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, 1, 1, bias=False, rng=rng, dtype=dtype)
        self.bn1 = nn.BatchNorm2d(ch, dtype=dtype)
        self.conv2 = nn.Conv2d(ch, ch, 3, 1, 1, bias=False, rng=rng, dtype=dtype)
        self.bn2 = nn.BatchNorm2d(ch, dtype=dtype)

    def forward(self, x):
        y = ag.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return ag.relu(ag.add(x, y))

    def macs(self, h, w):
        m1, _ = self.conv1.macs(h, w)
        m2, _ = self.conv2.macs(h, w)
        return m1 + m2, (h, w)


class Bottleneck(nn.Module):
    def __init__(self, in_ch, width, out_ch, rng, dtype):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, width, 1, bias=False, rng=rng, dtype=dtype)
        self.bn1 = nn.BatchNorm2d(width, dtype=dtype)
        self.conv2 = nn.Conv2d(width, width, 3, 1, 1, bias=False, rng=rng, dtype=dtype)
        self.bn2 = nn.BatchNorm2d(width, dtype=dtype)
        self.conv3 = nn.Conv2d(width, out_ch, 1, bias=False, rng=rng, dtype=dtype)
        self.bn3 = nn.BatchNorm2d(out_ch, dtype=dtype)
        if in_ch != out_ch:
            self.proj = nn.Conv2d(in_ch, out_ch, 1, bias=False, rng=rng, dtype=dtype)
            self.proj_bn = nn.BatchNorm2d(out_ch, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x):
        y = ag.relu(self.bn1(self.conv1(x)))
        y = ag.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        skip = self.proj_bn(self.proj(x)) if self.proj is not None else x
        return ag.relu(ag.add(skip, y))

    def macs(self, h, w):
        total = 0
        for conv in (self.conv1, self.conv2, self.conv3):
            m, _ = conv.macs(h, w)
            total += m
        if self.proj is not None:
            m, _ = self.proj.macs(h, w)
            total += m
        return total, (h, w)


class UpFuse(nn.Module):
    """Cross-resolution path upward: 1x1 conv + BN, then bilinear upsample."""

    def __init__(self, in_ch, out_ch, factor, rng, dtype):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 1, bias=False, rng=rng, dtype=dtype)
        self.bn = nn.BatchNorm2d(out_ch, dtype=dtype)
        self.up = nn.Upsample(factor)

    def forward(self, x):
        return self.up(self.bn(self.conv(x)))

    def macs(self, h, w):
        m, _ = self.conv.macs(h, w)
        return m, (h * self.up.factor, w * self.up.factor)


class DownFuse(nn.Module):
    """Cross-resolution path downward: chained strided 3x3 convs."""

    def __init__(self, in_ch, out_ch, steps, rng, dtype):
        super().__init__()
        mods = []
        ch = in_ch
        for s in range(steps):
            last = s == steps - 1
            nxt = out_ch if last else in_ch
            mods.append(nn.Conv2d(ch, nxt, 3, 2, 1, bias=False, rng=rng, dtype=dtype))
            mods.append(nn.BatchNorm2d(nxt, dtype=dtype))
            if not last:
                mods.append(nn.ReLU())
            ch = nxt
        self.seq = nn.Sequential(*mods)

    def forward(self, x):
        return self.seq(x)

    def macs(self, h, w):
        return self.seq.macs(h, w)


class MultiResolutionBlock(nn.Module):
    """Per-branch residual units followed by full cross-resolution fusion."""

    def __init__(self, widths, units, rng, dtype, multi_scale_output=True):
        super().__init__()
        self.widths = widths
        self.n_out = len(widths) if multi_scale_output else 1
        self.branches = []
        for i, wch in enumerate(widths):
            br = nn.Sequential(*[BasicBlock(wch, rng, dtype) for _ in range(units)])
            self.add_module(f"branch{i}", br)
            self.branches.append(br)
        self.fuse = {}
        for i in range(self.n_out):
            for j in range(len(widths)):
                if j == i:
                    continue
                if j > i:
                    path = UpFuse(widths[j], widths[i], 2 ** (j - i), rng, dtype)
                else:
                    path = DownFuse(widths[j], widths[i], i - j, rng, dtype)
                self.add_module(f"fuse{i}_{j}", path)
                self.fuse[(i, j)] = path

    def forward(self, xs):
        ys = [br(x) for br, x in zip(self.branches, xs)]
        outs = []
        for i in range(self.n_out):
            acc = ys[i]
            for j in range(len(ys)):
                if j != i:
                    acc = ag.add(acc, self.fuse[(i, j)](ys[j]))
            outs.append(ag.relu(acc))
        return outs

    def macs(self, shapes):
        total = 0
        for br, (h, w) in zip(self.branches, shapes):
            m, _ = br.macs(h, w)
            total += m
        for (i, j), path in self.fuse.items():
            m, _ = path.macs(*shapes[j])
            total += m
        out_shapes = shapes[:self.n_out]
        return total, out_shapes


class DeconvModule(nn.Module):
    """4x4 stride-2 transposed conv + BN + ReLU + residual refinement + head."""

    def __init__(self, in_ch, ch, num_keypoints, res_blocks, rng, dtype):
        super().__init__()
        self.deconv = nn.ConvTranspose2d(in_ch, ch, 4, 2, 1, bias=False, rng=rng, dtype=dtype)
        self.bn = nn.BatchNorm2d(ch, dtype=dtype)
        self.blocks = nn.Sequential(*[BasicBlock(ch, rng, dtype) for _ in range(res_blocks)])
        self.head = nn.Conv2d(ch, num_keypoints, 1, bias=True, rng=rng, dtype=dtype,
                              init_std=0.001)

    def forward(self, x):
        f = ag.relu(self.bn(self.deconv(x)))
        f = self.blocks(f)
        return f, self.head(f)

    def macs(self, h, w):
        m, (h2, w2) = self.deconv.macs(h, w)
        mb, _ = self.blocks.macs(h2, w2)
        mh, _ = self.head.macs(h2, w2)
        return m + mb + mh, (h2, w2)


class PosePyramidNet(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        dt = config.np_dtype
        c = config.base_width
        k = config.num_keypoints

        self.stem_conv1 = nn.Conv2d(3, config.stem_width, 3, 2, 1, bias=False, rng=rng, dtype=dt)
        self.stem_bn1 = nn.BatchNorm2d(config.stem_width, dtype=dt)
        self.stem_conv2 = nn.Conv2d(config.stem_width, config.stem_width, 3, 2, 1,
                                    bias=False, rng=rng, dtype=dt)
        self.stem_bn2 = nn.BatchNorm2d(config.stem_width, dtype=dt)

        s1_out = config.stage1_width * config.expansion
        units = [Bottleneck(config.stem_width, config.stage1_width, s1_out, rng, dt)]
        for _ in range(config.stage1_units - 1):
            units.append(Bottleneck(s1_out, config.stage1_width, s1_out, rng, dt))
        self.stage1 = nn.Sequential(*units)

        self.transitions = []
        self.stages = []
        prev_widths = [s1_out]
        n_stages = len(config.stage_blocks)
        for si in range(n_stages):
            widths = config.branch_widths(si + 2)
            trans = []
            if si == 0:
                t0 = nn.Sequential(
                    nn.Conv2d(prev_widths[0], widths[0], 3, 1, 1, bias=False, rng=rng, dtype=dt),
                    nn.BatchNorm2d(widths[0], dtype=dt), nn.ReLU())
                t1 = nn.Sequential(
                    nn.Conv2d(prev_widths[0], widths[1], 3, 2, 1, bias=False, rng=rng, dtype=dt),
                    nn.BatchNorm2d(widths[1], dtype=dt), nn.ReLU())
                trans = [t0, t1]
            else:
                trans = [None] * len(prev_widths)
                trans.append(nn.Sequential(
                    nn.Conv2d(prev_widths[-1], widths[-1], 3, 2, 1, bias=False, rng=rng, dtype=dt),
                    nn.BatchNorm2d(widths[-1], dtype=dt), nn.ReLU()))
            for ti, t in enumerate(trans):
                if t is not None:
                    self.add_module(f"transition{si}_{ti}", t)
            self.transitions.append(trans)

            blocks = []
            for bi in range(config.stage_blocks[si]):
                last_overall = (si == n_stages - 1) and (bi == config.stage_blocks[si] - 1)
                blk = MultiResolutionBlock(widths, config.units_per_branch, rng, dt,
                                           multi_scale_output=not last_overall)
                self.add_module(f"stage{si}_block{bi}", blk)
                blocks.append(blk)
            self.stages.append(blocks)
            prev_widths = widths

        self.head0 = nn.Conv2d(c, 2 * k, 1, bias=True, rng=rng, dtype=dt, init_std=0.001)

        self.deconvs = []
        for di in range(config.num_deconv_modules):
            in_ch = c + (k if config.concat_heatmaps else 0)
            dm = DeconvModule(in_ch, c, k, config.deconv_residual_blocks, rng, dt)
            self.add_module(f"deconv{di}", dm)
            self.deconvs.append(dm)

    # ------------------------------------------------------------------

    def forward(self, images) -> HeatmapPyramid:
        if not isinstance(images, ag.Tensor):
            images = ag.Tensor(np.ascontiguousarray(images, dtype=self.config.np_dtype))
        n, ch, h, w = images.data.shape
        div = 4 * 2 ** self.config.num_deconv_modules
        if h % div or w % div:
            raise ag.ShapeError(f"input spatial size {h}x{w} must be divisible by {div}")
        k = self.config.num_keypoints

        x = ag.relu(self.stem_bn1(self.stem_conv1(images)))
        x = ag.relu(self.stem_bn2(self.stem_conv2(x)))
        x = self.stage1(x)

        xs = [x]
        for trans, blocks in zip(self.transitions, self.stages):
            nxt = []
            for ti, t in enumerate(trans):
                src = xs[ti] if ti < len(xs) else xs[-1]
                nxt.append(src if t is None else t(src))
            xs = nxt
            for blk in blocks:
                xs = blk(xs)

        feat = xs[0]
        head_out = self.head0(feat)
        heatmaps = ag.slice_channels(head_out, 0, k)
        tagmap = ag.slice_channels(head_out, k, 2 * k)

        levels = [heatmaps]
        for dm in self.deconvs:
            inp = ag.concat_channels([feat, levels[-1]]) if self.config.concat_heatmaps else feat
            feat, hm = dm(inp)
            levels.append(hm)
        return HeatmapPyramid(levels=levels, tagmap=tagmap)

    # ------------------------------------------------------------------

    def section_stats(self, input_size=None):
        """Per-section (params, MACs) table mirroring the forward pass."""
        size = input_size or self.config.input_size
        self.config.validate()
        rows = []

        def row(name, mods, macs):
            params = sum(nn.count_params(m) for m in mods)
            rows.append((name, params, macs))

        h = w = size // 2
        m1, (h, w) = self.stem_conv1.macs(size, size)
        m2, (h, w) = self.stem_conv2.macs(h, w)
        row("stem", [self.stem_conv1, self.stem_bn1, self.stem_conv2, self.stem_bn2], m1 + m2)

        m, (h, w) = self.stage1.macs(h, w)
        row("stage1", [self.stage1], m)

        shapes = [(h, w)]
        for si, (trans, blocks) in enumerate(zip(self.transitions, self.stages)):
            tmacs = 0
            nxt_shapes = []
            tmods = []
            for ti, t in enumerate(trans):
                src = shapes[ti] if ti < len(shapes) else shapes[-1]
                if t is None:
                    nxt_shapes.append(src)
                else:
                    tm, out = t.macs(*src)
                    tmacs += tm
                    tmods.append(t)
                    nxt_shapes.append(out)
            shapes = nxt_shapes
            smacs = 0
            for blk in blocks:
                bm, shapes = blk.macs(shapes)
                smacs += bm
            row(f"stage{si + 2}", tmods + list(blocks), tmacs + smacs)

        h, w = shapes[0]
        hm, _ = self.head0.macs(h, w)
        row("head0", [self.head0], hm)
        for di, dm in enumerate(self.deconvs):
            m, (h, w) = dm.macs(h, w)
            row(f"deconv{di}", [dm], m)
        return rows


def build_model(config: ModelConfig, rng_seed: int = 0) -> PosePyramidNet:
    return PosePyramidNet(config, seed=rng_seed)


def count_params(model: PosePyramidNet) -> int:
    return nn.count_params(model)


def count_flops(model: PosePyramidNet, input_size=None) -> float:
    """Analytic GFLOPs at the given input size.

    Convention: one conv multiply-accumulate = 1 FLOP; normalization,
    activations and bias adds are not counted.
    """
    return sum(m for _, _, m in model.section_stats(input_size)) / 1e9
