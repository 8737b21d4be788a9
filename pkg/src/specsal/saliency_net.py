"""Multi-branch backbone and the globally guided three-way decoder.

The backbone keeps four parallel branches alive at four resolutions (the
high-resolution-network pattern, shrunk to desk scale) so the finest branch is
never downsampled after creation. The decoder then walks the pyramid bottom-up:
each level splits its channels into a context half (wide factorized convs) and
a detail half (joined with the next-deeper level), gets modulated by a coarse
global saliency grid from a small token-attention head, borrows the deeper
level's uncertainty band, and emits a sigmoid saliency map plus a three-way
background/object/uncertain soft labeling per pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, ShapeError
from .nn import Conv2d, ConvNormRelu, ChannelNorm, Linear, Module
from .tensor import Tensor


class ConvNorm(Module):
    """conv -> channel_norm without the relu, for pre-sum branch outputs."""

    def __init__(self, rng, in_channels, out_channels, kernel_size, stride=1):
        self.conv = Conv2d(rng, in_channels, out_channels, kernel_size, stride)
        self.norm = ChannelNorm(out_channels)

    def __call__(self, x) -> Tensor:
        return self.norm(self.conv(x))


class ResidualBlock(Module):
    """Two 3x3 convs with a skip: relu(norm(conv(relu(norm(conv(x))))) + x)."""

    def __init__(self, rng, channels):
        self.first = ConvNormRelu(rng, channels, channels, 3)
        self.second = ConvNorm(rng, channels, channels, 3)

    def __call__(self, x) -> Tensor:
        return T.relu(T.add(self.second(self.first(x)), x))


def resize_to(x, height: int, width: int) -> Tensor:
    """Integer-factor resize: nearest up, average down, identity otherwise."""
    _, h, w = x.shape
    if (h, w) == (height, width):
        return x
    if height % h == 0 and width % w == 0 and height // h == width // w:
        return T.upsample_nearest(x, height // h)
    if h % height == 0 and w % width == 0 and h // height == w // width:
        return T.downsample_avg(x, h // height)
    raise ShapeError(f"no integer factor resizes ({h},{w}) to ({height},{width})")


@dataclass
class BackboneConfig:
    """Four-branch pyramid: widths per branch, stem stride, depth, fusion."""

    widths: tuple = (8, 16, 32, 64)
    stem_stride: int = 2
    blocks_per_branch: int = 1
    fusion_stages: int = 1

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if len(self.widths) != 4:
            raise ConfigError(f"backbone needs exactly 4 branch widths, got {self.widths}")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ConfigError(f"branch widths must strictly increase, got {self.widths}")
        if any(w % 2 for w in self.widths):
            raise ConfigError(f"branch widths must be even (decoder splits them), got {self.widths}")
        if self.stem_stride < 1 or self.blocks_per_branch < 1 or self.fusion_stages < 0:
            raise ConfigError(f"bad backbone config: {self}")


class CrossResolutionFusion(Module):
    """One full fusion stage: every branch sums contributions from all four.

    Each (target, source) pair gets its own 1x1 conv + norm; sources are then
    resized to the target resolution, summed, and rectified.
    """

    def __init__(self, rng, widths):
        # flat [target * 4 + source] so the module walker sees every child
        self.maps = [
            ConvNorm(rng, widths[source], widths[target], 1)
            for target in range(4)
            for source in range(4)
        ]

    def __call__(self, feats):
        fused = []
        for target in range(4):
            _, h, w = feats[target].shape
            total = None
            for source in range(4):
                y = resize_to(self.maps[target * 4 + source](feats[source]), h, w)
                total = y if total is None else T.add(total, y)
            fused.append(T.relu(total))
        return fused


class HighResBackbone(Module):
    """Stem, three stride-2 descents, per-branch residual blocks, fusion.

    Fusion-stage parameters are drawn from the rng last, so a fusion-free
    twin built from the same seed shares every other weight bit for bit
    (useful for ablating whether cross-resolution mixing is live).
    """

    def __init__(self, rng, in_channels: int, config: BackboneConfig):
        w = config.widths
        self.config = config
        self.stem = ConvNormRelu(rng, in_channels, w[0], 3, stride=config.stem_stride)
        self.descend = [
            ConvNormRelu(rng, w[i], w[i + 1], 3, stride=2) for i in range(3)
        ]
        # flat [branch * blocks_per_branch + depth]
        self.stages = [
            ResidualBlock(rng, w[branch])
            for branch in range(4)
            for _ in range(config.blocks_per_branch)
        ]
        self.fusions = [CrossResolutionFusion(rng, w) for _ in range(config.fusion_stages)]

    def __call__(self, x):
        _, h, w = x.shape
        need = 8 * self.config.stem_stride
        if h % need or w % need:
            raise ShapeError(
                f"backbone input {h}x{w} must be divisible by {need} "
                f"(8 branches-of-2 below a stride-{self.config.stem_stride} stem)"
            )
        feats = [self.stem(x)]
        for down in self.descend:
            feats.append(down(feats[-1]))
        depth = self.config.blocks_per_branch
        feats = [
            self._run_branch(feats[branch], branch, depth) for branch in range(4)
        ]
        for fusion in self.fusions:
            feats = fusion(feats)
        return feats

    def _run_branch(self, x, branch, depth):
        for k in range(depth):
            x = self.stages[branch * depth + k](x)
        return x


class CrossScaleFusion(Module):
    """Split-transform-merge mixing of one level with the next-deeper one.

    The level's channels split in half. The context half goes through a
    pool-conv-upsample smoother plus skip, then wide factorized 7x1/1x7
    convolutions. The detail half goes through 1x1 + two 3x3 convs and is
    joined with the upsampled detail half of the deeper level. A 1x1 merge
    brings the concatenation back to the level width.
    """

    def __init__(self, rng, channels: int, deeper_channels=None):
        half = channels // 2
        self.channels = channels
        self.deeper_channels = deeper_channels
        self.context_conv = ConvNorm(rng, half, half, 3)
        self.wide_row_first = ConvNormRelu(rng, half, half, (7, 1))
        self.wide_row_second = ConvNorm(rng, half, half, (1, 7))
        self.wide_col_first = ConvNormRelu(rng, half, half, (1, 7))
        self.wide_col_second = ConvNorm(rng, half, half, (7, 1))
        self.detail_in = ConvNormRelu(rng, half, half, 1)
        self.detail_mid = ConvNormRelu(rng, half, half, 3)
        self.detail_out = ConvNorm(rng, half, half, 3)
        merged = channels + (deeper_channels // 2 if deeper_channels else 0)
        self.merge = ConvNormRelu(rng, merged, channels, 1)

    def _smooth(self, x):
        # pool/upsample sandwich needs even spatial dims of at least 2;
        # degenerate tiny levels fall back to the bare conv
        _, h, w = x.shape
        if h < 2 or w < 2 or h % 2 or w % 2:
            return self.context_conv(x)
        return T.upsample_nearest(self.context_conv(T.downsample_avg(x, 2)), 2)

    def _wide(self, x):
        rows = self.wide_row_second(self.wide_row_first(x))
        cols = self.wide_col_second(self.wide_col_first(x))
        return T.relu(T.add(rows, cols))

    def __call__(self, x, deeper=None) -> Tensor:
        if (deeper is None) != (self.deeper_channels is None):
            raise ShapeError("deeper feature presence must match construction")
        half = self.channels // 2
        context_in = T.narrow(x, 0, 0, half)
        detail_in = T.narrow(x, 0, half, half)

        context = self._wide(T.add(self._smooth(context_in), context_in))
        detail = self.detail_out(self.detail_mid(self.detail_in(detail_in)))
        if deeper is not None:
            deep_half = self.deeper_channels // 2
            deep_detail = T.narrow(deeper, 0, deep_half, deep_half)
            detail = T.concat([detail, T.upsample_nearest(deep_detail, 2)], 0)
        return self.merge(T.concat([context, detail], 0))


def block_ground_truth(mask: np.ndarray, grid: int) -> np.ndarray:
    """Coarse g x g target: a cell is 1 iff any of its pixels is foreground."""
    h, w = mask.shape
    if grid < 1 or h % grid or w % grid:
        raise ShapeError(f"grid {grid} does not divide mask {h}x{w}")
    blocks = np.asarray(mask).reshape(grid, h // grid, grid, w // grid)
    return blocks.max(axis=(1, 3)).astype(np.uint8)


@dataclass
class DecoderConfig:
    """Coarse grid size for global guidance and the token attention width."""

    grid: int = 4
    attention_width: int = 32

    def __post_init__(self):
        if self.grid < 1 or self.attention_width < 1:
            raise ConfigError(f"bad decoder config: {self}")


class GlobalSaliencyHead(Module):
    """Coarse saliency grid from all four levels via token self-attention.

    Every level is rearranged losslessly to grid x grid (pixel unshuffle when
    finer, pixel shuffle when coarser), adapted by a 3x3 conv + norm + relu,
    and flattened to g^2 tokens. Tokens are projected to the attention width,
    mixed by one softmax(QK^T/sqrt(d))V layer with a residual (no positional
    information, so the layer is token-permutation equivariant), refined by a
    two-layer MLP, and squashed to a (1, g, g) map in (0,1).
    """

    def __init__(self, rng, widths, level_sizes, grid: int, attention_width: int):
        self.grid = grid
        self.attention_width = attention_width
        self.rearrange = []
        adapt = []
        for channels, size in zip(widths, level_sizes):
            if size % grid == 0:
                factor = size // grid
                mode = ("keep", 1) if factor == 1 else ("unshuffle", factor)
                in_channels = channels * factor * factor
            elif grid % size == 0:
                factor = grid // size
                if channels % (factor * factor):
                    raise ConfigError(
                        f"cannot shuffle {channels} channels up by {factor} "
                        f"(level {size} to grid {grid})"
                    )
                mode = ("shuffle", factor)
                in_channels = channels // (factor * factor)
            else:
                raise ConfigError(f"grid {grid} incompatible with level size {size}")
            self.rearrange.append(mode)
            adapt.append(ConvNormRelu(rng, in_channels, channels, 3))
        self.adapt = adapt
        self.project = Linear(rng, sum(widths), attention_width)
        self.to_query = Linear(rng, attention_width, attention_width)
        self.to_key = Linear(rng, attention_width, attention_width)
        self.to_value = Linear(rng, attention_width, attention_width)
        self.refine_hidden = Linear(rng, attention_width, attention_width)
        self.refine_out = Linear(rng, attention_width, 1)

    def attention_weights(self, tokens) -> Tensor:
        """Row-stochastic (n, n) mixing weights for the given tokens."""
        q = self.to_query(tokens)
        k = self.to_key(tokens)
        logits = T.mul(1.0 / math.sqrt(self.attention_width), T.matmul(q, T.transpose2d(k)))
        return T.softmax(logits, axis=1)

    def attend(self, tokens) -> Tensor:
        """One self-attention layer over (n, width) tokens, with residual."""
        weights = self.attention_weights(tokens)
        return T.add(T.matmul(weights, self.to_value(tokens)), tokens)

    def __call__(self, feats) -> Tensor:
        planes = []
        for feat, (mode, factor), adapt in zip(feats, self.rearrange, self.adapt):
            if mode == "unshuffle":
                feat = T.pixel_unshuffle(feat, factor)
            elif mode == "shuffle":
                feat = T.pixel_shuffle(feat, factor)
            planes.append(adapt(feat))
        stack = T.concat(planes, 0)
        cells = self.grid * self.grid
        tokens = T.transpose2d(T.reshape(stack, (stack.shape[0], cells)))
        attended = self.attend(self.project(tokens))
        hidden = T.gelu(self.refine_hidden(attended))
        scores = T.sigmoid(self.refine_out(hidden))
        return T.reshape(T.transpose2d(scores), (1, self.grid, self.grid))


class TrimapHead(Module):
    """Per-level saliency sigmoid and three-way soft labeling (norm-free).

    The labeling conv sees the decoded feature re-weighted by its own
    saliency (d * p + d), and its softmax runs over the three channels:
    0 background, 1 object, 2 uncertain.
    """

    UNCERTAIN = 2

    def __init__(self, rng, channels):
        self.score = Conv2d(rng, channels, 1, 3)
        self.classify = Conv2d(rng, channels, 3, 3)

    def __call__(self, d):
        p = T.sigmoid(self.score(d))
        t = T.softmax(self.classify(T.add(T.mul(d, p), d)), axis=0)
        return p, t


class SaliencyDecoder(Module):
    """Bottom-up hierarchical decoding with global and uncertainty guidance.

    For i = 4..1: D_i = cross_scale(F_i, F_{i+1}); D_i += D_i * resize(G);
    D_i *= 1 + resize(deeper uncertainty); (P_i, T_i) = head(D_i). The
    deepest level has no deeper neighbour and skips both borrowings.
    """

    def __init__(self, rng, widths, level_sizes, config: DecoderConfig):
        self.merge = [
            CrossScaleFusion(rng, widths[i], widths[i + 1] if i < 3 else None)
            for i in range(4)
        ]
        self.global_head = GlobalSaliencyHead(
            rng, widths, level_sizes, config.grid, config.attention_width
        )
        self.heads = [TrimapHead(rng, widths[i]) for i in range(4)]

    def __call__(self, feats):
        block_map = self.global_head(feats)
        predictions = [None] * 4
        trimaps = [None] * 4
        deeper_trimap = None
        for i in (3, 2, 1, 0):
            deeper = feats[i + 1] if i < 3 else None
            d = self.merge[i](feats[i], deeper)
            _, h, w = d.shape
            d = T.add(d, T.mul(d, resize_to(block_map, h, w)))
            if deeper_trimap is not None:
                uncertain = T.narrow(deeper_trimap, 0, TrimapHead.UNCERTAIN, 1)
                d = T.mul(d, T.add(1.0, resize_to(uncertain, h, w)))
            predictions[i], trimaps[i] = self.heads[i](d)
            deeper_trimap = trimaps[i]
        return block_map, predictions, trimaps
