"""Full pipeline assembly: band grouping, spectral encoder, backbone, decoder.

The model consumes a raw reflectance cube (bands, H, W) as a plain array,
averages every ``band_group`` adjacent bands (a fixed, parameter-free
reduction), and runs the taped network on the grouped cube. It returns every
supervised quantity: the full-resolution saliency map, per-level maps and
three-way labelings, the coarse global grid, and the reconstructed cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, ShapeError
from .nn import Module
from .saliency_net import (
    BackboneConfig,
    DecoderConfig,
    HighResBackbone,
    SaliencyDecoder,
)
from .spectral_attention import EncoderConfig, SpectralEncoder
from .tensor import Tensor


def group_bands(values: np.ndarray, factor: int) -> np.ndarray:
    """Average each run of ``factor`` adjacent bands of a (C, H, W) array."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise ShapeError(f"expected a (bands, H, W) array, got {values.shape}")
    c, h, w = values.shape
    if factor < 1 or c % factor:
        raise ShapeError(f"group factor {factor} does not divide {c} bands")
    return values.reshape(c // factor, factor, h, w).mean(axis=1)


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    input_size: int = 64

    def __post_init__(self):
        need = 8 * self.backbone.stem_stride
        if self.input_size < need or self.input_size % need:
            raise ConfigError(
                f"input size {self.input_size} must be a positive multiple of {need}"
            )
        grid = self.decoder.grid
        for size in self.level_sizes():
            if size % grid and grid % size:
                raise ConfigError(
                    f"decoder grid {grid} shares no integer factor with level size {size}"
                )

    def level_sizes(self) -> list:
        base = self.input_size // self.backbone.stem_stride
        return [base // (1 << i) for i in range(4)]


def tiny_model_config() -> ModelConfig:
    """Smallest constructible model, used by gradient checks: 8x8x8 input.

    A single attention head keeps the per-head temperature live (two heads on
    two grouped bands would give constant 1x1 softmaxes with zero gradient).
    """
    return ModelConfig(
        encoder=EncoderConfig(bands=8, band_group=4, heads=1, blocks=1),
        backbone=BackboneConfig(stem_stride=1),
        decoder=DecoderConfig(grid=2, attention_width=16),
        input_size=8,
    )


def demo_model_config(bands: int = 8, input_size: int = 32) -> ModelConfig:
    """Desk-scale model for the seeded training demonstrations (32x32x8)."""
    return ModelConfig(
        encoder=EncoderConfig(bands=bands, band_group=4, heads=1, blocks=1),
        backbone=BackboneConfig(stem_stride=1),
        decoder=DecoderConfig(grid=4, attention_width=16),
        input_size=input_size,
    )


def default_model_config(bands: int = 32, input_size: int = 64) -> ModelConfig:
    return ModelConfig(encoder=EncoderConfig(bands=bands), input_size=input_size)


@dataclass
class ModelOutput:
    """Everything the loss needs from one forward pass (all taped Tensors)."""

    saliency: Tensor  # (1, H, W) in (0,1), full input resolution
    restored: Tensor  # (bands, H, W) reconstruction of the raw cube
    block_saliency: Tensor  # (1, g, g) coarse global grid in (0,1)
    level_predictions: list  # four (1, h_i, w_i) sigmoid maps, fine to coarse
    trimaps: list  # four (3, h_i, w_i) per-pixel distributions

    def saliency_map(self) -> np.ndarray:
        """Plain (H, W) float array of the final saliency values."""
        return self.saliency.data[0]


class SaliencyModel(Module):
    """End-to-end network; construction order fixes the rng draw sequence."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig):
        self.config = config
        self.encoder = SpectralEncoder(rng, config.encoder)
        self.backbone = HighResBackbone(
            rng, config.encoder.working_bands, config.backbone
        )
        self.decoder = SaliencyDecoder(
            rng, config.backbone.widths, config.level_sizes(), config.decoder
        )
        self.assign_parameter_names()

    def __call__(self, cube_values: np.ndarray) -> ModelOutput:
        cube_values = np.asarray(cube_values, dtype=float)
        expect = (self.config.encoder.bands, self.config.input_size, self.config.input_size)
        if cube_values.shape != expect:
            raise ShapeError(f"model expects a {expect} cube, got {cube_values.shape}")
        grouped = group_bands(cube_values, self.config.encoder.band_group)
        features, restored = self.encoder(Tensor(grouped))
        pyramid = self.backbone(features)
        block_map, predictions, trimaps = self.decoder(pyramid)
        stride = self.config.backbone.stem_stride
        saliency = (
            T.upsample_nearest(predictions[0], stride) if stride > 1 else predictions[0]
        )
        return ModelOutput(saliency, restored, block_map, predictions, trimaps)
