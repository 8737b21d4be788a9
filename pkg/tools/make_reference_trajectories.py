"""Regenerate the committed seeded loss trajectories under tests/reference/.

The acceptance suite replays the same seeded runs and compares against these
files bit-exactly, so any change to initialization order, optimizer math, or
the loss graph shows up as a diff here. Floats are stored as hex strings to
survive JSON round trips without rounding.

Run from the repository root:

    python3 tools/make_reference_trajectories.py
"""

import json
from pathlib import Path

import numpy as np

from specsal.model import EncoderConfig, SaliencyModel, SpectralEncoder, demo_model_config
from specsal.scenes import (
    reconstruction_demo_scene_spec,
    synth_scene,
    training_demo_scene_spec,
)
from specsal.training import TrainConfig, fit_reconstruction, train_loop

REFERENCE_DIR = Path(__file__).resolve().parent.parent / "tests" / "reference"


def training_demo_trajectory() -> dict:
    cube, mask = synth_scene(training_demo_scene_spec(), seed=0)
    model = SaliencyModel(np.random.default_rng(0), demo_model_config())
    config = TrainConfig(seed=0, steps=100)
    reports = train_loop(model, [(cube.data, mask.astype(np.float64))], config)
    return {
        "scene": "training-demo",
        "scene_seed": 0,
        "model_seed": 0,
        "steps": config.steps,
        "columns": {
            "L_s": [r.reconstruction.hex() for r in reports],
            "L_sod": [r.saliency.hex() for r in reports],
            "L_g": [r.global_guidance.hex() for r in reports],
            "L_m": [r.total.hex() for r in reports],
        },
    }


def reconstruction_demo_trajectory() -> dict:
    cube, _ = synth_scene(reconstruction_demo_scene_spec(), seed=0)
    config = EncoderConfig()
    encoder = SpectralEncoder(np.random.default_rng(0), config)
    history = fit_reconstruction(encoder, cube.data, config.band_group, steps=200)
    return {
        "scene": "reconstruction-demo",
        "scene_seed": 0,
        "encoder_seed": 0,
        "steps": 200,
        "loss": [value.hex() for value in history],
    }


def main() -> None:
    REFERENCE_DIR.mkdir(parents=True, exist_ok=True)
    for name, build in (
        ("training_demo", training_demo_trajectory),
        ("reconstruction_demo", reconstruction_demo_trajectory),
    ):
        doc = build()
        path = REFERENCE_DIR / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
