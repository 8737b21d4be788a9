"""Training loop, adaptive-moment optimizer, and the gradient-check harness.

Everything here is deterministic: given the same seed, build, and inputs, the
loss trajectory reproduces bit for bit (pure numpy math, fixed iteration
order, no threading). Non-finite losses or gradients abort immediately with
the earliest offending tensor named, rather than training into garbage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NumericError
from .losses import compute_losses, mean_absolute_error
from .model import group_bands
from .tensor import Tape, Tensor


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    level_weights: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"step count must be >= 1, got {self.steps}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"moment decays must lie in [0,1): {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ConfigError("optimizer epsilon must be positive")
        self.level_weights = tuple(float(w) for w in self.level_weights)
        if len(self.level_weights) != 4 or any(w < 0 for w in self.level_weights):
            raise ConfigError(f"need 4 non-negative level weights, got {self.level_weights}")


class AdamOptimizer:
    """Bias-corrected adaptive moments over the trainable parameters."""

    def __init__(self, parameters, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.parameters = [p for p in parameters if p.trainable]
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first = [np.zeros_like(p.value.data) for p in self.parameters]
        self.second = [np.zeros_like(p.value.data) for p in self.parameters]
        self.updates = 0

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self) -> None:
        self.updates += 1
        scale1 = 1.0 - self.beta1 ** self.updates
        scale2 = 1.0 - self.beta2 ** self.updates
        for p, m, v in zip(self.parameters, self.first, self.second):
            g = p.grad.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value.data -= self.learning_rate * (m / scale1) / (
                np.sqrt(v / scale2) + self.epsilon
            )


def _abort_non_finite(tape: Tape, context: str):
    found = tape.first_non_finite()
    if found is None:
        raise NumericError(f"{context}, but every taped tensor is finite")
    index, op, out = found
    raise NumericError(
        f"{context}; first non-finite tensor came from op '{op}' "
        f"(tape record {index}, shape {out.shape})"
    )


def _check_gradients_finite(parameters, step_label: str) -> None:
    for p in parameters:
        if not np.isfinite(p.grad.data).all():
            raise NumericError(f"non-finite gradient for {p.name or 'parameter'} at {step_label}")


def train_step(model, cube_values, mask, optimizer, level_weights=(1.0, 1.0, 1.0, 1.0)):
    """One forward/backward/update on a single (cube, mask) pair."""
    optimizer.zero_grad()
    with Tape() as tape:
        output = model(cube_values)
        total, report = compute_losses(output, cube_values, mask, level_weights)
    if not np.isfinite(report.total):
        _abort_non_finite(tape, f"loss is {report.total}")
    tape.backward(total)
    _check_gradients_finite(optimizer.parameters, f"update {optimizer.updates + 1}")
    optimizer.step()
    return report


def write_log_line(stream, step: int, report) -> None:
    """One JSON line per step with the fixed wire keys."""
    stream.write(
        json.dumps(
            {
                "step": step,
                "L_s": report.reconstruction,
                "L_sod": report.saliency,
                "L_g": report.global_guidance,
                "L_m": report.total,
            }
        )
        + "\n"
    )


def train_loop(model, examples, config: TrainConfig, log_stream=None):
    """Cycle through (cube, mask) examples for config.steps updates.

    Returns the per-step LossReport list; each report is evaluated at the
    parameters before that step's update, so reports[0] is the untrained loss.
    """
    if not examples:
        raise ConfigError("training needs at least one (cube, mask) example")
    optimizer = AdamOptimizer(
        model.parameters(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    )
    reports = []
    for step in range(1, config.steps + 1):
        cube_values, mask = examples[(step - 1) % len(examples)]
        report = train_step(model, cube_values, mask, optimizer, config.level_weights)
        reports.append(report)
        if log_stream is not None:
            write_log_line(log_stream, step, report)
    return reports


def fit_reconstruction(encoder, cube_values, band_group: int, steps: int,
                       learning_rate: float = 1e-3):
    """Train only the encoder on its reconstruction error for one cube.

    Returns the per-step loss values (pre-update, so index 0 is the initial
    error). Used to show the restoration head actually learns the spectra.
    """
    cube_values = np.asarray(cube_values, dtype=float)
    grouped = group_bands(cube_values, band_group)
    optimizer = AdamOptimizer(encoder.parameters(), learning_rate)
    history = []
    for step in range(1, steps + 1):
        optimizer.zero_grad()
        with Tape() as tape:
            _, restored = encoder(Tensor(grouped))
            loss = mean_absolute_error(restored, cube_values)
        value = loss.item()
        if not np.isfinite(value):
            _abort_non_finite(tape, f"reconstruction loss is {value} at step {step}")
        tape.backward(loss)
        _check_gradients_finite(optimizer.parameters, f"reconstruction step {step}")
        optimizer.step()
        history.append(value)
    return history


# ---------------------------------------------------------------------------
# finite-difference gradient audit


def jitter_parameters(parameters, scale: float = 1e-3, seed: int = 0) -> None:
    """Nudge every parameter so the model sits at a generic point.

    Symmetric initialization puts some activations exactly on relu kinks
    (zero-init biases plus exactly-mean-free normalized maps cancel to 0 on
    degenerate 1x1 levels), where finite differences and subgradients
    legitimately disagree. Gradient checks perturb away from that
    measure-zero set first; training never needs this.
    """
    rng = np.random.default_rng(seed)
    for p in parameters:
        p.value.data += rng.uniform(-scale, scale, size=p.value.data.shape)


def parameter_group(name: str) -> str:
    """Bucket a dotted parameter path for the gradient audit."""
    parts = name.split(".")
    leaf = parts[-1]
    if leaf == "head_scales":
        return "attention_scales"
    if leaf in ("avg_gain", "max_gain"):
        return "pool_gains"
    if len(parts) >= 2 and parts[-2] == "norm":
        return "norm_affine"
    if leaf == "bias":
        return "biases"
    parent = parts[-2] if len(parts) >= 2 else ""
    if parent in ("to_query", "to_key", "to_value", "project",
                  "refine_hidden", "refine_out"):
        return "attention_projections"
    if parent == "to_out":
        return "attention_output"
    return "conv_kernels"


@dataclass
class GroupCheckReport:
    group: str
    checked: int
    max_rel_error: float
    worst_parameter: str
    worst_index: tuple


def _central_difference(loss_builder, values, idx, step):
    origin = values[idx]
    values[idx] = origin + step
    upper = float(loss_builder().data)
    values[idx] = origin - step
    lower = float(loss_builder().data)
    values[idx] = origin
    return (upper - lower) / (2.0 * step)


def grad_check_suite(named_parameters, loss_builder, samples_per_group: int = 20,
                     step: float = 1e-5, seed: int = 0):
    """Tape gradients vs. central finite differences, sampled per group.

    ``loss_builder`` must rebuild the scalar loss from the parameters' current
    values; it runs once under a tape and then four times per sampled scalar
    without one. Relative errors use an absolute floor of 1e-5 so gradients
    near zero are compared at the finite-difference noise scale instead of
    blowing up the ratio.

    Finite differences only measure gradients where the loss is smooth across
    the probe interval. Coordinates whose relu-style kinks fall inside the
    interval (detected by comparing the estimates at step and step/2, which
    disagree at O(1) across a kink but at O(step^2) on smooth stretches) are
    swapped for other coordinates of the same group; a genuinely wrong tape
    gradient keeps its consistent finite difference and is still reported.
    """
    params = list(named_parameters)
    for _, p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_builder()
    tape.backward(loss)

    groups = {}
    for name, p in params:
        if not p.trainable:
            continue  # frozen values never reach the tape; FD would false-alarm
        groups.setdefault(parameter_group(name), []).append((name, p))

    rng = np.random.default_rng(seed)
    reports = []
    for group in sorted(groups):
        coords = [
            (name, p, idx)
            for name, p in groups[group]
            for idx in np.ndindex(p.value.data.shape)
        ]
        order = rng.permutation(len(coords))
        measured = []
        skipped = []
        for pos in order:
            if len(measured) >= samples_per_group:
                break
            name, p, idx = coords[pos]
            fd = _central_difference(loss_builder, p.value.data, idx, step)
            fd_half = _central_difference(loss_builder, p.value.data, idx, step / 2.0)
            if abs(fd - fd_half) > max(1e-6, 1e-3 * max(abs(fd), abs(fd_half))):
                skipped.append((name, p, idx, fd))
                continue
            measured.append((name, p, idx, fd))
        # degenerate fallback: a group so kink-ridden it cannot fill its
        # quota still reports its non-smooth coordinates honestly
        while len(measured) < samples_per_group and skipped:
            measured.append(skipped.pop(0))

        worst_rel, worst_name, worst_index = 0.0, "", ()
        for name, p, idx, fd in measured:
            got = float(p.grad.data[idx])
            rel = abs(fd - got) / max(1e-5, abs(fd), abs(got))
            if rel > worst_rel:
                worst_rel, worst_name, worst_index = rel, name, idx
        reports.append(
            GroupCheckReport(group, len(measured), worst_rel, worst_name, worst_index)
        )
    return reports


def failing_groups(reports, tolerance: float):
    return [r for r in reports if r.max_rel_error >= tolerance]
