"""Iterative targeted sign-gradient attack with an l-infinity budget.

The perturbation recursion, with step size alpha (default 1 pixel unit)
and budget epsilon in 0-255 units:

    xi(0) = 0
    xi(n+1) = clip_eps( xi(n) - alpha * sgn(grad_x loss(x + xi(n), target)) )

sgn(0) = 0, so pixels with a silent gradient stay untouched. By default
x + xi is additionally clamped to the valid [0, 255] range after every
iteration; `clamp_valid=False` gives the budget-only behavior. The number
of iterations defaults to round-half-up(min(epsilon + 4, 1.25 * epsilon)).
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from .errors import ModelError, NumericalError, ShapeError

MASK_MODES = ("none", "posthoc", "inloop")


@runtime_checkable
class DifferentiableModel(Protocol):
    num_classes: int

    def predict(self, image): ...

    def loss_and_input_grad(self, image, target): ...


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float = 1.0
    iterations: object = "auto"  # "auto" or explicit non-negative int
    mask_mode: str = "none"
    clamp_valid: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.iterations != "auto" and (
            not isinstance(self.iterations, int) or self.iterations < 0
        ):
            raise ValueError(f"iterations must be 'auto' or int >= 0, got {self.iterations}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")

    def resolved_iterations(self):
        if self.iterations == "auto":
            return auto_iterations(self.epsilon)
        return self.iterations


@dataclass
class AttackResult:
    perturbation: np.ndarray        # xi, (3,H,W), within [-eps, eps]
    adversarial_image: np.ndarray   # x + (masked) xi
    loss_trace: list = field(default_factory=list)
    prediction: Optional[np.ndarray] = None


def auto_iterations(epsilon):
    """round-half-up(min(epsilon + 4, 1.25 * epsilon))"""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return int(math.floor(min(epsilon + 4.0, 1.25 * epsilon) + 0.5))


def clip_eps(xi, epsilon):
    """Elementwise projection onto [-epsilon, epsilon]."""
    return np.clip(xi, -epsilon, epsilon)


def apply_masked(image, xi, mask, clamp_valid=True):
    """x + xi * mask, then valid-range clamp.

    Pixels outside the mask come out bitwise equal to the input (adding a
    zero perturbation and clamping an in-range pixel are both exact).
    """
    mask = np.asarray(mask)
    if mask.shape != image.shape[1:]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match image spatial dims {image.shape[1:]}"
        )
    if xi.shape != image.shape:
        raise ShapeError(f"perturbation shape {xi.shape} != image shape {image.shape}")
    adv = image + xi * mask[None].astype(xi.dtype)
    if clamp_valid:
        adv = np.clip(adv, 0.0, 255.0).astype(image.dtype)
    return adv


def run_attack(model, image, target, config, mask=None):
    """Run the full recursion and return perturbation, image and prediction.

    `mask` (H,W boolean) is required for the posthoc and inloop mask modes:
    posthoc restricts the finished full-image perturbation to the mask,
    inloop multiplies every update step by it.
    """
    image = np.asarray(image)
    target = np.asarray(target)
    if config.mask_mode != "none":
        if mask is None:
            raise ValueError(f"mask_mode={config.mask_mode!r} requires a mask")
        mask = np.asarray(mask)
        if mask.shape != image.shape[1:]:
            raise ShapeError(
                f"mask shape {mask.shape} does not match image spatial dims {image.shape[1:]}"
            )
    eps = image.dtype.type(config.epsilon)
    alpha = image.dtype.type(config.alpha)
    xi = np.zeros_like(image)
    losses = []
    iterations = config.resolved_iterations()
    for n in range(iterations):
        try:
            loss, grad = model.loss_and_input_grad(image + xi, target)
        except ModelError as exc:
            raise type(exc)(f"model failed at iteration {n}: {exc}") from exc
        if not np.isfinite(loss) or not np.isfinite(grad).all():
            raise NumericalError(f"non-finite gradient at iteration {n}")
        step = alpha * np.sign(grad).astype(image.dtype)
        if config.mask_mode == "inloop":
            step = step * mask[None].astype(image.dtype)
        xi = clip_eps(xi - step, eps).astype(image.dtype)
        if config.clamp_valid:
            xi = (np.clip(image + xi, 0.0, 255.0) - image).astype(image.dtype)
        losses.append(float(loss))
    if config.mask_mode == "posthoc":
        adv = apply_masked(image, xi, mask, clamp_valid=config.clamp_valid)
    elif config.mask_mode == "inloop":
        adv = apply_masked(image, xi, mask, clamp_valid=config.clamp_valid)
    else:
        adv = image + xi
        if config.clamp_valid:
            adv = np.clip(adv, 0.0, 255.0).astype(image.dtype)
    prediction = model.predict(adv)
    return AttackResult(
        perturbation=xi,
        adversarial_image=adv,
        loss_trace=losses,
        prediction=prediction,
    )
