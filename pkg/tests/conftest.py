"""Shared fixtures: the standard synthetic dataset, a trained model, and a
full epsilon sweep with in-loop invariant monitoring.

The expensive fixtures are session-scoped; the whole suite trains exactly
one model and runs exactly one sweep.
"""

import numpy as np
import pytest

from segadv.attack import AttackConfig, apply_masked, run_attack
from segadv.metrics import pair_metrics
from segadv.model import SegModel, TrainConfig, train
from segadv.pngio import load_split
from segadv.scenegen import PERSON_CLASS, SceneConfig, write_dataset
from segadv.targets import extract_mask, synthesize_target

SWEEP_EPSILONS = (1.0, 2.0, 4.0, 8.0, 10.0, 16.0)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    write_dataset(str(out), SceneConfig(rng_seed=7), 250)
    return out


@pytest.fixture(scope="session")
def train_scenes(dataset_dir):
    return load_split(str(dataset_dir / "manifest.json"), "train")


@pytest.fixture(scope="session")
def val_scenes(dataset_dir):
    return load_split(str(dataset_dir / "manifest.json"), "val")


@pytest.fixture(scope="session")
def trained(train_scenes, val_scenes):
    """(model, train log) for the standard run: seed 7, default config."""
    model = SegModel.init(seed=7)
    log = train(model, train_scenes, val_scenes, TrainConfig(rng_seed=7))
    return model, log


class MonitoredModel:
    """Model proxy that checks the attack invariants at every iteration.

    run_attack re-evaluates the model on image + xi each step, so each
    gradient call observes one intermediate perturbation state.
    """

    def __init__(self, model):
        self.model = model
        self.num_classes = model.num_classes
        self.reference = None
        self.epsilon = None
        self.violations = []

    def watch(self, image, epsilon):
        self.reference = image
        self.epsilon = epsilon

    def _check(self, image):
        xi = image - self.reference
        linf = float(np.abs(xi).max())
        if linf > self.epsilon + 1e-4:
            self.violations.append(f"linf {linf} > eps {self.epsilon}")
        if image.min() < -1e-4 or image.max() > 255.0 + 1e-4:
            self.violations.append(
                f"pixel range [{image.min()}, {image.max()}] outside [0,255]"
            )

    def predict(self, image):
        return self.model.predict(image)

    def loss_and_input_grad(self, image, target):
        if self.reference is not None:
            self._check(image)
        return self.model.loss_and_input_grad(image, target)


@pytest.fixture(scope="session")
def sweep_results(trained, val_scenes):
    """Per-image metrics for the full and posthoc-restricted sweeps.

    Returns dict mode -> list of (epsilon, PairMetrics), plus the recorded
    invariant violations (expected empty) and zero-epsilon identity flags.
    """
    model, _ = trained
    monitored = MonitoredModel(model)
    records = {"none": [], "posthoc": []}
    for image, _labels in val_scenes:
        pred_orig = model.predict(image)
        if not (pred_orig == PERSON_CLASS).any():
            continue
        target = synthesize_target(pred_orig, PERSON_CLASS)
        mask = extract_mask(pred_orig, PERSON_CLASS)
        for eps in SWEEP_EPSILONS:
            monitored.watch(image, eps)
            result = run_attack(monitored, image, target, AttackConfig(epsilon=eps))
            records["none"].append(
                (eps, pair_metrics(pred_orig, result.prediction, PERSON_CLASS))
            )
            adv = apply_masked(image, result.perturbation, mask)
            records["posthoc"].append(
                (eps, pair_metrics(pred_orig, model.predict(adv), PERSON_CLASS))
            )
    return {"records": records, "violations": monitored.violations}
