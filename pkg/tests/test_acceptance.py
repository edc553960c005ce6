"""Acceptance gates, one test per criterion.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line
per criterion. The heavy fixtures (dataset, trained model, epsilon sweep)
are shared session-wide, so the whole file costs one training run and one
sweep on top of the oracle checks.
"""

import time

import numpy as np

from segadv.attack import AttackConfig, apply_masked, auto_iterations, run_attack
from segadv.metrics import aggregate_sweep, pair_metrics
from segadv.model import SegModel
from segadv.ops import ConvSpec, conv2d, conv2d_grads
from segadv.oracle import (
    LoopbackTransport,
    ReferenceLinearModel,
    RemoteModel,
    Responder,
)
from segadv.targets import extract_mask, synthesize_target
from tests.test_targets import brute_force_target


def _rel(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


def test_acceptance_gradient_correctness():
    """Layer + composed gradients vs central finite differences, <1e-6."""
    start = time.monotonic()
    rng = np.random.default_rng(11)
    cases = 0
    specs = [ConvSpec(1, 0), ConvSpec(1, 1), ConvSpec(2, 1)]
    for trial in range(18):  # 18 trials x 3 tensors = 54 layer cases
        spec = specs[trial % 3]
        x = rng.normal(size=(2, 6, 6))
        k = rng.normal(size=(2, 2, 3, 3))
        b = rng.normal(size=2)
        oh, ow = spec.out_size(6, 3), spec.out_size(6, 3)
        proj = rng.normal(size=(2, oh, ow))

        def scalar(xx, kk, bb):
            return float((conv2d(xx, kk, bb, spec) * proj).sum())

        gi, gw, gb = conv2d_grads(x, k, b, spec, proj)
        for tensor, grad in ((x, gi), (k, gw), (b, gb)):
            flat = tensor.ravel()
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + 1e-5
                fp = scalar(x, k, b)
                flat[i] = orig - 1e-5
                fm = scalar(x, k, b)
                flat[i] = orig
                fd[i] = (fp - fm) / 2e-5
            assert _rel(grad.ravel(), fd) < 1e-6
            cases += 1
    assert cases >= 50

    model = SegModel.init(seed=5, dtype=np.float64)
    composed = 0
    for _ in range(20):
        image = rng.uniform(0, 255, size=(3, 8, 8))
        target = rng.integers(0, 5, size=(8, 8))
        _, grad = model.loss_and_input_grad(image, target)
        d = rng.normal(size=image.shape)
        d /= np.abs(d).max()
        lp, _ = model.loss_and_input_grad(image + 1e-3 * d, target)
        lm, _ = model.loss_and_input_grad(image - 1e-3 * d, target)
        fd = (lp - lm) / 2e-3
        an = float((grad * d).sum())
        assert abs(an - fd) < 1e-6 * max(abs(an), abs(fd), 1e-9)
        composed += 1
    assert composed >= 20
    assert time.monotonic() - start < 60.0


def test_acceptance_target_synthesis_oracle():
    """synthesize_target == O(N^2) brute force on 100 random 32x32 maps."""
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    for trial in range(100):
        density = rng.uniform(0.1, 0.9)
        pred = np.where(rng.random((32, 32)) < density,
                        4, rng.integers(0, 4, size=(32, 32)))
        if not (pred != 4).any():
            pred[0, 0] = 0
        np.testing.assert_array_equal(synthesize_target(pred, 4),
                                      brute_force_target(pred, 4))
    # engineered tie: equidistant classes resolve to the smallest index
    np.testing.assert_array_equal(synthesize_target(np.array([[1, 4, 2]]), 4),
                                  np.array([[1, 1, 2]]))
    assert time.monotonic() - start < 30.0


def test_acceptance_attack_invariants(trained, val_scenes, sweep_results):
    """Per-iteration budget + range invariants across the 50-image sweep;
    eps=0 bitwise identity; posthoc byte-identity outside the mask."""
    assert sweep_results["violations"] == []
    model, _ = trained
    image, _ = val_scenes[0]
    pred = model.predict(image)
    target = synthesize_target(pred, 4)
    zero = run_attack(model, image, target, AttackConfig(epsilon=0))
    np.testing.assert_array_equal(zero.adversarial_image, image)
    mask = extract_mask(pred, 4)
    free = run_attack(model, image, target, AttackConfig(epsilon=16))
    adv = apply_masked(image, free.perturbation, mask)
    np.testing.assert_array_equal(adv[:, ~mask], image[:, ~mask])
    assert adv.min() >= 0.0 and adv.max() <= 255.0


def test_acceptance_iteration_schedule():
    """auto_iterations = round-half-up(min(eps+4, 1.25*eps))."""
    assert auto_iterations(10) == 13
    assert auto_iterations(16) == 20
    assert auto_iterations(0) == 0


def test_acceptance_model_quality(trained):
    """Default training (seed 7, 200 images) reaches held-out mIoU >= 0.80."""
    _, log = trained
    assert log.final_miou() >= 0.80, f"mIoU {log.final_miou():.4f}"


def test_acceptance_attack_effectiveness(sweep_results):
    """Mean fooled >= 0.85 and preserved >= 0.95 at eps=10; fooled grows
    from eps=1 to eps=10."""
    report = aggregate_sweep(sweep_results["records"]["none"])
    by_eps = {row.epsilon: row for row in report.rows}
    assert by_eps[10.0].mean_fooled >= 0.85, by_eps[10.0]
    assert by_eps[10.0].mean_preserved >= 0.95, by_eps[10.0]
    assert by_eps[10.0].mean_fooled > by_eps[1.0].mean_fooled


def test_acceptance_restricted_attack(sweep_results, tmp_path):
    """Posthoc-masked attack at eps=16 fools >= 0.5; curves emitted."""
    from segadv.report import emit_report
    report = aggregate_sweep(sweep_results["records"]["posthoc"])
    by_eps = {row.epsilon: row for row in report.rows}
    assert by_eps[16.0].mean_fooled >= 0.5, by_eps[16.0]
    emit_report(report, tmp_path, class_c=4)
    assert (tmp_path / "sweep.csv").exists()
    assert (tmp_path / "sweep.svg").exists()


def test_acceptance_metrics_oracle(tmp_path):
    """pair_metrics/aggregate_sweep vs brute force within 1e-12; golden
    bytes for sweep.csv and sweep.svg."""
    rng = np.random.default_rng(99)
    records = []
    for _ in range(30):
        orig = rng.integers(0, 5, size=(8, 8))
        adv = rng.integers(0, 5, size=(8, 8))
        pm = pair_metrics(orig, adv, 4)
        n_s = int((orig == 4).sum())
        if n_s:
            brute = sum(1 for y in range(8) for x in range(8)
                        if orig[y, x] == 4 and adv[y, x] != 4) / n_s
            assert abs(pm.fooled - brute) < 1e-12
        n_b = 64 - n_s
        if n_b:
            brute = sum(1 for y in range(8) for x in range(8)
                        if orig[y, x] != 4 and adv[y, x] == orig[y, x]) / n_b
            assert abs(pm.preserved - brute) < 1e-12
        if pm.fooled is not None and pm.preserved is not None:
            records.append((float(rng.integers(1, 4)), pm))
    report = aggregate_sweep(records)
    for row in report.rows:
        vals = [pm.fooled for eps, pm in records if eps == row.epsilon]
        mean = sum(vals) / len(vals)
        assert abs(row.mean_fooled - mean) < 1e-12
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        assert abs(row.std_fooled - var ** 0.5) < 1e-12

    import os
    from segadv.report import emit_report
    from tests.test_metrics import GOLDEN, fixed_report
    emit_report(fixed_report(), tmp_path, class_c=4)
    for name in ("sweep.csv", "sweep.svg"):
        assert (tmp_path / name).read_bytes() == \
            open(os.path.join(GOLDEN, name), "rb").read()


def test_acceptance_loopback_oracle_equivalence():
    """Attack via the wire client == direct in-process model, bitwise xi."""
    rng = np.random.default_rng(12)
    image = rng.uniform(0, 255, size=(3, 8, 8)).astype(np.float32)
    direct = ReferenceLinearModel()
    target = ((direct.predict(image) + 1) % 5).astype(np.int64)
    remote = RemoteModel(LoopbackTransport(Responder(ReferenceLinearModel())))
    for eps in (4, 10):
        config = AttackConfig(epsilon=eps)
        xi_direct = run_attack(direct, image, target, config).perturbation
        xi_remote = run_attack(remote, image, target, config).perturbation
        np.testing.assert_array_equal(xi_remote, xi_direct)
