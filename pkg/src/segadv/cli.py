"""Command-line pipeline: data generation, training, attacks, sweeps.

Every command accepts ``--config FILE`` (a JSON object whose keys mirror
the flag names; explicit flags win) and echoes its effective settings to
``run_config.json`` in the output directory, so any result can be
regenerated from the artifacts alone.

Exit codes: 0 success, 2 usage, 3 data/format or I/O, 4 numerical failure
(including an all-target-class prediction with no fill source).
"""

import json
import os
import sys

import click
import numpy as np

from .attack import AttackConfig, apply_masked, auto_iterations, run_attack
from .errors import (
    CheckpointError,
    DataError,
    ModelError,
    NoBackgroundClassError,
    NumericalError,
    SegAdvError,
    ShapeError,
)
from .metrics import aggregate_sweep, pair_metrics
from .model import SegModel, TrainConfig, load_checkpoint, save_checkpoint, train
from .oracle import RemoteModel, open_transport
from .pngio import (
    quantize_image,
    read_image_png,
    read_manifest,
    read_labels_png,
    write_image_png,
    write_labels_png,
)
from .report import (
    colorize_labels,
    diff_panel,
    emit_report,
    noise_panel,
    write_panel_strip,
)
from .scenegen import PERSON_CLASS, SceneConfig, write_dataset
from .targets import extract_mask, synthesize_target


@click.group()
def cli():
    """Adversarial perturbation toolkit for semantic segmentation."""


def _effective_params(ctx):
    """Overlay the JSON config file under explicitly given flags."""
    params = dict(ctx.params)
    config_path = params.pop("config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise DataError(f"{config_path}: invalid JSON: {exc}")
        if not isinstance(doc, dict):
            raise DataError(f"{config_path}: config must be a JSON object")
        unknown = set(doc) - set(params)
        if unknown:
            raise click.UsageError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        from click.core import ParameterSource
        for key, value in doc.items():
            if ctx.get_parameter_source(key) != ParameterSource.COMMANDLINE:
                params[key] = value
    return params


def _echo_run_config(params, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_size(size):
    try:
        h, w = (int(p) for p in size.lower().split("x"))
    except ValueError:
        raise click.UsageError(f"--size must look like 64x64, got {size!r}")
    if h % 4 or w % 4 or h < 8 or w < 8:
        raise click.UsageError(
            f"--size {size}: extents must be >= 8 and divisible by 4"
        )
    return h, w


def _load_model(model_path, oracle):
    if (model_path is None) == (oracle is None):
        raise click.UsageError("give exactly one of --model or --oracle")
    if oracle is not None:
        try:
            return RemoteModel(open_transport(oracle))
        except ValueError as exc:
            raise click.UsageError(str(exc))
    return load_checkpoint(model_path)


def _load_split_records(data_dir, split):
    manifest = os.path.join(data_dir, "manifest.json")
    out = []
    for rec in read_manifest(manifest):
        if split != "all" and rec["split"] != split:
            continue
        image = read_image_png(os.path.join(data_dir, rec["image_path"]))
        labels = read_labels_png(os.path.join(data_dir, rec["label_path"]))
        out.append((os.path.splitext(rec["image_path"])[0], image, labels))
    if not out:
        raise DataError(f"no images in split {split!r} of {data_dir}")
    return out


def _predict(model, image, quantized):
    if quantized:
        image = quantize_image(image).astype(np.float32)
    return model.predict(image)


@cli.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--count", default=250, show_default=True, type=int)
@click.option("--size", default="64x64", show_default=True)
@click.option("--force", is_flag=True, default=False)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def gen_data(ctx, **_kwargs):
    """Generate a synthetic segmentation dataset with a train/val manifest."""
    p = _effective_params(ctx)
    h, w = _parse_size(p["size"])
    if p["count"] < 1:
        raise click.UsageError("--count must be positive")
    out_dir = p["out_dir"]
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not p["force"]:
        raise DataError(f"{out_dir} exists and is not empty (use --force)")
    config = SceneConfig(height=h, width=w, rng_seed=p["seed"])
    records = write_dataset(out_dir, config, p["count"])
    _echo_run_config(p, out_dir)
    n_val = sum(r["split"] == "val" for r in records)
    click.echo(f"wrote {len(records)} scenes ({len(records) - n_val} train / {n_val} val) to {out_dir}")


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=15, show_default=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--lr", default=0.05, show_default=True, type=float)
@click.option("--momentum", default=0.9, show_default=True, type=float)
@click.option("--batch-size", default=8, show_default=True, type=int)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def train_cmd(ctx, **_kwargs):
    """Train the built-in segmentation network on a generated dataset."""
    p = _effective_params(ctx)
    train_scenes = [(img, lab) for _, img, lab in
                    _load_split_records(p["data_dir"], "train")]
    val_scenes = [(img, lab) for _, img, lab in
                  _load_split_records(p["data_dir"], "val")]
    model = SegModel.init(seed=p["seed"])
    config = TrainConfig(
        rng_seed=p["seed"], learning_rate=p["lr"], momentum=p["momentum"],
        epochs=p["epochs"], batch_size=p["batch_size"],
    )
    log = train(model, train_scenes, val_scenes, config)
    save_checkpoint(model, p["out_path"])
    out_dir = os.path.dirname(os.path.abspath(p["out_path"]))
    log_path = os.path.splitext(p["out_path"])[0] + ".train_log.csv"
    with open(log_path, "w") as fh:
        fh.write("epoch,train_loss,val_miou\n")
        for row in log.epochs:
            fh.write(f"{row.epoch},{row.train_loss:.6f},{row.val_miou:.6f}\n")
    _echo_run_config(p, out_dir)
    if log.epochs:
        click.echo(f"final held-out mean IoU: {log.final_miou():.4f}")
    else:
        from .model import evaluate_miou
        click.echo(f"final held-out mean IoU: {evaluate_miou(model, val_scenes):.4f}")


def _resolve_iterations(raw):
    if raw in (None, "auto"):
        return "auto"
    try:
        return int(raw)
    except ValueError:
        raise click.UsageError(f"--iterations must be an integer or 'auto', got {raw!r}")


@cli.command("attack")
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--oracle", default=None, help="tcp:HOST:PORT or stdio:CMD")
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--class-c", default=PERSON_CLASS, show_default=True, type=int)
@click.option("--epsilon", required=True, type=float)
@click.option("--iterations", default="auto", show_default=True)
@click.option("--alpha", default=1.0, show_default=True, type=float)
@click.option("--mask", "mask_mode", default="none", show_default=True,
              type=click.Choice(["none", "posthoc", "inloop"]))
@click.option("--clamp/--no-clamp", "clamp_valid", default=True, show_default=True)
@click.option("--quantized-eval", is_flag=True, default=False)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def attack_cmd(ctx, **_kwargs):
    """Attack a single image and emit the full qualitative panel set."""
    p = _effective_params(ctx)
    model = _load_model(p["model_path"], p["oracle"])
    image = read_image_png(p["image_path"])
    class_c = p["class_c"]
    if class_c < 0 or class_c >= model.num_classes:
        raise click.UsageError(
            f"--class-c {class_c} outside [0,{model.num_classes})"
        )
    pred_orig = model.predict(image)
    target = synthesize_target(pred_orig, class_c)
    mask = extract_mask(pred_orig, class_c)
    config = AttackConfig(
        epsilon=p["epsilon"], alpha=p["alpha"],
        iterations=_resolve_iterations(p["iterations"]),
        mask_mode=p["mask_mode"], clamp_valid=p["clamp_valid"],
    )
    result = run_attack(model, image, target, config,
                        mask=mask if p["mask_mode"] != "none" else None)
    pred_adv = result.prediction
    if p["quantized_eval"]:
        pred_adv = _predict(model, result.adversarial_image, quantized=True)
    pm = pair_metrics(pred_orig, pred_adv, class_c)

    out_dir = p["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    write_image_png(image, os.path.join(out_dir, "original.png"))
    write_image_png(result.adversarial_image, os.path.join(out_dir, "adversarial.png"))
    write_image_png(noise_panel(result.perturbation), os.path.join(out_dir, "noise.png"))
    write_labels_png(target, os.path.join(out_dir, "target.png"))
    write_labels_png(pred_orig, os.path.join(out_dir, "pred_orig.png"))
    write_labels_png(pred_adv, os.path.join(out_dir, "pred_adv.png"))
    write_image_png(diff_panel(pred_orig, pred_adv), os.path.join(out_dir, "diff.png"))
    write_image_png(colorize_labels(pred_adv), os.path.join(out_dir, "pred_adv_color.png"))
    write_panel_strip(os.path.join(out_dir, "panel.png"),
                      image, result.adversarial_image, target, pred_orig, pred_adv)
    metrics = {
        "image": os.path.basename(p["image_path"]),
        "epsilon": p["epsilon"],
        "iterations": config.resolved_iterations(),
        "mask_mode": p["mask_mode"],
        "fooled": pm.fooled,
        "preserved": pm.preserved,
        "n_class_pixels": pm.n_class_pixels,
        "n_background_pixels": pm.n_background_pixels,
        "loss_trace": result.loss_trace,
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2)
        fh.write("\n")
    _echo_run_config(p, out_dir)
    fooled = "n/a" if pm.fooled is None else f"{pm.fooled:.4f}"
    preserved = "n/a" if pm.preserved is None else f"{pm.preserved:.4f}"
    click.echo(f"fooled={fooled} preserved={preserved}")


def _parse_epsilons(raw):
    if isinstance(raw, (list, tuple)):
        values = [float(v) for v in raw]
    else:
        parts = [s for s in str(raw).split(",") if s.strip()]
        try:
            values = [float(s) for s in parts]
        except ValueError:
            raise click.UsageError(f"--epsilons must be comma-separated numbers, got {raw!r}")
    if not values:
        raise click.UsageError("--epsilons list is empty")
    if any(v < 0 for v in values):
        raise click.UsageError("epsilon values must be >= 0")
    return values


def _parse_masks(raw):
    if isinstance(raw, (list, tuple)):
        modes = list(raw)
    else:
        modes = [s.strip() for s in str(raw).split(",") if s.strip()]
    if not modes:
        raise click.UsageError("--mask list is empty")
    for m in modes:
        if m not in ("none", "posthoc", "inloop"):
            raise click.UsageError(f"unknown mask mode {m!r}")
    return modes


@cli.command("sweep")
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--oracle", default=None, help="tcp:HOST:PORT or stdio:CMD")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--split", default="val", show_default=True,
              type=click.Choice(["train", "val", "all"]))
@click.option("--class-c", default=PERSON_CLASS, show_default=True, type=int)
@click.option("--epsilons", default="1,2,4,8,10,16", show_default=True)
@click.option("--mask", "mask_modes", default="none", show_default=True,
              help="comma-separated subset of none,posthoc,inloop")
@click.option("--clamp/--no-clamp", "clamp_valid", default=True, show_default=True)
@click.option("--quantized-eval", is_flag=True, default=False)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
def sweep_cmd(ctx, **_kwargs):
    """Attack every image of a split across an epsilon list; emit reports."""
    p = _effective_params(ctx)
    epsilons = _parse_epsilons(p["epsilons"])
    mask_modes = _parse_masks(p["mask_modes"])
    model = _load_model(p["model_path"], p["oracle"])
    class_c = p["class_c"]
    if class_c < 0 or class_c >= model.num_classes:
        raise click.UsageError(f"--class-c {class_c} outside [0,{model.num_classes})")
    scenes = _load_split_records(p["data_dir"], p["split"])
    quantized = p["quantized_eval"]

    rows = []
    skipped = []
    for image_id, image, _labels in scenes:
        pred_orig = model.predict(image)
        try:
            target = synthesize_target(pred_orig, class_c)
        except NoBackgroundClassError:
            skipped.append(image_id)
            continue
        mask = extract_mask(pred_orig, class_c)
        for eps in epsilons:
            config = AttackConfig(epsilon=eps, clamp_valid=p["clamp_valid"])
            base = run_attack(model, image, target, config)
            preds = {}
            if "none" in mask_modes:
                preds["none"] = (
                    _predict(model, base.adversarial_image, quantized)
                    if quantized else base.prediction
                )
            if "posthoc" in mask_modes:
                adv = apply_masked(image, base.perturbation, mask,
                                   clamp_valid=p["clamp_valid"])
                preds["posthoc"] = _predict(model, adv, quantized)
            if "inloop" in mask_modes:
                cfg = AttackConfig(epsilon=eps, mask_mode="inloop",
                                   clamp_valid=p["clamp_valid"])
                res = run_attack(model, image, target, cfg, mask=mask)
                preds["inloop"] = (
                    _predict(model, res.adversarial_image, quantized)
                    if quantized else res.prediction
                )
            for mode, pred_adv in preds.items():
                pm = pair_metrics(pred_orig, pred_adv, class_c)
                rows.append({
                    "image_id": image_id,
                    "epsilon": eps,
                    "iterations": auto_iterations(eps),
                    "mask_mode": mode,
                    "fooled": pm.fooled,
                    "preserved": pm.preserved,
                    "metrics": pm,
                    "loss_trace": base.loss_trace,
                })
    rows.sort(key=lambda r: (r["image_id"], r["epsilon"], r["mask_mode"]))

    out_dir = p["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.jsonl"), "w") as fh:
        for row in rows:
            rec = {k: v for k, v in row.items() if k != "metrics"}
            fh.write(json.dumps(rec) + "\n")

    summaries = {}
    for mode in mask_modes:
        mode_rows = [(r["epsilon"], r["metrics"]) for r in rows if r["mask_mode"] == mode]
        report = aggregate_sweep(mode_rows)
        target_dir = out_dir if len(mask_modes) == 1 else os.path.join(out_dir, mode)
        emit_report(report, target_dir, class_c=class_c)
        summaries[mode] = [vars(r) for r in report.rows]
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump({
            "class_c": class_c,
            "n_images": len(scenes) - len(skipped),
            "skipped_no_background": skipped,
            "modes": summaries,
        }, fh, indent=2)
        fh.write("\n")
    _echo_run_config(p, out_dir)
    click.echo(
        f"swept {len(scenes) - len(skipped)} images "
        f"({len(skipped)} skipped) over epsilons {epsilons} modes {mask_modes}"
    )


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 130
    except (NumericalError, NoBackgroundClassError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    except (DataError, CheckpointError, ShapeError, ModelError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except SegAdvError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
