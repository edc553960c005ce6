"""Desk-scale fully-convolutional segmentation network.

Three-scale topology with skip connections: features at full, 1/2 and 1/4
resolution each feed a 1x1 class head, and the three logit maps are fused
by repeated 2x bilinear upsampling and addition, so the prediction always
comes out at input resolution. ~70k parameters; trains to a useful model
on the synthetic scenes in a couple of minutes on one CPU core.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointVersionError,
    LabelRangeError,
    NumericalError,
    ResolutionError,
    ShapeError,
)
from .metrics import confusion_matrix, miou_from_confusion
from .ops import (
    ConvSpec,
    conv2d,
    conv2d_grads,
    relu,
    relu_grad,
    softmax_cross_entropy,
    upsample2x,
    upsample2x_grad,
)

ARCH_ID = "fcn3s-v1"

_S1 = ConvSpec(stride=1, padding=1)
_S2 = ConvSpec(stride=2, padding=1)
_P0 = ConvSpec(stride=1, padding=0)

# (name, conv spec, out_channels, in_channels, kh, kw); heads depend on K.
_CONV_LAYERS = [
    ("stem", _S1, 16, 3, 3, 3),
    ("a1", _S2, 32, 16, 3, 3),
    ("a2", _S1, 32, 32, 3, 3),
    ("b1", _S2, 64, 32, 3, 3),
    ("b2", _S1, 64, 64, 3, 3),
]


def param_shapes(num_classes):
    """Ordered parameter name -> shape map for the fixed architecture."""
    shapes = {}
    for name, _, c_out, c_in, kh, kw in _CONV_LAYERS:
        shapes[f"{name}_w"] = (c_out, c_in, kh, kw)
        shapes[f"{name}_b"] = (c_out,)
    for head, c_in in (("head1", 16), ("head2", 32), ("head4", 64)):
        shapes[f"{head}_w"] = (num_classes, c_in, 1, 1)
        shapes[f"{head}_b"] = (num_classes,)
    return shapes


class SegModel:
    """Segmentation network: parameters plus forward/backward machinery.

    Pixel domain is raw [0, 255]; the /255 normalization happens inside
    forward and is part of the differentiated pipeline, so input gradients
    are with respect to raw pixel values.
    """

    def __init__(self, params, num_classes, dtype=np.float32):
        expected = param_shapes(num_classes)
        if set(params) != set(expected):
            missing = set(expected) - set(params)
            extra = set(params) - set(expected)
            raise ShapeError(f"parameter set mismatch: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(
                    f"parameter {name}: expected shape {shape}, got {params[name].shape}"
                )
        self.params = {name: np.array(params[name], dtype=dtype, order="C")
                       for name in expected}
        self.num_classes = num_classes
        self.dtype = np.dtype(dtype)

    @classmethod
    def init(cls, num_classes=5, seed=0, dtype=np.float32):
        """He-uniform weights, zero biases, from a counter-based RNG."""
        rng = np.random.Generator(np.random.Philox(key=seed))
        params = {}
        for name, shape in param_shapes(num_classes).items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:]))
                limit = np.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        return cls(params, num_classes, dtype)

    def astype(self, dtype):
        return SegModel(self.params, self.num_classes, dtype)

    def _check_image(self, image):
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"image must be (3,H,W), got {image.shape}")
        _, h, w = image.shape
        if h % 4 or w % 4:
            raise ResolutionError(
                f"image size {h}x{w} not divisible by 4"
            )

    def _forward(self, image):
        p = self.params
        xn = np.ascontiguousarray(image, dtype=self.dtype) / self.dtype.type(255)
        cache = {"xn": xn}
        feats = {}
        x = xn
        for name, spec, *_ in _CONV_LAYERS:
            z = conv2d(x, p[f"{name}_w"], p[f"{name}_b"], spec)
            cache[f"z_{name}"] = z
            cache[f"in_{name}"] = x
            x = relu(z)
            feats[name] = x
        h1 = conv2d(feats["stem"], p["head1_w"], p["head1_b"], _P0)
        h2 = conv2d(feats["a2"], p["head2_w"], p["head2_b"], _P0)
        h4 = conv2d(feats["b2"], p["head4_w"], p["head4_b"], _P0)
        f2 = upsample2x(h4) + h2
        logits = upsample2x(f2) + h1
        cache.update(feats=feats, h4=h4, f2=f2)
        return logits, cache

    def _backward(self, cache, grad_logits):
        """Returns (grad_image, param_grads)."""
        p = self.params
        feats = cache["feats"]
        grads = {}

        g_f2 = upsample2x_grad(cache["f2"], grad_logits)
        g_h4 = upsample2x_grad(cache["h4"], g_f2)
        g_feat = {}
        for head, feat, up in (("head1", "stem", grad_logits),
                               ("head2", "a2", g_f2),
                               ("head4", "b2", g_h4)):
            gi, gw, gb = conv2d_grads(feats[feat], p[f"{head}_w"], p[f"{head}_b"], _P0, up)
            grads[f"{head}_w"] = gw
            grads[f"{head}_b"] = gb
            g_feat[feat] = gi

        downstream = None
        for name, spec, *_ in reversed(_CONV_LAYERS):
            g = g_feat.get(name, 0)
            if downstream is not None:
                g = g + downstream
            gz = relu_grad(cache[f"z_{name}"], g)
            gi, gw, gb = conv2d_grads(
                cache[f"in_{name}"], p[f"{name}_w"], p[f"{name}_b"], spec, gz
            )
            grads[f"{name}_w"] = gw
            grads[f"{name}_b"] = gb
            downstream = gi
        grad_image = downstream / self.dtype.type(255)
        return grad_image, grads

    def forward_logits(self, image):
        """Full-resolution class logits (K,H,W) for a (3,H,W) image."""
        self._check_image(image)
        logits, _ = self._forward(image)
        return logits

    def predict_labels(self, image):
        """Per-pixel argmax labels; ties go to the smallest class index."""
        return np.argmax(self.forward_logits(image), axis=0)

    # DifferentiableModel interface alias
    predict = predict_labels

    def loss_and_input_grad(self, image, target):
        """Mean cross-entropy vs `target` and its gradient w.r.t. raw pixels."""
        self._check_image(image)
        logits, cache = self._forward(image)
        loss, grad_logits = softmax_cross_entropy(logits, np.asarray(target))
        grad_image, _ = self._backward(cache, grad_logits)
        return loss, grad_image

    def loss_and_param_grads(self, image, target):
        self._check_image(image)
        logits, cache = self._forward(image)
        loss, grad_logits = softmax_cross_entropy(logits, np.asarray(target))
        _, grads = self._backward(cache, grad_logits)
        return loss, grads


@dataclass
class TrainConfig:
    rng_seed: int
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 15
    batch_size: int = 8

    def __post_init__(self):
        if self.learning_rate < 0 or not (0 <= self.momentum < 1):
            raise ValueError("learning_rate must be >= 0 and momentum in [0,1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_miou: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)

    def final_miou(self):
        return self.epochs[-1].val_miou if self.epochs else float("nan")


def evaluate_miou(model, scenes):
    """Held-out mean IoU: one confusion matrix over all scenes."""
    conf = np.zeros((model.num_classes, model.num_classes), dtype=np.int64)
    for image, labels in scenes:
        pred = model.predict_labels(image)
        conf += confusion_matrix(pred, labels, model.num_classes)
    return miou_from_confusion(conf)


def train(model, train_scenes, val_scenes, config):
    """SGD with momentum on mean per-pixel cross-entropy. In place.

    Deterministic for a fixed seed in single-threaded mode. Raises
    NumericalError if the loss diverges to a non-finite value.
    """
    if not train_scenes:
        raise ValueError("training set is empty")
    for _, labels in train_scenes:
        if labels.max() >= model.num_classes:
            raise LabelRangeError(
                f"training label {labels.max()} outside [0,{model.num_classes})"
            )
    rng = np.random.Generator(np.random.Philox(key=config.rng_seed))
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    log = TrainLog()
    n = len(train_scenes)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_grads = None
            batch_loss = 0.0
            for i in idx:
                image, labels = train_scenes[i]
                loss, grads = model.loss_and_param_grads(image, labels)
                batch_loss += loss
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for k in batch_grads:
                        batch_grads[k] += grads[k]
            scale = model.dtype.type(1.0 / len(idx))
            batch_loss /= len(idx)
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"training diverged: loss {batch_loss} at epoch {epoch}"
                )
            lr = model.dtype.type(config.learning_rate)
            mom = model.dtype.type(config.momentum)
            for k in model.params:
                velocity[k] = mom * velocity[k] - lr * (batch_grads[k] * scale)
                model.params[k] += velocity[k]
            losses.append(batch_loss)
        log.epochs.append(EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_miou=evaluate_miou(model, val_scenes) if val_scenes else float("nan"),
        ))
    return log


_MAGIC = b"SGV1"
_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 4, np.dtype(np.float64): 8}
_CODE_DTYPES = {4: np.float32, 8: np.float64}


def save_checkpoint(model, path):
    """Custom binary format: magic SGV1, little-endian, self-describing tensors."""
    arch = ARCH_ID.encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HH", _VERSION, len(arch)))
        fh.write(arch)
        fh.write(struct.pack("<II", model.num_classes, len(model.params)))
        for name in sorted(model.params):
            tensor = model.params[name]
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", _DTYPE_CODES[tensor.dtype], tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.astype(tensor.dtype.newbyteorder("<")).tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path, dtype=np.float32):
    """Lossless round trip; loading a 32-bit file as float64 widens exactly."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic bytes")
        version, arch_len = struct.unpack("<HH", _read_exact(fh, 4, "header"))
        if version != _VERSION:
            raise CheckpointVersionError(f"{path}: format version {version}, expected {_VERSION}")
        arch = _read_exact(fh, arch_len, "arch id").decode()
        if arch != ARCH_ID:
            raise CheckpointShapeError(f"{path}: arch {arch!r}, expected {ARCH_ID!r}")
        num_classes, n_tensors = struct.unpack("<II", _read_exact(fh, 8, "counts"))
        params = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode()
            code, rank = struct.unpack("<BB", _read_exact(fh, 2, "tensor header"))
            if code not in _CODE_DTYPES:
                raise CheckpointFormatError(f"{path}: unknown dtype code {code}")
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "shape"))
            stored = np.dtype(_CODE_DTYPES[code]).newbyteorder("<")
            count = int(np.prod(shape)) if rank else 1
            raw = _read_exact(fh, stored.itemsize * count, f"tensor {name}")
            params[name] = np.frombuffer(raw, dtype=stored).reshape(shape)
        if fh.read(1):
            raise CheckpointFormatError(f"{path}: trailing bytes")
    expected = param_shapes(num_classes)
    if set(params) != set(expected):
        raise CheckpointShapeError(f"{path}: tensor names disagree with arch")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointShapeError(
                f"{path}: tensor {name} has shape {params[name].shape}, expected {shape}"
            )
    return SegModel(params, num_classes, dtype)
