"""Exception hierarchy shared across the toolkit."""


class SegAdvError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(SegAdvError):
    """Tensor dimensions inconsistent with an operation's contract."""


class ResolutionError(ShapeError):
    """Image spatial size not accepted by the network (H, W must divide by 4)."""


class LabelRangeError(SegAdvError):
    """A label map contains a class index outside [0, num_classes)."""


class CheckpointError(SegAdvError):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or truncated checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


class CheckpointShapeError(CheckpointError):
    """Stored tensor shapes disagree with the architecture descriptor."""


class DataError(SegAdvError):
    """Malformed dataset files: manifests, PNGs with wrong bit depth, etc."""


class NoBackgroundClassError(SegAdvError):
    """Prediction consists entirely of the class to erase; no fill source exists."""


class NumericalError(SegAdvError):
    """Non-finite values where finite ones are required (diverged training,
    NaN gradients)."""


class ModelError(SegAdvError):
    """Failure while evaluating a model behind the attack (e.g. a remote
    oracle becoming unreachable)."""


class OracleProtocolError(ModelError):
    """Malformed or out-of-contract message on the oracle wire protocol."""


class OracleConnectionError(ModelError):
    """Oracle endpoint unreachable or connection lost."""
