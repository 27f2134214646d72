"""Exception hierarchy shared by every parconv module."""


class ParconvError(Exception):
    """Base class; the CLI maps these to exit code 2 unless noted."""


class InvalidConfig(ParconvError, ValueError):
    pass


class EmptyAudio(ParconvError, ValueError):
    pass


class UnsupportedFormat(ParconvError, ValueError):
    pass


class ShapeError(ParconvError, ValueError):
    pass


class GroupError(ParconvError, ValueError):
    pass


class LabelError(ParconvError, ValueError):
    pass


class GraphError(ParconvError, RuntimeError):
    pass


class NonFiniteError(ParconvError, FloatingPointError):
    pass


class FormatError(ParconvError, ValueError):
    pass


class IoError(ParconvError, OSError):
    pass


class SplitError(ParconvError, ValueError):
    pass


class ConfigError(ParconvError, ValueError):
    pass


class DivergenceError(ParconvError, RuntimeError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}, step {step} (loss={loss})")
        self.epoch = epoch
        self.step = step
        self.loss = loss
