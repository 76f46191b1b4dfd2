"""Exception types shared across the package."""


class TinyAdvError(Exception):
    """Base class for all package errors."""


class InvalidArgument(TinyAdvError, ValueError):
    pass


class NumericDomainError(TinyAdvError, ArithmeticError):
    pass


class TrainingDiverged(TinyAdvError, RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class FormatError(TinyAdvError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class QuantOverflowError(TinyAdvError, OverflowError):
    def __init__(self, layer, bound):
        super().__init__(f"accumulator overflow in layer {layer!r} (|acc| exceeds {bound})")
        self.layer = layer


class GradientDegenerate(TinyAdvError, ArithmeticError):
    pass


class InitFailed(TinyAdvError, RuntimeError):
    pass


class BoundaryNotBracketed(TinyAdvError, RuntimeError):
    pass


class UndefinedSimilarity(TinyAdvError, ArithmeticError):
    pass


class InvalidSpec(TinyAdvError, ValueError):
    pass
