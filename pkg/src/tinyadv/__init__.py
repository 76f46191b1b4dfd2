"""Adversarial robustness workbench for tiny float and fixed-point image classifiers."""
from .errors import (BoundaryNotBracketed, FormatError, GradientDegenerate, InitFailed, InvalidArgument,
                     InvalidSpec, NumericDomainError, QuantOverflowError, TinyAdvError, TrainingDiverged,
                     UndefinedSimilarity)

__version__ = "0.1.0"
