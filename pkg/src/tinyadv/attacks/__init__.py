"""Adversarial-example attacks grouped by the oracle they require."""
from .base import (AdversarialResult, AutoAttackConfig, BoundaryConfig, CWConfig, DeepFoolConfig,
                   EADConfig, FGSMConfig, GeoDAConfig, JSMAConfig, PGDConfig, SquareConfig, ZOOConfig,
                   sample_rng)
from .decision import boundary_attack, boundary_bisect, dct_basis, estimate_normal, geoda
from .gradient import (StepSizeController, apgd, apgd_checkpoints, autoattack, cw, cw_l2_objective,
                       deepfool, ead, ead_objective, fgsm, from_tanh_space, jsma, pgd, pgd_batch,
                       saliency_map, soft_threshold, step_size_trace, to_tanh_space)
from .score import coordinate_gradient, gaussian_square, log_margin, square_attack, square_fraction, zoo

WHITE_BOX = ("fgsm", "deepfool", "jsma", "cw-l2", "cw-linf", "pgd", "ead", "autoattack")
GRAY_BOX = ("zoo", "square-linf", "square-l2")
BLACK_BOX = ("boundary", "geoda")
ALL_ATTACKS = WHITE_BOX + GRAY_BOX + BLACK_BOX


def tier(name):
    if name in WHITE_BOX:
        return "white"
    if name in GRAY_BOX:
        return "gray"
    if name in BLACK_BOX:
        return "black"
    raise KeyError(name)
