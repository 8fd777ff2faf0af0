from .classes import CLASS_ORDER, MONOCHROME, PRE_RELABEL_CLASSES, StyleObservation
from .color import MONOCHROME_THRESHOLD, colorfulness, load_rgb, relabel_monochrome
from .metrics import (
    PrecisionProfile,
    StyleDistribution,
    VsdResult,
    bootstrap_vsd,
    distribution_from_counts,
    style_distribution,
    vsd,
)
from .probe import (
    LinearProbe,
    ProbeConfig,
    classify,
    cross_entropy_loss_and_grad,
    train_linear_probe,
)

__all__ = [
    "CLASS_ORDER",
    "MONOCHROME",
    "MONOCHROME_THRESHOLD",
    "PRE_RELABEL_CLASSES",
    "LinearProbe",
    "PrecisionProfile",
    "ProbeConfig",
    "StyleDistribution",
    "StyleObservation",
    "VsdResult",
    "bootstrap_vsd",
    "classify",
    "colorfulness",
    "cross_entropy_loss_and_grad",
    "distribution_from_counts",
    "load_rgb",
    "relabel_monochrome",
    "style_distribution",
    "train_linear_probe",
    "vsd",
]
