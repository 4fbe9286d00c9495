"""Limited-angle CT reconstruction: Radon operators, DIP/pixel reconstruction,
patch autoencoder prior, FBP baseline and MCC scoring."""

from ._core import (
    ConfigError,
    NumericError,
    ParseError,
    ShapeError,
    __version__,
    angle_list,
    apply_filter,
    binarize,
    disk_mask,
    fbp,
    filter_response,
    generate_phantom,
    mcc,
    otsu_threshold,
    radon_adjoint,
    radon_forward,
    read_image,
    reconstruct,
    simulate_scan,
    total_variation,
    train_autoencoder,
    write_image,
)

__all__ = [
    "ConfigError",
    "NumericError",
    "ParseError",
    "ShapeError",
    "__version__",
    "angle_list",
    "apply_filter",
    "binarize",
    "disk_mask",
    "fbp",
    "filter_response",
    "generate_phantom",
    "mcc",
    "otsu_threshold",
    "radon_adjoint",
    "radon_forward",
    "read_image",
    "reconstruct",
    "simulate_scan",
    "total_variation",
    "train_autoencoder",
    "write_image",
]
