"""Style-transfer data augmentation for adverse-domain robustness."""

from ._styleaug import (
    Error,
    augment,
    content_loss,
    default_transfer_config,
    generate_benchmark,
    gram,
    load_image,
    read_stwb,
    replaced_count,
    resize,
    run_experiment,
    save_image,
    style_energy,
    synthesize,
    tv_loss,
    write_stwb,
)

__all__ = [
    "Error",
    "augment",
    "content_loss",
    "default_transfer_config",
    "generate_benchmark",
    "gram",
    "load_image",
    "read_stwb",
    "replaced_count",
    "resize",
    "run_experiment",
    "save_image",
    "style_energy",
    "synthesize",
    "tv_loss",
    "write_stwb",
]
