"""Point-cloud conditioned mesh deformation: geometry, datasets, training and inference."""

from ._core import (
    Error,
    ParseError,
    ShapeError,
    ConfigError,
    NumericError,
    IoError,
    CorruptFileError,
    Checkpoint,
    Model,
    chamfer,
    desk_object,
    desk_object_names,
    sample_surface,
    read_mesh,
    write_mesh,
    generate_dataset,
    plan_dataset,
    train,
    load_checkpoint,
    evaluate,
    bench,
    selftest,
)

__all__ = [name for name in dir() if not name.startswith("_")]
