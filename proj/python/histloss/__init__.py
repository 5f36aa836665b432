"""HL-Gauss histogram codec, losses, and toy training harness."""

from ._core import (
    BinGrid,
    DatasetSpec,
    GridSpec,
    LossConfig,
    Mode,
    OptimizerConfig,
    RunConfig,
    Sample,
    combined_loss,
    cross_entropy,
    cross_entropy_grad_logits,
    decode_expectation,
    encode_target,
    entropy,
    force_mae_loss,
    generate_dataset,
    lj_energy,
    lj_forces,
    load_run_config,
    mae_loss,
    make_grid,
    normal_cdf,
    pearson_r,
    read_dataset,
    run_config_text,
    softmax_with_temperature,
    train_run,
    write_dataset,
)

__all__ = [
    "BinGrid",
    "DatasetSpec",
    "GridSpec",
    "LossConfig",
    "Mode",
    "OptimizerConfig",
    "RunConfig",
    "Sample",
    "combined_loss",
    "cross_entropy",
    "cross_entropy_grad_logits",
    "decode_expectation",
    "encode_target",
    "entropy",
    "force_mae_loss",
    "generate_dataset",
    "lj_energy",
    "lj_forces",
    "load_run_config",
    "mae_loss",
    "make_grid",
    "normal_cdf",
    "pearson_r",
    "read_dataset",
    "run_config_text",
    "softmax_with_temperature",
    "train_run",
    "write_dataset",
]

__version__ = "0.1.0"
