"""Checkpoints and reports."""

from motionfield.storage.checkpoint import (
    checkpoint_size,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    quantize,
    save_checkpoint,
)
from motionfield.storage.report import (
    metrics_csv,
    summary_markdown,
    train_report_csv,
    write_metrics,
    write_train_report,
)

__all__ = [
    "checkpoint_size",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "metrics_csv",
    "quantize",
    "save_checkpoint",
    "summary_markdown",
    "train_report_csv",
    "write_metrics",
    "write_train_report",
]
