"""File formats: flat CSV, 17-significant-digit floats, atomic writes.

Observations: header ``y,model_id``; replicates: header ``subject,y``;
model configs use the line grammar in :mod:`hetdecon.errors`. All output
is comma-separated, ``.`` decimal, LF line endings, UTF-8, and written
via a temporary file so failures leave no partial output behind.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ErrorModel, HetSample, ReplicatedSample, parse_models_config

__all__ = [
    "fmt",
    "write_text_atomic",
    "read_observations",
    "read_replicates",
    "read_models_file",
]


def fmt(value: float) -> str:
    """17 significant digits: round-trips doubles exactly."""
    return f"{value:.17g}"


def write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _split_csv_line(line: str, lineno: int, n_fields: int) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != n_fields:
        raise ValueError(
            f"line {lineno}: expected {n_fields} comma-separated fields"
        )
    return parts


def read_observations(text: str, models: dict[str, ErrorModel]) -> HetSample:
    """Parse ``y,model_id`` rows against a parsed model config."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip().lower() != "y,model_id":
        raise ValueError("observations file must start with header 'y,model_id'")
    ys: list[float] = []
    per_obs: list[ErrorModel] = []
    for lineno, line in enumerate(lines[1:], start=2):
        y_text, mid = _split_csv_line(line, lineno, 2)
        try:
            ys.append(float(y_text))
        except ValueError:
            raise ValueError(f"line {lineno}: bad float {y_text!r}") from None
        if mid not in models:
            raise ValueError(f"line {lineno}: unknown model id {mid!r}")
        per_obs.append(models[mid])
    if not ys:
        raise ValueError("observations file has no data rows")
    return HetSample.from_models(np.asarray(ys), per_obs)


def read_replicates(text: str) -> ReplicatedSample:
    """Parse ``subject,y`` rows; rows for one subject may be scattered."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip().lower() != "subject,y":
        raise ValueError("replicates file must start with header 'subject,y'")
    by_subject: dict[str, list[float]] = {}
    order: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        sid, y_text = _split_csv_line(line, lineno, 2)
        try:
            y = float(y_text)
        except ValueError:
            raise ValueError(f"line {lineno}: bad float {y_text!r}") from None
        if sid not in by_subject:
            by_subject[sid] = []
            order.append(sid)
        by_subject[sid].append(y)
    if not order:
        raise ValueError("replicates file has no data rows")
    return ReplicatedSample([(sid, by_subject[sid]) for sid in order])


def read_models_file(text: str) -> dict[str, ErrorModel]:
    models = parse_models_config(text)
    if not models:
        raise ValueError("model config defines no models")
    return models
