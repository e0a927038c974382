"""CSV ingestion, config files and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "ConfigError",
    "DatasetSchema",
    "RunManifest",
    "load_csv",
    "write_csv",
    "parse_config_text",
    "load_config",
    "dump_config",
    "DEFAULT_SEED",
]

# seed used by subcommands whose config does not name one
DEFAULT_SEED = 20240101


class DataError(ValueError):
    """Unreadable or malformed input data."""


class ConfigError(ValueError):
    """Missing or malformed configuration."""


@dataclass(frozen=True)
class DatasetSchema:
    """How to read observations from a delimited text file.

    Columns are given by 0-based index or, when the file has a header, by name.
    """

    feature_columns: tuple
    label_column: int | str | None = None
    delimiter: str = ","
    has_header: bool = False

    def __post_init__(self):
        cols = tuple(self.feature_columns)
        object.__setattr__(self, "feature_columns", cols)
        if not cols:
            raise ValueError("at least one feature column is required")
        if len(set(cols)) != len(cols):
            raise ValueError(f"feature columns are not distinct: {cols}")
        if self.label_column is not None and self.label_column in cols:
            raise ValueError("label column is also listed as a feature column")
        if len(self.delimiter) != 1:
            raise ValueError(f"delimiter must be one character, got {self.delimiter!r}")
        named = [c for c in (*cols, self.label_column) if isinstance(c, str)]
        if named and not self.has_header:
            raise ValueError("named columns require has_header=True")


def _resolve(col, header):
    if isinstance(col, str):
        if col not in header:
            raise DataError(f"column {col!r} not found in header {header}")
        return header.index(col)
    return int(col)


def load_csv(path, schema: DatasetSchema, label=None, standardize: bool = False) -> np.ndarray:
    """Read one observation per row as an (n, d) float array, preserving row order.

    ``label`` keeps only rows whose label column equals it (string comparison).
    ``standardize`` rescales each column to zero mean and unit variance.
    """
    if label is not None and schema.label_column is None:
        raise ValueError("label filter requires schema.label_column")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = None
        feat_idx = lab_idx = None
        for lineno, rec in enumerate(reader, start=1):
            rec = [f.strip() for f in rec]
            if rec and rec[-1].endswith(";"):
                rec[-1] = rec[-1][:-1].strip()
            if not rec or all(f == "" for f in rec):
                continue
            if schema.has_header and header is None:
                header = rec
                continue
            if feat_idx is None:
                feat_idx = [_resolve(c, header or []) for c in schema.feature_columns]
                if schema.label_column is not None:
                    lab_idx = _resolve(schema.label_column, header or [])
            need = max(feat_idx + ([lab_idx] if lab_idx is not None else []))
            if len(rec) <= need:
                raise DataError(f"{path}:{lineno}: expected at least {need + 1} fields, got {len(rec)}")
            if label is not None and rec[lab_idx] != str(label):
                continue
            try:
                rows.append([float(rec[i]) for i in feat_idx])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no rows left after filtering")
    X = np.array(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite values in feature columns")
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    return X


def write_csv(path, X, header=None, delimiter: str = ",") -> None:
    """Write rows with ``repr`` precision so that ``load_csv`` reads them back exactly."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in X:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# config files


def _parse_value(raw: str):
    s = raw.strip()
    if s == "":
        return ""
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    if "," in s:
        return [_parse_value(p) for p in s.split(",")]
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments, comma-separated vectors) or a JSON object."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("JSON config must be an object")
        return cfg
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(val)
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text)


def _format_value(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: dict) -> str:
    """Inverse of ``parse_config_text`` for flat configs."""
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.items())


# ---------------------------------------------------------------------------
# manifests


def _version() -> str:
    from . import __version__

    return __version__


@dataclass
class RunManifest:
    command: list
    config: dict
    seeds: dict
    outputs: list = field(default_factory=list)
    started: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    wall_seconds: float = 0.0
    library_version: str = field(default_factory=_version)
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_json_default)

    def write(self, directory) -> str:
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
