"""Binary matrix files and run configuration files."""

from __future__ import annotations

import configparser
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LDCM"
VERSION = 1
_HEADER = struct.Struct("<4sHII")
LABEL_SUFFIX = ".labels"


class MatrixFileError(ValueError):
    pass


class RunConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MatrixFile:
    """2-D float64 matrix with optional row labels."""

    data: np.ndarray = field(repr=False)
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise MatrixFileError(f"matrix files hold 2-D arrays, got {data.ndim}-D")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != data.shape[0]:
                raise MatrixFileError(f"{len(labels)} labels for {data.shape[0]} rows")
            if any("\n" in x for x in labels):
                raise MatrixFileError("labels must not contain newlines")
            object.__setattr__(self, "labels", labels)

    def to_bytes(self) -> bytes:
        rows, cols = self.data.shape
        payload = np.ascontiguousarray(self.data, dtype="<f8").tobytes()
        return _HEADER.pack(MAGIC, VERSION, rows, cols) + payload

    @classmethod
    def from_bytes(cls, raw: bytes, labels=None) -> "MatrixFile":
        if len(raw) < _HEADER.size:
            raise MatrixFileError("file shorter than header")
        magic, version, rows, cols = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise MatrixFileError(f"bad magic {magic!r}")
        if version != VERSION:
            raise MatrixFileError(f"unsupported version {version}")
        expected = rows * cols * 8
        if len(raw) - _HEADER.size != expected:
            raise MatrixFileError(f"payload is {len(raw) - _HEADER.size} bytes, header implies {expected}")
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)
        return cls(data, labels)


def write_matrix(path, data, labels=None) -> Path:
    """Write a matrix (and a ``.labels`` sidecar if labels are given)."""
    path = Path(path)
    mf = data if isinstance(data, MatrixFile) else MatrixFile(data, labels)
    path.write_bytes(mf.to_bytes())
    sidecar = Path(str(path) + LABEL_SUFFIX)
    if mf.labels is not None:
        sidecar.write_text("".join(f"{x}\n" for x in mf.labels), encoding="utf-8")
    elif sidecar.exists():
        sidecar.unlink()
    return path


def read_matrix(path) -> MatrixFile:
    path = Path(path)
    raw = path.read_bytes()
    sidecar = Path(str(path) + LABEL_SUFFIX)
    labels = None
    if sidecar.exists():
        labels = sidecar.read_text(encoding="utf-8").splitlines()
    return MatrixFile.from_bytes(raw, labels)


# -- run configuration --------------------------------------------------------

RUN_KEYS = {"kind", "seed", "replications"}
PATH_KEYS = {"out_dir"}
SECTIONS = ("run", "experiment", "paths")


@dataclass
class RunConfig:
    """Parsed ``[run]``, ``[experiment]`` and ``[paths]`` sections.

    ``[run]`` must give ``replications``; ``[experiment]`` values stay strings
    and are checked against the chosen experiment's keys.
    """

    replications: int
    kind: str | None = None
    seed: int | None = None
    experiment: dict = field(default_factory=dict)
    out_dir: Path | None = None

    def experiment_config(self) -> dict:
        return {**self.experiment, "replications": self.replications}


def parse_run_config(text: str, base_dir=None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise RunConfigError(f"malformed config: {err}") from err
    for section in parser.sections():
        if section not in SECTIONS:
            raise RunConfigError(f"unknown section [{section}]")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    for key in run:
        if key not in RUN_KEYS:
            raise RunConfigError(f"unknown key {key!r} in [run]")
    if "replications" not in run:
        raise RunConfigError("missing required key 'replications' in [run]")
    try:
        replications = int(run["replications"])
        seed = int(run["seed"]) if "seed" in run else None
    except ValueError as err:
        raise RunConfigError(f"bad integer in [run]: {err}") from err
    if replications < 1:
        raise RunConfigError("'replications' must be positive")
    paths = dict(parser["paths"]) if parser.has_section("paths") else {}
    for key in paths:
        if key not in PATH_KEYS:
            raise RunConfigError(f"unknown key {key!r} in [paths]")
    out_dir = None
    if "out_dir" in paths:
        out_dir = Path(paths["out_dir"])
        if base_dir is not None and not out_dir.is_absolute():
            out_dir = Path(base_dir) / out_dir
    experiment = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    if "replications" in experiment:
        raise RunConfigError("set 'replications' in [run], not [experiment]")
    return RunConfig(replications, run.get("kind"), seed, experiment, out_dir)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as err:
        raise RunConfigError(f"{path} is not UTF-8") from err
    return parse_run_config(text, base_dir=path.parent)


def check_output_dir(path) -> Path:
    """Create ``path`` if needed and make sure it is a writable directory."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise NotADirectoryError(f"{path} exists and is not a directory")
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"{path} is not writable")
    return path


def format_float(x: float) -> str:
    return f"{float(x):.17g}"
