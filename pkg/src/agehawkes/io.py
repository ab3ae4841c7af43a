"""CSV emission and run manifests.

Reals are written with 17 significant digits in a fixed form: mantissa with
16 decimals and an unpadded exponent, so 1.0 is ``1.0000000000000000e0`` and
0.00125 is ``1.2500000000000000e-3``. Integers and strings are written as-is.
Files use '\\n' line endings and UTF-8, so identical records give identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

__all__ = ["format_real", "emit_csv", "render_csv", "RunManifest", "sha256_file"]


def format_real(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        x = 0.0  # no negative zero
    mant, exp = f"{x:.16e}".split("e")
    return f"{mant}e{int(exp)}"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


def render_csv(records, header) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        if len(rec) != len(header):
            raise ValueError(f"record has {len(rec)} fields, header has {len(header)}")
        w.writerow([_cell(v) for v in rec])
    return buf.getvalue()


def emit_csv(records, path, header) -> str:
    """Write records under ``header`` and return the sha256 of the file content."""
    data = render_csv(records, header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Inputs and output checksums of one CLI run. The wall-clock fields live
    here and never in the CSVs, so the CSVs stay byte-reproducible."""

    subcommand: str
    config_hash: str
    seed: int
    threads: int
    version: str = __version__
    started: str = ""
    wall_clock_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def start(self):
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self._t0 = time.perf_counter()
        return self

    def finish(self):
        self.wall_clock_s = time.perf_counter() - getattr(self, "_t0", time.perf_counter())
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n",
                              encoding="utf-8")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")
