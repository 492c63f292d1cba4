"""Persistence: field-pair JSON, run records, CSV tables and atomic writes."""
import csv
import datetime as _dt
import hashlib
import io
import json
import os
from pathlib import Path
import subprocess
import tempfile

import jsonschema
import numpy as np

from .fields import FieldPair, HiggsField, UnitaryConnection
from .grid import LogPolarGrid
from .surface import load_schema

__version__ = "0.1.0"


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True)


# -- field pairs -------------------------------------------------------------------

def _pairs(arr):
    flat = np.asarray(arr, complex).ravel()
    return np.stack([flat.real, flat.imag], -1).tolist()


def field_pair_to_json(pair):
    g = pair.grid
    return {"frame": pair.A.frame, "grid": g.describe() | {"order": g.order},
            "connection": _pairs(pair.A.a), "higgs": _pairs(pair.Phi.phi)}


def field_pair_from_json(doc):
    jsonschema.validate(doc, load_schema("fields"))
    gd = doc["grid"]
    grid = LogPolarGrid(np.linspace(gd["s_min"], gd["s_max"], gd["ns"]), gd["ntheta"],
                        gd.get("order", 2))
    shape = grid.shape + (2, 2)

    def unpack(rows):
        a = np.asarray(rows, float)
        if a.shape != (int(np.prod(shape)), 2):
            raise ValueError(f"expected {np.prod(shape)} samples, got {a.shape[0]}")
        return (a[:, 0] + 1j * a[:, 1]).reshape(shape)

    fr = doc["frame"]
    return FieldPair(UnitaryConnection(grid, unpack(doc["connection"]), fr),
                     HiggsField(grid, unpack(doc["higgs"]), fr))


# -- run records ---------------------------------------------------------------------

def tool_version():
    """Package version plus ``git describe`` output when run from a checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def config_digest(config):
    return hashlib.sha256(json.dumps(to_jsonable(config), sort_keys=True).encode()).hexdigest()[:12]


class RunRecord:
    def __init__(self, command, config):
        self.command = command
        self.config = to_jsonable(config)
        self.version = tool_version()
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.finished = None
        self.payload = {}
        self.artifacts = {}
        self.passed = None

    def finish(self, payload, passed=True):
        self.payload = to_jsonable(payload)
        self.passed = bool(passed)
        self.finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
        return self

    def as_dict(self):
        return {"command": self.command, "config": self.config, "version": self.version,
                "started": self.started, "finished": self.finished, "passed": self.passed,
                "payload": self.payload, "artifacts": self.artifacts}

    def stem(self):
        return f"{self.command}-{config_digest(self.config)}"

    def write(self, out_dir):
        path = Path(out_dir) / f"{self.stem()}.json"
        self.artifacts["record"] = str(path)
        atomic_write(path, dumps(self.as_dict()))
        return path


def write_csv(path, rows, header):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in header})
    return atomic_write(path, buf.getvalue())
