"""Provenance-stamped reading and writing of pipeline artifacts."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import DependencyError


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seed: int

    def header(self):
        return f"actiprofile {__version__} config_hash={self.config_hash} seed={self.seed}"

    def as_dict(self):
        return {"tool": "actiprofile", "version": __version__,
                "config_hash": self.config_hash, "seed": self.seed}


def write_table(path, frame, provenance, sep=","):
    """CSV/TSV with a leading ``#`` provenance line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = frame.to_csv(index=False, sep=sep, lineterminator="\n")
    path.write_text(f"# {provenance.header()}\n{body}")
    return path


def read_table(path, sep=",", **kwargs):
    return pd.read_csv(require(path), sep=sep, comment="#", **kwargs)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, payload, provenance):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"provenance": provenance.as_dict(), **_clean(payload)}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")
    return path


def read_json(path):
    return json.loads(require(path).read_text())


def require(path, what=None):
    """The path if it exists; otherwise a DependencyError naming the missing artifact."""
    path = Path(path)
    if not path.exists():
        hint = f" ({what})" if what else ""
        raise DependencyError(f"missing upstream artifact {path}{hint}; run the producing command first")
    return path
