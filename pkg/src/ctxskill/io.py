"""Genome JSON files, CSV tables and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .net import ArchSpec, Genome, StructuralError, param_count

SCHEMA_VERSION = 1
_WEIGHTS_TOKEN = "__WEIGHTS__"


def fmt(x) -> str:
    """Locale-independent, round-trip-exact text for one number."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def genome_to_json(genome: Genome, arch: ArchSpec, domain: str | None = None, extra: dict | None = None) -> str:
    if len(genome) != param_count(arch):
        raise StructuralError("genome length does not match architecture")
    doc = {"schema_version": SCHEMA_VERSION, **arch.to_dict()}
    if domain is not None:
        doc["domain"] = domain
    doc["bounds"] = [float(genome.bounds[0]), float(genome.bounds[1])]
    if extra:
        doc.update(extra)
    doc["weights"] = _WEIGHTS_TOKEN
    text = json.dumps(doc, indent=1)
    weights = "[" + ", ".join(format(float(w), ".17g") for w in genome.weights) + "]"
    return text.replace(json.dumps(_WEIGHTS_TOKEN), weights) + "\n"


def write_genome(path, genome: Genome, arch: ArchSpec, domain=None, extra=None) -> Path:
    path = Path(path)
    path.write_text(genome_to_json(genome, arch, domain, extra))
    return path


def read_genome(path):
    """Returns ``(Genome, ArchSpec, document)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise StructuralError(f"unsupported genome schema_version {doc.get('schema_version')!r}")
    arch = ArchSpec(
        kind=doc["kind"],
        sensory_dim=int(doc["sensory_dim"]),
        action_dim=int(doc["action_dim"]),
        skill_hidden=int(doc.get("skill_hidden", 10)),
        skill_out=int(doc.get("skill_out", 5)),
        lstm_size=int(doc.get("lstm_size", 10)),
        ctrl_hidden=int(doc.get("ctrl_hidden", 20)),
        context_aux_dim=int(doc.get("context_aux_dim", 1)),
    )
    genome = Genome(np.asarray(doc["weights"], dtype=np.float64), tuple(doc["bounds"]))
    if len(genome) != param_count(arch):
        raise StructuralError(f"{path}: {len(genome)} weights, architecture needs {param_count(arch)}")
    return genome, arch, doc


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """``manifest.json`` for one output directory; wall-clock fields live under ``wall_clock``."""

    FILENAME = "manifest.json"

    def __init__(self, command: str, config: dict, seed: int):
        self.doc = {
            "schema_version": SCHEMA_VERSION,
            "tool": "ctxskill",
            "tool_version": __version__,
            "command": command,
            "config": config,
            "seed": seed,
            "outputs": [],
            "wall_clock": {"started": _now()},
        }

    def add_output(self, path, out_dir):
        self.doc["outputs"].append(str(Path(path).relative_to(out_dir)))

    def finish(self, out_dir, **extra) -> Path:
        self.doc["wall_clock"]["finished"] = _now()
        self.doc.update(extra)
        self.doc["outputs"] = sorted(set(self.doc["outputs"]))
        return write_json(Path(out_dir) / self.FILENAME, self.doc)
