"""Result emission: JSON and CSV records stamped for reproducibility.

Every file carries the config hash, the run seed, and a build identifier,
so any number in any artifact can be traced to the exact configuration and
code state that produced it. No timestamps: reruns must be bit-identical.
"""

import csv
import json
import pathlib
import subprocess

from . import __version__

SCHEMA_VERSION = 1


def build_id():
    """git describe of the working tree, or the package version."""
    root = pathlib.Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=root, capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"artifact-{__version__}"


def cnum(z):
    """Complex number as a JSON-stable [re, im] pair."""
    z = complex(z)
    return [z.real, z.imag]


def write_json(path, kind, payload, config_hash, seed):
    record = {
        "kind": kind,
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash,
        "seed": seed,
        "build": build_id(),
        "data": payload,
    }
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        record = json.load(fh)
    for key in ("kind", "schema", "config_hash", "seed", "data"):
        if key not in record:
            raise ValueError(f"{path} is not a result record (missing "
                             f"{key!r})")
    return record


def write_csv(path, columns, rows, config_hash, seed):
    """Plot-ready CSV: '#' metadata lines, then header, then rows."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# build={build_id()}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in row])
    return path
