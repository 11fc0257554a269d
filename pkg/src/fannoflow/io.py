"""Plain-text outputs: CSV tables, JSON reports and atomic output directories."""
import contextlib
import json
import os
import shutil
import tempfile

import numpy as np


def format_number(x):
    return "%.17g" % x


def csv_text(columns, rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(columns)]
    lines.extend(",".join(format_number(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(csv_text(columns, rows))


def read_csv(path):
    """Return (columns, array) from a file written by :func:`write_csv`."""
    with open(path) as fh:
        columns = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return columns, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


@contextlib.contextmanager
def atomic_directory(target):
    """Yield a scratch directory that replaces files in ``target`` only on success.

    Files written into the scratch directory are moved into ``target`` when
    the block exits normally; on any exception nothing reaches ``target``.
    """
    target = os.path.abspath(target)
    parent = os.path.dirname(target) or "."
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=".fannoflow-", dir=parent)
    try:
        yield scratch
        os.makedirs(target, exist_ok=True)
        for name in sorted(os.listdir(scratch)):
            os.replace(os.path.join(scratch, name), os.path.join(target, name))
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
