"""Deterministic CSV writing.

Float formatting is fixed (%.12g) so identical inputs give byte-identical
files; no timestamps or machine state belong here.  Column layouts are
documented in schema.txt, shipped next to this module.
"""

from __future__ import annotations

import hashlib
import importlib.resources as resources

import numpy as np

__all__ = ["format_value", "write_csv", "sha256_file", "schema_text"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    ncol = len(header)
    for row in rows:
        if len(row) != ncol:
            raise ValueError(f"row width {len(row)} != header width {ncol} in {path}")
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def schema_text() -> str:
    return resources.files("hjneumann.cli").joinpath("schema.txt").read_text(encoding="utf-8")
