"""File formats shared by the CLI and the scenario generators.

Schema files are line-oriented: blank lines and ``#`` comments are skipped,
every other line reads ``<column> <kind> [key=value ...]`` with kinds
``continuous | ordinal | nominal | weight | skip``. ``levels=`` takes either
a count or a comma-separated label list; continuous columns accept
``transform=identity|log-shift`` and ``shift_quantile=``. Data files are
plain CSV with a header row; categorical cells hold 0-based level codes.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .latent import LOG_SHIFT, TransformSpec
from .schema import CONTINUOUS, Dataset, NOMINAL, ORDINAL, SchemaError, VariableSpec

_SIMILARITY_MAGIC = b"PDCSIM1\x00"


class DataFormatError(ValueError):
    """Malformed schema or data file."""


def _parse_options(tokens, where):
    opts = {}
    for tok in tokens:
        if "=" not in tok:
            raise DataFormatError(f"{where}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        opts[key] = val
    return opts


def _levels_from(value, where):
    parts = value.split(",")
    if len(parts) == 1 and parts[0].isdigit():
        return tuple(str(i) for i in range(int(parts[0])))
    if len(parts) < 2:
        raise DataFormatError(f"{where}: levels need a count or >= 2 labels")
    return tuple(parts)


def read_schema_file(path) -> tuple[list[VariableSpec], str | None, list[str]]:
    """Parse a schema file.

    Returns (variable specs in file order, weight column name or None,
    skipped column names).
    """
    specs: list[VariableSpec] = []
    weight_column = None
    skipped: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise DataFormatError(f"{path}:{lineno}: expected '<column> <kind> ...'")
        name, kind, *rest = tokens
        where = f"{path}:{lineno}"
        opts = _parse_options(rest, where)
        if kind == "weight":
            if weight_column is not None:
                raise DataFormatError(f"{where}: duplicate weight column")
            weight_column = name
        elif kind == "skip":
            skipped.append(name)
        elif kind == CONTINUOUS:
            transform = None
            if opts.get("transform", "identity") == LOG_SHIFT:
                transform = TransformSpec(
                    kind=LOG_SHIFT,
                    shift_quantile=float(opts.get("shift_quantile", 0.01)),
                )
            specs.append(VariableSpec(name, CONTINUOUS, (), transform))
        elif kind in (ORDINAL, NOMINAL):
            if "levels" not in opts:
                raise DataFormatError(f"{where}: {kind} variables need levels=")
            specs.append(VariableSpec(name, kind, _levels_from(opts["levels"], where)))
        else:
            raise DataFormatError(f"{where}: unknown kind {kind!r}")
    if not specs:
        raise DataFormatError(f"{path}: no variables declared")
    return specs, weight_column, skipped


def write_schema_file(path, specs, weight_column: str | None = None):
    lines = ["# column kind [options]"]
    for v in specs:
        if v.kind == CONTINUOUS:
            opts = ""
            if v.transform is not None and v.transform.kind == LOG_SHIFT:
                opts = f" transform=log-shift shift_quantile={v.transform.shift_quantile}"
            lines.append(f"{v.name} continuous{opts}")
        else:
            lines.append(f"{v.name} {v.kind} levels={','.join(v.levels)}")
    if weight_column is not None:
        lines.append(f"{weight_column} weight")
    Path(path).write_text("\n".join(lines) + "\n")


def read_data_csv(path, specs, weight_column: str | None = None,
                  skipped=()) -> Dataset:
    """Load a CSV into a dataset whose columns follow the spec order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    pos = {name: i for i, name in enumerate(header)}
    known = {v.name for v in specs} | set(skipped)
    if weight_column is not None:
        known.add(weight_column)
    unknown = [name for name in header if name not in known]
    if unknown:
        raise DataFormatError(f"{path}: columns not in schema: {', '.join(unknown)}")
    for v in specs:
        if v.name not in pos:
            raise DataFormatError(f"{path}: missing column {v.name!r}")
    if weight_column is not None and weight_column not in pos:
        raise DataFormatError(f"{path}: missing weight column {weight_column!r}")

    def column(name):
        j = pos[name]
        try:
            return np.array([float(row[j]) for row in rows])
        except (ValueError, IndexError) as err:
            raise DataFormatError(f"{path}: bad value in column {name!r}: {err}") from None

    values = np.column_stack([column(v.name) for v in specs])
    weights = column(weight_column) if weight_column is not None else np.ones(len(rows))
    return Dataset(values=values, weights=weights)


def write_data_csv(path, dataset: Dataset, specs, weight_column: str | None = None):
    header = [v.name for v in specs]
    if weight_column is not None:
        header.append(weight_column)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(x)) for x in dataset.values[i]]
            if weight_column is not None:
                row.append(repr(float(dataset.weights[i])))
            writer.writerow(row)


def write_similarity_binary(path, sim: np.ndarray):
    """Dense row-major float64 dump preceded by a magic tag and n."""
    sim = np.ascontiguousarray(sim, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_SIMILARITY_MAGIC)
        fh.write(struct.pack("<Q", sim.shape[0]))
        fh.write(sim.tobytes())


def read_similarity_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(_SIMILARITY_MAGIC))
        if magic != _SIMILARITY_MAGIC:
            raise DataFormatError(f"{path}: not a similarity matrix file")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    if data.size != n * n:
        raise DataFormatError(f"{path}: truncated similarity matrix")
    return data.reshape(n, n).copy()
