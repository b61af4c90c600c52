"""CSV, JSON and config (de)serialisation.

Dataset CSVs use the header ``y, a, z_0.., w_0.., x_0..``; real datasets with
other headers are read through an explicit role mapping. All numbers are
written in scientific notation with a fixed number of decimals so equal
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .bridges import BridgeH, BridgeQ
from .dataset import Dataset
from .errors import EmptyFile, MissingColumnRole, NonNumericCell
from .policy import policy_from_dict

DEFAULT_PRECISION = 12
MODEL_FORMAT = "proxkdr-models/1"
ROLES = ("y", "a", "z", "w", "x")


def fmt(value: float, precision: int = DEFAULT_PRECISION) -> str:
    return f"{float(value):.{precision}e}"


def dataset_header(data: Dataset) -> list[str]:
    p, q, r = data.dims
    return (
        ["y", "a"]
        + [f"z_{i}" for i in range(p)]
        + [f"w_{i}" for i in range(q)]
        + [f"x_{i}" for i in range(r)]
    )


def save_csv(data: Dataset, path, precision: int = DEFAULT_PRECISION) -> None:
    table = np.column_stack([data.y, data.a, data.z, data.w, data.x])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_header(data))
        for row in table:
            writer.writerow([fmt(v, precision) for v in row])


def _roles_from_prefixes(header: list[str]) -> dict[str, list[str]]:
    roles: dict[str, list[str]] = {r: [] for r in ROLES}
    for name in header:
        key = name.strip()
        if key in ("y", "a"):
            roles[key].append(name)
        elif key[:2] in ("z_", "w_", "x_"):
            roles[key[0]].append(name)
    for block in ("z", "w", "x"):
        roles[block].sort(key=lambda c: int(c.split("_", 1)[1]) if c.split("_", 1)[1].isdigit() else c)
    return roles


def _normalise_mapping(schema: dict) -> dict[str, list[str]]:
    roles = {}
    for role in ROLES:
        cols = schema.get(role, [])
        roles[role] = [cols] if isinstance(cols, str) else list(cols)
    return roles


def _parse_cell(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise NonNumericCell(f"row {row}, column {col!r}: {cell!r} is not a number") from None
    if not math.isfinite(value):
        raise NonNumericCell(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def load_csv(path, schema: dict | None = None) -> Dataset:
    """Read a dataset CSV.

    Parameters
    ----------
    path : path-like
    schema : dict, optional
        Explicit role mapping ``{"y": col, "a": col, "z": [...], "w": [...], "x": [...]}``
        for files that do not follow the prefix convention.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise EmptyFile(f"{path} has a header but no rows")
    roles = _roles_from_prefixes(header) if schema is None else _normalise_mapping(schema)
    for role in ("y", "a"):
        if len(roles[role]) != 1:
            raise MissingColumnRole(f"expected exactly one {role!r} column, found {roles[role]}")
    if not roles["z"] or not roles["w"]:
        raise MissingColumnRole("at least one z and one w column are required")
    index = {name: i for i, name in enumerate(header)}
    for role, cols in roles.items():
        for col in cols:
            if col not in index:
                raise MissingColumnRole(f"column {col!r} for role {role!r} not in header")
    used = [c for role in ROLES for c in roles[role]]
    if len(set(used)) != len(used):
        raise MissingColumnRole("a column is assigned to more than one role")

    values = np.empty((len(body), len(header)))
    needed = sorted(index[c] for c in used)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise NonNumericCell(f"row {i + 1} has {len(row)} cells, header has {len(header)}")
        for j in needed:
            values[i, j] = _parse_cell(row[j].strip(), i + 1, header[j])

    def block(role):
        return values[:, [index[c] for c in roles[role]]]

    return Dataset(block("y")[:, 0], block("a")[:, 0], block("z"), block("w"), block("x"))


def schema_fingerprint(data: Dataset) -> str:
    return hashlib.sha256(",".join(dataset_header(data)).encode()).hexdigest()[:16]


def save_models(path, data: Dataset, h: BridgeH | None, q: BridgeQ | None, policy=None, extra: dict | None = None) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "schema": {"p": data.dims[0], "q": data.dims[1], "r": data.dims[2], "fingerprint": schema_fingerprint(data)},
        "h": None if h is None else h.to_dict(),
        "q": None if q is None else q.to_dict(),
        "policy": None if policy is None else policy.to_dict(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_models(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a {MODEL_FORMAT} document")
    return {
        "schema": doc["schema"],
        "h": None if doc.get("h") is None else BridgeH.from_dict(doc["h"]),
        "q": None if doc.get("q") is None else BridgeQ.from_dict(doc["q"]),
        "policy": None if doc.get("policy") is None else policy_from_dict(doc["policy"]),
    }


def check_schema(models: dict, data: Dataset) -> None:
    want = models["schema"]
    if (want["p"], want["q"], want["r"]) != data.dims:
        raise MissingColumnRole(
            f"dataset columns (p, q, r)={data.dims} do not match the fitted models "
            f"({want['p']}, {want['q']}, {want['r']})"
        )


def save_curve_csv(path, grid, columns: dict, precision: int = DEFAULT_PRECISION) -> None:
    """Write ``a`` plus one column per named curve."""
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a"] + names)
        for i, a in enumerate(grid):
            writer.writerow([fmt(a, precision)] + [fmt(columns[k][i], precision) for k in names])


def load_curve_csv(path) -> tuple[np.ndarray, dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise EmptyFile(f"{path} has no curve rows")
    header = rows[0]
    data = np.array([[_parse_cell(c, i + 1, header[j]) for j, c in enumerate(r)] for i, r in enumerate(rows[1:])])
    return data[:, 0], {name: data[:, j] for j, name in enumerate(header) if j > 0}


def load_config(path) -> dict:
    """Read a YAML (or JSON) configuration file into a dict."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path} does not contain a mapping")
    return doc
