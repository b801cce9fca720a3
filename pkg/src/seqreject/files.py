"""Reading and writing the file formats used by the command line.

Structure file (JSON)::

    {"labels": ["A", "B", "C"],
     "atoms": [[0, 1, 2], [0], []],        # or "free": true
     "families": [["A", "B"], ["C"]],      # optional, for gatekeeping
     "local_pvalues": {"{A,B}": 0.01}}     # optional, for closure/partitioning

Atoms list the true hypotheses of each permitted truth assignment, by index
or by label. Tree file: ``{"labels": [...], "parent": {"child": "parent"}}``.
p-value file: CSV with header and columns ``label``, ``p`` and optionally
``weight``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .bonferroni import UserTable
from .logic import HypothesisUniverse, LogicalStructure
from .tree import HypothesisTree


class ParseError(ValueError):
    """Malformed input file; the message names the offending field."""


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON ({err})") from None


def _index(universe: HypothesisUniverse, item, where: str) -> int:
    if isinstance(item, bool):
        raise ParseError(f"{where}: {item!r} is not a hypothesis")
    if isinstance(item, int):
        if not 0 <= item < universe.count:
            raise ParseError(f"{where}: index {item} outside 0..{universe.count - 1}")
        return item
    try:
        return universe.index(str(item))
    except KeyError:
        raise ParseError(f"{where}: unknown label {item!r}") from None


def structure_from_dict(data: dict) -> LogicalStructure:
    if "labels" not in data:
        raise ParseError("structure: missing field 'labels'")
    try:
        universe = HypothesisUniverse(tuple(data["labels"]))
    except ValueError as err:
        raise ParseError(f"labels: {err}") from None
    if data.get("free"):
        if "atoms" in data:
            raise ParseError("structure: give either 'free' or 'atoms', not both")
        return LogicalStructure.free(universe)
    if "atoms" not in data:
        raise ParseError("structure: missing field 'atoms' (or \"free\": true)")
    atoms = []
    for k, atom in enumerate(data["atoms"]):
        ids = {_index(universe, x, f"atoms[{k}]") for x in atom}
        atoms.append(sum(1 << i for i in ids))
    try:
        return LogicalStructure(universe, atoms)
    except ValueError as err:
        raise ParseError(f"atoms: {err}") from None


def load_structure(path) -> LogicalStructure:
    return structure_from_dict(read_json(path))


def tree_from_dict(data: dict) -> HypothesisTree:
    for key in ("labels", "parent"):
        if key not in data:
            raise ParseError(f"tree: missing field {key!r}")
    try:
        return HypothesisTree(data["labels"], data["parent"])
    except (ValueError, KeyError) as err:
        raise ParseError(f"tree: {err}") from None


def load_tree(path) -> HypothesisTree:
    return tree_from_dict(read_json(path))


def families_from_dict(data: dict, universe: HypothesisUniverse) -> list[list[int]]:
    if "families" not in data:
        raise ParseError("families: missing field 'families'")
    return [
        [_index(universe, x, f"families[{j}]") for x in fam] for j, fam in enumerate(data["families"])
    ]


def parse_set_key(key: str, universe: HypothesisUniverse) -> frozenset[int]:
    """``"{A,B}"`` (or a bare ``"A"``) to the frozenset of hypothesis ids."""
    body = key.strip()
    if body.startswith("{") and body.endswith("}"):
        body = body[1:-1]
    names = [x.strip() for x in body.split(",") if x.strip()]
    if not names:
        raise ParseError(f"local_pvalues: empty set key {key!r}")
    return frozenset(_index(universe, x, f"local_pvalues[{key!r}]") for x in names)


def local_table_from_dict(data: dict, universe: HypothesisUniverse, fallback=None) -> UserTable:
    raw = data.get("local_pvalues")
    if raw is None:
        raise ParseError("local_pvalues: missing field")
    table = {}
    for key, value in raw.items():
        p = _pvalue(value, f"local_pvalues[{key!r}]")
        table[parse_set_key(key, universe)] = p
    return UserTable(table, fallback=fallback)


def _pvalue(text, where: str) -> float:
    try:
        p = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: {text!r} is not a number") from None
    if math.isnan(p) or not 0.0 <= p <= 1.0:
        raise ParseError(f"{where}: p-value {text!r} outside [0, 1]")
    return p


def read_pvalues(path) -> tuple[list[str], np.ndarray, np.ndarray | None]:
    """Labels, p-values and optional weights from a CSV file."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in reader.fieldnames or []]
        rows = [{k.strip(): (v or "").strip() for k, v in row.items() if k} for row in reader]
    rows = [r for r in rows if any(r.values())]
    if not rows:
        raise ParseError("no hypotheses")
    if "p" not in fields:
        raise ParseError(f"{path}: missing column 'p'")
    labels = [r.get("label") or f"H{i + 1}" for i, r in enumerate(rows)]
    p = np.array([_pvalue(r["p"], f"row {i + 1}, column 'p'") for i, r in enumerate(rows)])
    weights = None
    if "weight" in fields:
        w = []
        for i, r in enumerate(rows):
            try:
                w.append(float(r["weight"]))
            except ValueError:
                raise ParseError(f"row {i + 1}, column 'weight': {r['weight']!r} is not a number") from None
        weights = np.array(w)
    return labels, p, weights


def read_data(path, group_col: str | None = None) -> tuple[list[str], np.ndarray, np.ndarray | None]:
    """Numeric data matrix from a CSV with header; ``group_col`` is split off."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("no hypotheses") from None
        rows = [row for row in reader if any(c.strip() for c in row)]
    if group_col is not None and group_col not in header:
        raise ParseError(f"--group-col: column {group_col!r} not in {header}")
    cols = [j for j, h in enumerate(header) if h != group_col]
    if not cols:
        raise ParseError("no hypotheses")
    if not rows:
        raise ParseError(f"{path}: no observations")
    X = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"row {i + 1}: expected {len(header)} fields, got {len(row)}")
        for k, j in enumerate(cols):
            try:
                X[i, k] = float(row[j])
            except ValueError:
                raise ParseError(f"row {i + 1}, column {header[j]!r}: {row[j]!r} is not a number") from None
    groups = None
    if group_col is not None:
        g = header.index(group_col)
        groups = np.array([row[g].strip() for row in rows])
    return [header[j] for j in cols], X, groups


def load_group_elements(path) -> list:
    """Transformations from JSON: a list of permutations or ``{"perm", "signs"}`` objects."""
    data = read_json(path)
    items = data.get("elements") if isinstance(data, dict) else data
    if not isinstance(items, list) or not items:
        raise ParseError("group file: expected a nonempty list under 'elements'")
    out = []
    for k, e in enumerate(items):
        if isinstance(e, dict):
            if "perm" not in e:
                raise ParseError(f"elements[{k}]: missing field 'perm'")
            signs = e.get("signs", [1] * len(e["perm"]))
            out.append((list(e["perm"]), list(signs)))
        else:
            out.append(list(e))
    return out


def write_text(text: str, path=None) -> None:
    if path is None:
        print(text, end="" if text.endswith("\n") else "\n")
    else:
        Path(path).write_text(text)


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()
