"""CSV / JSON interchange for data files, prediction sets, and benchmark rows."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict

import numpy as np

from .calibrate import PredictionSet
from .groups import Permutation
from .sim import BenchRow


class DataError(ValueError):
    """Malformed input file or schema violation."""


def read_hierarchical_csv(path):
    """Read branch data: columns branch_id, [x...,] y; blank y marks the target.

    Returns (branch_ids, xs, ys, target), where xs is None for unsupervised
    files, ys holds per-branch value arrays with NaN at the target slot, and
    target is (branch_index, row_index).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if "branch_id" not in header:
        raise DataError(f"{path}: need a header row with branch_id and y/value columns")
    bcol = header.index("branch_id")
    if "y" in header:
        ycol = header.index("y")
    elif "value" in header:
        ycol = header.index("value")
    else:
        raise DataError(f"{path}: no y or value column")
    xcols = [i for i, name in enumerate(header) if name == "x" or name.startswith("x_")]

    branches: dict[str, list] = {}
    order: list[str] = []
    for r in rows[1:]:
        b = r[bcol].strip()
        if b not in branches:
            branches[b] = []
            order.append(b)
        yraw = r[ycol].strip() if ycol < len(r) else ""
        y = float(yraw) if yraw else np.nan
        x = [float(r[i]) for i in xcols] if xcols else None
        branches[b].append((x, y))

    ys = []
    xs = [] if xcols else None
    target = None
    for bi, b in enumerate(order):
        yvals = np.array([y for _, y in branches[b]])
        for ri in np.flatnonzero(np.isnan(yvals)):
            if target is not None:
                raise DataError(f"{path}: more than one missing target value")
            target = (bi, int(ri))
        ys.append(yvals)
        if xcols:
            xs.append(np.array([x for x, _ in branches[b]]).squeeze(-1) if len(xcols) == 1
                      else np.array([x for x, _ in branches[b]]))
    if target is None:
        raise DataError(f"{path}: no missing target value (leave one y empty)")
    return order, xs, ys, target


def read_graph_values_csv(path):
    """Read vertex values: columns vertex_id, value; blank value = unobserved."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    header = [c.strip().lower() for c in rows[0]]
    if "vertex_id" not in header or "value" not in header:
        raise DataError(f"{path}: need vertex_id and value columns")
    vcol, col = header.index("vertex_id"), header.index("value")
    ids, vals = [], []
    for r in rows[1:]:
        ids.append(int(r[vcol]))
        raw = r[col].strip() if col < len(r) else ""
        vals.append(float(raw) if raw else np.nan)
    order = np.argsort(ids)
    vals = np.array(vals)[order]
    missing = np.flatnonzero(np.isnan(vals))
    if missing.size != 1:
        raise DataError(f"{path}: need exactly one unobserved vertex, found {missing.size}")
    return vals, int(missing[0])


def read_adjacency(path):
    """Adjacency from a dense CSV (optional header) or an edge list "u v [w]"."""
    with open(path) as fh:
        text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty adjacency file")
    delim = "," if "," in lines[0] else None
    first = lines[0].split(delim)
    try:
        float(first[0])
        has_header = False
    except ValueError:
        has_header = True
    body = lines[1:] if has_header else lines
    cells = [ln.split(delim) for ln in body]
    widths = {len(c) for c in cells}
    if widths <= {2, 3} and len(cells) != max(widths):
        return _edges_to_matrix(cells, path)
    if len(widths) == 1 and len(cells) == len(cells[0]):
        A = np.array([[float(v) for v in row] for row in cells])
        if not np.array_equal(A, A.T):
            raise DataError(f"{path}: adjacency must be symmetric")
        return A
    return _edges_to_matrix(cells, path)


def _edges_to_matrix(cells, path):
    edges = []
    for row in cells:
        if len(row) not in (2, 3):
            raise DataError(f"{path}: edge lines need 'u v [weight]'")
        u, v = int(row[0]), int(row[1])
        w = float(row[2]) if len(row) == 3 else 1.0
        edges.append((u, v, w))
    n = max(max(u, v) for u, v, _ in edges) + 1
    A = np.zeros((n, n))
    for u, v, w in edges:
        A[u, v] += w
        if u != v:
            A[v, u] += w
    return A


def read_generators(path, n: int) -> list[Permutation]:
    """One permutation per line in image notation, e.g. '1 2 0'."""
    gens = []
    with open(path) as fh:
        for ln in fh:
            if not ln.strip():
                continue
            imgs = [int(v) for v in ln.replace(",", " ").split()]
            if len(imgs) != n:
                raise DataError(f"{path}: generator length {len(imgs)} != {n}")
            gens.append(Permutation(imgs))
    if not gens:
        raise DataError(f"{path}: no generators found")
    return gens


def prediction_set_payload(ps: PredictionSet) -> dict:
    return {
        "candidates": ps.candidates.tolist(),
        "member": ps.member.astype(int).tolist(),
        "intervals": ps.intervals(),
        "length": ps.length if np.isfinite(ps.length) else "Inf",
        "unbounded": ps.unbounded,
        **{k: v for k, v in ps.meta.items()},
    }


def write_prediction_set(ps: PredictionSet, path: str, fmt: str = "json") -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(prediction_set_payload(ps), fh, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["candidate", "member"])
            for c, m in zip(ps.candidates, ps.member):
                writer.writerow([repr(float(c)), int(m)])
    else:
        raise DataError(f"unknown format {fmt!r}")


BENCH_FIELDS = [
    "method",
    "alpha",
    "sigma2",
    "mean_length",
    "se_length",
    "mean_coverage",
    "se_coverage",
    "unbounded_rate",
]


def write_bench_rows(rows: list[BenchRow], path: str, fmt: str = "csv") -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BENCH_FIELDS)
            for r in rows:
                d = asdict(r)
                writer.writerow(
                    ["Inf" if f == "mean_length" and not np.isfinite(d[f]) else d[f] for f in BENCH_FIELDS]
                )
    elif fmt == "json":
        payload = []
        for r in rows:
            d = asdict(r)
            if not np.isfinite(d["mean_length"]):
                d["mean_length"] = "Inf"
            payload.append(d)
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    else:
        raise DataError(f"unknown format {fmt!r}")
