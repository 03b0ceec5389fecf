"""On-disk formats: edge lists, observation triplets, dense 0/1 matrices, manifests.

Formats (all plain text, 0-indexed, locale-independent):
  graph          one edge per line as "u v" with u < v, lines sorted
  observations   one entry per line as "r c v"
  matrix         one row per line, entries space-separated 0/1
  manifest       JSON object with sorted keys
"""

from __future__ import annotations

import json
import os

import numpy as np

from .model import Observation, ParseError, SideGraph


def write_edge_list(graph: SideGraph, path: str) -> None:
    with open(path, "w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_edge_list(path: str, n: int) -> SideGraph:
    edges = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer vertex in {line!r}") from None
            if not (0 <= u < n and 0 <= v < n):
                raise ParseError(path, line_no, f"vertex out of range [0, {n}) in {line!r}")
            if u == v:
                raise ParseError(path, line_no, "self-loop")
            edges.append((u, v))
    return SideGraph.from_edge_set(n, edges)


def write_observations(obs: Observation, path: str) -> None:
    with open(path, "w") as fh:
        for r, c, v in zip(obs.rows, obs.cols, obs.vals):
            fh.write(f"{r} {c} {v}\n")


def read_observations(path: str, n: int, m: int) -> Observation:
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 'r c v', got {line!r}")
            try:
                r, c, v = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer field in {line!r}") from None
            if not (0 <= r < n and 0 <= c < m):
                raise ParseError(path, line_no, "entry index out of range")
            if v not in (0, 1):
                raise ParseError(path, line_no, f"rating must be 0/1, got {v}")
            rows.append(r)
            cols.append(c)
            vals.append(v)
    try:
        return Observation(n=n, m=m, rows=np.array(rows, dtype=np.int64),
                           cols=np.array(cols, dtype=np.int64),
                           vals=np.array(vals, dtype=np.uint8))
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from exc


def write_matrix(matrix: np.ndarray, path: str) -> None:
    matrix = np.asarray(matrix)
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def read_matrix(path: str) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if any(p not in ("0", "1") for p in parts):
                raise ParseError(path, line_no, "matrix entries must be 0 or 1")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(path, line_no,
                                 f"row has {len(parts)} entries, expected {width}")
            rows.append([int(p) for p in parts])
    if not rows:
        raise ParseError(path, 0, "empty matrix file")
    return np.array(rows, dtype=np.uint8)


def write_manifest(payload: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
