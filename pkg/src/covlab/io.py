"""Line-oriented text serialization of spaces, plus CSV and (x, y) series files.

Space file layout::

    covlab-space 1
    points <n>
    mesh <float>
    units <word>
    coords <dim>            # 0 when absent, then n lines of dim floats
    weights <0|1>           # then n lines
    orientation <0|1>       # then n lines
    distances               # then n-1 lines, row i holds d(i, 0..i-1)
  or
    edges <m>               # then m lines "i j length"; distances are rebuilt

Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from covlab.core_metric import FiniteMetricSpace, graph_distances
from covlab.errors import CovlabError

MAGIC = "covlab-space 1"


def _f(x) -> str:
    return repr(float(x))


def write_space(space: FiniteMetricSpace, path, block: str = "distances") -> None:
    n = space.n
    out: List[str] = [MAGIC, f"points {n}", f"mesh {_f(space.mesh)}", f"units {space.units}"]
    coords = space.coords
    if coords is None:
        out.append("coords 0")
    else:
        c = np.asarray(coords, dtype=float).reshape(n, -1)
        out.append(f"coords {c.shape[1]}")
        out += [" ".join(_f(v) for v in row) for row in c]
    out.append("weights 1")
    out += [_f(w) for w in space.weights]
    if space.orientation is None:
        out.append("orientation 0")
    else:
        out.append("orientation 1")
        out += [_f(o) for o in space.orientation]
    if block == "edges":
        lg = space.meta.get("local_graph")
        if lg is None:
            raise CovlabError("space has no local graph to write as edges")
        rows, cols, lens = lg
        out.append(f"edges {len(rows)}")
        out += [f"{int(i)} {int(j)} {_f(l)}" for i, j, l in zip(rows, cols, lens)]
    elif block == "distances":
        out.append("distances")
        d = space.dist
        out += [" ".join(_f(v) for v in d[i, :i]) for i in range(1, n)]
    else:
        raise CovlabError(f"unknown block {block!r}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


class _Lines:
    def __init__(self, text: str, name: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.name = name

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise CovlabError(f"{self.name}: unexpected end of file at line {self.pos + 1}")
        self.pos += 1
        return self.lines[self.pos - 1]

    def keyed(self, key: str) -> str:
        line = self.next()
        parts = line.split(None, 1)
        if not parts or parts[0] != key:
            raise CovlabError(f"{self.name}:{self.pos}: expected '{key}', got {line!r}")
        return parts[1].strip() if len(parts) > 1 else ""

    def floats(self, count: Optional[int] = None) -> List[float]:
        line = self.next()
        try:
            vals = [float(v) for v in line.split()]
        except ValueError:
            raise CovlabError(f"{self.name}:{self.pos}: bad number in {line!r}") from None
        if count is not None and len(vals) != count:
            raise CovlabError(f"{self.name}:{self.pos}: expected {count} values, got {len(vals)}")
        return vals


def read_space(path) -> FiniteMetricSpace:
    name = str(path)
    rd = _Lines(Path(path).read_text(encoding="utf-8"), name)
    if rd.next().strip() != MAGIC:
        raise CovlabError(f"{name}:1: not a covlab space file")
    try:
        n = int(rd.keyed("points"))
        mesh = float(rd.keyed("mesh"))
        units = rd.keyed("units")
        dim = int(rd.keyed("coords"))
    except ValueError as exc:
        raise CovlabError(f"{name}:{rd.pos}: {exc}") from None
    coords = np.array([rd.floats(dim) for _ in range(n)]) if dim else None
    weights = None
    if rd.keyed("weights") == "1":
        weights = np.array([rd.floats(1)[0] for _ in range(n)])
    orient = None
    if rd.keyed("orientation") == "1":
        orient = np.array([rd.floats(1)[0] for _ in range(n)])
    head = rd.next().split()
    meta = {}
    if head[:1] == ["distances"]:
        d = np.zeros((n, n))
        for i in range(1, n):
            d[i, :i] = rd.floats(i)
        d = d + d.T
    elif head[:1] == ["edges"]:
        m = int(head[1])
        e = np.array([rd.floats(3) for _ in range(m)]).reshape(m, 3)
        rows, cols = e[:, 0].astype(np.int64), e[:, 1].astype(np.int64)
        d = graph_distances(n, rows, cols, e[:, 2])
        meta["local_graph"] = (rows, cols, e[:, 2].copy())
    else:
        raise CovlabError(f"{name}:{rd.pos}: expected 'distances' or 'edges'")
    return FiniteMetricSpace(d, weights=weights, coords=coords, orientation=orient,
                             mesh=mesh, units=units, meta=meta)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)] + [",".join(_cell(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_series(path, x, y, names=("x", "y")) -> None:
    """Two-column plot-data file with full-precision decimals."""
    write_csv(path, names, zip(x, y))


def write_cover(cover, path) -> None:
    """Cover edge list: one ``node_a,node_b,length`` row per lifted edge, then projection."""
    edges = [(int(a), int(b), float(l)) for (a, b), l in zip(cover.edges, cover.edge_lengths)]
    lines = ["# lifted edges", "node_a,node_b,length"] + [f"{a},{b},{l!r}" for a, b, l in edges]
    lines += ["# projection", "node,base,lifted_distance"]
    lines += [f"{i},{int(p)},{float(d)!r}" for i, (p, d) in enumerate(zip(cover.projection, cover.dist))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
