"""Plain-text graph and dataset files.

Single graph::

    n d [c]
    <n lines of d reals>
    labels:            (optional)
    <n integers>
    edges:
    i j                (one pair per line, 0-indexed, i < j)

Dataset: a line with the graph count ``g``, then ``g`` blocks, each introduced
by a ``graph k`` line. Inside a dataset, a ``labels:`` block holding a single
integer is the graph's class (node-level labels need ``n > 1`` integers).
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import GraphValidationError, ParseError
from .graph import Graph


def _fmt(x: float) -> str:
    return repr(float(x))


def format_graph(g: Graph, graph_level: bool = False) -> list[str]:
    head = f"{g.n} {g.feature_dim}"
    if g.num_classes is not None:
        head += f" {g.num_classes}"
    lines = [head]
    lines.extend(" ".join(_fmt(v) for v in row) for row in g.features)
    if graph_level and g.graph_label is not None:
        lines += ["labels:", str(int(g.graph_label))]
    elif g.labels is not None:
        lines += ["labels:", " ".join(str(int(v)) for v in g.labels)]
    lines.append("edges:")
    lines.extend(f"{i} {j}" for i, j in g.edges)
    return lines


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_graph(g: Graph, path) -> None:
    atomic_write_text(path, "\n".join(format_graph(g)) + "\n")


def write_graph_dataset(graphs, path) -> None:
    graphs = list(graphs)
    lines = [str(len(graphs))]
    for k, g in enumerate(graphs):
        lines.append(f"graph {k}")
        lines.extend(format_graph(g, graph_level=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


class _Lines:
    def __init__(self, text: str):
        self.items = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
        self.items = [(no, ln) for no, ln in self.items if ln]
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None)

    def next(self, what: str):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise ParseError(f"unexpected end of file, expected {what}", last + 1)
        item = self.items[self.pos]
        self.pos += 1
        return item


def _ints(tokens, lineno, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected integers for {what}", lineno) from None


def _parse_graph(lines: _Lines, graph_level: bool) -> Graph:
    lineno, head = lines.next("header 'n d [c]'")
    parts = head.split()
    if len(parts) not in (2, 3):
        raise ParseError("header must be 'n d [c]'", lineno)
    hdr = _ints(parts, lineno, "header")
    n, d = hdr[0], hdr[1]
    classes = hdr[2] if len(hdr) == 3 else None
    if n < 0 or d < 0:
        raise ParseError("negative size in header", lineno)
    feats = np.zeros((n, d))
    # zero-width rows are blank lines, which the reader skips
    for i in range(n if d else 0):
        lineno, row = lines.next(f"feature row {i}")
        toks = row.split()
        if len(toks) != d:
            raise ParseError(f"feature row has {len(toks)} values, expected {d}", lineno)
        try:
            feats[i] = [float(t) for t in toks]
        except ValueError:
            raise ParseError("non-numeric feature value", lineno) from None
    if not np.all(np.isfinite(feats)):
        raise GraphValidationError("features must be finite")

    labels, graph_label = None, None
    lineno, tag = lines.next("'labels:' or 'edges:'")
    if tag.startswith("labels:"):
        values = _ints(tag[len("labels:"):].split(), lineno, "labels")
        while True:
            nxt_no, nxt = lines.peek()
            if nxt is None or nxt.startswith("edges:"):
                break
            lines.next("labels")
            values += _ints(nxt.split(), nxt_no, "labels")
        if graph_level and len(values) == 1:
            graph_label = values[0]
        elif len(values) == n:
            labels = np.array(values, dtype=np.int64)
        else:
            raise ParseError(f"expected {n} labels, got {len(values)}", lineno)
        lineno, tag = lines.next("'edges:'")
    if not tag.startswith("edges:"):
        raise ParseError("expected 'edges:'", lineno)

    edges, seen = [], set()
    while True:
        no, ln = lines.peek()
        if ln is None or ln.startswith("graph "):
            break
        lines.next("edge")
        toks = ln.split()
        if len(toks) != 2:
            raise ParseError("edge line must be 'i j'", no)
        i, j = _ints(toks, no, "edge")
        if i == j:
            raise GraphValidationError(f"line {no}: self-loop {i} {j}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphValidationError(f"line {no}: edge endpoint out of range")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphValidationError(f"line {no}: duplicate edge {i} {j}")
        seen.add(key)
        edges.append(key)
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), feats, labels, graph_label, classes)


def parse_graph(text: str) -> Graph:
    lines = _Lines(text)
    g = _parse_graph(lines, graph_level=False)
    no, extra = lines.peek()
    if extra is not None:
        raise ParseError("trailing content after graph", no)
    return g


def parse_graph_dataset(text: str) -> list[Graph]:
    lines = _Lines(text)
    no, first = lines.next("graph count")
    toks = first.split()
    if len(toks) != 1:
        raise ParseError("first line must be the graph count", no)
    (count,) = _ints(toks, no, "graph count")
    if count < 0:
        raise ParseError("graph count must be non-negative", no)
    graphs = []
    for k in range(count):
        no, tag = lines.next(f"'graph {k}'")
        if tag.split() != ["graph", str(k)]:
            raise ParseError(f"expected 'graph {k}'", no)
        graphs.append(_parse_graph(lines, graph_level=True))
    no, extra = lines.peek()
    if extra is not None:
        raise ParseError("trailing content after last graph", no)
    return graphs


def load_graph(path) -> Graph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def load_graph_dataset(path) -> list[Graph]:
    return parse_graph_dataset(Path(path).read_text(encoding="utf-8"))


def is_dataset_file(path) -> bool:
    """A dataset file starts with a lone integer followed by a ``graph 0`` line."""
    with open(path, encoding="utf-8") as fh:
        head = [ln.strip() for ln, _ in zip(fh, range(4)) if ln.strip()]
    return len(head) >= 2 and len(head[0].split()) == 1 and head[1].startswith("graph ")
