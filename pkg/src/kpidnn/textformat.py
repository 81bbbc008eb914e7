"""Plain-text layer blocks shared by compiled graphs and trained models.

A block looks like::

    layer <out_dim> <in_dim> <activation|mixed> <dense|sparse>
    activations <name> ... <name>        # only when activation is 'mixed'
    <out_dim rows of in_dim values>      # dense
    nnz <count> / <count lines 'i j v'>  # sparse, row-major order
    bias <out_dim values>

Floats are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import ParseError


def fmt(value: float) -> str:
    return "%.17g" % value


def write_layer(fh, weight, bias, activation) -> None:
    """``activation`` is a name or a sequence of per-unit names."""
    out_dim, in_dim = weight.shape
    mixed = not isinstance(activation, str)
    encoding = "sparse" if sp.issparse(weight) else "dense"
    fh.write(f"layer {out_dim} {in_dim} {'mixed' if mixed else activation} {encoding}\n")
    if mixed:
        fh.write("activations " + " ".join(activation) + "\n")
    if encoding == "sparse":
        coo = sp.csr_matrix(weight)
        coo.sort_indices()
        coo = coo.tocoo()
        order = np.lexsort((coo.col, coo.row))
        fh.write(f"nnz {len(order)}\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {fmt(coo.data[i])}\n")
    else:
        for row in np.asarray(weight):
            fh.write(" ".join(fmt(v) for v in row) + "\n")
    fh.write("bias " + " ".join(fmt(v) for v in np.asarray(bias).ravel()) + "\n")


class LineReader:
    """Line iterator that remembers line numbers for error messages."""

    def __init__(self, fh):
        self._lines = iter(fh)
        self.lineno = 0

    def next(self) -> str:
        for line in self._lines:
            self.lineno += 1
            line = line.strip()
            if line:
                return line
        raise ParseError("unexpected end of file", self.lineno)

    def expect(self, keyword: str) -> list[str]:
        parts = self.next().split()
        if parts[0] != keyword:
            raise ParseError(f"expected '{keyword}', found '{parts[0]}'", self.lineno)
        return parts[1:]

    def floats(self, parts) -> np.ndarray:
        try:
            return np.array([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), self.lineno) from None


def read_layer(reader: LineReader):
    """Returns ``(weight, bias, activation)`` as written by :func:`write_layer`."""
    head = reader.expect("layer")
    if len(head) != 4:
        raise ParseError("malformed layer header", reader.lineno)
    out_dim, in_dim = int(head[0]), int(head[1])
    activation, encoding = head[2], head[3]
    if activation == "mixed":
        activation = reader.expect("activations")
        if len(activation) != out_dim:
            raise ParseError("activation count does not match layer width", reader.lineno)
    if encoding == "sparse":
        nnz = int(reader.expect("nnz")[0])
        rows, cols, vals = np.empty(nnz, int), np.empty(nnz, int), np.empty(nnz)
        for idx in range(nnz):
            parts = reader.next().split()
            rows[idx], cols[idx], vals[idx] = int(parts[0]), int(parts[1]), float(parts[2])
        weight = sp.csr_matrix((vals, (rows, cols)), shape=(out_dim, in_dim))
    elif encoding == "dense":
        weight = np.empty((out_dim, in_dim))
        for i in range(out_dim):
            row = reader.floats(reader.next().split())
            if row.size != in_dim:
                raise ParseError(f"row has {row.size} values, expected {in_dim}", reader.lineno)
            weight[i] = row
    else:
        raise ParseError(f"unknown weight encoding '{encoding}'", reader.lineno)
    bias = reader.floats(reader.expect("bias"))
    if bias.size != out_dim:
        raise ParseError("bias length does not match layer width", reader.lineno)
    return weight, bias, activation
