"""Deterministic text formats: row-format matrices and edge lists.

Row format:
    <rows> <cols> <nnz>
    <row_index>TAB<col>:<value> <col>:<value> ...
One line per nonempty row, row indices strictly ascending, column indices
strictly ascending, values written in shortest round-trip decimal so that
read(write(M)) == M bit-exactly.

Edge list: one "src TAB dst" pair of 0-based node ids per line.
"""

from __future__ import annotations


from .sparse import SparseMatrix

__all__ = ["ParseError", "read_matrix", "write_matrix", "read_edges", "write_edges"]


class ParseError(ValueError):
    """Malformed input file; carries the offending path and line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def write_matrix(M: SparseMatrix, path) -> None:
    """Write M in row format. Round-trips bit-exactly through read_matrix."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{M.rows} {M.cols} {M.nnz}\n")
        for i in range(M.rows):
            cols, vals = M.row(i)
            if cols.size == 0:
                continue
            pairs = " ".join(f"{c}:{v!r}" for c, v in zip(cols.tolist(), vals.tolist()))
            fh.write(f"{i}\t{pairs}\n")


def read_matrix(path) -> SparseMatrix:
    """Parse a row-format matrix file, rejecting malformed or inconsistent input."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise ParseError(path, 1, "missing header line")
        parts = header.split()
        if len(parts) != 3:
            raise ParseError(path, 1, f"header must be '<rows> <cols> <nnz>', got {header.strip()!r}")
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise ParseError(path, 1, f"non-integer header field in {header.strip()!r}") from None
        if rows < 1 or cols < 1:
            raise ParseError(path, 1, f"matrix shape must be positive, got {rows}x{cols}")
        if nnz < 0:
            raise ParseError(path, 1, "negative nnz in header")

        row_entries = [[] for _ in range(rows)]
        seen = 0
        prev_row = -1
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            head, tab, rest = line.partition("\t")
            if not tab:
                raise ParseError(path, lineno, "expected '<row>\\t<col>:<value> ...'")
            try:
                i = int(head)
            except ValueError:
                raise ParseError(path, lineno, f"bad row index {head!r}") from None
            if not 0 <= i < rows:
                raise ParseError(path, lineno, f"row index {i} outside 0..{rows - 1}")
            if i <= prev_row:
                raise ParseError(path, lineno, f"row index {i} not strictly ascending")
            prev_row = i
            entries = row_entries[i]
            prev_col = -1
            for tok in rest.split():
                c, colon, v = tok.partition(":")
                if not colon:
                    raise ParseError(path, lineno, f"bad entry {tok!r}, expected col:value")
                try:
                    col = int(c)
                    val = float(v)
                except ValueError:
                    raise ParseError(path, lineno, f"bad entry {tok!r}") from None
                if not 0 <= col < cols:
                    raise ParseError(path, lineno, f"column index {col} outside 0..{cols - 1}")
                if col <= prev_col:
                    raise ParseError(
                        path, lineno,
                        f"column index {col} not strictly ascending (after {prev_col})")
                prev_col = col
                entries.append((col, val))
                seen += 1
        if seen != nnz:
            raise ParseError(path, 1, f"header declares nnz={nnz} but file has {seen} entries")
    return SparseMatrix.from_rows(rows, cols, row_entries)


def write_edges(edges, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for src, dst in edges:
            fh.write(f"{src}\t{dst}\n")


def read_edges(path):
    """Parse an edge-list file into a list of (src, dst) node-id pairs."""
    edges = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'src dst', got {line.strip()!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"non-integer node id in {line.strip()!r}") from None
            if src < 0 or dst < 0:
                raise ParseError(path, lineno, "node ids must be non-negative")
            edges.append((src, dst))
    return edges
