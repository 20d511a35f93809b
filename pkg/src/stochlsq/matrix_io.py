"""Matrix files: headerless CSV, and a little-endian binary layout.

Binary layout: ``u64 rows, u64 cols`` (little-endian) followed by
``rows * cols`` IEEE-754 doubles, little-endian, row-major.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

FORMATS = ("csv", "f64le-binary")
_HEADER = struct.Struct("<QQ")


def _check_format(fmt):
    if fmt not in FORMATS:
        raise ValueError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")


def format_float(v):
    """17-significant-digit text that round-trips a double exactly."""
    return "%.17g" % v


def write_matrix(mat, path, fmt="f64le-binary"):
    _check_format(fmt)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[:, None]
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(format_float(v) for v in row) for row in mat]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    else:
        rows, cols = mat.shape
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(rows, cols))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def read_matrix(path, fmt="f64le-binary"):
    _check_format(fmt)
    path = Path(path)
    if fmt == "csv":
        return _read_csv(path.read_text(encoding="utf-8"))
    return _read_binary(path.read_bytes())


def _read_csv(text):
    rows = []
    width = None
    lines = text.splitlines()
    # a single trailing blank line is tolerated, interior blanks are not
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty matrix file", line=1)
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split(",")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(f"expected {width} values, found {len(tokens)}", line=lineno)
        try:
            values = [float(tok) for tok in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise ParseError(f"non-numeric token {bad.strip()!r}", line=lineno) from None
        if not all(np.isfinite(values)):
            raise ParseError("non-finite value", line=lineno)
        rows.append(values)
    return np.array(rows, dtype=np.float64)


def _is_float(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _read_binary(data):
    if len(data) < _HEADER.size:
        raise ParseError(f"truncated header: {len(data)} bytes, need {_HEADER.size}")
    rows, cols = _HEADER.unpack_from(data)
    need = _HEADER.size + 8 * rows * cols
    if len(data) != need:
        raise ParseError(
            f"payload size mismatch: header says {rows}x{cols} ({need} bytes), file has {len(data)}")
    mat = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    mat = mat.astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(mat)):
        raise ParseError("non-finite value in binary payload")
    return mat
