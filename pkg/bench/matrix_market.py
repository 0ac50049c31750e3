"""
Matrix Market I/O
Header, size line and body entries are checked here so errors can name a
line; the values themselves are parsed and written by scipy.io.
"""

from pathlib import Path
from typing import Iterator, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from common.errors import MatrixMarketError
from linalg.csr import CsrMatrix

BANNER = "%%MatrixMarket"
FORMATS = ("coordinate", "array")
FIELDS = ("real", "integer", "pattern", "double")
SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _data_lines(f, lineno: int) -> Iterator[Tuple[int, str]]:
    """(line number, stripped text) of the non-comment lines after lineno"""
    for line in f:
        lineno += 1
        stripped = line.strip()
        if stripped and not stripped.startswith("%"):
            yield lineno, stripped


def _scan_header(f) -> Tuple[str, str, Tuple[int, ...], int]:
    banner = f.readline()
    tokens = banner.strip().split()
    if len(tokens) != 5 or tokens[0] != BANNER:
        raise MatrixMarketError(f"bad banner {banner.strip()!r}", line=1)
    obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt not in FORMATS or fld not in FIELDS or sym not in SYMMETRIES:
        raise MatrixMarketError(f"unsupported type {' '.join(tokens[1:])!r}", line=1)
    lineno = 1
    for lineno, stripped in _data_lines(f, 1):
        expected = 3 if fmt == "coordinate" else 2
        try:
            sizes = tuple(int(v) for v in stripped.split())
        except ValueError:
            raise MatrixMarketError(f"size line must hold integers, got {stripped!r}", line=lineno)
        if len(sizes) != expected or min(sizes) < 0:
            raise MatrixMarketError(f"size line needs {expected} non-negative integers, got {stripped!r}",
                                    line=lineno)
        return fmt, fld, sizes, lineno
    raise MatrixMarketError("missing size line", line=lineno + 1)


def _check_entry(parts, fmt: str, fld: str, sizes: Tuple[int, ...], lineno: int):
    if fmt == "array":
        if len(parts) != 1:
            raise MatrixMarketError(f"array entry needs 1 value, got {len(parts)}", line=lineno)
        value = parts[0]
    else:
        width = 2 if fld == "pattern" else 3
        if len(parts) != width:
            raise MatrixMarketError(f"coordinate entry needs {width} fields, got {len(parts)}", line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise MatrixMarketError(f"indices must be integers, got {parts[0]!r} {parts[1]!r}", line=lineno)
        if not (1 <= i <= sizes[0] and 1 <= j <= sizes[1]):
            raise MatrixMarketError(f"entry ({i}, {j}) outside the declared {sizes[0]}x{sizes[1]}",
                                    line=lineno)
        if fld == "pattern":
            return
        value = parts[2]
    try:
        float(value)
    except ValueError:
        raise MatrixMarketError(f"value must be numeric, got {value!r}", line=lineno)


def scan(path: str) -> Tuple[str, Tuple[int, ...]]:
    """(format, sizes) after checking every line of the file"""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Matrix Market file not found: {path}")
    with open(p, "r") as f:
        fmt, fld, sizes, lineno = _scan_header(f)
        declared = sizes[2] if fmt == "coordinate" else sizes[0] * sizes[1]
        count = 0
        for lineno, stripped in _data_lines(f, lineno):
            count += 1
            if count > declared:
                raise MatrixMarketError(f"more than the {declared} declared entries", line=lineno)
            _check_entry(stripped.split(), fmt, fld, sizes, lineno)
    if count < declared:
        raise MatrixMarketError(f"declared {declared} entries but found {count}", line=lineno + 1)
    return fmt, sizes


def read_header(path: str) -> Tuple[str, Tuple[int, ...]]:
    """(format, sizes) after checking the banner and the size line"""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Matrix Market file not found: {path}")
    with open(p, "r") as f:
        fmt, _, sizes, _ = _scan_header(f)
    return fmt, sizes


def mm_read(path: str) -> CsrMatrix:
    """Coordinate-format matrix as CSR"""
    fmt, sizes = read_header(path)
    if fmt != "coordinate":
        raise MatrixMarketError(f"expected a coordinate matrix, found {fmt}", line=1)
    scan(path)
    csr = sp.csr_matrix(mmread(str(path)), dtype=float)
    return CsrMatrix.from_scipy(csr)


def mm_read_vector(path: str) -> np.ndarray:
    """Array-format column vector"""
    fmt, _ = read_header(path)
    if fmt != "array":
        raise MatrixMarketError(f"expected an array, found {fmt}", line=1)
    scan(path)
    return np.asarray(mmread(str(path)), dtype=float).reshape(-1)


def mm_write(path: str, obj: Union[CsrMatrix, sp.spmatrix, np.ndarray]):
    """Matrices in coordinate format, 1D arrays as an array column"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, CsrMatrix):
        target = obj.to_scipy().tocoo()
    elif sp.issparse(obj):
        target = sp.coo_matrix(obj, dtype=float)
    else:
        values = np.asarray(obj, dtype=float)
        if values.ndim != 1:
            raise MatrixMarketError(f"dense input must be a 1D vector, got shape {values.shape}")
        target = values.reshape(-1, 1)
    with open(path, "wb") as f:
        mmwrite(f, target, precision=17, symmetry="general")
