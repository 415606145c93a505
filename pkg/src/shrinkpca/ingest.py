"""Readers for the two on-disk formats and the synthetic instance mini-language.

libsvm
    One row per line: ``label idx:val idx:val ...`` separated by spaces or
    tabs. The label is ignored (and may be omitted). Indices are 1-based
    decimal integers and must be strictly increasing within a line; values
    are anything ``float()`` accepts. Explicit zeros are dropped. Blank lines
    and lines whose first non-blank character is ``#`` are skipped, and
    ``#`` starts a trailing comment. The dimension is the largest index seen
    unless given.

csv
    One dense row per line, fields separated by ``,`` and parsed with
    ``float()``; every row has the same field count. Blank lines are
    skipped. A first line with any non-numeric field is a header and is
    skipped.

synthetic
    ``plant d=<int> n=<int> spectrum=<spectrum> [seed=<int>]`` where ``<spectrum>``
    is ``geometric(a,b,k)`` (``lambda_i = a (b/a)^i``, ``i < k``),
    ``linear(a,b,k)`` (``k`` evenly spaced values from ``a`` down to ``b``)
    or ``values(l1,l2,...)``, padded with zeros up to ``d``. The basis is
    drawn from ``seed`` (default 0).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .linalg import DataMatrix, SeededRng, normalize_dataset
from .oracle import plant_spectrum


class ParseError(InputError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def parse_libsvm(lines, dim: int | None = None):
    """Rows of a libsvm listing as a CSR matrix (not yet normalized)."""
    indptr, indices, data = [0], [], []
    top = 0
    for no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        toks = text.split()
        if ":" not in toks[0]:
            toks = toks[1:]
        last = 0
        for tok in toks:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r}", no)
            try:
                idx = int(head)
                val = float(tail)
            except ValueError:
                raise ParseError(f"malformed entry {tok!r}", no) from None
            if idx < 1:
                raise ParseError(f"indices are 1-based, got {idx}", no)
            if idx <= last:
                raise ParseError(f"indices not strictly increasing ({last} then {idx})", no)
            if not np.isfinite(val):
                raise ParseError(f"non-finite value {tail!r}", no)
            last = idx
            if val != 0.0:
                indices.append(idx - 1)
                data.append(val)
        top = max(top, last)
        indptr.append(len(indices))
    if len(indptr) == 1:
        raise ParseError("no data rows")
    d = top if dim is None else dim
    if top > d:
        raise ParseError(f"index {top} exceeds declared dimension {d}")
    if d < 1:
        raise ParseError("could not infer a positive dimension")
    return sp.csr_matrix((np.asarray(data, float), np.asarray(indices, np.int64),
                          np.asarray(indptr, np.int64)), shape=(len(indptr) - 1, d))


def parse_csv(lines):
    rows = []
    width = None
    first = True
    for no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            if first:
                first = False
                continue
            raise ParseError(f"non-numeric field in {text!r}", no) from None
        first = False
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"expected {width} fields, got {len(vals)}", no)
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite value", no)
        rows.append(vals)
    if not rows:
        raise ParseError("no data rows")
    return np.asarray(rows, dtype=float)


def ingest(path, fmt: str = "libsvm", dim: int | None = None) -> DataMatrix:
    """Read ``path`` in the given format and normalize rows to ``max ||x_i|| = 1``."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if fmt == "libsvm":
        raw = parse_libsvm(lines, dim)
    elif fmt == "csv":
        raw = parse_csv(lines)
    else:
        raise InputError(f"unknown input format {fmt!r}")
    return normalize_dataset(raw)


_SPECTRUM = re.compile(r"^\s*(geometric|linear|values)\s*\(([^)]*)\)\s*$")


def parse_spectrum(text: str) -> np.ndarray:
    m = _SPECTRUM.match(text)
    if not m:
        raise InputError(f"cannot parse spectrum {text!r}")
    kind, body = m.groups()
    try:
        args = [float(a) for a in body.split(",") if a.strip()]
    except ValueError:
        raise InputError(f"non-numeric spectrum argument in {text!r}") from None
    if kind == "values":
        if not args:
            raise InputError("values() needs at least one eigenvalue")
        return np.asarray(args)
    if len(args) != 3 or args[2] != int(args[2]) or args[2] < 1:
        raise InputError(f"{kind}(a,b,k) needs two reals and a positive integer")
    a, b, k = args[0], args[1], int(args[2])
    i = np.arange(k)
    if kind == "geometric":
        if not (a > 0 and b > 0):
            raise InputError("geometric spectrum needs positive endpoints")
        return a * (b / a) ** i
    return np.linspace(a, b, k)


def parse_synthetic(text: str) -> dict:
    toks = text.split()
    if not toks or toks[0] != "plant":
        raise InputError(f"synthetic inputs start with 'plant', got {text!r}")
    kv = {}
    for tok in toks[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise InputError(f"expected key=value, got {tok!r}")
        kv[key] = val
    missing = {"d", "n", "spectrum"} - kv.keys()
    if missing:
        raise InputError(f"synthetic input is missing {sorted(missing)}")
    unknown = kv.keys() - {"d", "n", "spectrum", "seed"}
    if unknown:
        raise InputError(f"unknown synthetic keys {sorted(unknown)}")
    try:
        d, n, seed = int(kv["d"]), int(kv["n"]), int(kv.get("seed", 0))
    except ValueError:
        raise InputError("d, n and seed must be integers") from None
    lam = parse_spectrum(kv["spectrum"])
    if lam.size > d:
        raise InputError("spectrum has more values than d")
    return {"d": d, "n": n, "spectrum": lam, "seed": seed}


def synthesize(text: str) -> DataMatrix:
    kv = parse_synthetic(text)
    return plant_spectrum(kv["d"], kv["n"], kv["spectrum"], SeededRng(kv["seed"]))


def is_synthetic(text: str) -> bool:
    return str(text).lstrip().startswith("plant ")


def load_input(source: str, fmt: str = "libsvm", dim: int | None = None) -> DataMatrix:
    if is_synthetic(source):
        return synthesize(source)
    return ingest(source, fmt, dim)
