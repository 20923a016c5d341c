"""Plain-text spline exchange format used for test fixtures and CLI inputs.

Grammar (one keyword per line, ``#`` starts a comment, blank lines ignored)::

    spline 1                    # format version, must be the first keyword
    dim <pdim>                  # parametric dimension, 1 or 2
    degree <p_1> [<p_2>]        # one degree per direction
    knots <k_1> <k_2> ...       # exactly <pdim> lines, direction order
    components <d>              # physical dimension
    weights <w_1> ... <w_n>     # optional, n_total positive reals
    coefficients                # followed by n_total rows of d reals

Control point rows are listed with the first direction slowest. Reals are
written with ``repr`` so a write/read round trip is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .spline import KnotVector, SplineField, TensorBasis

FORMAT_VERSION = 1


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps(field: SplineField) -> str:
    basis = field.basis
    lines = [
        f"spline {FORMAT_VERSION}",
        f"dim {basis.dim}",
        "degree " + " ".join(str(p) for p in basis.degrees),
    ]
    lines += ["knots " + _fmt(kv.knots) for kv in basis.directions]
    lines.append(f"components {field.d}")
    if field.weights is not None:
        lines.append("weights " + _fmt(field.weights))
    lines.append("coefficients")
    lines += [_fmt(row) for row in field.coefficients]
    return "\n".join(lines) + "\n"


def loads(text: str) -> SplineField:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows or rows[0][0] != "spline":
        raise FormatError("spline file must start with 'spline <version>'")
    try:
        if int(rows[0][1]) != FORMAT_VERSION:
            raise FormatError(f"unsupported spline format version {rows[0][1]}")
        it = iter(rows[1:])
        header: dict[str, list[list[str]]] = {}
        coeff_rows: list[list[str]] = []
        for tokens in it:
            key = tokens[0]
            if key == "coefficients":
                coeff_rows = list(it)
                break
            header.setdefault(key, []).append(tokens[1:])
        pdim = int(header["dim"][0][0])
        degrees = [int(p) for p in header["degree"][0]]
        knot_lines = header["knots"]
        d = int(header["components"][0][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"malformed spline header: {exc}") from exc
    if len(degrees) != pdim or len(knot_lines) != pdim:
        raise FormatError(f"expected {pdim} degree entries and knot lines")
    try:
        basis = TensorBasis(
            tuple(KnotVector([float(k) for k in ks], p) for ks, p in zip(knot_lines, degrees))
        )
        coeffs = np.array([[float(v) for v in r] for r in coeff_rows], dtype=float)
        weights = None
        if "weights" in header:
            weights = [float(w) for w in header["weights"][0]]
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    if coeffs.shape != (basis.n_total, d):
        raise FormatError(
            f"expected {basis.n_total} coefficient rows of {d} values, got shape {coeffs.shape}"
        )
    try:
        return SplineField(basis, coeffs, weights)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write(field: SplineField, path: str | Path) -> None:
    Path(path).write_text(dumps(field))


def read(path: str | Path) -> SplineField:
    return loads(Path(path).read_text())
