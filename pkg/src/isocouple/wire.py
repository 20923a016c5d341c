"""Binary frames for coupling traffic and communication-overhead accounting.

Frame layout (all integers little-endian, all reals IEEE-754 binary64
little-endian, arrays row-major)::

    offset  size  field
    0       4     magic b"SPLC"
    4       2     format version (u16), currently 1
    6       1     role byte (0 = first participant, 1 = second)
    7       1     pdim: number of (n_i, p_i) pairs that follow (u8)
    8       1     columns: components per payload row (u8)
    9       8*k   k = pdim pairs of (n_i u32, p_i u32)
    9+8k    1     payload kind (u8, see PayloadKind)
    10+8k   8     payload length in bytes (u64)
    18+8k   ...   payload

Knot frames carry a ``pdim x width`` knot matrix and set ``columns`` to 0;
the width follows from the payload length. Vertex and data frames carry a
``rows x columns`` block. Control frames have an empty payload.

Overhead accounting counts payload reals only (8 bytes each); header bytes
are tracked separately.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, ProtocolError
from .spline import KnotVector, TensorBasis

MAGIC = b"SPLC"
VERSION = 1
BYTES_PER_REAL = 8
_FIXED = struct.Struct("<4sHBBB")
_PAIR = struct.Struct("<II")
_TAIL = struct.Struct("<BQ")
FIXED_HEADER_SIZE = _FIXED.size

CANONICAL_NAN = np.frombuffer(np.uint64(0x7FF8000000000000).tobytes(), dtype="<f8")[0]
_LE = np.dtype("<f8")


class PayloadKind(enum.IntEnum):
    KNOTS = 1
    VERTICES = 2
    DATA = 3
    ADVANCE = 4
    ABORT = 5


# --------------------------------------------------------------------------
# knot matrix


@dataclass(frozen=True, eq=False)
class KnotMatrix:
    """Knot vectors stacked one per row, NaN outside each row's own column block."""

    values: np.ndarray

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def nan_count(self) -> int:
        return int(np.isnan(self.values).sum())

    @property
    def finite_count(self) -> int:
        return int(np.isfinite(self.values).sum())


def encode_knot_matrix(basis: TensorBasis) -> KnotMatrix:
    """Embed the knot vectors of ``basis`` into one NaN-padded matrix.

    Every row owns a column block as wide as the longest knot vector; for two
    equal-length directions of length ``L`` this is the ``2 x 2L`` layout with
    ``2L`` NaN entries.
    """
    if isinstance(basis, KnotVector):
        basis = TensorBasis((basis,))
    lengths = [kv.knots.size for kv in basis.directions]
    width = max(lengths)
    M = np.full((basis.dim, width * basis.dim), CANONICAL_NAN)
    for i, kv in enumerate(basis.directions):
        M[i, i * width : i * width + kv.knots.size] = kv.knots
    return KnotMatrix(M)


def decode_knot_matrix(m: KnotMatrix | np.ndarray, degrees) -> TensorBasis:
    """Inverse of :func:`encode_knot_matrix`; any NaN bit pattern counts as padding."""
    M = m.values if isinstance(m, KnotMatrix) else np.asarray(m, dtype=float)
    degrees = [int(p) for p in degrees]
    if M.ndim != 2 or M.shape[0] != len(degrees) or M.shape[0] not in (1, 2):
        raise FormatError(f"knot matrix of shape {M.shape} does not match {len(degrees)} degrees")
    rows, cols = M.shape
    if cols % rows:
        raise FormatError(f"knot matrix width {cols} is not a multiple of {rows}")
    width = cols // rows
    dirs = []
    for i, p in enumerate(degrees):
        row = M[i]
        finite = ~np.isnan(row)
        block = finite[i * width : (i + 1) * width]
        length = int(block.sum())
        if finite.sum() != length:
            raise FormatError(f"row {i}: finite entry in the padding zone")
        if not np.all(block[:length]):
            raise FormatError(f"row {i}: knots are not contiguous at the start of the block")
        try:
            dirs.append(KnotVector(row[i * width : i * width + length].copy(), p))
        except ArgumentError as exc:
            raise FormatError(f"row {i}: {exc}") from exc
    return TensorBasis(tuple(dirs))


# --------------------------------------------------------------------------
# frames


@dataclass(frozen=True, eq=False)
class WireFrame:
    role: int
    kind: PayloadKind
    payload: np.ndarray
    shape_pairs: tuple[tuple[int, int], ...] = ()
    version: int = VERSION

    @property
    def payload_reals(self) -> int:
        return int(self.payload.size)

    @property
    def payload_bytes(self) -> int:
        return self.payload_reals * BYTES_PER_REAL

    @property
    def header_bytes(self) -> int:
        return header_size(len(self.shape_pairs))


def header_size(pdim: int) -> int:
    return _FIXED.size + pdim * _PAIR.size + _TAIL.size


def knot_frame(role: int, basis: TensorBasis) -> WireFrame:
    km = encode_knot_matrix(basis)
    pairs = tuple((kv.n, kv.degree) for kv in basis.directions)
    return WireFrame(role, PayloadKind.KNOTS, km.values, pairs)


def block_frame(role: int, kind: PayloadKind, block: np.ndarray) -> WireFrame:
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    return WireFrame(role, kind, block)


def control_frame(role: int, kind: PayloadKind) -> WireFrame:
    return WireFrame(role, kind, np.zeros((0, 0)))


def encode_frame(frame: WireFrame) -> bytes:
    payload = np.ascontiguousarray(frame.payload, dtype=_LE)
    if payload.ndim != 2:
        raise ArgumentError("frame payload must be two-dimensional")
    columns = 0 if frame.kind == PayloadKind.KNOTS else payload.shape[1]
    if columns > 255:
        raise ArgumentError(f"at most 255 components per row, got {columns}")
    head = _FIXED.pack(MAGIC, frame.version, frame.role, len(frame.shape_pairs), columns)
    for n, p in frame.shape_pairs:
        head += _PAIR.pack(n, p)
    head += _TAIL.pack(int(frame.kind), payload.nbytes)
    # join copies the payload once; tobytes() plus concatenation would copy it twice
    return b"".join((head, memoryview(payload.reshape(-1)).cast("B")))


def decode_header(buf: bytes):
    """Parse a complete header; returns ``(version, role, pairs, columns, kind, length)``."""
    if len(buf) < _FIXED.size:
        raise FormatError("truncated frame header")
    magic, version, role, pdim, columns = _FIXED.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported frame version {version}, expected {VERSION}")
    need = header_size(pdim)
    if len(buf) < need:
        raise FormatError("truncated frame header")
    pairs = tuple(_PAIR.unpack_from(buf, _FIXED.size + i * _PAIR.size) for i in range(pdim))
    kind, length = _TAIL.unpack_from(buf, _FIXED.size + pdim * _PAIR.size)
    try:
        kind = PayloadKind(kind)
    except ValueError as exc:
        raise FormatError(f"unknown payload kind {kind}") from exc
    return version, role, pairs, columns, kind, length


def decode_frame(buf: bytes) -> WireFrame:
    version, role, pairs, columns, kind, length = decode_header(buf)
    start = header_size(len(pairs))
    carried = len(buf) - start
    if carried != length:
        raise FormatError(f"header announces {length} payload bytes, frame carries {carried}")
    if length % BYTES_PER_REAL:
        raise FormatError("payload length is not a whole number of reals")
    # read-only view into the frame; no copy on little-endian hosts
    reals = np.frombuffer(buf, dtype=_LE, offset=start).astype(float, copy=False)
    if kind == PayloadKind.KNOTS:
        if not pairs or reals.size % len(pairs):
            raise FormatError("knot payload does not divide into pdim rows")
        payload = reals.reshape(len(pairs), -1)
    elif kind in (PayloadKind.ADVANCE, PayloadKind.ABORT):
        if reals.size:
            raise FormatError("control frames carry no payload")
        payload = np.zeros((0, 0))
    elif not reals.size:
        payload = np.zeros((0, columns))
    else:
        if columns == 0 or reals.size % columns:
            raise FormatError(f"{reals.size} reals do not form rows of {columns}")
        payload = reals.reshape(-1, columns)
    return WireFrame(role, kind, payload, tuple(pairs), version)


# --------------------------------------------------------------------------
# overhead accounting


@dataclass(frozen=True)
class OverheadParams:
    """Parameters of one overhead experiment.

    ``r`` is the number of subdivisions per direction: ``n_element = r**pdim``
    in vertex mode and ``n_i = r + p`` basis functions in spline mode.
    """

    N_t: int = 1
    d: int = 3
    pdim: int = 2
    p: int = 2
    r: int = 2

    @property
    def n(self) -> int:
        return self.r + self.p

    @property
    def n_element(self) -> int:
        return self.r**self.pdim


def overhead_vertex(params: OverheadParams) -> int:
    """Doubles exchanged at quadrature points: ``N_t * d * n_element * (p+1)**pdim``."""
    return params.N_t * params.d * params.n_element * (params.p + 1) ** params.pdim


def overhead_spline_general(N_t: int, d: int, ns, ps) -> int:
    """``N_t * d * prod(n_i) + sum(n_i + p_i + 1)``: control data per step, knots once."""
    return N_t * d * int(np.prod(ns)) + sum(n + p + 1 for n, p in zip(ns, ps))


def overhead_spline(params: OverheadParams) -> int:
    ns = [params.n] * params.pdim
    ps = [params.p] * params.pdim
    return overhead_spline_general(params.N_t, params.d, ns, ps)


def knot_matrix_entries(params: OverheadParams) -> int:
    """Entries of the transmitted knot matrix in the symmetric layout."""
    length = params.n + params.p + 1
    return params.pdim * params.pdim * length


def padded_spline_doubles(params: OverheadParams) -> int:
    """Doubles actually sent in spline mode, NaN padding included."""
    return params.N_t * params.d * params.n**params.pdim + knot_matrix_entries(params)


@dataclass(frozen=True)
class OverheadReport:
    mode: str
    params: OverheadParams
    theoretical_doubles: int
    measured_bytes: int
    nan_entries: int

    @property
    def theoretical_bytes(self) -> int:
        return self.theoretical_doubles * BYTES_PER_REAL

    @property
    def discrepancy_bytes(self) -> int:
        return self.measured_bytes - self.theoretical_bytes

    @property
    def measured_kb(self) -> float:
        return self.measured_bytes / 1024

    @property
    def theoretical_kb(self) -> float:
        return self.theoretical_bytes / 1024

    @property
    def discrepancy_kb(self) -> float:
        return self.discrepancy_bytes / 1024


def measured_overhead(mode: str, params: OverheadParams, accounting) -> OverheadReport:
    """Compare one participant's sent-byte accounting against the closed forms.

    ``accounting`` is a :class:`isocouple.bus.Accounting`; measured bytes are
    its knot and data payload bytes. Vertex coordinates exchanged during the
    handshake are mesh setup and are not part of the per-step overhead.
    """
    if mode == "spline":
        theory = overhead_spline(params)
    elif mode == "vertex":
        theory = overhead_vertex(params)
    else:
        raise ArgumentError(f"mode must be 'spline' or 'vertex', got {mode!r}")
    measured = accounting.sent_payload_bytes(PayloadKind.KNOTS) + accounting.sent_payload_bytes(
        PayloadKind.DATA
    )
    return OverheadReport(mode, params, theory, measured, accounting.sent_nan)
