"""Two-participant coupling transport.

A :class:`Participant` owns one end of a transport (an in-process queue
pair or a local stream socket). Sessions start with a handshake in which
each side announces its interface (a knot matrix for spline sides, vertex
coordinates for vertex sides) and continue with blocking, lockstep data
exchanges. The first participant (role 0) always sends before it receives,
the second (role 1) receives first; this fixed order rules out deadlock.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from collections import defaultdict
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ArgumentError, ConvergenceError, ProtocolError, TransportError
from .rbf import VertexCloud
from .spline import TensorBasis
from .wire import (
    FIXED_HEADER_SIZE,
    PayloadKind,
    WireFrame,
    block_frame,
    control_frame,
    decode_frame,
    decode_header,
    decode_knot_matrix,
    encode_frame,
    header_size,
    knot_frame,
)

FIRST, SECOND = 0, 1
Interface = Union[TensorBasis, VertexCloud]


# --------------------------------------------------------------------------
# transports


class Transport:
    """Reliable ordered delivery of whole frames."""

    def send(self, frame: bytes) -> None:
        raise NotImplementedError

    def recv(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcTransport(Transport):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = 120.0):
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout
        self._closed = False

    def send(self, frame: bytes) -> None:
        if self._closed:
            raise TransportError("transport is closed")
        self._outbox.put(frame)

    def recv(self) -> bytes:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"no frame within {self.timeout} s") from None
        if item is None:
            raise TransportError("peer disconnected")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


def inproc_pair(timeout: float = 120.0) -> tuple[InProcTransport, InProcTransport]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return InProcTransport(b_to_a, a_to_b, timeout), InProcTransport(a_to_b, b_to_a, timeout)


class SocketTransport(Transport):
    """Frames over a connected stream socket; frame boundaries come from the header."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _read(self, count: int) -> bytes:
        chunks = []
        while count:
            try:
                chunk = self.sock.recv(min(count, 1 << 20))
            except OSError as exc:
                raise TransportError(f"recv failed: {exc}") from exc
            if not chunk:
                raise TransportError("peer disconnected")
            chunks.append(chunk)
            count -= len(chunk)
        return b"".join(chunks)

    def recv(self) -> bytes:
        fixed = self._read(FIXED_HEADER_SIZE)
        pdim = fixed[7]
        rest = self._read(header_size(pdim) - len(fixed))
        head = fixed + rest
        *_, length = decode_header(head)
        return head + self._read(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def socket_pair() -> tuple[SocketTransport, SocketTransport]:
    a, b = socket.socketpair()
    return SocketTransport(a), SocketTransport(b)


def parse_endpoint(spec: str) -> tuple[str, int]:
    host, _, port = spec.rpartition(":")
    if not host or not port.isdigit():
        raise ArgumentError(f"endpoint must look like host:port, got {spec!r}")
    return host, int(port)


def listen(host: str, port: int, timeout: float = 120.0) -> SocketTransport:
    """Accept exactly one peer on ``host:port``."""
    with socket.create_server((host, port), reuse_port=False) as server:
        server.settimeout(timeout)
        try:
            conn, _ = server.accept()
        except socket.timeout:
            raise TransportError(f"no peer connected to {host}:{port} within {timeout} s") from None
    conn.settimeout(None)
    return SocketTransport(conn)


def connect(host: str, port: int, timeout: float = 120.0) -> SocketTransport:
    deadline = time.monotonic() + timeout
    while True:
        try:
            return SocketTransport(socket.create_connection((host, port), timeout=timeout))
        except OSError as exc:
            if time.monotonic() > deadline:
                raise TransportError(f"could not connect to {host}:{port}: {exc}") from exc
            time.sleep(0.05)


# --------------------------------------------------------------------------
# participants


@dataclass
class Accounting:
    """Per-participant byte counters, split by payload kind."""

    sent_payload: dict = field(default_factory=lambda: defaultdict(int))
    recv_payload: dict = field(default_factory=lambda: defaultdict(int))
    sent_header: int = 0
    recv_header: int = 0
    sent_nan: int = 0
    recv_nan: int = 0

    def sent_payload_bytes(self, kind: PayloadKind | None = None) -> int:
        return sum(self.sent_payload.values()) if kind is None else self.sent_payload[kind]

    def recv_payload_bytes(self, kind: PayloadKind | None = None) -> int:
        return sum(self.recv_payload.values()) if kind is None else self.recv_payload[kind]

    @property
    def sent_total(self) -> int:
        return self.sent_header + self.sent_payload_bytes()

    @property
    def recv_total(self) -> int:
        return self.recv_header + self.recv_payload_bytes()


class Participant:
    """One side of a coupling session; owned by a single thread.

    Parameters
    ----------
    name : str
    role : int or str
        ``0``/``"A"`` sends first, ``1``/``"B"`` receives first.
    interface : TensorBasis or VertexCloud
        Announced to the peer during the handshake.
    transport : Transport
    block_shape : (rows, columns), optional
        Shape of every data block this side sends. Defaults to
        ``(n_total, 1)`` for splines and ``(N, 1)`` for vertex clouds.
    """

    def __init__(
        self,
        name: str,
        role,
        interface: Interface,
        transport: Transport,
        block_shape: tuple[int, int] | None = None,
    ):
        if role in ("A", FIRST):
            role = FIRST
        elif role in ("B", SECOND):
            role = SECOND
        else:
            raise ArgumentError(f"role must be 0/'A' or 1/'B', got {role!r}")
        if not isinstance(interface, (TensorBasis, VertexCloud)):
            raise ArgumentError("interface must be a TensorBasis or a VertexCloud")
        self.name = name
        self.role = role
        self.interface = interface
        self.transport = transport
        if block_shape is None:
            rows = interface.n_total if isinstance(interface, TensorBasis) else interface.N
            block_shape = (rows, 1)
        self.block_shape = tuple(int(v) for v in block_shape)
        self.handshaken = False
        self.step = 0
        self.peer_interface: Interface | None = None
        self.accounting = Accounting()

    @property
    def peer_role(self) -> int:
        return 1 - self.role

    def send_frame(self, frame: WireFrame) -> None:
        buf = encode_frame(frame)
        self.transport.send(buf)
        acc = self.accounting
        acc.sent_payload[frame.kind] += frame.payload_bytes
        acc.sent_header += len(buf) - frame.payload_bytes
        if frame.kind == PayloadKind.KNOTS:
            acc.sent_nan += int(np.isnan(frame.payload).sum())

    def recv_frame(self) -> WireFrame:
        buf = self.transport.recv()
        frame = decode_frame(buf)
        if frame.role != self.peer_role:
            raise ProtocolError(f"{self.name}: frame from role {frame.role}, expected {self.peer_role}")
        acc = self.accounting
        acc.recv_payload[frame.kind] += frame.payload_bytes
        acc.recv_header += len(buf) - frame.payload_bytes
        if frame.kind == PayloadKind.KNOTS:
            acc.recv_nan += int(np.isnan(frame.payload).sum())
        return frame

    def _check_block(self, block) -> np.ndarray:
        arr = np.asarray(block, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape != self.block_shape:
            raise ArgumentError(
                f"{self.name}: block of shape {arr.shape}, interface declares {self.block_shape}"
            )
        return arr

    def close(self) -> None:
        self.transport.close()


def _interface_frame(p: Participant) -> WireFrame:
    if isinstance(p.interface, TensorBasis):
        return knot_frame(p.role, p.interface)
    return block_frame(p.role, PayloadKind.VERTICES, p.interface.points)


def _decode_interface(frame: WireFrame) -> Interface:
    if frame.kind == PayloadKind.KNOTS:
        return decode_knot_matrix(frame.payload, [p for _, p in frame.shape_pairs])
    if frame.kind == PayloadKind.VERTICES:
        return VertexCloud(frame.payload)
    raise ProtocolError(f"expected an interface description, got {frame.kind.name}")


def handshake(p: Participant) -> Interface:
    """Swap interface descriptions with the peer; returns the peer's."""
    if p.handshaken:
        raise ProtocolError(f"{p.name}: handshake already completed")
    if p.role == FIRST:
        p.send_frame(_interface_frame(p))
        peer = _decode_interface(p.recv_frame())
    else:
        peer = _decode_interface(p.recv_frame())
        p.send_frame(_interface_frame(p))
    p.peer_interface = peer
    p.handshaken = True
    return peer


def _expect_data(p: Participant, frame: WireFrame) -> np.ndarray:
    if frame.kind == PayloadKind.ABORT:
        raise ConvergenceError(f"{p.name}: peer aborted the session", [])
    if frame.kind != PayloadKind.DATA:
        raise ProtocolError(f"{p.name}: expected a data frame, got {frame.kind.name}")
    return frame.payload


def exchange_step(p: Participant, send) -> np.ndarray:
    """Send one block and receive the peer's.

    The first participant sends then receives. The second receives first, so
    ``send`` may be a callable mapping the received block to the reply.
    """
    if not p.handshaken:
        raise ProtocolError(f"{p.name}: exchange before handshake")
    if p.role == FIRST:
        if callable(send):
            raise ArgumentError("the first participant must send a block, not a callable")
        block = p._check_block(send)
        p.send_frame(block_frame(p.role, PayloadKind.DATA, block))
        received = _expect_data(p, p.recv_frame())
    else:
        if not callable(send):
            block = p._check_block(send)
        received = _expect_data(p, p.recv_frame())
        if callable(send):
            block = p._check_block(send(received))
        p.send_frame(block_frame(p.role, PayloadKind.DATA, block))
    p.step += 1
    return received


# --------------------------------------------------------------------------
# coupled time stepping


@dataclass(frozen=True)
class SerialImplicit:
    """Serial-implicit fixed-point scheme with under-relaxation.

    The first participant relaxes the block it receives,
    ``x <- x + omega * (y - x)``, and declares convergence once
    ``max|y - x| <= tol * max|y| + atol``. With ``aitken=True`` the factor
    is updated after every sub-iteration by Aitken's delta-squared rule,
    starting each window from ``omega``.
    """

    dt: float
    omega: float = 0.5
    tol: float = 1e-12
    max_iter: int = 100
    atol: float = 0.0
    aitken: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ArgumentError(f"time step must be positive, got {self.dt}")
        if not 0 < self.omega <= 1:
            raise ArgumentError(f"relaxation must lie in (0, 1], got {self.omega}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ArgumentError("tolerance must be positive and max_iter at least 1")


@dataclass
class StepRecord:
    step: int
    t: float
    iterations: int
    residuals: list[float]
    bytes_sent: int
    bytes_received: int


@dataclass
class Transcript:
    participant: str
    role: int
    steps: list[StepRecord] = field(default_factory=list)
    handshake_bytes: int = 0

    def comparable(self) -> list[tuple]:
        return [(s.step, s.iterations, tuple(s.residuals), s.bytes_sent, s.bytes_received) for s in self.steps]


def _relative(r: np.ndarray, y: np.ndarray) -> float:
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    err = float(np.max(np.abs(r))) if r.size else 0.0
    return err / scale if scale > 0 else err


def run_coupled(
    p: Participant, solver, scheme: SerialImplicit, steps: int, t0: float = 0.0
) -> Transcript:
    """Drive one participant through ``steps`` coupled time windows.

    ``solver`` provides ``solve(received, t, dt) -> block`` (a tentative
    solve for the window ending at ``t``) and optionally ``commit(t)``. The
    first participant's solver also provides ``initial_guess()``, the block
    it assumes the peer sends before the first exchange, and optionally
    ``predict(x, t)``, which turns the last converged block into the starting
    guess for the window ending at ``t``.
    """
    transcript = Transcript(p.name, p.role)
    if not p.handshaken:
        handshake(p)
    transcript.handshake_bytes = p.accounting.sent_total
    commit = getattr(solver, "commit", lambda t: None)
    predict = getattr(solver, "predict", lambda x, t: x)
    x = None
    for k in range(1, steps + 1):
        t = t0 + k * scheme.dt
        residuals: list[float] = []
        if p.role == FIRST:
            if x is None:
                x = np.array(solver.initial_guess(), dtype=float)
                if x.ndim == 1:
                    x = x[:, None]
            x = np.array(predict(x, t), dtype=float).reshape(x.shape)
            omega, r_prev = scheme.omega, None
            for _ in range(scheme.max_iter):
                out = solver.solve(x, t, scheme.dt)
                y = exchange_step(p, out)
                r = y - x
                residuals.append(_relative(r, y))
                bound = scheme.tol * (float(np.max(np.abs(y))) if y.size else 0.0) + scheme.atol
                if (float(np.max(np.abs(r))) if r.size else 0.0) <= bound:
                    x = y
                    commit(t)
                    p.send_frame(control_frame(p.role, PayloadKind.ADVANCE))
                    break
                if scheme.aitken and r_prev is not None:
                    dr = r - r_prev
                    denom = float(np.vdot(dr, dr))
                    if denom > 0:
                        omega = -omega * float(np.vdot(r_prev, dr)) / denom
                r_prev = r
                x = x + omega * r
            else:
                p.send_frame(control_frame(p.role, PayloadKind.ABORT))
                raise ConvergenceError(
                    f"{p.name}: no convergence in {scheme.max_iter} iterations at t={t:g}", residuals
                )
        else:
            while True:
                frame = p.recv_frame()
                if frame.kind == PayloadKind.ADVANCE:
                    commit(t)
                    break
                received = _expect_data(p, frame)
                p.send_frame(
                    block_frame(p.role, PayloadKind.DATA, p._check_block(solver.solve(received, t, scheme.dt)))
                )
                p.step += 1
                residuals.append(float("nan"))
        transcript.steps.append(
            StepRecord(k, t, len(residuals), residuals, p.accounting.sent_total, p.accounting.recv_total)
        )
    return transcript


def run_pair(
    first: tuple[str, Interface, object],
    second: tuple[str, Interface, object],
    scheme: SerialImplicit,
    steps: int,
    transport: str = "inproc",
    first_block: tuple[int, int] | None = None,
    second_block: tuple[int, int] | None = None,
    t0: float = 0.0,
) -> tuple[Transcript, Transcript, Participant, Participant]:
    """Run both participants on their own threads over a fresh transport pair.

    ``first`` and ``second`` are ``(name, interface, solver)`` triples;
    ``transport`` is ``"inproc"`` or ``"socket"`` (a connected socket pair).
    """
    ta, tb = make_pair(transport)
    pa = Participant(first[0], FIRST, first[1], ta, first_block)
    pb = Participant(second[0], SECOND, second[1], tb, second_block)
    return (*run_threads(pa, first[2], pb, second[2], scheme, steps, t0), pa, pb)


def make_pair(transport: str) -> tuple[Transport, Transport]:
    if transport == "inproc":
        return inproc_pair()
    if transport == "socket":
        return socket_pair()
    raise ArgumentError(f"transport must be 'inproc' or 'socket', got {transport!r}")


def run_threads(pa, solver_a, pb, solver_b, scheme, steps, t0=0.0):
    def side(p, solver):
        try:
            return run_coupled(p, solver, scheme, steps, t0)
        except BaseException:
            p.close()
            raise

    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="participant") as pool:
        fa = pool.submit(side, pa, solver_a)
        fb = pool.submit(side, pb, solver_b)
        errors = [f.exception() for f in (fa, fb)]
    pa.close()
    pb.close()
    primary = next((e for e in errors if isinstance(e, ConvergenceError) and e.residuals), None)
    primary = primary or next((e for e in errors if e is not None and not isinstance(e, TransportError)), None)
    primary = primary or next((e for e in errors if e is not None), None)
    if primary is not None:
        raise primary
    return fa.result(), fb.result()


def echo_session(
    interface_a: Interface,
    interface_b: Interface,
    blocks: list[np.ndarray] | Callable[[int], np.ndarray],
    steps: int,
    transport: str = "inproc",
    block_shape: tuple[int, int] | None = None,
) -> tuple[Participant, Participant, list[float]]:
    """Handshake plus ``steps`` symmetric exchanges of the same block shape.

    Both sides send ``blocks[k]`` (or ``blocks(k)``) at step ``k``. Returns
    the participants (for their accounting) and the per-step wall time seen
    by the first participant.
    """
    ta, tb = make_pair(transport)
    pa = Participant("A", FIRST, interface_a, ta, block_shape)
    pb = Participant("B", SECOND, interface_b, tb, block_shape)
    get = blocks if callable(blocks) else blocks.__getitem__
    times: list[float] = []
    failure: list[BaseException] = []

    def run_b():
        try:
            handshake(pb)
            for k in range(steps):
                exchange_step(pb, get(k))
        except BaseException as exc:
            failure.append(exc)
            pb.close()

    worker = threading.Thread(target=run_b, name="participant-B")
    worker.start()
    try:
        handshake(pa)
        for k in range(steps):
            block = get(k)
            t_start = time.perf_counter()
            exchange_step(pa, block)
            times.append(time.perf_counter() - t_start)
    except TransportError:
        if not failure:
            raise
    finally:
        pa.close()
        worker.join()
        pb.close()
    if failure:
        raise failure[0]
    return pa, pb, times
