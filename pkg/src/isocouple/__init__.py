"""Spline-based interface coupling for partitioned multiphysics.

Submodules
----------
spline
    Knot vectors, tensor-product B-spline and NURBS evaluation, refinement, projection.
rbf
    Radial basis function interpolation and mapping matrices.
coupling
    Vertex-vertex, spline-vertex and spline-spline transfer operators.
wire
    Binary frames, NaN-padded knot matrices, overhead models.
bus
    Two-participant transport, handshake and serial-implicit coupling loop.
heat
    Partitioned heat-conduction benchmark.
beam, overhead, cli
    Verification experiments and the command-line front end.
"""

from .errors import (
    ArgumentError,
    ConvergenceError,
    CouplingError,
    DegenerateGeometryError,
    DomainError,
    FormatError,
    NumericalError,
    ProtocolError,
    TransportError,
    UnsupportedConfigurationError,
)
from .spline import KnotVector, SplineField, TensorBasis
from .rbf import Kernel, MappingMatrix, RbfInterpolant, VertexCloud
from .coupling import InterfaceSide, SplineSpaceTransform
from .wire import KnotMatrix, OverheadParams, OverheadReport, WireFrame
from .bus import Participant, SerialImplicit

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConvergenceError",
    "CouplingError",
    "DegenerateGeometryError",
    "DomainError",
    "FormatError",
    "InterfaceSide",
    "Kernel",
    "KnotMatrix",
    "KnotVector",
    "MappingMatrix",
    "NumericalError",
    "OverheadParams",
    "OverheadReport",
    "Participant",
    "ProtocolError",
    "RbfInterpolant",
    "SerialImplicit",
    "SplineField",
    "SplineSpaceTransform",
    "TensorBasis",
    "TransportError",
    "UnsupportedConfigurationError",
    "VertexCloud",
    "WireFrame",
]
