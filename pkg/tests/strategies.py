"""Hypothesis strategies shared by the property suites."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from isocouple.spline import KnotVector, SplineField, TensorBasis


@st.composite
def knot_vectors(draw, min_degree: int = 1, max_degree: int = 4, max_interior: int = 6):
    """Open knot vectors on ``[lo, lo + width]`` with random interior knots and multiplicities."""
    p = draw(st.integers(min_degree, max_degree))
    lo = draw(st.sampled_from([0.0, -1.0, 2.5]))
    width = draw(st.sampled_from([1.0, 0.5, 3.0]))
    count = draw(st.integers(0, max_interior))
    fractions = draw(
        st.lists(st.integers(1, 15), min_size=count, max_size=count).map(sorted)
    )
    interior = []
    for f in fractions:
        u = lo + width * f / 16.0
        if interior.count(u) < p:
            interior.append(u)
    knots = [lo] * (p + 1) + interior + [lo + width] * (p + 1)
    return KnotVector(np.array(knots), p)


@st.composite
def tensor_bases(draw, dims=(1, 2), min_degree: int = 1, max_degree: int = 3):
    dim = draw(st.sampled_from(list(dims)))
    dirs = tuple(draw(knot_vectors(min_degree, max_degree, 4)) for _ in range(dim))
    return TensorBasis(dirs)


@st.composite
def spline_fields(draw, dims=(1, 2), d: int = 2, rational: bool = False):
    basis = draw(tensor_bases(dims))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-2, 2, size=(basis.n_total, d))
    weights = rng.uniform(0.5, 2.0, size=basis.n_total) if rational else None
    return SplineField(basis, coeffs, weights)


def parametric_points(basis: TensorBasis, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(*kv.domain, size=count) for kv in basis.directions]
    return np.stack(cols, axis=1)
