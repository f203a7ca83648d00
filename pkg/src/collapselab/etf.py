"""Simplex equiangular tight frames: targets, construction, verification.

A simplex ETF on C classes is a set of C unit vectors whose pairwise inner
products all equal -1/(C-1), the most mutually repelled arrangement C unit
vectors can reach. Collapsed classifiers and collapsed class means both
organize into this shape, so the frame doubles as the optimization target
for the Gram-matching losses and as the ground truth for the geometry
diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError


def rho(i: int, j: int, num_classes: int) -> float:
    """Target inner product between frame vectors i and j (0-based indices).

    Equals 1 on the diagonal and -1/(C-1) off it; equivalently
    C/(C-1) * delta_ij - 1/(C-1).
    """
    c = int(num_classes)
    if c < 2:
        raise DomainError(f"rho: need at least 2 classes, got {c}")
    if not (0 <= i < c and 0 <= j < c):
        raise DomainError(f"rho: indices ({i}, {j}) out of range for {c} classes")
    return 1.0 if i == j else -1.0 / (c - 1.0)


def rho_matrix(num_classes: int) -> np.ndarray:
    """The full C x C target Gram matrix (ones diagonal, -1/(C-1) off)."""
    c = int(num_classes)
    if c < 2:
        raise DomainError(f"rho_matrix: need at least 2 classes, got {c}")
    off = -1.0 / (c - 1.0)
    target = np.full((c, c), off)
    np.fill_diagonal(target, 1.0)
    return target


@dataclass(frozen=True)
class EtfFrame:
    """A realized simplex ETF.

    vectors: (dim, C) matrix whose columns are the frame vectors.
    basis:   (dim, C) orthonormal columns the frame was rotated into.
    """

    vectors: np.ndarray
    basis: np.ndarray
    num_classes: int
    dim: int

    @property
    def vertices(self) -> np.ndarray:
        """(C, dim) view with one frame vector per row."""
        return np.ascontiguousarray(self.vectors.T)

    def gram(self) -> np.ndarray:
        return self.vectors.T @ self.vectors


def make_etf(dim: int, num_classes: int, seed: int = 0) -> EtfFrame:
    """Construct a simplex ETF of ``num_classes`` unit vectors in R^dim.

    A seeded Gaussian matrix is orthonormalized by QR (signs fixed so the
    result is unique), then the centering projector I - (1/C) 11^T and the
    scale sqrt(C/(C-1)) turn the orthonormal columns into the simplex frame.
    Deterministic: the same seed yields bit-identical vectors.
    """
    q, c = int(dim), int(num_classes)
    if c < 2:
        raise DomainError(f"make_etf: need at least 2 classes, got {c}")
    if q < c:
        raise ShapeError(f"make_etf: ambient dim {q} cannot hold {c} orthonormal columns")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    gauss = rng.standard_normal((q, c))
    basis, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    basis = basis * signs
    projector = np.eye(c) - np.full((c, c), 1.0 / c)
    vectors = np.sqrt(c / (c - 1.0)) * basis @ projector
    return EtfFrame(vectors=vectors, basis=basis, num_classes=c, dim=q)


def etf_deviation(vectors: np.ndarray) -> float:
    """Max |Gram - target| after unit-normalizing the columns.

    Takes a (dim, C) matrix of column vectors; 0 exactly on a perfect frame.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeError(f"etf_deviation: need a 2-d matrix, got shape {v.shape}")
    c = v.shape[1]
    norms = np.linalg.norm(v, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"etf_deviation: zero column at index {int(zero[0])}")
    unit = v / norms
    return float(np.max(np.abs(unit.T @ unit - rho_matrix(c))))


def icpa_degrees_target(num_classes: int) -> float:
    """The angle, in degrees, between any two vectors of a simplex ETF."""
    c = int(num_classes)
    if c < 2:
        raise DomainError(f"icpa_degrees_target: need at least 2 classes, got {c}")
    return float(np.degrees(np.arccos(-1.0 / (c - 1.0))))
