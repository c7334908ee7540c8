"""Complex QR and punctured (WR) channel decompositions.

A punctured decomposition nulls selected above-diagonal entries of the
triangular factor through elementary column operations on the orthogonal
factor, then renormalizes the touched rows/columns. The resulting W has
unit-norm (generally non-orthogonal) columns and W* H = R still holds, so the
transformed per-component noise variance is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegeneratePivot, DimensionMismatch, IndexOutOfRange, RankDeficient

PIVOT_RTOL = 1e-12  # relative rank guard for QR pivots
PIVOT_ABS = 1e-12  # absolute guard for puncturing divisors
PARTITION_TOL = 1e-9  # off-diagonal residual allowed in the diagonal block


@dataclass(frozen=True)
class PuncturedDecomposition:
    """The (W, R) pair produced by puncturing a QR decomposition.

    For the layer-of-interest pattern the triangular factor partitions as
    [[A, b], [0, c]] with A real diagonal, and a_diag/b/c are populated.
    For other puncture patterns they are None and only (w, r) are meaningful.
    """

    w: np.ndarray
    r: np.ndarray
    layer: int | None = None
    a_diag: np.ndarray | None = None
    b: np.ndarray | None = None
    c: float | None = None

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @classmethod
    def from_wr(cls, w: np.ndarray, r: np.ndarray, layer: int | None = None):
        n = r.shape[0]
        if n == 1:
            return cls(w=w, r=r, layer=layer, a_diag=np.empty(0), b=np.empty(0, complex),
                       c=float(r[0, 0].real))
        top = r[: n - 1, : n - 1]
        off = top - np.diag(np.diagonal(top))
        if np.abs(off).max() < PARTITION_TOL:
            return cls(
                w=w,
                r=r,
                layer=layer,
                a_diag=np.diagonal(top).real.copy(),
                b=r[: n - 1, n - 1].copy(),
                c=float(r[n - 1, n - 1].real),
            )
        return cls(w=w, r=r, layer=layer)


def qrd(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR decomposition with a real positive diagonal on the triangular factor.

    Uses Householder reflections (LAPACK) followed by a diagonal phase
    normalization. Raises RankDeficient when a pivot falls below
    PIVOT_RTOL times the largest column norm.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h.view(float))):
        raise ValueError("channel matrix contains non-finite entries")
    q, r = np.linalg.qr(h)
    diag = np.diagonal(r).copy()
    col_scale = np.sqrt((np.abs(h) ** 2).sum(axis=0)).max()
    if np.any(np.abs(diag) < PIVOT_RTOL * max(col_scale, 1e-300)):
        raise RankDeficient("rank-deficient channel: QR pivot below tolerance")
    phase = diag / np.abs(diag)
    q = q * phase[np.newaxis, :]
    r = phase.conj()[:, np.newaxis] * r
    n = r.shape[0]
    r[np.arange(n), np.arange(n)] = np.abs(diag)
    return q, r


def standard_pattern(n: int) -> tuple[tuple[int, int], ...]:
    """Puncture targets for the layer-of-interest form: everything above the
    diagonal except the last column (0-indexed (row, col) pairs)."""
    return tuple((i, j) for i in range(n - 1) for j in range(i + 1, n - 1))


def puncture(q1: np.ndarray, r1: np.ndarray, pattern) -> PuncturedDecomposition:
    """Null the given above-diagonal entries of r1 via elementary updates.

    Entries are processed bottom to top, right to left; after each puncture
    the touched column of q1 is renormalized to unit length and the matching
    row of r1 is rescaled, keeping W* H = R intact.
    """
    w = np.array(q1, dtype=complex, copy=True)
    r = np.array(r1, dtype=complex, copy=True)
    n = r.shape[0]
    for row, col in pattern:
        if not (0 <= row < col < n):
            raise IndexOutOfRange(f"puncture target {(row, col)} not strictly above the diagonal")
    for row, col in sorted(pattern, key=lambda rc: (-rc[0], -rc[1])):
        pivot = r[col, col]
        if abs(pivot) < PIVOT_ABS:
            raise DegeneratePivot(f"pivot r[{col},{col}] = {pivot:.3e} too small")
        ratio = r[row, col] / pivot
        w[:, row] -= w[:, col] * np.conj(ratio)
        r[row, col:] -= r[col, col:] * ratio
        norm = np.linalg.norm(w[:, row])
        if norm < PIVOT_ABS:
            raise DegeneratePivot(f"column {row} collapsed during puncturing")
        r[row, row:] /= norm
        w[:, row] /= norm
    return PuncturedDecomposition.from_wr(w, r)


def permute_layer(h: np.ndarray, layer: int) -> np.ndarray:
    """Swap column `layer` with the last column (involution)."""
    h = np.asarray(h)
    n = h.shape[1]
    if not 0 <= layer < n:
        raise IndexOutOfRange(f"layer {layer} outside 0..{n - 1}")
    out = h.copy()
    out[:, [layer, n - 1]] = out[:, [n - 1, layer]]
    return out


def decompose_for_layer(h: np.ndarray, layer: int) -> PuncturedDecomposition:
    """Permute the layer of interest to the last column, QR-decompose, and
    puncture with the standard layer-of-interest pattern."""
    hp = permute_layer(h, layer)
    q1, r1 = qrd(hp)
    dec = puncture(q1, r1, standard_pattern(r1.shape[0]))
    return replace(dec, layer=layer)


def transform_observation(y: np.ndarray, dec: PuncturedDecomposition):
    """W* y split into the first N-1 entries and the last (scalar) entry."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (dec.n,):
        raise DimensionMismatch(f"expected vector of length {dec.n}, got shape {y.shape}")
    yt = dec.w.conj().T @ y
    return yt[:-1], complex(yt[-1])


def transform_observations(ys: np.ndarray, dec: PuncturedDecomposition):
    """Block form of transform_observation for an (N, T) batch."""
    if ys.shape[0] != dec.n:
        raise DimensionMismatch(f"expected {dec.n} rows, got {ys.shape[0]}")
    yt = dec.w.conj().T @ ys
    return yt[:-1, :], yt[-1, :]


def transformed_noise_covariance(
    w: np.ndarray, sigma2: float, draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample covariance of W* z for white complex noise of variance sigma2.

    Diagnostic: unit-norm columns guarantee the diagonal equals sigma2, but
    puncturing leaves nonzero off-diagonal correlation in general.
    """
    n = w.shape[0]
    z = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((n, draws)) + 1j * rng.standard_normal((n, draws))
    )
    v = w.conj().T @ z
    return (v @ v.conj().T) / draws
