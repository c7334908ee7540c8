"""Likelihood-based modulation classifiers.

Five families: the exhaustive joint Log-MAP / Max-Log-MAP references, the
per-layer ZF-equalized ALRT, and the per-layer subspace and LORD classifiers.
The subspace metric decouples the layer of interest through a punctured
decomposition; interfering layers are resolved by parallel slicing (diagonal
block) or successive cancellation (LORD, unpunctured triangular block).

Distance grids are unscaled squared norms, shape (T, Q); the 1/sigma^2
likelihood scaling is applied at score-accumulation time so the same grids
feed classification and bit-LLR generation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import Frame
from .constellation import Constellation, ModulationType, build_constellation
from .decomposition import (
    PuncturedDecomposition,
    decompose_for_layer,
    permute_layer,
    qrd,
    transform_observations,
)
from .errors import DegenerateA, DimensionMismatch, RankDeficient, TooLarge
from .opcount import OpCounter

CLASSIFIER_NAMES = (
    "log-map",
    "max-log-map",
    "zf-alrt",
    "subspace-log-map",
    "subspace-max-log-map",
    "lord-log-map",
    "lord-max-log-map",
)

_A_TOL = 1e-12
_JOINT_GUARD = 1 << 20


@dataclass
class HypothesisScore:
    """Per-layer accumulated log-likelihood, one entry per hypothesis."""

    layer: int
    scores: np.ndarray
    t_seen: int

    @property
    def winner_index(self) -> int:
        # ties break to the lowest hypothesis index (argmax is first-match)
        return int(np.argmax(self.scores))

    def winner(self, hypotheses) -> ModulationType:
        return hypotheses[self.winner_index]


@dataclass
class DistanceResult:
    """Scaled distances of one observation under one hypothesis."""

    d_min: float
    logsum: float
    per_symbol: np.ndarray | None = None


@dataclass
class JointDecision:
    """Winner of the exhaustive joint classification."""

    mts: tuple[ModulationType, ...]
    scores: np.ndarray
    combos: tuple[tuple[ModulationType, ...], ...]


def permuted_remaining(mts, layer: int):
    """Per-layer attributes of the interfering streams, in permuted order."""
    n = len(mts)
    order = list(range(n))
    order[layer], order[n - 1] = order[n - 1], order[layer]
    return [mts[i] for i in order[: n - 1]]


def _as_slice_list(slice_const, count: int):
    if isinstance(slice_const, Constellation):
        return [slice_const] * count
    consts = list(slice_const)
    if len(consts) != count:
        raise DimensionMismatch(f"need {count} slicing constellations, got {len(consts)}")
    return consts


def subspace_distance_grid(
    y1: np.ndarray,
    y2: np.ndarray,
    dec: PuncturedDecomposition,
    x2_points: np.ndarray,
    slice_consts,
    capture_xhat: bool = False,
):
    """Unscaled modified distances over (observation, candidate) pairs.

    y1: (N-1, T) upper block of the transformed observations, y2: (T,) the
    decoupled entry, x2_points: (Q,) candidate symbols for the layer of
    interest. Each interfering element is resolved by slicing onto its
    constellation; the diagonal block makes per-element slicing the exact
    conditional minimizer.
    """
    if dec.a_diag is None:
        raise DegenerateA("decomposition does not expose a diagonal block")
    nm1 = dec.a_diag.shape[0]
    if nm1 and dec.a_diag.min() < _A_TOL:
        raise DegenerateA(f"diagonal block entry below {_A_TOL}")
    consts = _as_slice_list(slice_consts, nm1)
    diff2 = y2[:, None] - dec.c * x2_points[None, :]
    out = diff2.real**2
    out += diff2.imag**2
    xhat = np.empty((nm1, y2.shape[0], x2_points.shape[0]), dtype=complex) if capture_xhat else None
    for k in range(nm1):
        zk = y1[k][:, None] - dec.b[k] * x2_points[None, :]
        zk /= dec.a_diag[k]
        xk = consts[k].slice_array(zk)
        if capture_xhat:
            xhat[k] = xk
        zk -= xk  # residual after slicing
        np.square(zk.real, out=xk.real)
        np.square(zk.imag, out=xk.imag)
        xk.real += xk.imag
        out += (dec.a_diag[k] * dec.a_diag[k]) * xk.real
    if capture_xhat:
        return out, xhat
    return out


def lord_distance_grid(
    y1: np.ndarray,
    y2: np.ndarray,
    r_full: np.ndarray,
    x2_points: np.ndarray,
    slice_consts,
):
    """Unscaled distances with interference resolved by SIC down the
    unpunctured triangular factor (the LORD expansion)."""
    n = r_full.shape[0]
    nm1 = n - 1
    consts = _as_slice_list(slice_consts, nm1)
    c = r_full[n - 1, n - 1].real
    b = r_full[:nm1, n - 1] if nm1 else np.empty(0, complex)
    diff2 = y2[:, None] - c * x2_points[None, :]
    out = diff2.real**2 + diff2.imag**2
    xhat = [None] * nm1
    for k in range(nm1 - 1, -1, -1):
        acc = y1[k][:, None] - b[k] * x2_points[None, :]
        for j in range(k + 1, nm1):
            acc = acc - r_full[k, j] * xhat[j]
        pivot = r_full[k, k].real
        resid = acc / pivot
        xhat[k] = consts[k].slice_array(resid)
        rk = resid - xhat[k]
        out += (pivot * pivot) * (rk.real**2 + rk.imag**2)
    return out


def subspace_distance(
    y1: np.ndarray,
    y2: complex,
    dec: PuncturedDecomposition,
    x2: complex,
    slice_const,
    sigma2: float,
) -> float:
    """Scaled modified distance for a single candidate on the decoupled layer."""
    y1 = np.asarray(y1, dtype=complex).reshape(-1, 1)
    if y1.shape[0] != dec.n - 1:
        raise DimensionMismatch(f"expected {dec.n - 1} upper-block entries, got {y1.shape[0]}")
    grid = subspace_distance_grid(
        y1, np.array([y2], dtype=complex), dec, np.array([x2], dtype=complex), slice_const
    )
    return float(grid[0, 0] / sigma2)


def log_map_scores(grids, consts, inv_sigma2: float, counter: OpCounter | None = None) -> np.ndarray:
    """Accumulated Log-MAP scores: T log(1/Q) + sum_t logsumexp(-d / sigma^2)."""
    scores = np.empty(len(grids))
    for j, (grid, const) in enumerate(zip(grids, consts)):
        a = grid * (-inv_sigma2)
        m = a.max(axis=1)
        a -= m[:, None]
        np.exp(a, out=a)
        lse = m + np.log(a.sum(axis=1))
        scores[j] = grid.shape[0] * const.prior_log + lse.sum()
        if counter is not None:
            counter.dist += grid.size
            counter.exp += grid.size
            counter.log += grid.shape[0]
    return scores


def max_log_scores(grids, consts, inv_sigma2: float, counter: OpCounter | None = None) -> np.ndarray:
    """Accumulated Max-Log scores: T log(1/Q) - sum_t min_q d / sigma^2.

    Uses only comparisons; no exponential or logarithm is evaluated.
    """
    scores = np.empty(len(grids))
    for j, (grid, const) in enumerate(zip(grids, consts)):
        scores[j] = grid.shape[0] * const.prior_log - inv_sigma2 * grid.min(axis=1).sum()
        if counter is not None:
            counter.dist += grid.size
    return scores


def distance_result(scaled_distances: np.ndarray, keep_per_symbol: bool = True) -> DistanceResult:
    """Summary of one observation's scaled distances under one hypothesis."""
    d = np.asarray(scaled_distances, dtype=float)
    m = float(d.min())
    logsum = float(np.log(np.exp(-(d - m)).sum()) - m)
    return DistanceResult(d_min=m, logsum=logsum, per_symbol=d.copy() if keep_per_symbol else None)


def _split_by_hypothesis(grid: np.ndarray, hypotheses):
    out = []
    lo = 0
    for mt in hypotheses:
        hi = lo + mt.cardinality
        out.append(grid[:, lo:hi])
        lo = hi
    return out


@lru_cache(maxsize=64)
def _stacked_points_cached(hypotheses: tuple) -> np.ndarray:
    pts = np.concatenate([build_constellation(mt).points for mt in hypotheses])
    pts.setflags(write=False)
    return pts


def _stacked_points(hypotheses) -> np.ndarray:
    return _stacked_points_cached(tuple(hypotheses))


def subspace_layer_grids(
    frame: Frame,
    layer: int,
    hypotheses,
    slice_const,
    dec: PuncturedDecomposition | None = None,
    capture_xhat: bool = False,
):
    """Unscaled distance grids of every hypothesis for one layer pipeline.

    All hypotheses' candidates run through one vectorized pass; the result is
    split back into per-hypothesis (T, Q_j) views. With capture_xhat the
    per-candidate slicer outputs, shape (N-1, T, Q_j), are returned alongside.
    """
    if dec is None:
        dec = decompose_for_layer(frame.h, layer)
    y1, y2 = transform_observations(frame.y, dec)
    consts = _as_slice_list(slice_const, frame.n - 1)
    out = subspace_distance_grid(
        y1, y2, dec, _stacked_points(hypotheses), consts, capture_xhat=capture_xhat
    )
    if not capture_xhat:
        return _split_by_hypothesis(out, hypotheses)
    grid, xhat = out
    grids = _split_by_hypothesis(grid, hypotheses)
    xhats = []
    lo = 0
    for mt in hypotheses:
        hi = lo + mt.cardinality
        xhats.append(xhat[:, :, lo:hi])
        lo = hi
    return grids, xhats


def lord_layer_grids(frame: Frame, layer: int, hypotheses, slice_const, r_full=None, q_full=None):
    if r_full is None or q_full is None:
        q_full, r_full = qrd(permute_layer(frame.h, layer))
    yt = q_full.conj().T @ frame.y
    y1, y2 = yt[:-1, :], yt[-1, :]
    consts = _as_slice_list(slice_const, frame.n - 1)
    grid = lord_distance_grid(y1, y2, r_full, _stacked_points(hypotheses), consts)
    return _split_by_hypothesis(grid, hypotheses)


def _hypothesis_consts(hypotheses):
    return [build_constellation(mt) for mt in hypotheses]


def classify_subspace_log_map(
    frame: Frame,
    layer: int,
    hypotheses,
    slice_const,
    counter: OpCounter | None = None,
    dec: PuncturedDecomposition | None = None,
) -> HypothesisScore:
    grids = subspace_layer_grids(frame, layer, hypotheses, slice_const, dec=dec)
    scores = log_map_scores(grids, _hypothesis_consts(hypotheses), 1.0 / frame.sigma2, counter)
    return HypothesisScore(layer=layer, scores=scores, t_seen=frame.t)


def classify_subspace_max_log_map(
    frame: Frame,
    layer: int,
    hypotheses,
    slice_const,
    counter: OpCounter | None = None,
    dec: PuncturedDecomposition | None = None,
) -> HypothesisScore:
    grids = subspace_layer_grids(frame, layer, hypotheses, slice_const, dec=dec)
    scores = max_log_scores(grids, _hypothesis_consts(hypotheses), 1.0 / frame.sigma2, counter)
    return HypothesisScore(layer=layer, scores=scores, t_seen=frame.t)


def classify_lord_log_map(
    frame: Frame, layer: int, hypotheses, slice_const, counter: OpCounter | None = None
) -> HypothesisScore:
    grids = lord_layer_grids(frame, layer, hypotheses, slice_const)
    scores = log_map_scores(grids, _hypothesis_consts(hypotheses), 1.0 / frame.sigma2, counter)
    return HypothesisScore(layer=layer, scores=scores, t_seen=frame.t)


def classify_lord_max_log_map(
    frame: Frame, layer: int, hypotheses, slice_const, counter: OpCounter | None = None
) -> HypothesisScore:
    grids = lord_layer_grids(frame, layer, hypotheses, slice_const)
    scores = max_log_scores(grids, _hypothesis_consts(hypotheses), 1.0 / frame.sigma2, counter)
    return HypothesisScore(layer=layer, scores=scores, t_seen=frame.t)


def zf_equalize(frame: Frame):
    """ZF-equalized observations (N, T) and the Gram inverse used."""
    gram = frame.h.conj().T @ frame.h
    if np.linalg.cond(gram) > 1e12:
        raise RankDeficient("channel Gram matrix is numerically singular")
    gram_inv = np.linalg.inv(gram)
    y_zf = gram_inv @ (frame.h.conj().T @ frame.y)
    return y_zf, gram_inv


def classify_zf_alrt(
    frame: Frame,
    layer: int,
    hypotheses,
    counter: OpCounter | None = None,
    standard_variance: bool = False,
) -> HypothesisScore:
    """Per-layer ALRT on the ZF-equalized output.

    The post-equalization noise variance follows the column-energy form
    sigma2 / ||h_n||^2; standard_variance switches to the conventional
    [(H*H)^-1]_nn sigma2 for comparison studies.
    """
    y_zf, gram_inv = zf_equalize(frame)
    h_n = frame.h[:, layer]
    if standard_variance:
        sigma2_eff = frame.sigma2 * gram_inv[layer, layer].real
    else:
        sigma2_eff = frame.sigma2 / float(np.vdot(h_n, h_n).real)
    yl = y_zf[layer]
    grids = []
    for mt in hypotheses:
        pts = build_constellation(mt).points
        diff = yl[:, None] - pts[None, :]
        grids.append(diff.real**2 + diff.imag**2)
    scores = log_map_scores(grids, _hypothesis_consts(hypotheses), 1.0 / sigma2_eff, counter)
    return HypothesisScore(layer=layer, scores=scores, t_seen=frame.t)


def _joint_combos(hypotheses, n: int, guard: int):
    combos = list(itertools.product(hypotheses, repeat=n))
    for combo in combos:
        size = 1
        for mt in combo:
            size *= mt.cardinality
        if size > guard:
            raise TooLarge(
                f"joint lattice of {'x'.join(str(m.cardinality) for m in combo)} "
                f"= {size} exceeds the {guard} guard"
            )
    return combos


def _joint_lattice(combo):
    axes = [build_constellation(mt).points for mt in combo]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=0)


def _joint_distance_rows(frame: Frame, lattice: np.ndarray, chunk: int = 256):
    """Yield (chunk_slice, (chunk, K) unscaled distances) over observations."""
    hx = frame.h @ lattice
    t = frame.t
    for lo in range(0, t, chunk):
        hi = min(lo + chunk, t)
        diff = frame.y[:, lo:hi, None] - hx[:, None, :]
        yield slice(lo, hi), (diff.real**2 + diff.imag**2).sum(axis=0)


def _classify_joint(frame: Frame, hypotheses, kind: str, counter, guard) -> JointDecision:
    combos = _joint_combos(hypotheses, frame.n, guard)
    inv_sigma2 = 1.0 / frame.sigma2
    scores = np.empty(len(combos))
    for j, combo in enumerate(combos):
        prior = sum(build_constellation(mt).prior_log for mt in combo)
        lattice = _joint_lattice(combo)
        total = 0.0
        for _, d in _joint_distance_rows(frame, lattice):
            if kind == "log-map":
                a = -inv_sigma2 * d
                m = a.max(axis=1)
                total += (m + np.log(np.exp(a - m[:, None]).sum(axis=1))).sum()
                if counter is not None:
                    counter.exp += d.size
                    counter.log += d.shape[0]
            else:
                total -= inv_sigma2 * d.min(axis=1).sum()
            if counter is not None:
                counter.dist += d.size
        scores[j] = frame.t * prior + total
    winner = int(np.argmax(scores))
    return JointDecision(mts=combos[winner], scores=scores, combos=tuple(combos))


def classify_log_map(
    frame: Frame, hypotheses, counter: OpCounter | None = None, guard: int = _JOINT_GUARD
) -> JointDecision:
    """Exhaustive joint ALRT over all S^N hypotheses (the reference classifier)."""
    return _classify_joint(frame, hypotheses, "log-map", counter, guard)


def classify_max_log_map(
    frame: Frame, hypotheses, counter: OpCounter | None = None, guard: int = _JOINT_GUARD
) -> JointDecision:
    """Joint classification with the dominant-term approximation of the log-sum."""
    return _classify_joint(frame, hypotheses, "max-log-map", counter, guard)
