"""Soft-output subspace/LORD detection and the joint classify-and-detect pipeline.

Bit LLRs are unscaled differences of minimum distances between the bit-0 and
bit-1 symbol classes; a consumer that needs true LLRs divides by sigma^2.
The joint pipeline computes per-candidate distances once per hypothesis,
accumulates classification likelihoods from them, and replays the cached
metrics of the winning hypothesis for LLR generation, never recomputing a
distance after the decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Frame
from .classifiers import (
    log_map_scores,
    lord_layer_grids,
    max_log_scores,
    permuted_remaining,
    subspace_layer_grids,
)
from .constellation import Constellation, ModulationType, build_constellation
from .decomposition import decompose_for_layer
from .errors import CacheMiss, DimensionMismatch, EmptyBitClass
from .opcount import OpCounter


@dataclass(frozen=True)
class LlrVector:
    """Unscaled per-bit LLRs of one observation on one layer."""

    layer: int
    llrs: np.ndarray


def llr_matrix(grid: np.ndarray, const: Constellation) -> np.ndarray:
    """Per-bit LLRs for each observation row of a (T, Q) distance grid.

    For bit k, u = min distance over the bit-0 class, v = min over the bit-1
    class, LLR = u - v (negative favors 0). Adding a constant to all
    distances of an observation leaves every LLR unchanged.
    """
    q = const.bits_per_symbol
    t = grid.shape[0]
    out = np.empty((t, q))
    for k in range(q):
        ones = const.bit_is_one[k]
        if not ones.any() or ones.all():
            raise EmptyBitClass(f"bit {k} of {const.mtype} has an empty symbol class")
        u = grid[:, ~ones].min(axis=1)
        v = grid[:, ones].min(axis=1)
        out[:, k] = u - v
    return out


def subspace_llrs(distances: np.ndarray, const: Constellation, layer: int = 0) -> LlrVector:
    """LLRs of a single observation from its per-candidate distances."""
    d = np.asarray(distances, dtype=float)
    if d.shape != (const.size,):
        raise DimensionMismatch(
            f"expected {const.size} distances for {const.mtype}, got shape {d.shape}"
        )
    return LlrVector(layer=layer, llrs=llr_matrix(d[None, :], const)[0])


@dataclass
class _CacheEntry:
    const: Constellation
    grid: np.ndarray | None = None  # full mode
    d_min: np.ndarray | None = None  # streaming reductions
    arg_min: np.ndarray | None = None
    llrs: np.ndarray | None = None
    xhat: np.ndarray | None = None  # (N-1, T, Q) slicer outputs, when retained


class DistanceCache:
    """Per-frame, per-layer store of candidate distance metrics by hypothesis.

    mode="full" keeps the (T, Q) grids; mode="streaming" keeps only the
    per-observation minima, argmin indices, and per-bit LLR reductions,
    bounding memory for very long frames.
    """

    def __init__(self, mode: str = "full"):
        if mode not in ("full", "streaming"):
            raise ValueError(f"unknown cache mode {mode!r}")
        self.mode = mode
        self._entries: dict[int, _CacheEntry] = {}
        self.written: set[int] = set()
        self.read: set[int] = set()

    def put(
        self,
        hyp_index: int,
        grid: np.ndarray,
        const: Constellation,
        xhat: np.ndarray | None = None,
    ) -> None:
        if self.mode == "full":
            entry = _CacheEntry(const=const, grid=grid, xhat=xhat)
        else:
            entry = _CacheEntry(
                const=const,
                d_min=grid.min(axis=1),
                arg_min=grid.argmin(axis=1),
                llrs=llr_matrix(grid, const) if const.bits_per_symbol else
                np.empty((grid.shape[0], 0)),
            )
        self._entries[hyp_index] = entry
        self.written.add(hyp_index)

    def entry(self, hyp_index: int) -> _CacheEntry:
        if hyp_index not in self._entries:
            raise CacheMiss(f"hypothesis {hyp_index} was never written to the cache")
        self.read.add(hyp_index)
        return self._entries[hyp_index]

    def distances(self, hyp_index: int) -> np.ndarray:
        e = self.entry(hyp_index)
        if e.grid is None:
            raise CacheMiss("full distance grids are not retained in streaming mode")
        return e.grid

    def coherent(self) -> bool:
        return self.read <= self.written


@dataclass
class JointDetectionResult:
    """Output of the per-layer joint classification-and-detection pipeline."""

    layer: int
    winner: ModulationType
    winner_index: int
    scores: np.ndarray
    llrs: np.ndarray  # (T, q) unscaled
    hard_decisions: np.ndarray  # (T,) complex symbols
    cache: DistanceCache

    @property
    def llr_vectors(self) -> list[LlrVector]:
        return [LlrVector(layer=self.layer, llrs=row.copy()) for row in self.llrs]


def _reduce_entry(entry: _CacheEntry):
    """(llrs, d_min, hard symbols) of a cache entry without recomputing distances."""
    const = entry.const
    if entry.grid is not None:
        d_min = entry.grid.min(axis=1)
        arg_min = entry.grid.argmin(axis=1)
        llrs = (
            llr_matrix(entry.grid, const)
            if const.bits_per_symbol
            else np.empty((entry.grid.shape[0], 0))
        )
    else:
        d_min, arg_min, llrs = entry.d_min, entry.arg_min, entry.llrs
    return llrs, d_min, const.points[arg_min]


def joint_classify_detect(
    frame: Frame,
    layer: int,
    hypotheses,
    slice_const,
    kind: str = "log-map",
    cache_mode: str = "full",
    counter: OpCounter | None = None,
    store_xhat: bool = False,
) -> JointDetectionResult:
    """Classify the layer of interest over T observations, then emit LLRs and
    hard decisions from the cached metrics of the winning hypothesis.

    Steps: permute the layer to the last column, decompose, compute the
    candidate distances for every hypothesis with dense slicing on the
    remaining layers, accumulate likelihoods, pick the winner, replay its
    cached metrics for bit LLRs. A missing cache entry raises CacheMiss.
    store_xhat additionally retains the interferer slicer outputs per
    candidate (full cache mode only; memory-heavy).
    """
    if kind not in ("log-map", "max-log-map"):
        raise ValueError(f"unknown classifier kind {kind!r}")
    dec = decompose_for_layer(frame.h, layer)
    cache = DistanceCache(mode=cache_mode)
    consts = [build_constellation(mt) for mt in hypotheses]
    if store_xhat and cache_mode == "full":
        grids, xhats = subspace_layer_grids(
            frame, layer, hypotheses, slice_const, dec=dec, capture_xhat=True
        )
    else:
        grids = subspace_layer_grids(frame, layer, hypotheses, slice_const, dec=dec)
        xhats = [None] * len(grids)
    for j, (grid, const, xh) in enumerate(zip(grids, consts, xhats)):
        cache.put(j, grid, const, xhat=xh)
    inv_sigma2 = 1.0 / frame.sigma2
    if kind == "log-map":
        scores = log_map_scores(grids, consts, inv_sigma2, counter)
    else:
        scores = max_log_scores(grids, consts, inv_sigma2, counter)
    if cache_mode == "streaming":
        del grids
    winner_index = int(np.argmax(scores))
    llrs, _, hard = _reduce_entry(cache.entry(winner_index))
    return JointDetectionResult(
        layer=layer,
        winner=hypotheses[winner_index],
        winner_index=winner_index,
        scores=scores,
        llrs=llrs,
        hard_decisions=hard,
        cache=cache,
    )


@dataclass
class DetectionResult:
    layer: int
    llrs: np.ndarray  # (T, q) unscaled
    hard_decisions: np.ndarray  # (T,) complex symbols
    d_min: np.ndarray  # (T,) unscaled minimum distances


def mt_aware_detect(
    frame: Frame,
    layer: int,
    mode: str = "subspace",
    mts: tuple[ModulationType, ...] | None = None,
    counter: OpCounter | None = None,
) -> DetectionResult:
    """Soft detection with perfect knowledge of the modulation on every layer.

    The interfering layers are sliced onto their true constellations and the
    candidate set is the true constellation of the layer of interest; this is
    the performance bound the blind (dense-slicing) pipeline is compared to.
    """
    mts = frame.mts if mts is None else tuple(mts)
    slice_consts = [build_constellation(mt) for mt in permuted_remaining(mts, layer)]
    candidates = (mts[layer],)
    if mode == "subspace":
        grids = subspace_layer_grids(frame, layer, candidates, slice_consts)
    elif mode == "lord":
        grids = lord_layer_grids(frame, layer, candidates, slice_consts)
    else:
        raise ValueError(f"unknown detection mode {mode!r}")
    grid = grids[0]
    if counter is not None:
        counter.dist += grid.size
    const = build_constellation(mts[layer])
    llrs = llr_matrix(grid, const) if const.bits_per_symbol else np.empty((grid.shape[0], 0))
    arg = grid.argmin(axis=1)
    return DetectionResult(
        layer=layer,
        llrs=llrs,
        hard_decisions=const.points[arg],
        d_min=grid.min(axis=1),
    )


def assumed_mt_detect(
    frame: Frame,
    layer: int,
    layer_mt: ModulationType,
    slice_const: Constellation,
    mode: str = "subspace",
    counter: OpCounter | None = None,
) -> DetectionResult:
    """Detection with known MT on the layer of interest but unknown (dense
    constellation assumed) MTs on the remaining layers."""
    candidates = (layer_mt,)
    if mode == "subspace":
        grids = subspace_layer_grids(frame, layer, candidates, slice_const)
    elif mode == "lord":
        grids = lord_layer_grids(frame, layer, candidates, slice_const)
    else:
        raise ValueError(f"unknown detection mode {mode!r}")
    grid = grids[0]
    if counter is not None:
        counter.dist += grid.size
    const = build_constellation(layer_mt)
    llrs = llr_matrix(grid, const) if const.bits_per_symbol else np.empty((grid.shape[0], 0))
    arg = grid.argmin(axis=1)
    return DetectionResult(
        layer=layer,
        llrs=llrs,
        hard_decisions=const.points[arg],
        d_min=grid.min(axis=1),
    )
