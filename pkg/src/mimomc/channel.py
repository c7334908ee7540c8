"""Channel generation, SNR bookkeeping, and seeded frame synthesis.

A frame is one channel realization held fixed over T observations; the
per-layer modulation types are drawn once per frame and fresh symbols/noise
are drawn per observation. All randomness flows through counter-based Philox
substreams keyed by (seed, stream index), so frames are reproducible
independently of evaluation order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .constellation import ModulationType, build_constellation
from .errors import ConfigError, NonPositiveSNR

_MASK64 = (1 << 64) - 1


def substream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one frame; pure function of (seed, stream)."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def snr_db_to_linear(snr_db: float) -> float:
    return float(10.0 ** (snr_db / 10.0))


def snr_to_sigma2(snr_linear: float, n: int) -> float:
    """Noise variance from total-power SNR, SNR = N / sigma^2."""
    if not snr_linear > 0:
        raise NonPositiveSNR(f"linear SNR must be > 0, got {snr_linear}")
    return float(n / snr_linear)


def exponential_correlation(n: int, rho: float) -> np.ndarray:
    """Single-parameter exponential profile R[i, j] = rho^|i - j|."""
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Principal (symmetric PSD) square root."""
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    correlation_factor: float


def generate_channel(n: int, rho: float, rng: np.random.Generator) -> ChannelRealization:
    """i.i.d. CN(0, 1) Rayleigh channel, optionally Kronecker-correlated.

    For rho > 0 the same exponential correlation profile is applied on both
    the transmit and receive sides: H_c = Rr^(1/2) H Rt^(1/2).
    """
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"correlation factor must be in [0, 1), got {rho}")
    h = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    if rho > 0.0:
        root = _psd_sqrt(exponential_correlation(n, rho))
        h = root @ h @ root
    return ChannelRealization(h=h, correlation_factor=rho)


@dataclass(frozen=True)
class FrameSpec:
    """Parameters of one Monte-Carlo frame."""

    n: int
    t: int
    hypothesis_set: tuple[ModulationType, ...]
    snr_db: float
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise ConfigError(f"observation count must be >= 1, got {self.t}")
        if len(self.hypothesis_set) < 1:
            raise ConfigError("hypothesis set must not be empty")


@dataclass(frozen=True)
class Observation:
    """A single received vector with its generating context."""

    y: np.ndarray
    h: np.ndarray
    sigma2: float
    true_mts: tuple[ModulationType, ...]
    true_x: np.ndarray


@dataclass(frozen=True)
class Frame:
    """T observations sharing one channel realization and per-layer MTs."""

    h: np.ndarray
    sigma2: float
    snr_db: float
    rho: float
    mts: tuple[ModulationType, ...]
    x: np.ndarray  # (N, T) transmitted symbols
    y: np.ndarray  # (N, T) received vectors

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def t(self) -> int:
        return self.y.shape[1]

    def observations(self) -> Iterator[Observation]:
        for t in range(self.t):
            yield Observation(
                y=self.y[:, t], h=self.h, sigma2=self.sigma2,
                true_mts=self.mts, true_x=self.x[:, t],
            )


def draw_frame(
    spec: FrameSpec,
    rng: np.random.Generator | None = None,
    fixed_mts: Mapping[int, ModulationType] | None = None,
) -> Frame:
    """Synthesize one frame: y = H x + z with z ~ CN(0, sigma2 I).

    Draw order is fixed (channel, per-layer MTs, per-layer symbol indices,
    noise) so a given (seed, stream) always yields a bit-identical frame.
    fixed_mts pins chosen layers to a known type after the uniform MT draw,
    leaving the stream alignment of later draws unchanged.
    """
    if rng is None:
        rng = substream(spec.seed, 0)
    n, t = spec.n, spec.t
    chan = generate_channel(n, spec.rho, rng)
    hyps = spec.hypothesis_set
    mt_idx = rng.integers(0, len(hyps), size=n)
    mts = [hyps[i] for i in mt_idx]
    if fixed_mts:
        for layer, mt in fixed_mts.items():
            mts[layer] = mt
    sigma2 = snr_to_sigma2(snr_db_to_linear(spec.snr_db), n)
    x = np.empty((n, t), dtype=complex)
    for layer, mt in enumerate(mts):
        const = build_constellation(mt)
        idx = rng.integers(0, const.size, size=t)
        x[layer] = const.points[idx]
    if sigma2 > 0.0:
        z = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal((n, t)) + 1j * rng.standard_normal((n, t))
        )
    else:
        z = np.zeros((n, t), dtype=complex)
    y = chan.h @ x + z
    return Frame(
        h=chan.h, sigma2=sigma2, snr_db=spec.snr_db, rho=spec.rho,
        mts=tuple(mts), x=x, y=y,
    )
