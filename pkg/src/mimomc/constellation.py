"""QAM constellations with Gray bit labels and the nearest-point slicing operator.

All non-silent constellations are square QAM grids normalized to unit average
power. The silent type ("phi") is modeled as a true one-point constellation
holding the zero symbol, so every likelihood formula stays well defined for
silent antennas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NotAMember


class ModulationType(enum.Enum):
    """Modulation hypotheses supported per transmit layer."""

    PHI = "phi"
    QPSK = "qpsk"
    QAM16 = "qam16"
    QAM64 = "qam64"
    QAM256 = "qam256"
    QAM1024 = "qam1024"

    @property
    def cardinality(self) -> int:
        return _CARDINALITY[self]

    @property
    def bits_per_symbol(self) -> int:
        q = _CARDINALITY[self]
        return 0 if q == 1 else q.bit_length() - 1

    @classmethod
    def from_name(cls, name: str) -> "ModulationType":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown modulation type {name!r} (valid: {valid})") from None

    def __str__(self) -> str:
        return self.value


_CARDINALITY = {
    ModulationType.PHI: 1,
    ModulationType.QPSK: 4,
    ModulationType.QAM16: 16,
    ModulationType.QAM64: 64,
    ModulationType.QAM256: 256,
    ModulationType.QAM1024: 1024,
}


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _gray_bits(i: int, width: int) -> tuple[int, ...]:
    g = _gray(i)
    return tuple((g >> (width - 1 - k)) & 1 for k in range(width))


@dataclass(frozen=True)
class Constellation:
    """A finite complex symbol set with per-point bit labels.

    points are in canonical order (real axis index outer, imaginary inner,
    coordinates increasing), which also fixes slicing tie-breaks. labels is a
    (size, bits_per_symbol) array; the first half of each label Gray-codes the
    real axis, the second half the imaginary axis.
    """

    mtype: ModulationType
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray
    # square-grid slicing parameters; 1 level at scale 0 encodes the silent set
    axis_levels: int
    axis_scale: float
    bit_is_one: np.ndarray = field(repr=False)  # (bits_per_symbol, size) masks
    prior_log: float = 0.0  # log(1 / size)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def slice(self, value: complex) -> complex:
        """Nearest constellation point; ties go to the earliest canonical point."""
        return complex(self.points[int(np.argmin(np.abs(self.points - value)))])

    def slice_array(self, values: np.ndarray) -> np.ndarray:
        """Vectorized nearest-point quantization onto the square grid.

        O(1) per element via per-axis rounding; agrees with slice() except on
        exact midpoints, which have probability zero under continuous noise.
        """
        if self.axis_levels == 1:
            return np.zeros_like(values)
        half = float(self.axis_levels - 1)
        out = np.empty(values.shape, dtype=complex)

        def axis(src, dst):
            np.multiply(src, 0.5 / self.axis_scale, out=dst)
            dst += 0.5 * half
            np.rint(dst, out=dst)
            np.clip(dst, 0.0, half, out=dst)
            dst *= 2.0 * self.axis_scale
            dst -= half * self.axis_scale

        axis(values.real, out.real)
        axis(values.imag, out.imag)
        return out

    def point_index(self, x: complex) -> int:
        """Exact-membership index of x in points."""
        idx = self._index_map().get(complex(x))
        if idx is None:
            raise NotAMember(f"{x!r} is not a point of {self.mtype}")
        return idx

    def symbol_to_bits(self, x: complex) -> np.ndarray:
        """Bit label of an exact constellation member (length bits_per_symbol)."""
        return self.labels[self.point_index(x)].copy()

    def bits_to_symbol(self, bits) -> complex:
        bits = tuple(int(b) for b in bits)
        if len(bits) != self.bits_per_symbol:
            raise NotAMember(
                f"expected {self.bits_per_symbol} bits for {self.mtype}, got {len(bits)}"
            )
        idx = self._label_map().get(bits)
        if idx is None:
            raise NotAMember(f"label {bits} not used by {self.mtype}")
        return complex(self.points[idx])

    def _index_map(self) -> dict:
        if not hasattr(self, "_pt_index"):
            object.__setattr__(
                self, "_pt_index", {complex(p): i for i, p in enumerate(self.points)}
            )
        return self._pt_index

    def _label_map(self) -> dict:
        if not hasattr(self, "_lbl_index"):
            object.__setattr__(
                self,
                "_lbl_index",
                {tuple(int(b) for b in row): i for i, row in enumerate(self.labels)},
            )
        return self._lbl_index


@lru_cache(maxsize=None)
def build_constellation(mtype: ModulationType) -> Constellation:
    """Canonical constellation for a modulation type (deterministic, cached)."""
    if mtype is ModulationType.PHI:
        points = np.zeros(1, dtype=complex)
        labels = np.zeros((1, 0), dtype=np.uint8)
        const = Constellation(
            mtype=mtype,
            points=points,
            bits_per_symbol=0,
            labels=labels,
            axis_levels=1,
            axis_scale=0.0,
            bit_is_one=np.zeros((0, 1), dtype=bool),
            prior_log=0.0,
        )
    else:
        order = mtype.cardinality
        q = mtype.bits_per_symbol
        levels = 1 << (q // 2)
        # odd-coordinate grid scaled so the average symbol power is exactly 1
        scale = 1.0 / math.sqrt(2.0 * (order - 1) / 3.0)
        half = levels - 1
        coords = (2.0 * np.arange(levels) - half) * scale
        points = np.empty(order, dtype=complex)
        labels = np.empty((order, q), dtype=np.uint8)
        k = q // 2
        for i_re in range(levels):
            for i_im in range(levels):
                p = i_re * levels + i_im
                points[p] = coords[i_re] + 1j * coords[i_im]
                labels[p] = _gray_bits(i_re, k) + _gray_bits(i_im, k)
        bit_is_one = (labels.T == 1).copy()
        const = Constellation(
            mtype=mtype,
            points=points,
            bits_per_symbol=q,
            labels=labels,
            axis_levels=levels,
            axis_scale=scale,
            bit_is_one=bit_is_one,
            prior_log=-math.log(order),
        )
    const.points.setflags(write=False)
    const.labels.setflags(write=False)
    const.bit_is_one.setflags(write=False)
    return const


def constellations_for(mtypes) -> tuple[Constellation, ...]:
    return tuple(build_constellation(mt) for mt in mtypes)
