"""Angle-delay (beamspace) projection and support selection.

The projection basis is the unitary Kronecker product of normalized DFT
matrices, one factor per stacking axis: subcarriers (outermost), then
polarization, vertical and horizontal array axes. Transforms are applied
as per-axis FFTs, never as explicit dense matrices, so the cost is
O(N log N) per column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, BandConfig


class EmptySupportError(ValueError):
    """Raised when index selection sees an all-zero coefficient history."""


@dataclass(frozen=True)
class GridLayout:
    """Axis sizes of the stacked frequency-space grid, outermost first."""

    n_subcarriers: int
    n_polarizations: int
    n_vertical: int
    n_horizontal: int

    @classmethod
    def of(cls, geometry: ArrayGeometry, band: BandConfig) -> "GridLayout":
        return cls(band.n_subcarriers, geometry.n_polarizations,
                   geometry.n_vertical, geometry.n_horizontal)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_subcarriers, self.n_polarizations,
                self.n_vertical, self.n_horizontal)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class IndexSet:
    """Selected beamspace support of one UE antenna.

    ``achieved_fraction`` is the accumulated power fraction actually
    covered by the selection; it can fall short of the requested
    threshold only when a hard support cap truncated the prefix.
    """

    indices: np.ndarray  # strictly increasing grid indices
    achieved_fraction: float
    capped: bool = False

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or (idx.size > 1 and np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


def _check_length(x: np.ndarray, layout: GridLayout):
    if x.shape[-1] != layout.size:
        raise ValueError(
            f"expected vectors of length {layout.size}, got {x.shape[-1]}"
        )


def to_angle_delay(column: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Project stacked channel vectors onto the angle-delay grid.

    Accepts a single vector or an array whose last axis is the stacked
    dimension; the transform is unitary (Parseval-exact).
    """
    column = np.asarray(column, dtype=np.complex128)
    _check_length(column, layout)
    lead = column.shape[:-1]
    g = column.reshape(lead + layout.shape)
    offset = len(lead)
    # adjoint of the unitary DFT along one axis is sqrt(n) * ifft
    for axis, n in enumerate(layout.shape):
        if n > 1:
            g = np.fft.ifft(g, axis=offset + axis) * np.sqrt(n)
    return g.reshape(lead + (layout.size,))


def from_angle_delay(coeffs: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Inverse projection back to the stacked channel vector."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    _check_length(coeffs, layout)
    lead = coeffs.shape[:-1]
    h = coeffs.reshape(lead + layout.shape)
    offset = len(lead)
    for axis, n in enumerate(layout.shape):
        if n > 1:
            h = np.fft.fft(h, axis=offset + axis) / np.sqrt(n)
    return h.reshape(lead + (layout.size,))


def basis_column(index: int, layout: GridLayout) -> np.ndarray:
    """The grid basis vector q_n (column n of the Kronecker DFT)."""
    e = np.zeros(layout.size, dtype=np.complex128)
    e[index] = 1.0
    return from_angle_delay(e, layout)


def select_indices(coeff_history: np.ndarray, eta: float,
                   cap: int | None = None) -> IndexSet:
    """Minimal support covering an eta fraction of accumulated power.

    ``coeff_history`` is (n_subframes, grid_size); power is accumulated
    over the history, indices are sorted by power (ties broken toward
    the lower index) and the shortest prefix reaching eta of the total
    is returned. With a cap, the prefix is truncated and the achieved
    fraction reported.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    hist = np.atleast_2d(np.asarray(coeff_history))
    power = np.sum(np.abs(hist) ** 2, axis=0)
    total = float(power.sum())
    if total <= 0.0:
        raise EmptySupportError("all-zero coefficient history")

    order = np.argsort(-power, kind="stable")  # stable: ties keep lower index
    order = order[power[order] > 0.0]
    cumulative = np.cumsum(power[order])
    target = eta * total
    k = int(np.searchsorted(cumulative, target * (1.0 - 1e-12)) + 1)
    k = min(k, order.size)
    capped = False
    if cap is not None and k > cap:
        k = int(cap)
        capped = True
    chosen = np.sort(order[:k])
    achieved = float(cumulative[k - 1] / total)
    return IndexSet(indices=chosen, achieved_fraction=achieved, capped=capped)
