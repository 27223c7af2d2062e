"""Fitting and evaluating finite sums of complex exponentials.

Matrix pencil on a Hankel arrangement of the samples: the rank-L signal
subspace comes from an SVD truncation, the poles from the shifted
subspace eigenproblem, and the amplitudes from a Vandermonde least
squares. Poles are projected onto the unit circle before use, so the
model stays purely oscillatory and evaluation never blows up when
extrapolating past the sample window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# singular values below this relative level count as rank collapse
_RANK_RTOL = 1e-10


class InsufficientSamplesError(ValueError):
    """Raised when fewer than 2L samples are offered for an order-L fit."""


@dataclass(frozen=True)
class ExponentialModel:
    """Sum of unit-circle complex exponentials b_l * exp(j w_l t)."""

    amplitudes: np.ndarray       # (order_effective,) complex
    frequencies: np.ndarray      # (order_effective,) rad per sample, in (-pi, pi]
    order_requested: int
    residual: float = 0.0        # absolute fit residual on the input samples
    residual_relative: float = 0.0
    rank_deficient: bool = False

    @property
    def order(self) -> int:
        return int(self.amplitudes.size)

    def evaluate(self, t) -> complex | np.ndarray:
        return evaluate(self, t)


def fit_exponentials(samples: np.ndarray, order: int) -> ExponentialModel:
    """Fit an order-L exponential model to uniformly spaced samples.

    Requires len(samples) >= 2 * order. If the Hankel rank collapses
    below the requested order (e.g. a constant signal fitted with L=3),
    the model is returned at the effective order with the
    ``rank_deficient`` flag set.
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    n = x.size
    if order < 1:
        raise ValueError("order must be >= 1")
    if n < 2 * order:
        raise InsufficientSamplesError(
            f"need at least {2 * order} samples for order {order}, got {n}"
        )

    pencil = n // 2
    rows = n - pencil
    hankel = np.empty((rows, pencil + 1), dtype=np.complex128)
    for i in range(rows):
        hankel[i, :] = x[i:i + pencil + 1]

    _, s, vh = np.linalg.svd(hankel)
    if s[0] == 0.0:
        empty = np.zeros(0)
        return ExponentialModel(
            amplitudes=empty.astype(complex), frequencies=empty,
            order_requested=order, rank_deficient=True,
        )
    effective = int(np.sum(s >= s[0] * _RANK_RTOL))
    effective = min(effective, order)
    rank_deficient = effective < order

    w_rows = vh[:effective, :]
    w0 = w_rows[:, :-1].T   # (pencil, effective)
    w1 = w_rows[:, 1:].T
    shift = np.linalg.pinv(w0) @ w1
    poles = np.linalg.eigvals(shift)
    freqs = np.angle(poles)  # unit-circle projection

    vander = np.exp(1j * np.outer(np.arange(n), freqs))
    amps, _, _, _ = np.linalg.lstsq(vander, x, rcond=None)
    resid = float(np.linalg.norm(vander @ amps - x))
    scale = float(np.linalg.norm(x))
    return ExponentialModel(
        amplitudes=amps,
        frequencies=freqs,
        order_requested=order,
        residual=resid,
        residual_relative=resid / scale if scale > 0 else 0.0,
        rank_deficient=rank_deficient,
    )


def evaluate(model: ExponentialModel, t) -> complex | np.ndarray:
    """Evaluate the model at (possibly fractional) sample index t."""
    t_arr = np.asarray(t, dtype=np.float64)
    if model.order == 0:
        out = np.zeros(t_arr.shape, dtype=np.complex128)
        return out if t_arr.ndim else complex(out)
    phases = np.exp(1j * np.multiply.outer(t_arr, model.frequencies))
    out = phases @ model.amplitudes
    return out if t_arr.ndim else complex(out)
