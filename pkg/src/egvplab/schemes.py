"""Precoding schemes: prediction variants and baselines.

Every scheme consumes the same per-drop inputs (predicted CSI snapshots,
true channels, sampling schedule) so Monte-Carlo comparisons are paired.
A scheme produces one dominant eigenvector per UE per subframe; the
shared evaluator turns those into zero-forcing precoders, sum spectral
efficiency against the true channels, and the phase-aligned prediction
error against the true dominant eigenvectors.

Ledger conventions: one eigen-decomposition event per sampling instant
(every subframe for the full-time baseline), and, for the prediction
schemes, two solve passes per UE window: the weight-extraction pass
after calibration and the precoder-reconstruction pass over the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSnapshot
from .csi import DlChannelModel
from .eigen import (
    EigenSample,
    SamplingSchedule,
    calibrate_phase,
    extract_weights,
    ezf_precoders,
    gram_matrix,
    interpolate_weights,
    reconstruct_precoder,
    sample_eigenvectors_cgm,
    sample_eigenvectors_wcm,
)
from .metrics import CostLedger, prediction_error, spectral_efficiency

SCHEME_NAMES = ("egvp_wcm", "egvp_cgm", "full_evd", "lazy_evd", "wiener",
                "upper_bound")


@dataclass(frozen=True)
class DropData:
    """Shared per-drop inputs for all schemes (paired comparisons)."""

    schedule: SamplingSchedule
    est: tuple      # est[k][i]: predicted DL snapshot of UE k at window step i
    true: tuple     # true[k][i]: true DL snapshot of UE k at window step i
    true_eigvecs: np.ndarray   # (n_subframes, n_ue, grid_size)
    dl_models: tuple           # per-UE DlChannelModel (Gram fast path)
    noise_power: float

    @property
    def n_ue(self) -> int:
        return len(self.est)

    @property
    def subframes(self) -> np.ndarray:
        return self.schedule.window


@dataclass(frozen=True)
class SchemeResult:
    """Per-subframe metrics and the event ledger of one scheme run."""

    scheme: str
    subframes: np.ndarray
    se: np.ndarray
    pe: np.ndarray
    ledger: CostLedger
    flags: tuple[tuple[str, ...], ...]  # per subframe


def _evaluate(drop: DropData, scheme: str, ledger: CostLedger,
              predicted: np.ndarray,
              flags: list[set]) -> SchemeResult:
    """EZF + SE + PE for a (n_subframes, n_ue, grid_size) prediction."""
    n_t = predicted.shape[0]
    se = np.empty(n_t)
    pe = np.empty(n_t)
    for i in range(n_t):
        stacked = predicted[i].T  # (grid_size, n_ue)
        precoders, ezf_flags = ezf_precoders(stacked)
        flags[i].update(ezf_flags)
        true_channels = [drop.true[k][i].coefficients for k in range(drop.n_ue)]
        se[i] = spectral_efficiency(
            true_channels, [precoders[:, k] for k in range(drop.n_ue)],
            drop.noise_power,
        )
        pe[i] = float(np.mean([
            prediction_error(drop.true_eigvecs[i, k], predicted[i, k])
            for k in range(drop.n_ue)
        ]))
    return SchemeResult(
        scheme=scheme, subframes=drop.subframes, se=se, pe=pe, ledger=ledger,
        flags=tuple(tuple(sorted(f)) for f in flags),
    )


def _full_time(drop: DropData, scheme: str, snapshots) -> SchemeResult:
    ledger = CostLedger()
    n_t = drop.subframes.size
    predicted = np.empty((n_t, drop.n_ue, drop.true_eigvecs.shape[2]),
                         dtype=np.complex128)
    flags = [set() for _ in range(n_t)]
    for k in range(drop.n_ue):
        for i in range(n_t):
            sample = sample_eigenvectors_wcm(snapshots[k][i], ledger)
            predicted[i, k] = sample.vectors[:, 0]
            flags[i].update(sample.flags)
    return _evaluate(drop, scheme, ledger, predicted, flags)


def run_full_time_evd(drop: DropData) -> SchemeResult:
    """Eigen-decomposition of the predicted CSI at every subframe."""
    return _full_time(drop, "full_evd", drop.est)


def run_upper_bound(drop: DropData) -> SchemeResult:
    """Full-time eigen-decomposition with perfect (true) CSI."""
    return _full_time(drop, "upper_bound", drop.true)


def _sample_indices(drop: DropData) -> np.ndarray:
    """Window positions of the sampling instants."""
    return np.arange(drop.schedule.n_samples) * drop.schedule.cycle


def run_lazy_evd(drop: DropData) -> SchemeResult:
    """Eigen-decomposition at sampling instants, precoder held between."""
    ledger = CostLedger()
    n_t = drop.subframes.size
    grid = drop.true_eigvecs.shape[2]
    predicted = np.empty((n_t, drop.n_ue, grid), dtype=np.complex128)
    flags = [set() for _ in range(n_t)]
    instants = _sample_indices(drop)
    for k in range(drop.n_ue):
        current = None
        next_pos = 0
        for i in range(n_t):
            if next_pos < instants.size and i == instants[next_pos]:
                sample = sample_eigenvectors_wcm(drop.est[k][i], ledger)
                current = sample.vectors[:, 0]
                flags[i].update(sample.flags)
                next_pos += 1
            predicted[i, k] = current
    return _evaluate(drop, "lazy_evd", ledger, predicted, flags)


def _wiener_coefficients(history: np.ndarray, order: int) -> np.ndarray:
    """One-step Wiener-Hopf predictor coefficients from sample history.

    ``history`` is (n_samples, n_entries). The autocorrelation is pooled
    across entries (the per-entry estimates from a handful of samples
    are far too noisy to solve on their own), then the Toeplitz system
    sum_l w_l r(k - l) = r(k), k = 1..order, is solved with a small
    diagonal loading. The same coefficient vector serves every entry.
    """
    n = history.shape[0]
    lags = order + 1
    r = np.zeros(lags, dtype=np.complex128)
    for tau in range(lags):
        r[tau] = np.sum(history[: n - tau].conj() * history[tau:]) / (n - tau)
    toeplitz = np.empty((order, order), dtype=np.complex128)
    for a in range(order):
        for b in range(order):
            lag = a - b
            toeplitz[a, b] = r[lag] if lag >= 0 else np.conj(r[-lag])
    toeplitz += np.eye(order) * (np.real(r[0]) + 1e-12) * 1e-10
    return np.linalg.solve(toeplitz, r[1:order + 1])


def run_wiener(drop: DropData, order: int = 2) -> SchemeResult:
    """Wiener-Hopf one-step prediction on the calibrated sample grid.

    Between sampling instants the freshest prediction is held; before
    ``order`` samples exist the scheme falls back to holding the latest
    sample.
    """
    ledger = CostLedger()
    n_t = drop.subframes.size
    grid = drop.true_eigvecs.shape[2]
    predicted = np.empty((n_t, drop.n_ue, grid), dtype=np.complex128)
    flags = [set() for _ in range(n_t)]
    instants = _sample_indices(drop)
    for k in range(drop.n_ue):
        samples: list[EigenSample] = []
        span_vec = None
        for i in range(n_t):
            pos = int(np.searchsorted(instants, i, side="right")) - 1
            if pos >= 0 and instants[pos] == i:
                raw = sample_eigenvectors_wcm(drop.est[k][i], ledger)
                samples = calibrate_phase(samples + [raw])
                flags[i].update(samples[-1].flags)
                # fresh sample at the instant; prediction covers the span
                predicted[i, k] = samples[-1].vectors[:, 0]
                if len(samples) > order:
                    hist = np.stack([s.vectors[:, 0] for s in samples])
                    w = _wiener_coefficients(hist, order)
                    ledger.pseudoinverse_events += 1
                    pred = np.zeros(grid, dtype=np.complex128)
                    for l in range(1, order + 1):
                        pred += w[l - 1] * hist[-l]
                    norm = np.linalg.norm(pred)
                    if norm > 0:
                        span_vec = pred / norm
                    else:
                        span_vec = samples[-1].vectors[:, 0]
                        flags[i].add("wiener_zero_prediction")
                else:
                    span_vec = samples[-1].vectors[:, 0]
            else:
                predicted[i, k] = span_vec
    return _evaluate(drop, "wiener", ledger, predicted, flags)


def run_egvp(drop: DropData, variant: str = "wcm",
             order: int = 3) -> SchemeResult:
    """Eigenvector prediction through channel-weight interpolation.

    Samples at the schedule instants (wideband or Gram route), calibrates
    phases, extracts the channel-weight series, fits per-entry
    exponential models, and reconstructs precoders at every window
    subframe from the predicted CSI. Subframes past the last sampling
    instant are served by extrapolation and flagged.
    """
    if variant not in ("wcm", "cgm"):
        raise ValueError("variant must be 'wcm' or 'cgm'")
    ledger = CostLedger()
    sched = drop.schedule
    n_t = drop.subframes.size
    grid = drop.true_eigvecs.shape[2]
    predicted = np.empty((n_t, drop.n_ue, grid), dtype=np.complex128)
    flags = [set() for _ in range(n_t)]
    instants = _sample_indices(drop)

    for k in range(drop.n_ue):
        samples: list[EigenSample] = []
        for pos in instants:
            snap = drop.est[k][pos]
            if variant == "wcm":
                sample = sample_eigenvectors_wcm(snap, ledger)
            else:
                gram = gram_matrix(drop.dl_models[k], int(drop.subframes[pos]),
                                   ledger)
                sample = sample_eigenvectors_cgm(gram, snap, ledger)
            samples.append(sample)
        calibrated = calibrate_phase(samples)
        sample_flags = set()
        for s in calibrated:
            sample_flags.update(s.flags)

        # weight-extraction pass (one solve pass per UE window)
        ledger.pseudoinverse_events += 1
        n_r = calibrated[0].n_antennas
        weight_series = np.empty((sched.n_samples, n_r, n_r),
                                 dtype=np.complex128)
        for i, s in enumerate(calibrated):
            if variant == "cgm" and s.weights is not None:
                weight_series[i] = s.weights
            else:
                weight_series[i] = extract_weights(
                    s, drop.est[k][instants[i]]).weights
        model = interpolate_weights(weight_series, order, sched, ledger)

        # reconstruction pass over the window (second solve pass); at
        # sampling instants the fresh calibrated sample itself serves
        ledger.pseudoinverse_events += 1
        instant_pos = {int(p): idx for idx, p in enumerate(instants)}
        for i in range(n_t):
            if i in instant_pos:
                predicted[i, k] = calibrated[instant_pos[i]].vectors[:, 0]
            else:
                rec = reconstruct_precoder(model, drop.est[k][i],
                                           fallback=calibrated[-1])
                predicted[i, k] = rec.precoders[:, 0]
                flags[i].update(rec.flags)
            flags[i].update(sample_flags)
    return _evaluate(drop, f"egvp_{variant}", ledger, predicted, flags)


def run_scheme(name: str, drop: DropData, *, order: int = 3,
               wiener_order: int = 2) -> SchemeResult:
    """Dispatch a scheme by its configuration name."""
    if name == "egvp_wcm":
        return run_egvp(drop, "wcm", order)
    if name == "egvp_cgm":
        return run_egvp(drop, "cgm", order)
    if name == "full_evd":
        return run_full_time_evd(drop)
    if name == "lazy_evd":
        return run_lazy_evd(drop)
    if name == "wiener":
        return run_wiener(drop, wiener_order)
    if name == "upper_bound":
        return run_upper_bound(drop)
    raise ValueError(f"unknown scheme {name!r}")
