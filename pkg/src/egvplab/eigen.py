"""Eigenvector sampling, calibration, weight interpolation, reconstruction.

Two sampling routes produce identical eigenvectors up to a unit-modulus
factor: a thin factorization of the stacked channel matrix (wideband
route) and an eigen-decomposition of the small channel Gram matrix
(Gram route), whose eigenvalues coincide with the wideband ones. Phase
calibration pins every sample's per-column phase to the first sample so
the channel-weight time series becomes a smooth target for exponential
interpolation; the reconstructed precoder is the weight-combined
estimated channel, renormalized per column.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelSnapshot
from .csi import DlChannelModel
from .harmonic import ExponentialModel, fit_exponentials
from .metrics import CostLedger

# relative singular-value floor below which a channel matrix column
# space is treated as rank collapsed
_RANK_RTOL = 1e-12
# eigenvalue gap (relative to the spectral radius) below which
# eigenvector pairing between the two routes is ambiguous
_DEGENERATE_GAP_RTOL = 1e-10
# |correlation| below which cross-time column pairing is unreliable
_TRACKING_CORR_MIN = 0.1


@dataclass(frozen=True)
class SamplingSchedule:
    """Periodic eigenvector sampling grid.

    Samples sit at t_in + k * cycle for k in [0, n_samples); the window
    served by one interpolation model spans n_samples * cycle subframes,
    of which the final cycle - 1 lie beyond the last sample and are
    extrapolated (flagged by callers).
    """

    t_in: int
    cycle: int
    n_samples: int

    def __post_init__(self):
        if self.cycle < 1 or self.n_samples < 1:
            raise ValueError("cycle and n_samples must be >= 1")

    @property
    def t_ed(self) -> int:
        return self.t_in + (self.n_samples - 1) * self.cycle

    @property
    def instants(self) -> np.ndarray:
        return self.t_in + self.cycle * np.arange(self.n_samples)

    @property
    def window(self) -> np.ndarray:
        return self.t_in + np.arange(self.n_samples * self.cycle)

    def is_instant(self, t: int) -> bool:
        return t >= self.t_in and (t - self.t_in) % self.cycle == 0 \
            and t <= self.t_ed

    def fractional_index(self, t) -> np.ndarray | float:
        """Subframe mapped to (possibly fractional) sample-grid units."""
        return (np.asarray(t, dtype=np.float64) - self.t_in) / self.cycle


@dataclass(frozen=True)
class EigenSample:
    """Orthonormal eigenvector sample of one UE at one subframe.

    ``weights`` is only present on Gram-route samples: the small
    eigenvector matrix scaled so that vectors = channel @ weights holds
    exactly, which lets the weight series be read off without touching
    the stacked dimension again.
    """

    subframe: int
    vectors: np.ndarray            # (grid_size, n_antennas)
    eigenvalues: np.ndarray        # (n_antennas,) nonincreasing, >= 0
    source: str                    # "wcm" or "cgm"
    weights: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    @property
    def n_antennas(self) -> int:
        return self.vectors.shape[1]


def sample_eigenvectors_wcm(snapshot: ChannelSnapshot,
                            ledger: CostLedger | None = None) -> EigenSample:
    """Dominant eigenvectors of the wideband outer-product matrix.

    Computed through a thin factorization of the (grid_size, n_antennas)
    stacked channel; mathematically identical to an eigen-decomposition
    of the full outer product, with eigenvalues the squared singular
    values in nonincreasing order.
    """
    h = snapshot.coefficients
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    if ledger is not None:
        ledger.record_evd(h.shape[0])
    flags: tuple[str, ...] = ()
    if s[0] == 0.0 or np.any(s < s[0] * _RANK_RTOL):
        flags = ("rank_deficient",)
    return EigenSample(subframe=snapshot.subframe, vectors=u,
                       eigenvalues=s ** 2, source="wcm", flags=flags)


def gram_matrix(model: DlChannelModel, subframe: int,
                ledger: CostLedger | None = None) -> np.ndarray:
    """Channel Gram matrix from the sparse DL model, entry by entry.

    Entry (j, r) sums conj(g_j,n) g_r,n over the support intersection of
    antennas j and r, with per-antenna beamspace coefficients evaluated
    from the amplitude-Doppler model; nothing of the stacked grid
    dimension is ever materialized. The result is Hermitian positive
    semidefinite and equals the dense product of the predicted channel
    with itself.
    """
    n_r = model.n_antennas
    coeffs = [ant.coefficients_at(float(subframe)) for ant in model.antennas]
    m = max(ant.dopplers.shape[1] for ant in model.antennas)
    gram = np.zeros((n_r, n_r), dtype=np.complex128)
    flops = 0
    for r in range(n_r):
        gram[r, r] = np.sum(np.abs(coeffs[r]) ** 2)
        flops += model.antennas[r].support.size * m * m
        for j in range(r + 1, n_r):
            common, ia, ib = np.intersect1d(
                model.antennas[j].support.indices,
                model.antennas[r].support.indices,
                assume_unique=True, return_indices=True,
            )
            flops += common.size * m * m
            if common.size == 0:
                continue
            val = np.sum(np.conj(coeffs[j][ia]) * coeffs[r][ib])
            gram[j, r] = val
            gram[r, j] = np.conj(val)
    if ledger is not None:
        ledger.gram_flops += flops
    # enforce exact Hermitian symmetry and a real diagonal
    gram = 0.5 * (gram + gram.conj().T)
    return gram


def sample_eigenvectors_cgm(gram: np.ndarray, snapshot: ChannelSnapshot,
                            ledger: CostLedger | None = None) -> EigenSample:
    """Eigenvector sample assembled from the Gram eigenvectors.

    The Gram eigenvectors act as channel weights: each stacked
    eigenvector is the weight-combined estimated channel, normalized to
    unit length. Eigenvalues coincide with the wideband route's.
    """
    n_r = gram.shape[0]
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    if ledger is not None:
        ledger.record_evd(n_r)

    flags: list[str] = []
    if n_r > 1 and evals[0] > 0:
        gaps = np.diff(evals[::-1])[::-1]
        if np.any(np.abs(gaps) < evals[0] * _DEGENERATE_GAP_RTOL):
            flags.append("degenerate_eigenvalues")

    raw = snapshot.coefficients @ evecs
    norms = np.linalg.norm(raw, axis=0)
    scale = norms.max() if norms.size else 0.0
    weights = np.array(evecs, dtype=np.complex128)
    vectors = np.array(raw)
    for r in range(n_r):
        if norms[r] <= scale * _RANK_RTOL or norms[r] == 0.0:
            flags.append("rank_deficient")
            continue
        vectors[:, r] /= norms[r]
        weights[:, r] /= norms[r]
    return EigenSample(subframe=snapshot.subframe, vectors=vectors,
                       eigenvalues=evals, source="cgm", weights=weights,
                       flags=tuple(dict.fromkeys(flags)))


def _greedy_pairing(reference: np.ndarray, candidate: np.ndarray):
    """Match candidate columns to reference columns by max |correlation|."""
    n = reference.shape[1]
    corr = np.abs(reference.conj().T @ candidate)  # (ref, cand)
    perm = np.full(n, -1, dtype=np.int64)
    best = np.zeros(n)
    work = corr.copy()
    for _ in range(n):
        a, b = np.unravel_index(np.argmax(work), work.shape)
        perm[a] = b
        best[a] = work[a, b]
        work[a, :] = -1.0
        work[:, b] = -1.0
    return perm, best


def calibrate_phase(samples: list[EigenSample]) -> list[EigenSample]:
    """Re-pair and phase-align an ordered run of eigenvector samples.

    Columns of each sample are first re-paired against the previous
    calibrated sample by maximal |correlation| (guard against eigenvalue
    crossings), then each column is rotated by the unit-modulus phase of
    its inner product with the first sample's column, making that inner
    product real and nonnegative. The first sample is returned
    unchanged; weights, when present, receive the same permutation and
    rotation so vectors = channel @ weights is preserved.
    """
    if not samples:
        return []
    n_r = samples[0].n_antennas
    if any(s.n_antennas != n_r for s in samples):
        raise ValueError("inconsistent antenna counts across samples")

    reference = samples[0].vectors
    calibrated = [samples[0]]
    previous = samples[0].vectors
    for sample in samples[1:]:
        perm, best = _greedy_pairing(previous, sample.vectors)
        flags = list(sample.flags)
        if np.any(best < _TRACKING_CORR_MIN):
            flags.append("tracking_lost")
        vectors = sample.vectors[:, perm]
        eigenvalues = sample.eigenvalues[perm]
        weights = sample.weights[:, perm] if sample.weights is not None else None

        # rotate so <column, reference column> becomes real nonnegative
        inner = np.einsum("ir,ir->r", vectors.conj(), reference)
        phases = np.exp(1j * np.angle(inner))
        vectors = vectors * phases[None, :]
        if weights is not None:
            weights = weights * phases[None, :]
        calibrated.append(replace(
            sample, vectors=vectors, eigenvalues=eigenvalues,
            weights=weights, flags=tuple(dict.fromkeys(flags)),
        ))
        previous = vectors
    return calibrated


@dataclass(frozen=True)
class WeightExtraction:
    weights: np.ndarray   # (n_antennas, n_antennas), vectors ~= channel @ weights
    residual: float
    rank_deficient: bool = False


def extract_weights(sample: EigenSample,
                    snapshot: ChannelSnapshot) -> WeightExtraction:
    """Channel weights as the minimum-norm solution of H W = U.

    Entry (j, r) weighs estimated channel column j inside eigenvector r.
    The reported residual is the Frobenius mismatch of the solved
    system; it vanishes whenever the eigenvectors lie in the channel's
    column space (always true for full-rank sampling).
    """
    h = snapshot.coefficients
    sol, _, rank, _ = np.linalg.lstsq(h, sample.vectors, rcond=None)
    residual = float(np.linalg.norm(h @ sol - sample.vectors))
    return WeightExtraction(weights=sol, residual=residual,
                            rank_deficient=rank < h.shape[1])


@dataclass(frozen=True)
class WeightModel:
    """Per-entry exponential models of the channel-weight trajectory."""

    models: tuple[tuple[ExponentialModel, ...], ...]  # [j][r]
    schedule: SamplingSchedule
    max_residual: float
    rank_deficient_entries: int = 0

    @property
    def n_antennas(self) -> int:
        return len(self.models)

    def evaluate(self, t) -> np.ndarray:
        """Weight matrix at subframe t (fractional sample-grid scaling)."""
        u = self.schedule.fractional_index(t)
        n = self.n_antennas
        out = np.empty((n, n), dtype=np.complex128)
        for j in range(n):
            for r in range(n):
                out[j, r] = self.models[j][r].evaluate(u)
        return out

    def in_supported_range(self, t) -> bool:
        """Interpolation plus one trailing cycle of extrapolation."""
        return self.schedule.t_in <= t <= self.schedule.t_ed + self.schedule.cycle


def interpolate_weights(weight_history: np.ndarray, order,
                        schedule: SamplingSchedule,
                        ledger: CostLedger | None = None) -> WeightModel:
    """Fit exponential models to weight samples taken on the schedule.

    ``weight_history`` has shape (n_samples, n_antennas, n_antennas);
    ``order`` is a scalar applied to every entry or an (n_antennas,
    n_antennas) array of per-entry orders. Evaluation rescales subframes
    to sample-grid units, which implements the frequency division by the
    sampling cycle.
    """
    hist = np.asarray(weight_history, dtype=np.complex128)
    if hist.ndim != 3 or hist.shape[0] != schedule.n_samples:
        raise ValueError("weight history must be (n_samples, n_r, n_r)")
    n = hist.shape[1]
    orders = np.broadcast_to(np.asarray(order, dtype=np.int64), (n, n))
    rows = []
    max_resid = 0.0
    deficient = 0
    for j in range(n):
        row = []
        for r in range(n):
            model = fit_exponentials(hist[:, j, r], int(orders[j, r]))
            if ledger is not None:
                ledger.pencil_fits += 1
            max_resid = max(max_resid, model.residual_relative)
            deficient += int(model.rank_deficient)
            row.append(model)
        rows.append(tuple(row))
    return WeightModel(models=tuple(rows), schedule=schedule,
                       max_residual=max_resid,
                       rank_deficient_entries=deficient)


@dataclass(frozen=True)
class Reconstruction:
    precoders: np.ndarray   # (grid_size, n_antennas), unit columns
    flags: tuple[str, ...] = ()


def reconstruct_precoder(weight_model: WeightModel,
                         snapshot: ChannelSnapshot,
                         fallback: EigenSample | None = None) -> Reconstruction:
    """Predicted eigenvectors at the snapshot's subframe.

    Each column is the weight-combined estimated channel normalized to
    unit length; a zero-norm column falls back to the matching column of
    the most recent valid sample when one is supplied.
    """
    t = snapshot.subframe
    lam = weight_model.evaluate(t)
    raw = snapshot.coefficients @ lam
    norms = np.linalg.norm(raw, axis=0)
    scale = float(norms.max()) if norms.size else 0.0
    flags: list[str] = []
    if not weight_model.in_supported_range(t):
        flags.append("beyond_supported_range")
    out = np.array(raw)
    for r in range(raw.shape[1]):
        if norms[r] <= scale * 1e-14 or norms[r] == 0.0:
            flags.append("zero_norm_fallback")
            if fallback is not None:
                col = fallback.vectors[:, r]
                out[:, r] = col / np.linalg.norm(col)
            continue
        out[:, r] /= norms[r]
    return Reconstruction(precoders=out, flags=tuple(dict.fromkeys(flags)))


def ezf_precoders(eigenvectors: np.ndarray):
    """Eigen zero-forcing transmit precoders for stacked user eigenvectors.

    Columns of the input are the K users' dominant eigenvectors; the
    output columns satisfy u_j^H f_k = 0 for j != k and are normalized
    to unit power. An ill-conditioned cross-correlation (condition
    number above 1e8) is diagonally loaded and flagged.
    """
    u = np.asarray(eigenvectors)
    if u.ndim != 2 or u.shape[1] < 1:
        raise ValueError("need a (grid_size, n_users) eigenvector matrix")
    g = u.conj().T @ u
    flags: tuple[str, ...] = ()
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > 1e8:
        g = g + np.eye(g.shape[0]) * (np.trace(g).real / g.shape[0]) * 1e-8
        flags = ("ezf_regularized",)
    f = u @ np.linalg.inv(g)
    norms = np.linalg.norm(f, axis=0)
    norms[norms == 0] = 1.0
    return f / norms[None, :], flags
