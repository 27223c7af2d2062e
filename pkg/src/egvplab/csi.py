"""Compressed-feedback DL CSI acquisition with partial reciprocity.

The base station observes an uplink window, selects the strongest
beamspace support per UE antenna, fits one exponential model per
selected index to estimate uplink Doppler, scales the Doppler by the
carrier-frequency ratio, and fills the downlink amplitudes from a
single compressed feedback at the end of the window. The resulting
model extrapolates the downlink channel across the CSI delay.

Feedback is the ideal-compression surrogate: the UE is assumed to know
the true DL channel at the feedback instant and returns the
least-squares amplitudes on the BS-chosen angle-delay/Doppler basis;
the information content is exactly the |S| * M scalars that the
compression-ratio accounting assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .angle_delay import GridLayout, IndexSet, from_angle_delay, to_angle_delay
from .channel import ChannelSnapshot, ConfigurationError
from .harmonic import ExponentialModel, InsufficientSamplesError, fit_exponentials

# relative residual above which a per-index Doppler fit is flagged as
# underfitted (more Doppler components than the configured order)
_FIT_RESIDUAL_TOL = 1e-3


@dataclass(frozen=True)
class EstimatorConfig:
    """CSI pipeline parameters."""

    eta: float = 0.95
    n_ul_samples: int = 7
    dopplers_per_index: int = 1
    csi_delay: int = 5
    feedback_noise_db: float | None = None
    support_cap: int | None = 48

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError("eta must be in (0, 1]")
        if self.n_ul_samples < 2 * self.dopplers_per_index:
            raise ConfigurationError(
                "n_ul_samples must be at least 2 * dopplers_per_index"
            )
        if self.dopplers_per_index < 1:
            raise ConfigurationError("dopplers_per_index must be >= 1")
        if self.csi_delay < 0:
            raise ConfigurationError("csi_delay must be nonnegative")
        if self.support_cap is not None and self.support_cap < 1:
            raise ConfigurationError("support_cap must be >= 1 or None")


@dataclass(frozen=True)
class AntennaChannelModel:
    """Sparse angle-delay-Doppler model of one UE antenna's DL channel."""

    support: IndexSet
    dopplers: np.ndarray                 # (|S|, M) rad per subframe
    amplitudes: np.ndarray | None = None  # (|S|, M) complex, None until feedback
    flags: tuple[str, ...] = ()

    def coefficients_at(self, subframe) -> np.ndarray:
        """Beamspace coefficients on the support at one or more subframes."""
        if self.amplitudes is None:
            raise ValueError("amplitudes not filled; run compress_feedback first")
        t = np.asarray(subframe, dtype=np.float64)
        rot = np.exp(1j * self.dopplers * t[..., None, None])
        return np.sum(self.amplitudes * rot, axis=-1)


@dataclass(frozen=True)
class DlChannelModel:
    """Per-antenna DL channel models plus feedback accounting for one UE."""

    antennas: tuple[AntennaChannelModel, ...]
    layout: GridLayout
    kappa: float = 0.0
    flags: tuple[str, ...] = ()

    @property
    def n_antennas(self) -> int:
        return len(self.antennas)


def estimate_ul_doppler(coeff_history: np.ndarray, support: IndexSet,
                        m_dopplers: int) -> list[ExponentialModel]:
    """Fit an order-M exponential model per selected index.

    ``coeff_history`` is (n_subframes, grid_size) for one UE antenna,
    sampled on consecutive subframes. A fit whose relative residual
    exceeds the tolerance keeps its result but the caller can see the
    misfit through the model residual.
    """
    hist = np.atleast_2d(np.asarray(coeff_history))
    if hist.shape[0] < 2 * m_dopplers:
        raise InsufficientSamplesError(
            f"history of {hist.shape[0]} subframes cannot support "
            f"{m_dopplers} dopplers per index"
        )
    return [fit_exponentials(hist[:, n], m_dopplers) for n in support.indices]


def map_reciprocity(ul_models: list[ExponentialModel], support: IndexSet,
                    ul_center_hz: float, dl_center_hz: float) -> AntennaChannelModel:
    """Map UL Doppler fits to the DL model for one antenna.

    The support carries over index-for-index and every Doppler scales by
    the DL/UL carrier ratio exactly; UL amplitudes are discarded (the DL
    amplitudes come from feedback).
    """
    m_max = max((m.order_requested for m in ul_models), default=1)
    ratio = dl_center_hz / ul_center_hz
    dopplers = np.zeros((support.size, m_max), dtype=np.float64)
    flags: list[str] = []
    for i, model in enumerate(ul_models):
        w = model.frequencies * ratio
        dopplers[i, :w.size] = w
        if model.residual_relative > _FIT_RESIDUAL_TOL:
            flags.append(f"doppler_fit_residual:{support.indices[i]}")
        if model.rank_deficient:
            # unused slots inherit frequency 0 with amplitude fixed at 0 later
            pass
    return AntennaChannelModel(support=support, dopplers=dopplers,
                               amplitudes=None, flags=tuple(flags))


def compress_feedback(true_dl_snapshot: ChannelSnapshot,
                      antennas: list[AntennaChannelModel],
                      layout: GridLayout,
                      feedback_noise_db: float | None = None,
                      seed: int = 0) -> DlChannelModel:
    """Fill DL amplitudes by projecting the true channel on the model basis.

    Per antenna and per selected index the measured beamspace coefficient
    g_n(t_fb) is distributed over the M Doppler hypotheses by a
    minimum-norm least squares (for M=1 this is exact division by the
    Doppler phase). Optional noise at power ratio rho corrupts the
    fed-back scalars. The feedback compression ratio kappa is |S| * M
    over the full grid size.
    """
    t_fb = true_dl_snapshot.subframe
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    filled: list[AntennaChannelModel] = []
    flags: list[str] = []
    total_scalars = 0
    for r, ant in enumerate(antennas):
        g = to_angle_delay(true_dl_snapshot.coefficients[:, r], layout)
        g_sel = g[ant.support.indices]
        phases = np.exp(1j * ant.dopplers * t_fb)   # (|S|, M)
        # minimum-norm split of one scalar across M parallel hypotheses
        denom = np.sum(np.abs(phases) ** 2, axis=1, keepdims=True)
        amplitudes = np.conj(phases) * (g_sel[:, None] / denom)
        ant_flags = list(ant.flags)
        m = ant.dopplers.shape[1]
        if m > 1:
            ant_flags.append("feedback_rank_deficient")
        if feedback_noise_db is not None and not np.isinf(feedback_noise_db):
            power = float(np.mean(np.abs(amplitudes) ** 2))
            var = power / (10.0 ** (feedback_noise_db / 10.0))
            noise = rng.standard_normal(amplitudes.shape) \
                + 1j * rng.standard_normal(amplitudes.shape)
            amplitudes = amplitudes + noise * np.sqrt(var / 2.0)
        total_scalars += ant.support.size * m
        filled.append(replace(ant, amplitudes=amplitudes,
                              flags=tuple(ant_flags)))
        flags.extend(ant_flags)
    kappa = total_scalars / (layout.size * len(antennas))
    return DlChannelModel(antennas=tuple(filled), layout=layout,
                          kappa=kappa, flags=tuple(sorted(set(flags))))


def predict_dl_channel(model: DlChannelModel, subframe: int) -> ChannelSnapshot:
    """Assemble the predicted DL snapshot at any subframe.

    Valid for arbitrary horizons; with one Doppler per occupied index in
    an on-grid scenario the prediction is exact at machine precision.
    """
    cols = np.zeros((model.layout.size, model.n_antennas), dtype=np.complex128)
    for r, ant in enumerate(model.antennas):
        coeffs = np.zeros(model.layout.size, dtype=np.complex128)
        coeffs[ant.support.indices] = ant.coefficients_at(float(subframe))
        cols[:, r] = from_angle_delay(coeffs, model.layout)
    return ChannelSnapshot(coefficients=cols, subframe=subframe, band="dl")
