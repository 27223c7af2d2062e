"""Performance metrics and the abstract complexity-cost model.

The cost ledger counts algorithmic events rather than wall-clock time:
eigen-decomposition events by problem-size class, matrix-pencil fits,
Gram fast-path work units (|intersection| * M^2 per entry), and
standalone big-matrix solve passes. The closed-form cost model mirrors
the event counts: a full-time EVD scheme pays one decomposition per
subframe, the prediction schemes pay one per sampling instant plus two
solve passes (weight extraction, precoder reconstruction) per window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CostLedger:
    """Single-writer accumulator of algorithmic events for one run."""

    evd_events: dict[str, int] = field(default_factory=dict)
    pencil_fits: int = 0
    gram_flops: int = 0
    pseudoinverse_events: int = 0

    def record_evd(self, dimension: int, count: int = 1):
        key = f"dim{dimension}"
        self.evd_events[key] = self.evd_events.get(key, 0) + count

    def total_evd_events(self) -> int:
        return sum(self.evd_events.values())

    def merge(self, other: "CostLedger") -> "CostLedger":
        for key, val in other.evd_events.items():
            self.evd_events[key] = self.evd_events.get(key, 0) + val
        self.pencil_fits += other.pencil_fits
        self.gram_flops += other.gram_flops
        self.pseudoinverse_events += other.pseudoinverse_events
        return self


def spectral_efficiency(true_channels: list[np.ndarray],
                        precoders: list[np.ndarray],
                        noise_power: float) -> float:
    """Sum spectral efficiency in bits/s/Hz over K users.

    ``true_channels[k]`` is the stacked (grid_size, n_antennas) channel
    of UE k, ``precoders[k]`` its unit-norm transmit vector. The rate is
    sum_k log2(1 + ||H_k f_k||^2 / (sigma^2 + sum_{j!=k} ||H_k f_j||^2)).
    """
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    k_users = len(true_channels)
    if len(precoders) != k_users:
        raise ValueError("one precoder per user required")
    rate = 0.0
    for k in range(k_users):
        h = true_channels[k]
        signal = float(np.sum(np.abs(h.conj().T @ precoders[k]) ** 2))
        interference = 0.0
        for j in range(k_users):
            if j != k:
                interference += float(
                    np.sum(np.abs(h.conj().T @ precoders[j]) ** 2)
                )
        rate += np.log2(1.0 + signal / (noise_power + interference))
    return float(rate)


def prediction_error(true_vector: np.ndarray,
                     predicted: np.ndarray) -> float:
    """Phase-aligned normalized square error between two vectors.

    PE = || u/||u|| - exp(j theta) v/||v|| ||^2 minimized over the phase
    theta, which equals 2 (1 - |<u, v>| / (||u|| ||v||)). Invariant to
    unit-modulus scaling of either argument, symmetric, and bounded by
    [0, 2] with 2 attained for orthogonal vectors.
    """
    u = np.asarray(true_vector).ravel()
    v = np.asarray(predicted).ravel()
    if u.size != v.size:
        raise ValueError("vector lengths differ")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero-norm input")
    corr = abs(np.vdot(u, v)) / (nu * nv)
    return float(2.0 * (1.0 - min(corr, 1.0)))


@dataclass(frozen=True)
class BoundCheckResult:
    passed: bool
    bound: float
    mean_nmse: float
    margin: float
    n_samples: int


def theorem1_bound_check(nmse_values: np.ndarray, eta: float,
                         tolerance: float = 0.02) -> BoundCheckResult:
    """Compare ensemble-mean eigenvector NMSE against the 1 - eta bound.

    ``nmse_values`` are per-(drop, instant, eigenvector) normalized
    square errors gathered under the exact-coefficient premises; the
    check passes when their mean stays within tolerance of 1 - eta.
    """
    vals = np.asarray(nmse_values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise ValueError("no NMSE samples supplied")
    mean = float(vals.mean())
    bound = (1.0 - eta) + tolerance
    return BoundCheckResult(
        passed=mean <= bound,
        bound=bound,
        mean_nmse=mean,
        margin=bound - mean,
        n_samples=int(vals.size),
    )


@dataclass(frozen=True)
class ComplexityRow:
    scheme: str
    model_cost: float
    evd_events: int
    pencil_fits: int
    gram_flops: int
    pseudoinverse_events: int


@dataclass(frozen=True)
class ComplexityReport:
    rows: tuple[ComplexityRow, ...]
    full_time_model: float
    wcm_model: float
    cgm_model: float
    full_over_wcm_ratio: float
    wcm_beneficial: bool
    cgm_cheaper_than_wcm: bool

    def row(self, scheme: str) -> ComplexityRow:
        for r in self.rows:
            if r.scheme == scheme:
                return r
        raise KeyError(scheme)


def complexity_report(ledgers: dict[str, CostLedger], *, grid_size: int,
                      n_ue_antennas: int, n_evd: int, t_evd: int,
                      m_dopplers: int, max_intersection: int,
                      kappa: float) -> ComplexityReport:
    """Closed-form cost model beside measured event counts.

    Unit model: full-time = N_evd T_evd (N_f N_t)^3; the wideband
    prediction scheme = (N_evd + 2) (N_f N_t)^3; the Gram prediction
    scheme = N_evd N_r^5 |G|_max^2 M^2 + 2 (N_f N_t)^3. The benefit
    flags evaluate N_evd T_evd - N_evd - 2 > 0 and
    N_f N_t - kappa^2 N_r^5 > 0.
    """
    big = float(grid_size) ** 3
    full_model = n_evd * t_evd * big
    wcm_model = (n_evd + 2) * big
    cgm_model = (n_evd * float(n_ue_antennas) ** 5
                 * float(max_intersection) ** 2 * m_dopplers ** 2
                 + 2 * big)
    model_for = {
        "full_evd": full_model,
        "upper_bound": full_model,
        "egvp_wcm": wcm_model,
        "egvp_cgm": cgm_model,
        "lazy_evd": n_evd * big,
        "wiener": n_evd * big,
    }
    rows = tuple(
        ComplexityRow(
            scheme=name,
            model_cost=model_for.get(name, float("nan")),
            evd_events=led.total_evd_events(),
            pencil_fits=led.pencil_fits,
            gram_flops=led.gram_flops,
            pseudoinverse_events=led.pseudoinverse_events,
        )
        for name, led in sorted(ledgers.items())
    )
    return ComplexityReport(
        rows=rows,
        full_time_model=full_model,
        wcm_model=wcm_model,
        cgm_model=cgm_model,
        full_over_wcm_ratio=full_model / wcm_model,
        wcm_beneficial=(n_evd * t_evd - n_evd - 2) > 0,
        cgm_cheaper_than_wcm=(grid_size - kappa ** 2
                              * float(n_ue_antennas) ** 5) > 0,
    )
