"""Ground-truth time-varying UL/DL wideband channel generation.

A drop is parameterized by a multipath set shared between uplink and
downlink (same gains, delays and angles; Doppler scaled by the carrier
frequency ratio). Channels are stacked frequency-major: the coefficient
vector of one UE antenna is kron(delay_vector, steering_vector), so the
entry for subcarrier ``n`` and transmit element ``s`` sits at index
``n * n_elements + s``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact
SUBFRAME_SECONDS = 1e-3


class ConfigurationError(ValueError):
    """Raised for invalid scenario or generator parameters."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array at the base station.

    ``element_spacing`` is in carrier wavelengths, so UL and DL steering
    vectors coincide and grid beams do not squint across bands.
    """

    n_vertical: int
    n_horizontal: int
    n_polarizations: int = 1
    element_spacing: float = 0.5

    def __post_init__(self):
        if self.n_vertical < 1 or self.n_horizontal < 1:
            raise ConfigurationError("array dimensions must be positive")
        if self.n_polarizations not in (1, 2):
            raise ConfigurationError("n_polarizations must be 1 or 2")
        if self.element_spacing <= 0:
            raise ConfigurationError("element_spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_vertical * self.n_horizontal * self.n_polarizations


@dataclass(frozen=True)
class BandConfig:
    """One carrier: center frequency, subcarrier grid and base frequency."""

    name: str
    center_frequency_hz: float
    n_subcarriers: int
    subcarrier_spacing_hz: float
    base_frequency_hz: float | None = None

    def __post_init__(self):
        if self.center_frequency_hz <= 0 or self.subcarrier_spacing_hz <= 0:
            raise ConfigurationError("band frequencies must be positive")
        if self.n_subcarriers < 1:
            raise ConfigurationError("n_subcarriers must be positive")
        if self.base_frequency_hz is None:
            object.__setattr__(self, "base_frequency_hz", self.center_frequency_hz)


@dataclass(frozen=True)
class PathParameter:
    """One propagation path as seen by one UE antenna."""

    amplitude: complex
    delay: float           # seconds
    zenith: float          # radians
    azimuth: float         # radians
    doppler_direction: float  # radians between UE velocity and path

    def doppler_rads(self, ue_speed: float, carrier_hz: float) -> float:
        """Doppler angular frequency in rad/s for the given carrier."""
        return (
            2.0 * np.pi * ue_speed * np.cos(self.doppler_direction)
            * carrier_hz / SPEED_OF_LIGHT
        )


@dataclass(frozen=True)
class PathSet:
    """Multipath parameterization for one UE (all its antennas).

    Delays, angles and Doppler directions are shared across the UE
    antennas (co-located elements see the same geometry); only the
    complex amplitudes differ per antenna. UL and DL reuse this object
    unchanged, which makes the reciprocity of gains/delays/angles exact
    by construction.
    """

    amplitudes: np.ndarray          # (n_antennas, n_paths) complex
    delays: np.ndarray              # (n_paths,) seconds
    zeniths: np.ndarray             # (n_paths,) radians
    azimuths: np.ndarray            # (n_paths,) radians
    doppler_directions: np.ndarray  # (n_paths,) radians
    ue_speed: float                 # m/s

    @property
    def n_antennas(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_paths(self) -> int:
        return self.amplitudes.shape[1]

    def antenna_paths(self, antenna: int) -> list[PathParameter]:
        """Materialize the per-path view for one UE antenna."""
        return [
            PathParameter(
                amplitude=complex(self.amplitudes[antenna, p]),
                delay=float(self.delays[p]),
                zenith=float(self.zeniths[p]),
                azimuth=float(self.azimuths[p]),
                doppler_direction=float(self.doppler_directions[p]),
            )
            for p in range(self.n_paths)
        ]

    def doppler_rads(self, carrier_hz: float) -> np.ndarray:
        """Per-path Doppler angular frequencies (rad/s) for a carrier."""
        return (
            2.0 * np.pi * self.ue_speed * np.cos(self.doppler_directions)
            * carrier_hz / SPEED_OF_LIGHT
        )

    def scaled(self, factor: complex) -> "PathSet":
        return replace(self, amplitudes=self.amplitudes * factor)


@dataclass(frozen=True)
class ChannelSnapshot:
    """Stacked wideband channel of one UE at one subframe.

    ``coefficients`` has shape (n_subcarriers * n_elements, n_antennas);
    column r is the stacked channel vector of UE antenna r.
    """

    coefficients: np.ndarray
    subframe: int
    band: str

    @property
    def n_antennas(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario block: geometry, bands and the synthetic path generator.

    The generator draws delays from an exponential profile with the
    configured RMS spread, angles from wrapped Gaussians around a nominal
    direction, and i.i.d. complex Gaussian amplitudes normalized so the
    expected total path power per antenna is one. ``on_grid`` snaps
    delays and angles to the DFT grid (exactly sparse beamspace support,
    one Doppler per occupied index), and ``common_doppler`` gives every
    path the same velocity projection; both exist to enable
    machine-precision end-to-end checks.
    """

    geometry: ArrayGeometry
    ul_band: BandConfig
    dl_band: BandConfig
    n_ue: int = 4
    n_ue_antennas: int = 2
    n_paths: int = 8
    delay_spread_s: float = 300e-9
    zenith_spread_rad: float = 0.25
    azimuth_spread_rad: float = 0.45
    nominal_zenith_rad: float = np.pi / 2
    nominal_azimuth_rad: float = 0.0
    ue_speed_kmh: float = 120.0
    path_power_decay_db: float = 12.0
    on_grid: bool = False
    common_doppler: bool = False
    sampling_noise_db: float | None = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be >= 1")
        if self.n_ue < 1 or self.n_ue_antennas < 1:
            raise ConfigurationError("UE counts must be >= 1")
        if not self.on_grid:
            if self.n_paths > 1 and self.delay_spread_s <= 0:
                raise ConfigurationError("delay_spread_s must be positive")
            if self.delay_spread_s < 0:
                raise ConfigurationError("delay_spread_s must be nonnegative")
            if self.zenith_spread_rad < 0 or self.azimuth_spread_rad < 0:
                raise ConfigurationError("angle spreads must be nonnegative")
        if self.ul_band.n_subcarriers != self.dl_band.n_subcarriers:
            raise ConfigurationError("UL and DL must share the subcarrier count")
        max_delay_bound = 1.0 / self.ul_band.subcarrier_spacing_hz
        if self.delay_spread_s > 0.25 * max_delay_bound:
            raise ConfigurationError(
                "delay spread too large for the unambiguous delay range"
            )

    @property
    def ue_speed_mps(self) -> float:
        return self.ue_speed_kmh / 3.6

    def band(self, name: str) -> BandConfig:
        if name == "ul":
            return self.ul_band
        if name == "dl":
            return self.dl_band
        raise ConfigurationError(f"unknown band {name!r}")


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap to the principal range (-pi, pi]."""
    wrapped = np.mod(x + np.pi, 2 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def _on_grid_directions(rng: np.random.Generator, geometry: ArrayGeometry,
                        n_subcarriers: int, spacing_hz: float, n_paths: int):
    """Draw distinct (delay, zenith, azimuth) triples on the DFT grid.

    A vertical beam index k maps to cos(zenith) = wrap(2k/n_v) in [-1, 1]
    for the half-wavelength grid; the horizontal beam must satisfy
    |sin(zenith) sin(azimuth)| <= sin(zenith).
    """
    n_v, n_h, n_f = geometry.n_vertical, geometry.n_horizontal, n_subcarriers
    if geometry.element_spacing != 0.5:
        raise ConfigurationError("on-grid mode requires half-wavelength spacing")

    cells = []
    for k_v in range(n_v):
        u_v = 2.0 * k_v / n_v
        u_v = u_v - 2.0 if u_v > 1.0 else u_v
        sin_zen = np.sqrt(max(0.0, 1.0 - u_v * u_v))
        for k_h in range(n_h):
            u_h = 2.0 * k_h / n_h
            u_h = u_h - 2.0 if u_h > 1.0 else u_h
            if abs(u_h) > sin_zen + 1e-15:
                continue
            for k_t in range(n_f):
                cells.append((k_t, u_v, u_h, sin_zen))
    if n_paths > len(cells):
        raise ConfigurationError(
            f"on-grid mode supports at most {len(cells)} paths for this grid"
        )
    chosen = rng.choice(len(cells), size=n_paths, replace=False)
    delays = np.empty(n_paths)
    zeniths = np.empty(n_paths)
    azimuths = np.empty(n_paths)
    for i, c in enumerate(chosen):
        k_t, u_v, u_h, sin_zen = cells[c]
        delays[i] = k_t / (n_f * spacing_hz)
        zeniths[i] = np.arccos(u_v)
        azimuths[i] = 0.0 if sin_zen < 1e-12 else np.arcsin(u_h / sin_zen)
    return delays, zeniths, azimuths


def generate_paths(scenario: ScenarioConfig, seed: int) -> PathSet:
    """Draw one UE's multipath set deterministically from (config, seed)."""
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    p = scenario.n_paths
    n_r = scenario.n_ue_antennas

    if scenario.on_grid:
        delays, zeniths, azimuths = _on_grid_directions(
            rng, scenario.geometry, scenario.ul_band.n_subcarriers,
            scenario.ul_band.subcarrier_spacing_hz, p,
        )
    else:
        if scenario.delay_spread_s > 0:
            delays = rng.exponential(scale=scenario.delay_spread_s, size=p)
            # extreme tail draws would wrap on the delay grid; redraw them
            delay_cap = 0.5 / scenario.ul_band.subcarrier_spacing_hz
            while np.any(delays > delay_cap):
                bad = delays > delay_cap
                delays[bad] = rng.exponential(scale=scenario.delay_spread_s,
                                              size=int(bad.sum()))
        else:
            delays = np.zeros(p)
        zeniths = scenario.nominal_zenith_rad + \
            scenario.zenith_spread_rad * rng.standard_normal(p)
        azimuths = scenario.nominal_azimuth_rad + \
            scenario.azimuth_spread_rad * rng.standard_normal(p)
        # keep zenith in [0, pi] by reflecting, azimuth wrapped
        zeniths = np.abs(_wrap_angle(zeniths))
        azimuths = _wrap_angle(azimuths)

    # Doppler direction follows the path geometry: the angle between the
    # UE velocity (horizontal, random heading per drop) and the path
    # direction. Paths sharing an angle cell therefore share a Doppler,
    # which is what makes per-index Doppler fitting well posed.
    heading = rng.uniform(-np.pi, np.pi)
    if scenario.common_doppler:
        doppler_dirs = np.full(p, heading)
    else:
        projection = np.clip(np.sin(zeniths) * np.cos(azimuths - heading),
                             -1.0, 1.0)
        doppler_dirs = np.arccos(projection)

    # complex Gaussian amplitudes on an exponentially decaying power
    # profile (strongest path first), normalized so the expected total
    # power per antenna is 1
    profile = 10.0 ** (-scenario.path_power_decay_db / 10.0
                       * np.arange(p) / max(p - 1, 1))
    profile /= profile.sum()
    amps = (rng.standard_normal((n_r, p)) + 1j * rng.standard_normal((n_r, p)))
    amps *= np.sqrt(profile / 2.0)

    max_delay = 1.0 / scenario.ul_band.subcarrier_spacing_hz
    if np.any(delays >= max_delay):
        raise ConfigurationError("generated delay exceeds the unambiguous range")

    return PathSet(
        amplitudes=amps,
        delays=delays,
        zeniths=zeniths,
        azimuths=azimuths,
        doppler_directions=doppler_dirs,
        ue_speed=scenario.ue_speed_mps,
    )


def steering_vector(zenith: float, azimuth: float,
                    geometry: ArrayGeometry) -> np.ndarray:
    """UPA steering vector, kron(vertical, horizontal) per polarization.

    Entry phases follow exp(j 2 pi spacing * (m sin(zenith) sin(azimuth)
    + n cos(zenith))); polarization blocks are identical (independent
    ports, no cross-pol coupling). Broadside (zenith=pi/2, azimuth=0)
    gives the all-ones vector.
    """
    d = geometry.element_spacing
    u_v = np.cos(zenith)
    u_h = np.sin(zenith) * np.sin(azimuth)
    a_v = np.exp(2j * np.pi * d * u_v * np.arange(geometry.n_vertical))
    a_h = np.exp(2j * np.pi * d * u_h * np.arange(geometry.n_horizontal))
    per_pol = np.kron(a_v, a_h)
    if geometry.n_polarizations == 1:
        return per_pol
    return np.tile(per_pol, geometry.n_polarizations)


def delay_vector(delay: float, band: BandConfig) -> np.ndarray:
    """Frequency-domain delay signature across the subcarrier grid.

    Entry n is exp(j 2 pi delay f0) * exp(j 2 pi delay n df).
    """
    if delay < 0:
        raise ConfigurationError("delay must be nonnegative")
    n = np.arange(band.n_subcarriers)
    base = np.exp(2j * np.pi * delay * band.base_frequency_hz)
    return base * np.exp(2j * np.pi * delay * n * band.subcarrier_spacing_hz)


def path_signature(zenith: float, azimuth: float, delay: float,
                   geometry: ArrayGeometry, band: BandConfig) -> np.ndarray:
    """Stacked angle-delay signature kron(delay_vector, steering_vector)."""
    return np.kron(delay_vector(delay, band),
                   steering_vector(zenith, azimuth, geometry))


def channel_at(paths: PathSet, geometry: ArrayGeometry, band: BandConfig,
               subframe: int) -> ChannelSnapshot:
    """Wideband channel of all UE antennas at one subframe.

    Column r sums beta_{p,r} * exp(j omega_p t dt) * signature_p, with the
    per-band Doppler omega_p = 2 pi v cos(phi_p) f_band / c.
    """
    n_big = band.n_subcarriers * geometry.n_elements
    sig = np.empty((n_big, paths.n_paths), dtype=np.complex128)
    for p in range(paths.n_paths):
        sig[:, p] = path_signature(
            paths.zeniths[p], paths.azimuths[p], paths.delays[p],
            geometry, band,
        )
    omega = paths.doppler_rads(band.center_frequency_hz)
    rotation = np.exp(1j * omega * subframe * SUBFRAME_SECONDS)
    coeffs = sig @ (paths.amplitudes * rotation).T
    return ChannelSnapshot(coefficients=coeffs, subframe=subframe,
                           band=band.name)


def add_sampling_noise(snapshot: ChannelSnapshot, rho_db: float | None,
                       seed: int) -> ChannelSnapshot:
    """Additive circularly-symmetric Gaussian noise at power ratio rho.

    Per-entry noise variance is mean(|entry|^2) / 10^(rho/10); rho_db of
    None (or +inf) means noise-free and returns the input unchanged.
    """
    if rho_db is None or np.isinf(rho_db):
        return snapshot
    if not np.isfinite(rho_db):
        raise ConfigurationError("rho_db must be finite or None")
    h = snapshot.coefficients
    signal_power = float(np.mean(np.abs(h) ** 2))
    noise_var = signal_power / (10.0 ** (rho_db / 10.0))
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    noise *= np.sqrt(noise_var / 2.0)
    return ChannelSnapshot(coefficients=h + noise, subframe=snapshot.subframe,
                           band=snapshot.band)
