"""Run configuration: parsing, validation, defaults, seed derivation.

The run-config file is JSON with five blocks (scenario, estimator,
scheme_params, metrics, output) plus the scheme list, an optional sweep
and the Monte-Carlo controls. Every key has a default; unknown keys are
rejected with a path-qualified message so typos cannot silently fall
back to defaults.

Per-drop randomness derives from the master seed through a splitmix64
counter chain: seed_{k+1} = mix(seed_k + part_k + 1). The runner uses
(sweep index, drop index) and small purpose tags as parts, which makes
drops reproducible independently of execution order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

from .channel import ArrayGeometry, BandConfig, ConfigurationError, ScenarioConfig
from .csi import EstimatorConfig

SCHEMA_VERSION = 1

_ALLOWED_SCHEMES = ("egvp_wcm", "egvp_cgm", "full_evd", "lazy_evd", "wiener",
                    "upper_bound")
_SWEEPABLE = ("ue_speed_kmh", "t_evd", "sampling_noise_db", "eta")


class ConfigError(ValueError):
    """Configuration file error with a path-qualified message."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class SchemeParams:
    t_evd: int = 5
    n_evd: int = 7
    order: int = 3
    wiener_order: int = 2

    def __post_init__(self):
        if self.t_evd < 1 or self.n_evd < 1:
            raise ConfigError("scheme_params", "t_evd and n_evd must be >= 1")
        if self.n_evd < 2 * self.order:
            raise ConfigError(
                "scheme_params.n_evd",
                f"need at least 2 * order = {2 * self.order} samples",
            )
        if self.wiener_order < 1:
            raise ConfigError("scheme_params.wiener_order", "must be >= 1")


@dataclass(frozen=True)
class MetricsConfig:
    noise_power: float = 0.1

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ConfigError("metrics.noise_power", "must be positive")


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple

    def __post_init__(self):
        if self.variable not in _SWEEPABLE:
            raise ConfigError(
                "sweep.variable",
                f"must be one of {_SWEEPABLE}, got {self.variable!r}",
            )
        if len(self.values) == 0:
            raise ConfigError("sweep.values", "must be nonempty")


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "results"
    formats: tuple = ("csv",)

    def __post_init__(self):
        for fmt in self.formats:
            if fmt not in ("csv", "json"):
                raise ConfigError("output.formats",
                                  f"unknown format {fmt!r}")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    estimator: EstimatorConfig
    schemes: tuple
    scheme_params: SchemeParams
    metrics: MetricsConfig
    sweep: SweepSpec | None
    n_drops: int
    master_seed: int
    output: OutputSpec


# Desk-scale defaults. The geometry, grid and carriers are reduced from
# the reference configuration so that dense-eigensolver oracles over the
# 384-dimensional stacked grid run in seconds; the carrier pair keeps
# the UL/DL frequency ratio of the reference profile while leaving
# Nyquist margin for uplink Doppler sounding at the highest sweep speed.
# The delay spread is scaled with the coarser desk delay resolution so
# paths stay resolvable on the grid, as they are in the full profile.
_SCENARIO_DEFAULTS = {
    "n_vertical": 4,
    "n_horizontal": 4,
    "n_polarizations": 1,
    "element_spacing": 0.5,
    "n_subcarriers": 24,
    "subcarrier_spacing_hz": 30e3,
    "ul_center_frequency_hz": 0.96e9,
    "dl_center_frequency_hz": 1.055e9,
    "n_ue": 4,
    "n_ue_antennas": 2,
    "n_paths": 8,
    "delay_spread_s": 2.0e-6,
    "zenith_spread_rad": 0.4,
    "azimuth_spread_rad": 0.8,
    "nominal_zenith_rad": math.pi / 2,
    "nominal_azimuth_rad": 0.0,
    "ue_speed_kmh": 120.0,
    "path_power_decay_db": 12.0,
    "on_grid": False,
    "common_doppler": False,
    "sampling_noise_db": None,
}

_ESTIMATOR_DEFAULTS = {
    "eta": 0.95,
    "n_ul_samples": 14,
    "dopplers_per_index": 1,
    "csi_delay": 5,
    "feedback_noise_db": None,
    "support_cap": 48,
}

_SCHEME_PARAM_DEFAULTS = {"t_evd": 5, "n_evd": 7, "order": 3,
                          "wiener_order": 2}
_METRICS_DEFAULTS = {"noise_power": 0.1}
_OUTPUT_DEFAULTS = {"directory": "results", "formats": ["csv"]}
_DEFAULT_SCHEMES = ["egvp_wcm", "egvp_cgm", "full_evd", "lazy_evd", "wiener",
                    "upper_bound"]


def _expect_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _merged(block: dict, defaults: dict, path: str) -> dict:
    for key in block:
        if key not in defaults:
            raise ConfigError(f"{path}.{key}", "unknown key")
    out = dict(defaults)
    out.update(block)
    return out


def _typed(value, kinds, path: str, allow_none: bool = False):
    if value is None:
        if allow_none:
            return None
        raise ConfigError(path, "missing required key or null value")
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(path, "expected a number, got a boolean")
    if not isinstance(value, kinds):
        kind_names = getattr(kinds, "__name__", str(kinds))
        raise ConfigError(path, f"expected {kind_names}, got {type(value).__name__}")
    return value


def _scenario_from(block: dict) -> ScenarioConfig:
    merged = _merged(block, _SCENARIO_DEFAULTS, "scenario")
    geometry = ArrayGeometry(
        n_vertical=int(_typed(merged["n_vertical"], int, "scenario.n_vertical")),
        n_horizontal=int(_typed(merged["n_horizontal"], int, "scenario.n_horizontal")),
        n_polarizations=int(_typed(merged["n_polarizations"], int, "scenario.n_polarizations")),
        element_spacing=float(_typed(merged["element_spacing"], (int, float), "scenario.element_spacing")),
    )
    n_sc = int(_typed(merged["n_subcarriers"], int, "scenario.n_subcarriers"))
    spacing = float(_typed(merged["subcarrier_spacing_hz"], (int, float), "scenario.subcarrier_spacing_hz"))
    ul = BandConfig("ul", float(_typed(merged["ul_center_frequency_hz"], (int, float), "scenario.ul_center_frequency_hz")), n_sc, spacing)
    dl = BandConfig("dl", float(_typed(merged["dl_center_frequency_hz"], (int, float), "scenario.dl_center_frequency_hz")), n_sc, spacing)
    noise = merged["sampling_noise_db"]
    if noise is not None:
        noise = float(_typed(noise, (int, float), "scenario.sampling_noise_db"))
    try:
        return ScenarioConfig(
            geometry=geometry,
            ul_band=ul,
            dl_band=dl,
            n_ue=int(_typed(merged["n_ue"], int, "scenario.n_ue")),
            n_ue_antennas=int(_typed(merged["n_ue_antennas"], int, "scenario.n_ue_antennas")),
            n_paths=int(_typed(merged["n_paths"], int, "scenario.n_paths")),
            delay_spread_s=float(_typed(merged["delay_spread_s"], (int, float), "scenario.delay_spread_s")),
            zenith_spread_rad=float(_typed(merged["zenith_spread_rad"], (int, float), "scenario.zenith_spread_rad")),
            azimuth_spread_rad=float(_typed(merged["azimuth_spread_rad"], (int, float), "scenario.azimuth_spread_rad")),
            nominal_zenith_rad=float(_typed(merged["nominal_zenith_rad"], (int, float), "scenario.nominal_zenith_rad")),
            nominal_azimuth_rad=float(_typed(merged["nominal_azimuth_rad"], (int, float), "scenario.nominal_azimuth_rad")),
            ue_speed_kmh=float(_typed(merged["ue_speed_kmh"], (int, float), "scenario.ue_speed_kmh")),
            path_power_decay_db=float(_typed(merged["path_power_decay_db"], (int, float), "scenario.path_power_decay_db")),
            on_grid=bool(_typed(merged["on_grid"], bool, "scenario.on_grid")),
            common_doppler=bool(_typed(merged["common_doppler"], bool, "scenario.common_doppler")),
            sampling_noise_db=noise,
        )
    except ConfigurationError as exc:
        raise ConfigError("scenario", str(exc)) from exc


def _estimator_from(block: dict) -> EstimatorConfig:
    merged = _merged(block, _ESTIMATOR_DEFAULTS, "estimator")
    fb = merged["feedback_noise_db"]
    if fb is not None:
        fb = float(_typed(fb, (int, float), "estimator.feedback_noise_db"))
    cap = merged["support_cap"]
    if cap is not None:
        cap = int(_typed(cap, int, "estimator.support_cap"))
    try:
        return EstimatorConfig(
            eta=float(_typed(merged["eta"], (int, float), "estimator.eta")),
            n_ul_samples=int(_typed(merged["n_ul_samples"], int, "estimator.n_ul_samples")),
            dopplers_per_index=int(_typed(merged["dopplers_per_index"], int, "estimator.dopplers_per_index")),
            csi_delay=int(_typed(merged["csi_delay"], int, "estimator.csi_delay")),
            feedback_noise_db=fb,
            support_cap=cap,
        )
    except ConfigurationError as exc:
        raise ConfigError("estimator", str(exc)) from exc


def parse_config_data(data: dict) -> RunConfig:
    """Validate a decoded JSON object into a RunConfig."""
    top_keys = {"scenario", "estimator", "schemes", "scheme_params",
                "metrics", "sweep", "n_drops", "master_seed", "output"}
    data = _expect_mapping(data, "config")
    for key in data:
        if key not in top_keys:
            raise ConfigError(key, "unknown key")

    scenario = _scenario_from(_expect_mapping(data.get("scenario", {}), "scenario"))
    estimator = _estimator_from(_expect_mapping(data.get("estimator", {}), "estimator"))

    schemes_raw = data.get("schemes", list(_DEFAULT_SCHEMES))
    if not isinstance(schemes_raw, list):
        raise ConfigError("schemes", "expected a list")
    if len(schemes_raw) == 0:
        raise ConfigError("schemes", "scheme list must be nonempty")
    for s in schemes_raw:
        if s not in _ALLOWED_SCHEMES:
            raise ConfigError("schemes", f"unknown scheme {s!r}")
    if len(set(schemes_raw)) != len(schemes_raw):
        raise ConfigError("schemes", "duplicate scheme names")

    sp = _merged(_expect_mapping(data.get("scheme_params", {}), "scheme_params"),
                 _SCHEME_PARAM_DEFAULTS, "scheme_params")
    scheme_params = SchemeParams(
        t_evd=int(_typed(sp["t_evd"], int, "scheme_params.t_evd")),
        n_evd=int(_typed(sp["n_evd"], int, "scheme_params.n_evd")),
        order=int(_typed(sp["order"], int, "scheme_params.order")),
        wiener_order=int(_typed(sp["wiener_order"], int, "scheme_params.wiener_order")),
    )

    mx = _merged(_expect_mapping(data.get("metrics", {}), "metrics"),
                 _METRICS_DEFAULTS, "metrics")
    metrics = MetricsConfig(noise_power=float(
        _typed(mx["noise_power"], (int, float), "metrics.noise_power")))

    sweep = None
    if data.get("sweep") is not None:
        sweep_block = _expect_mapping(data["sweep"], "sweep")
        for key in sweep_block:
            if key not in ("variable", "values"):
                raise ConfigError(f"sweep.{key}", "unknown key")
        if "variable" not in sweep_block:
            raise ConfigError("sweep.variable", "missing required key")
        if "values" not in sweep_block:
            raise ConfigError("sweep.values", "missing required key")
        variable = _typed(sweep_block["variable"], str, "sweep.variable")
        values_raw = sweep_block["values"]
        if not isinstance(values_raw, list):
            raise ConfigError("sweep.values", "expected a list")
        values = []
        for i, v in enumerate(values_raw):
            if v is None:
                if variable != "sampling_noise_db":
                    raise ConfigError(f"sweep.values[{i}]",
                                      "null only valid for sampling_noise_db")
                values.append(None)
            else:
                values.append(float(_typed(v, (int, float), f"sweep.values[{i}]")))
        sweep = SweepSpec(variable=variable, values=tuple(values))

    n_drops = int(_typed(data.get("n_drops", 4), int, "n_drops"))
    if n_drops < 1:
        raise ConfigError("n_drops", "must be >= 1")
    master_seed = int(_typed(data.get("master_seed", 20240501), int, "master_seed"))

    out = _merged(_expect_mapping(data.get("output", {}), "output"), _OUTPUT_DEFAULTS, "output")
    formats = out["formats"]
    if not isinstance(formats, list) or not formats:
        raise ConfigError("output.formats", "expected a nonempty list")
    output = OutputSpec(directory=str(_typed(out["directory"], str, "output.directory")),
                        formats=tuple(formats))

    return RunConfig(
        scenario=scenario,
        estimator=estimator,
        schemes=tuple(schemes_raw),
        scheme_params=scheme_params,
        metrics=metrics,
        sweep=sweep,
        n_drops=n_drops,
        master_seed=master_seed,
        output=output,
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run-config document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return parse_config_data(data)


def config_to_data(cfg: RunConfig) -> dict:
    """Fully explicit JSON-compatible representation (round-trips)."""
    sc = cfg.scenario
    return {
        "scenario": {
            "n_vertical": sc.geometry.n_vertical,
            "n_horizontal": sc.geometry.n_horizontal,
            "n_polarizations": sc.geometry.n_polarizations,
            "element_spacing": sc.geometry.element_spacing,
            "n_subcarriers": sc.ul_band.n_subcarriers,
            "subcarrier_spacing_hz": sc.ul_band.subcarrier_spacing_hz,
            "ul_center_frequency_hz": sc.ul_band.center_frequency_hz,
            "dl_center_frequency_hz": sc.dl_band.center_frequency_hz,
            "n_ue": sc.n_ue,
            "n_ue_antennas": sc.n_ue_antennas,
            "n_paths": sc.n_paths,
            "delay_spread_s": sc.delay_spread_s,
            "zenith_spread_rad": sc.zenith_spread_rad,
            "azimuth_spread_rad": sc.azimuth_spread_rad,
            "nominal_zenith_rad": sc.nominal_zenith_rad,
            "nominal_azimuth_rad": sc.nominal_azimuth_rad,
            "ue_speed_kmh": sc.ue_speed_kmh,
            "path_power_decay_db": sc.path_power_decay_db,
            "on_grid": sc.on_grid,
            "common_doppler": sc.common_doppler,
            "sampling_noise_db": sc.sampling_noise_db,
        },
        "estimator": {
            "eta": cfg.estimator.eta,
            "n_ul_samples": cfg.estimator.n_ul_samples,
            "dopplers_per_index": cfg.estimator.dopplers_per_index,
            "csi_delay": cfg.estimator.csi_delay,
            "feedback_noise_db": cfg.estimator.feedback_noise_db,
            "support_cap": cfg.estimator.support_cap,
        },
        "schemes": list(cfg.schemes),
        "scheme_params": {
            "t_evd": cfg.scheme_params.t_evd,
            "n_evd": cfg.scheme_params.n_evd,
            "order": cfg.scheme_params.order,
            "wiener_order": cfg.scheme_params.wiener_order,
        },
        "metrics": {"noise_power": cfg.metrics.noise_power},
        "sweep": None if cfg.sweep is None else {
            "variable": cfg.sweep.variable,
            "values": list(cfg.sweep.values),
        },
        "n_drops": cfg.n_drops,
        "master_seed": cfg.master_seed,
        "output": {
            "directory": cfg.output.directory,
            "formats": list(cfg.output.formats),
        },
    }


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_data(cfg), indent=2, sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(config_to_data(cfg), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *parts: int) -> int:
    """Counter-based seed chain: mix in each part in order."""
    state = _splitmix64(master_seed & _MASK64)
    for part in parts:
        state = _splitmix64((state + int(part) + 1) & _MASK64)
    return state
