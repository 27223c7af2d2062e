"""Monte-Carlo experiment orchestration and result persistence.

One drop generates ground truth for every UE, runs the CSI pipeline
once, and hands identical inputs to every configured scheme, so
per-drop comparisons are paired. Sweeps re-run the drop loop per value
with seeds derived from (sweep index, drop index); rows are emitted in
deterministic (sweep, drop, scheme, subframe) order and every row
carries the configuration hash.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from .angle_delay import GridLayout, select_indices, to_angle_delay
from .channel import ScenarioConfig, add_sampling_noise, channel_at, generate_paths
from .config import (
    RunConfig,
    SCHEMA_VERSION,
    config_hash,
    config_to_data,
    derive_seed,
)
from .csi import (
    compress_feedback,
    estimate_ul_doppler,
    map_reciprocity,
    predict_dl_channel,
)
from .eigen import SamplingSchedule
from .schemes import DropData, SchemeResult, run_scheme

CSV_COLUMNS = (
    "sweep_variable", "sweep_value", "scheme", "drop", "subframe",
    "se_bits_per_hz", "pe", "kappa", "evd_events", "pencil_fits",
    "gram_flops", "pseudoinverse_events", "flags", "config_hash",
)


@dataclass(frozen=True)
class ResultRow:
    sweep_value: str
    scheme: str
    drop: int
    subframe: int
    se: float
    pe: float
    kappa: float
    evd_events: int
    pencil_fits: int
    gram_flops: int
    pseudoinverse_events: int
    flags: str


@dataclass(frozen=True)
class ResultTable:
    rows: tuple
    sweep_variable: str
    config_hash: str
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.rows)


def _format_sweep_value(value) -> str:
    if value is None:
        return "inf"
    if float(value) == int(value):
        return str(int(value))
    return repr(float(value))


def _apply_sweep_value(cfg: RunConfig, variable: str, value) -> RunConfig:
    if variable == "ue_speed_kmh":
        scenario = dc_replace(cfg.scenario, ue_speed_kmh=float(value))
        return dc_replace(cfg, scenario=scenario)
    if variable == "sampling_noise_db":
        scenario = dc_replace(
            cfg.scenario,
            sampling_noise_db=None if value is None else float(value))
        return dc_replace(cfg, scenario=scenario)
    if variable == "t_evd":
        params = dc_replace(cfg.scheme_params, t_evd=int(value))
        return dc_replace(cfg, scheme_params=params)
    if variable == "eta":
        estimator = dc_replace(cfg.estimator, eta=float(value))
        return dc_replace(cfg, estimator=estimator)
    raise ValueError(f"unsupported sweep variable {variable!r}")


def acquire_csi(scenario: ScenarioConfig, estimator, drop_seed: int):
    """Ground truth plus the CSI pipeline for every UE of one drop.

    Returns (paths per UE, DL channel models per UE, feedback subframe).
    Sampling noise, when configured, corrupts every measured snapshot:
    the UL estimation window and the DL feedback observation.
    """
    layout = GridLayout.of(scenario.geometry, scenario.ul_band)
    n_l = estimator.n_ul_samples
    t_fb = n_l - 1
    all_paths = []
    models = []
    for k in range(scenario.n_ue):
        paths = generate_paths(scenario, derive_seed(drop_seed, k, 0))
        all_paths.append(paths)
        history = np.empty((n_l, scenario.n_ue_antennas, layout.size),
                           dtype=np.complex128)
        for t in range(n_l):
            snap = channel_at(paths, scenario.geometry, scenario.ul_band, t)
            snap = add_sampling_noise(snap, scenario.sampling_noise_db,
                                      derive_seed(drop_seed, k, 1, t))
            history[t] = to_angle_delay(snap.coefficients.T, layout)
        antennas = []
        for r in range(scenario.n_ue_antennas):
            support = select_indices(history[:, r, :], estimator.eta,
                                     estimator.support_cap)
            ul_models = estimate_ul_doppler(history[:, r, :], support,
                                            estimator.dopplers_per_index)
            antennas.append(map_reciprocity(
                ul_models, support,
                scenario.ul_band.center_frequency_hz,
                scenario.dl_band.center_frequency_hz))
        observed = channel_at(paths, scenario.geometry, scenario.dl_band, t_fb)
        observed = add_sampling_noise(observed, scenario.sampling_noise_db,
                                      derive_seed(drop_seed, k, 2))
        models.append(compress_feedback(
            observed, antennas, layout,
            feedback_noise_db=estimator.feedback_noise_db,
            seed=derive_seed(drop_seed, k, 3)))
    return all_paths, models, t_fb


def prepare_drop(cfg: RunConfig, drop_seed: int) -> DropData:
    """Build the paired per-drop inputs shared by every scheme."""
    scenario = cfg.scenario
    all_paths, models, t_fb = acquire_csi(scenario, cfg.estimator, drop_seed)
    schedule = SamplingSchedule(
        t_in=t_fb + cfg.estimator.csi_delay,
        cycle=cfg.scheme_params.t_evd,
        n_samples=cfg.scheme_params.n_evd,
    )
    window = schedule.window
    est = []
    true = []
    grid = GridLayout.of(scenario.geometry, scenario.dl_band).size
    eigvecs = np.empty((window.size, scenario.n_ue, grid), dtype=np.complex128)
    for k in range(scenario.n_ue):
        est_k = []
        true_k = []
        for i, t in enumerate(window):
            est_k.append(predict_dl_channel(models[k], int(t)))
            snap = channel_at(all_paths[k], scenario.geometry,
                              scenario.dl_band, int(t))
            true_k.append(snap)
            u, _, _ = np.linalg.svd(snap.coefficients, full_matrices=False)
            eigvecs[i, k] = u[:, 0]
        est.append(tuple(est_k))
        true.append(tuple(true_k))
    return DropData(
        schedule=schedule,
        est=tuple(est),
        true=tuple(true),
        true_eigvecs=eigvecs,
        dl_models=tuple(models),
        noise_power=cfg.metrics.noise_power,
    )


def _rows_for(result: SchemeResult, sweep_repr: str, drop: int,
              kappa: float) -> list[ResultRow]:
    led = result.ledger
    rows = []
    for i, t in enumerate(result.subframes):
        rows.append(ResultRow(
            sweep_value=sweep_repr,
            scheme=result.scheme,
            drop=drop,
            subframe=int(t),
            se=float(result.se[i]),
            pe=float(result.pe[i]),
            kappa=kappa,
            evd_events=led.total_evd_events(),
            pencil_fits=led.pencil_fits,
            gram_flops=led.gram_flops,
            pseudoinverse_events=led.pseudoinverse_events,
            flags=";".join(result.flags[i]),
        ))
    return rows


def run_experiment(cfg: RunConfig, progress=None) -> ResultTable:
    """Execute the configured drops (and sweep, if any) into a table.

    A failing drop is recorded as a flagged row and the run continues.
    """
    chash = config_hash(cfg)
    if cfg.sweep is None:
        points = [(None, cfg)]
        sweep_variable = ""
    else:
        points = [(value, _apply_sweep_value(cfg, cfg.sweep.variable, value))
                  for value in cfg.sweep.values]
        sweep_variable = cfg.sweep.variable

    rows: list[ResultRow] = []
    for sweep_idx, (value, point_cfg) in enumerate(points):
        sweep_repr = _format_sweep_value(value) if cfg.sweep else ""
        for drop in range(cfg.n_drops):
            drop_seed = derive_seed(cfg.master_seed, sweep_idx, drop)
            try:
                data = prepare_drop(point_cfg, drop_seed)
                kappa = float(np.mean([m.kappa for m in data.dl_models]))
                for scheme in point_cfg.schemes:
                    result = run_scheme(
                        scheme, data,
                        order=point_cfg.scheme_params.order,
                        wiener_order=point_cfg.scheme_params.wiener_order)
                    rows.extend(_rows_for(result, sweep_repr, drop, kappa))
            except Exception as exc:  # noqa: BLE001 - recorded, run continues
                rows.append(ResultRow(
                    sweep_value=sweep_repr, scheme="", drop=drop, subframe=-1,
                    se=float("nan"), pe=float("nan"), kappa=float("nan"),
                    evd_events=0, pencil_fits=0, gram_flops=0,
                    pseudoinverse_events=0,
                    flags=f"drop_failed:{type(exc).__name__}",
                ))
            if progress is not None:
                progress(sweep_idx, len(points), drop, cfg.n_drops)
    return ResultTable(rows=tuple(rows), sweep_variable=sweep_variable,
                       config_hash=chash)


FIGURE_VARIABLES = {
    "speed": "ue_speed_kmh",
    "cycle": "t_evd",
    "noise": "sampling_noise_db",
}


@dataclass(frozen=True)
class AggregateRow:
    sweep_value: str
    scheme: str
    n_drops: int
    mean_se: float
    sem_se: float
    mean_pe: float
    sem_pe: float


def sweep_figures(table: ResultTable, figure: str) -> tuple[AggregateRow, ...]:
    """Plot-ready mean and standard error per (sweep value, scheme).

    Aggregation unit is the drop: per-drop metrics first average over
    subframes, then mean and standard error are taken over drops.
    Rows keep the sweep-value order of the underlying table.
    """
    if figure not in FIGURE_VARIABLES:
        raise ValueError(f"unknown figure {figure!r}")
    variable = FIGURE_VARIABLES[figure]
    if table.sweep_variable and table.sweep_variable != variable:
        raise ValueError(
            f"table sweeps {table.sweep_variable!r}, figure needs {variable!r}")

    groups: dict[tuple[str, str], dict[int, list]] = {}
    order: list[tuple[str, str]] = []
    for row in table.rows:
        if not row.scheme:
            continue
        key = (row.sweep_value, row.scheme)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        groups[key].setdefault(row.drop, []).append((row.se, row.pe))

    out = []
    for key in order:
        per_drop = groups[key]
        se_means = np.array([np.mean([v[0] for v in vals])
                             for vals in per_drop.values()])
        pe_means = np.array([np.mean([v[1] for v in vals])
                             for vals in per_drop.values()])
        n = se_means.size
        sem = 1.0 / np.sqrt(n) if n > 1 else 0.0
        out.append(AggregateRow(
            sweep_value=key[0], scheme=key[1], n_drops=n,
            mean_se=float(se_means.mean()),
            sem_se=float(se_means.std(ddof=1) * sem) if n > 1 else 0.0,
            mean_pe=float(pe_means.mean()),
            sem_pe=float(pe_means.std(ddof=1) * sem) if n > 1 else 0.0,
        ))
    return tuple(out)


def _csv_text(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        writer.writerow((
            table.sweep_variable, row.sweep_value, row.scheme, row.drop,
            row.subframe, f"{row.se:.12g}", f"{row.pe:.12g}",
            f"{row.kappa:.12g}", row.evd_events, row.pencil_fits,
            row.gram_flops, row.pseudoinverse_events, row.flags,
            table.config_hash,
        ))
    return buf.getvalue()


def _json_data(table: ResultTable, cfg: RunConfig | None) -> dict:
    return {
        "schema_version": table.schema_version,
        "config_hash": table.config_hash,
        "sweep_variable": table.sweep_variable,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": None if cfg is None else config_to_data(cfg),
        "rows": [
            {
                "sweep_value": row.sweep_value,
                "scheme": row.scheme,
                "drop": row.drop,
                "subframe": row.subframe,
                "se_bits_per_hz": row.se,
                "pe": row.pe,
                "kappa": row.kappa,
                "evd_events": row.evd_events,
                "pencil_fits": row.pencil_fits,
                "gram_flops": row.gram_flops,
                "pseudoinverse_events": row.pseudoinverse_events,
                "flags": row.flags,
            }
            for row in table.rows
        ],
    }


def emit_results(table: ResultTable, directory, formats=("csv",),
                 cfg: RunConfig | None = None,
                 aggregates: tuple[AggregateRow, ...] | None = None) -> list[Path]:
    """Write the result table (and optional aggregates) to disk."""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / "results.csv"
            path.write_text(_csv_text(table))
        elif fmt == "json":
            path = out_dir / "results.json"
            path.write_text(json.dumps(_json_data(table, cfg), indent=1))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(path)
    if aggregates is not None:
        path = out_dir / "aggregates.csv"
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("sweep_variable", "sweep_value", "scheme", "n_drops",
                         "mean_se", "sem_se", "mean_pe", "sem_pe",
                         "config_hash"))
        for agg in aggregates:
            writer.writerow((
                table.sweep_variable, agg.sweep_value, agg.scheme,
                agg.n_drops, f"{agg.mean_se:.12g}", f"{agg.sem_se:.12g}",
                f"{agg.mean_pe:.12g}", f"{agg.sem_pe:.12g}",
                table.config_hash,
            ))
        path.write_text(buf.getvalue())
        written.append(path)
    return written


def read_back_rows(path) -> list[dict]:
    """Parse an emitted CSV back into dictionaries (round-trip checks)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
