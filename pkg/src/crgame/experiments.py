"""Sweeps over scenario parameters and the figure presets.

Everything here is a pure function of (scenario document, seeds): the same
inputs always give byte-identical CSV files.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import channel as ch
from . import game as gm
from . import learning
from . import metrics
from . import oracle
from .units import DEFAULT_SCENARIO, ScenarioError, config_from_dict, default_scenario

log = logging.getLogger(__name__)

PARAMETER_ALIASES = {
    "lambda0": "pricing.lambda0",
    "i_max": "pu.i_max_dbm",
    "i_max_dbm": "pu.i_max_dbm",
    "users": "network.users",
    "K": "network.users",
    "gamma": "schedule",
}

CERTIFY_LEVELS = ("none", "gap", "full", "auto")

ROW_COLUMNS = [
    "replication", "seed", "status", "error", "mode", "termination", "converged_at",
    "iterations_run", "final_residual", "br_gap_max", "psi_mean", "psi_max",
    "psi_max_after_convergence", "su_rate_nats", "su_rate_bits", "pu_rate_nats", "revenue",
    "total_power", "congestion", "potential", "eql", "eql_sampled", "iterations_to_target",
]
BASELINE_COLUMNS = ["uniform_su_rate_bits", "uniform_pu_rate_nats", "uniform_revenue",
                    "revenue_ratio"]


# ---------------------------------------------------------------------------
# sweep specification


def _set_path(doc: dict, path: str, value) -> None:
    section, _, key = path.partition(".")
    if not key:
        raise ScenarioError(path, "parameter paths look like 'section.key'")
    doc.setdefault(section, {})[key] = value


def _schedule_with_gamma(schedule: dict, gamma: float) -> dict:
    out = dict(schedule)
    kind = out.get("kind", "power_law")
    key = {"constant": "gamma", "power_law": "gamma0", "stc": "gamma_explore"}.get(kind)
    if key is None:
        raise ScenarioError("schedule.kind", f"unknown step schedule {kind!r}")
    out[key] = float(gamma)
    return out


@dataclass
class SweepSpec:
    """One swept scenario parameter, a value grid and a number of replications.

    ``parameter`` is ``lambda0``, ``i_max`` (dBm), ``users`` or ``gamma`` (the
    main step of the schedule), or any ``section.key`` path into the scenario.
    Replication ``r`` uses ``seeds[r]``; by default the seeds are
    ``run.seed + r`` of the base scenario.
    """

    parameter: str
    values: list
    replications: int = 1
    seeds: list | None = None
    base: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_SCENARIO))
    schedule: dict | None = None
    iterations: int | None = None
    mode: str | None = None
    certify: str = "auto"
    baseline: bool = False
    log_stride: int = 1
    step_scale: str = "price"

    def __post_init__(self):
        self.values = list(self.values)
        if not self.values:
            raise ScenarioError("sweep.values", "the value grid is empty")
        if int(self.replications) < 1:
            raise ScenarioError("sweep.replications", "need at least one replication")
        self.replications = int(self.replications)
        if self.certify not in CERTIFY_LEVELS:
            raise ScenarioError("sweep.certify", f"expected one of {CERTIFY_LEVELS}")
        cfg = config_from_dict(self.base)
        if self.seeds is None:
            self.seeds = [cfg.rng_seed + r for r in range(self.replications)]
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) != self.replications:
            raise ScenarioError("sweep.seeds", "need one seed per replication")
        if self.schedule is None:
            self.schedule = dict(cfg.run.step_schedule)
        if self.iterations is None:
            self.iterations = cfg.run.iterations
        if self.mode is None:
            self.mode = cfg.run.mode
        if self.mode not in ("static", "ergodic"):
            raise ScenarioError("sweep.mode", f"unknown mode {self.mode!r}")
        self.path  # validates the parameter name

    @property
    def path(self) -> str:
        path = PARAMETER_ALIASES.get(self.parameter, self.parameter)
        if path != "schedule" and "." not in path:
            raise ScenarioError("sweep.parameter", f"unknown parameter {self.parameter!r}")
        return path

    @property
    def column(self) -> str:
        return self.parameter.replace(".", "_")

    def point(self, value) -> tuple[dict, dict]:
        """Scenario document and schedule for one grid value."""
        doc = copy.deepcopy(self.base)
        schedule = dict(self.schedule)
        if self.path == "schedule":
            schedule = _schedule_with_gamma(schedule, value)
        else:
            _set_path(doc, self.path, value)
        return doc, schedule

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        doc = dict(doc)
        for key in ("parameter", "values"):
            if key not in doc:
                raise ScenarioError(f"sweep.{key}", "missing required field")
        base = doc.pop("base", None)
        if isinstance(base, str):
            import yaml

            base = yaml.safe_load(Path(base).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError("sweep", f"unknown fields {sorted(unknown)}")
        return cls(base=copy.deepcopy(base) if base else copy.deepcopy(DEFAULT_SCENARIO), **doc)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter, "values": list(self.values),
            "replications": self.replications, "seeds": list(self.seeds), "base": self.base,
            "schedule": self.schedule, "iterations": self.iterations, "mode": self.mode,
            "certify": self.certify, "baseline": self.baseline, "log_stride": self.log_stride,
            "step_scale": self.step_scale,
        }


def load_sweep(path) -> SweepSpec:
    import yaml

    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "sweep file must be a mapping")
    base = doc.get("base")
    if isinstance(base, str) and not Path(base).is_absolute():
        doc["base"] = str(Path(path).parent / base)
    return SweepSpec.from_dict(doc)


# ---------------------------------------------------------------------------
# single runs


@dataclass
class Outcome:
    game: gm.Game
    record: learning.RunRecord
    report: metrics.MetricReport
    bounds: oracle.EqlBounds | None = None
    br_gap: np.ndarray | None = None
    baseline: metrics.MetricReport | None = None


def _wants_full(level: str, game: gm.Game) -> bool:
    if level == "full":
        return True
    if level != "auto":
        return False
    K, S = game.gains.shape
    return (S + 1) ** K <= oracle.VERTEX_ENUM_LIMIT


def build_game(doc: dict, seed: int, mode: str = "static"):
    """(game, fading) for a scenario document; ``fading`` is None in static mode."""
    cfg = config_from_dict(doc)
    if mode == "ergodic":
        proc = ch.fading_process(cfg, seed)
        game = gm.Game.from_config(cfg, ch.ChannelRealization(proc.mean_gains, proc.pu_gain))
        return game, proc
    return gm.Game.from_config(cfg, ch.generate_channel(cfg, seed)), None


def simulate(doc: dict, seed: int, schedule=None, iterations: int | None = None,
             mode: str | None = None, certify: str = "auto", baseline: bool = False,
             log_stride: int = 1, step_scale: str = "price", csv_path=None,
             stop_on_convergence: bool = True, bounds=None) -> Outcome:
    """Run XL once on the scenario ``doc`` with channel seed ``seed`` and collect metrics."""
    cfg = config_from_dict(doc)
    mode = mode or cfg.run.mode
    schedule = schedule if schedule is not None else cfg.run.step_schedule
    iterations = cfg.run.iterations if iterations is None else iterations
    game, fading = build_game(doc, seed, mode)
    rec = learning.run(game, schedule, iterations, fading=fading, log_stride=log_stride,
                       step_scale=step_scale, csv_path=csv_path,
                       stop_on_convergence=stop_on_convergence)
    br = None
    if mode == "static":
        if certify != "none":
            br = oracle.best_response_gap(game, rec.final_powers)
        if bounds is None and _wants_full(certify, game):
            bounds = oracle.potential_extrema_for_eql(game, rng=seed)
    else:
        bounds = None
    series = bounds.eql(rec.potentials) if bounds is not None else None
    report = metrics.metric_report(game, rec.final_powers, bounds, series, rec.iterations)
    base = metrics.uniform_baseline(game) if baseline else None
    return Outcome(game, rec, report, bounds, br, base)


def _after_convergence(rec: learning.RunRecord) -> float:
    if rec.converged_at is None:
        return math.nan
    mask = rec.iterations > rec.converged_at
    return float(rec.violation[mask].max()) if mask.any() else math.nan


def outcome_row(out: Outcome) -> dict:
    rec = out.record
    row = {
        "status": "ok", "error": "", "mode": rec.mode, "termination": rec.termination,
        "converged_at": rec.converged_at,
        "iterations_run": rec.steps,
        "final_residual": rec.final_residual,
        "br_gap_max": float(np.max(out.br_gap)) if out.br_gap is not None else math.nan,
        "psi_max_after_convergence": _after_convergence(rec),
    }
    row.update(out.report.row())
    if out.baseline is not None:
        b = out.baseline
        row["uniform_su_rate_bits"] = b.su_rate_bits
        row["uniform_pu_rate_nats"] = b.pu_rate_nats
        row["uniform_revenue"] = b.revenue
        row["revenue_ratio"] = out.report.revenue / b.revenue if b.revenue > 0 else math.nan
    return row


def _sweep_job(args) -> dict:
    spec_dict, value, rep = args
    spec = SweepSpec(**spec_dict)
    seed = spec.seeds[rep]
    row = {spec.column: value, "replication": rep, "seed": seed}
    try:
        doc, schedule = spec.point(value)
        out = simulate(doc, seed, schedule, spec.iterations, spec.mode, spec.certify,
                       spec.baseline, spec.log_stride, spec.step_scale)
        row.update(outcome_row(out))
    except Exception as exc:  # recorded per row; the sweep carries on
        log.warning("sweep point %s=%r rep %d failed: %s", spec.parameter, value, rep, exc)
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_columns(spec: SweepSpec) -> list[str]:
    return [spec.column] + ROW_COLUMNS + (BASELINE_COLUMNS if spec.baseline else [])


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """One row per (grid value, replication), in grid-major order.

    With ``workers > 1`` the points run in separate processes; rows are
    assembled in the same order either way, so output does not depend on
    scheduling.
    """
    jobs = [(spec.to_dict(), v, r) for v in spec.values for r in range(spec.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    cols = sweep_columns(spec)
    return [{c: row.get(c) for c in cols} for row in rows]


# ---------------------------------------------------------------------------
# CSV output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(rows, path, columns=None, title: str | None = None) -> Path:
    """Write rows (dicts) with a fixed column order; ``title`` becomes a leading '#' line."""
    path = Path(path)
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with path.open("w", newline="") as fh:
        if title:
            fh.write(f"# {title}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    """Read a CSV written by :func:`write_csv` (skips '#' lines, values stay strings)."""
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _nanmean(vals) -> float:
    arr = np.array([np.nan if v is None else float(v) for v in vals], dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else math.nan


def aggregate(rows, x: str, value: str, key: Callable = None) -> dict:
    """Mean of ``value`` per x over successful rows, as {x: mean}."""
    groups: dict = {}
    for row in rows:
        if row.get("status") != "ok":
            continue
        groups.setdefault(row[x], []).append(row.get(value))
    return {k: _nanmean(v) for k, v in groups.items()}


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class Scale:
    users: int
    subcarriers: int
    replications: int
    label: str

    @classmethod
    def parse(cls, scale="full") -> "Scale":
        """``full`` (10 x 10, 30 replications), ``ci`` (4 x 4, 5) or a numeric factor."""
        if isinstance(scale, Scale):
            return scale
        text = str(scale).strip().lower()
        if text == "full":
            return cls(10, 10, 30, "full")
        if text == "ci":
            return cls(4, 4, 5, "ci")
        try:
            f = float(text)
        except ValueError:
            raise ScenarioError("--scale", f"expected full, ci or a positive number, got {scale!r}")
        if not f > 0 or not math.isfinite(f):
            raise ScenarioError("--scale", "factor must be positive")
        n = max(2, int(round(10 * f)))
        return cls(n, n, max(1, int(round(30 * f))), repr(f))


@dataclass
class PresetContext:
    seed: int = 0
    scale: Scale = field(default_factory=lambda: Scale.parse("full"))
    workers: int = 1

    @property
    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.scale.replications)]

    def scenario(self, users=None, subcarriers=None, **sections) -> dict:
        doc = default_scenario(**sections)
        doc["network"]["users"] = int(users or self.scale.users)
        doc["network"]["subcarriers"] = int(subcarriers or self.scale.subcarriers)
        doc["run"]["seed"] = self.seed
        return doc


@dataclass
class Table:
    name: str
    title: str
    columns: list
    rows: list


# lambda0 = 1 is skipped: the VP price then equals the rate gain of a lone user at the
# tolerance and the equilibrium sits on a degenerate kink. The top decades reach the
# steep LP regime (lambda0 / I above 1 / sigma^2) where users shut down.
LAMBDA_GRID = (0.01, 0.1, 0.3, 0.5, 2.0, 5.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)
QOS_LEVELS_DBM = (-68.3, -70.0, -75.6)
I_MAX_GRID_DBM = (-90.0, -85.0, -80.0, -75.0, -70.0, -65.0, -60.0, -55.0, -50.0)
POWER_LAW = {"kind": "power_law", "gamma0": 1.0, "beta": 0.6}


def _curve_sweeps(ctx: PresetContext, curves: dict, parameter: str, values, **spec_kw):
    """Run one sweep per curve; returns (long rows tagged with 'curve', {curve: rows})."""
    long_rows, by_curve = [], {}
    for name, doc in curves.items():
        spec = SweepSpec(parameter, list(values), ctx.scale.replications, ctx.seeds, doc,
                         **spec_kw)
        rows = run_sweep(spec, ctx.workers)
        by_curve[name] = rows
        long_rows += [{"curve": name, **r} for r in rows]
    return long_rows, by_curve


def _wide(x: str, values, by_curve: dict, metrics_: dict) -> tuple[list, list]:
    """x column plus one column per (metric, curve): '<prefix>_<curve>'."""
    columns = [x]
    table = [{x: v} for v in values]
    for prefix, metric in metrics_.items():
        for name, rows in by_curve.items():
            col = f"{prefix}_{name}"
            columns.append(col)
            means = aggregate(rows, x, metric)
            for row in table:
                row[col] = means.get(row[x], math.nan)
    return columns, table


def _runs_table(name: str, title: str, long_rows: list, x: str, extra=()) -> Table:
    cols = ["curve", x] + ROW_COLUMNS + list(extra)
    return Table(f"{name}_runs", f"{title} (one row per run)", cols, long_rows)


def _flat_curves(ctx, models=("lp", "vp"), levels=QOS_LEVELS_DBM, lambda0=10.0):
    curves = {}
    for model in models:
        for lvl in levels:
            curves[f"{model}_{lvl:g}dBm"] = ctx.scenario(
                pricing={"flat": model, "lambda0": lambda0}, pu={"i_max_dbm": lvl})
    return curves


def preset_fig1(ctx: PresetContext) -> list[Table]:
    title = "fig1: mean violation index Psi at termination vs lambda0, LP and VP flat pricing"
    long_rows, by_curve = _curve_sweeps(ctx, _flat_curves(ctx), "lambda0", LAMBDA_GRID,
                                        schedule=POWER_LAW, certify="none", log_stride=2000)
    cols, wide = _wide("lambda0", LAMBDA_GRID, by_curve, {"psi": "psi_mean"})
    return [Table("fig1", title, cols, wide), _runs_table("fig1", title, long_rows, "lambda0")]


def preset_fig2(ctx: PresetContext, iterations: int = 500) -> list[Table]:
    title = ("fig2: aggregate interference w_s(n) on one subcarrier, VP and LP flat pricing, "
             "I_max = -70 dBm")
    traces = {}
    for model in ("vp", "lp"):
        doc = ctx.scenario(pricing={"flat": model, "lambda0": 10.0}, pu={"i_max_dbm": -70.0})
        out = simulate(doc, ctx.seed, POWER_LAW, iterations, "static", certify="none",
                       stop_on_convergence=False)
        traces[model] = out
    vp = traces["vp"].record
    s = int(np.argmax(vp.violation.max(axis=0)))
    i_max = float(traces["vp"].game.i_max[s])
    rows = []
    for j, n in enumerate(vp.iterations):
        row = {"iteration": int(n), "subcarrier": s, "i_max_w": i_max}
        for model, out in traces.items():
            row[f"w_{model}"] = float(out.record.violation[j, s] * i_max)
            row[f"psi_{model}"] = float(out.record.violation[j, s])
        rows.append(row)
    cols = ["iteration", "subcarrier", "w_vp", "w_lp", "i_max_w", "psi_vp", "psi_lp"]
    return [Table("fig2", title, cols, rows)]


def preset_fig3(ctx: PresetContext) -> list[Table]:
    title = "fig3: SU sum-rate (bits) at termination vs lambda0 for congestion K/S in {0.5, 1, 1.5}"
    S = ctx.scale.subcarriers
    curves = {}
    for model in ("lp", "vp"):
        for ratio in (0.5, 1.0, 1.5):
            K = max(1, int(round(ratio * S)))
            curves[f"{model}_ks{ratio:g}"] = ctx.scenario(
                users=K, pricing={"flat": model, "lambda0": 10.0}, pu={"i_max_dbm": -70.0})
    long_rows, by_curve = _curve_sweeps(ctx, curves, "lambda0", LAMBDA_GRID,
                                        schedule=POWER_LAW, certify="none", log_stride=2000)
    cols, wide = _wide("lambda0", LAMBDA_GRID, by_curve, {"rate": "su_rate_bits"})
    return [Table("fig3", title, cols, wide), _runs_table("fig3", title, long_rows, "lambda0")]


def preset_fig4(ctx: PresetContext) -> list[Table]:
    title = "fig4: SU sum-rate (bits) at termination vs I_max (dBm), flat and per-user pricing"
    curves = {"none": ctx.scenario(pricing={"flat": "none", "user": "none", "lambda0": 0.0})}
    for lam in (0.1, 1.0):
        for model in ("lp", "vp"):
            curves[f"flat_{model}_{lam:g}"] = ctx.scenario(
                pricing={"flat": model, "user": "none", "lambda0": lam})
            curves[f"user_{model}_{lam:g}"] = ctx.scenario(
                pricing={"flat": "none", "user": model, "lambda0": 0.0, "lambda_k": lam})
    long_rows, by_curve = _curve_sweeps(ctx, curves, "i_max", I_MAX_GRID_DBM,
                                        schedule=POWER_LAW, certify="none", log_stride=2000)
    cols, wide = _wide("i_max", I_MAX_GRID_DBM, by_curve, {"rate": "su_rate_bits"})
    return [Table("fig4", title, cols, wide), _runs_table("fig4", title, long_rows, "i_max")]


def pu_minimum_rate(game: gm.Game) -> float:
    """PU rate when every subcarrier carries exactly the tolerated interference."""
    return gm.pu_rate(game.i_max, game.pu_gain, game.pu_power, game.noise)


def preset_fig5(ctx: PresetContext) -> list[Table]:
    title = "fig5: PU rate (nats), PU revenue and SU total power (W) vs lambda0"
    curves = _flat_curves(ctx)
    long_rows, by_curve = _curve_sweeps(ctx, curves, "lambda0", LAMBDA_GRID,
                                        schedule=POWER_LAW, certify="none", log_stride=2000)
    cols, wide = _wide("lambda0", LAMBDA_GRID, by_curve,
                       {"pu_rate": "pu_rate_nats", "revenue": "revenue", "power": "total_power"})
    for lvl in QOS_LEVELS_DBM:
        game, _ = build_game(ctx.scenario(pu={"i_max_dbm": lvl}), ctx.seed)
        col = f"pu_min_rate_{lvl:g}dBm"
        cols.append(col)
        for row in wide:
            row[col] = pu_minimum_rate(game)
    return [Table("fig5", title, cols, wide), _runs_table("fig5", title, long_rows, "lambda0")]


def preset_fig6(ctx: PresetContext) -> list[Table]:
    title = ("fig6: proposed allocation vs uniform full-power allocation vs lambda0 "
             "(SU rate, PU rate, revenue ratio)")
    curves = _flat_curves(ctx, levels=(-70.0,))
    long_rows, by_curve = _curve_sweeps(ctx, curves, "lambda0", LAMBDA_GRID,
                                        schedule=POWER_LAW, certify="none", log_stride=2000,
                                        baseline=True)
    cols, wide = _wide("lambda0", LAMBDA_GRID, by_curve, {
        "rate": "su_rate_bits", "uniform_rate": "uniform_su_rate_bits",
        "pu_rate": "pu_rate_nats", "uniform_pu_rate": "uniform_pu_rate_nats",
        "revenue": "revenue", "uniform_revenue": "uniform_revenue",
        "revenue_ratio": "revenue_ratio"})
    return [Table("fig6", title, cols, wide),
            _runs_table("fig6", title, long_rows, "lambda0", BASELINE_COLUMNS)]


FIG7_SCHEDULES = {
    "powerlaw": {"kind": "power_law", "gamma0": 1.0, "beta": 0.6},
    "constant": {"kind": "constant", "gamma": 0.5},
    "stc": {"kind": "stc", "gamma_explore": 1.0, "beta_converge": 0.6},
}
FIG7_PRICING = {"lp": {"flat": "lp", "lambda0": 0.1}, "vp": {"flat": "vp", "lambda0": 10.0}}


def preset_fig7(ctx: PresetContext, iterations: int = 300) -> list[Table]:
    title = "fig7: EQL(n) and SU sum-rate (bits) per iteration for three step-size rules"
    sums: dict = {}
    sampled = False
    for model, pricing_ in FIG7_PRICING.items():
        doc = ctx.scenario(pricing=pricing_, pu={"i_max_dbm": -70.0})
        for seed in ctx.seeds:
            game, _ = build_game(doc, seed)
            bounds = oracle.potential_extrema_for_eql(game, rng=seed)
            sampled |= not bounds.exact
            for name, sched in FIG7_SCHEDULES.items():
                rec = learning.run(game, sched, iterations, stop_on_convergence=False)
                rate = gm.rates(game, rec.powers).sum(axis=-1) * metrics.NATS_TO_BITS
                acc = sums.setdefault(f"{name}_{model}", [0.0, 0.0, 0])
                acc[0] = acc[0] + bounds.eql(rec.potentials)
                acc[1] = acc[1] + rate
                acc[2] += 1
    its = np.arange(iterations + 1)
    cols = ["iteration"]
    for key in sums:
        cols += [f"eql_{key}", f"rate_{key}"]
    rows = []
    for j, n in enumerate(its):
        row = {"iteration": int(n)}
        for key, (e, r, m) in sums.items():
            row[f"eql_{key}"] = float(e[j] / m)
            row[f"rate_{key}"] = float(r[j] / m)
        rows.append(row)
    if sampled:
        title += " (V_min from sampled vertices)"
    return [Table("fig7", title, cols, rows)]


FIG8_GAMMAS = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)


def preset_fig8(ctx: PresetContext, iterations: int = 1000) -> list[Table]:
    title = "fig8: iterations to reach EQL 0.95 vs constant step gamma, by K, pricing and lambda0"
    S = ctx.scale.subcarriers
    users = sorted({max(2, S // 2), S, int(round(1.5 * S))})
    long_rows, cols, wide = [], ["gamma"], [{"gamma": g} for g in FIG8_GAMMAS]
    for model in ("lp", "vp"):
        for lam in (0.1, 0.5):
            for K in users:
                name = f"{model}_lam{lam:g}_K{K}"
                doc = ctx.scenario(users=K, pricing={"flat": model, "lambda0": lam},
                                   pu={"i_max_dbm": -70.0})
                hits: dict = {g: [] for g in FIG8_GAMMAS}
                for rep, seed in enumerate(ctx.seeds):
                    game, _ = build_game(doc, seed)
                    bounds = oracle.potential_extrema_for_eql(game, rng=seed)
                    for gamma in FIG8_GAMMAS:
                        out = simulate(doc, seed, {"kind": "constant", "gamma": gamma},
                                       iterations, "static", certify="none",
                                       stop_on_convergence=False, bounds=bounds)
                        row = {"curve": name, "gamma": gamma, "replication": rep, "seed": seed,
                               **outcome_row(out)}
                        long_rows.append(row)
                        hit = out.report.iterations_to_target
                        hits[gamma].append(math.nan if hit is None else hit)
                col = f"iters_{name}"
                cols.append(col)
                for row in wide:
                    row[col] = _nanmean(hits[row["gamma"]])
    return [Table("fig8", title, cols, wide), _runs_table("fig8", title, long_rows, "gamma")]


def sampled_potential_batch(game: gm.Game, profiles, samples, chunk: int = 64) -> np.ndarray:
    """Sample-average potential of each profile in an M x K x S batch over fixed gains."""
    profiles = np.asarray(profiles, dtype=float)
    out = []
    for i in range(0, len(profiles), chunk):
        block = profiles[i:i + chunk][:, None]
        out.append(gm.potential(game, block, samples[None]).mean(axis=1))
    return np.concatenate(out)


def ergodic_bounds(game: gm.Game, samples) -> oracle.EqlBounds:
    """Exact-vertex minimum and maximum of the sample-average potential."""
    cert = oracle.maximize_sampled_potential(game, samples)
    v_min, arg, exact = oracle.potential_minimum(
        game, value_fn=lambda prof: sampled_potential_batch(game, prof, samples))
    return oracle.EqlBounds(v_min, cert.V_star, exact, arg, cert)


FIG9_SCHEDULES = {
    "powerlaw": {"kind": "power_law", "gamma0": 1.0, "beta": 0.6},
    "stc": {"kind": "stc", "gamma_explore": 1.0, "beta_converge": 0.6},
}


def preset_fig9(ctx: PresetContext, iterations: int = 1000, n_samples: int = 2000,
                stride: int = 10) -> list[Table]:
    title = ("fig9: ergodic EQL(n) under Rayleigh fast fading, K=3, S=3, LP flat pricing "
             f"(sample average over {n_samples} common draws)")
    sums: dict = {}
    for lam in (0.1, 1.0):
        doc = ctx.scenario(users=3, subcarriers=3, pricing={"flat": "lp", "lambda0": lam},
                           pu={"i_max_dbm": -70.0})
        for seed in ctx.seeds:
            game, proc = build_game(doc, seed, "ergodic")
            samples = ch.FadingProcess(proc.mean_gains, np.random.default_rng([seed, 9])).draw(
                n_samples)
            bounds = ergodic_bounds(game, samples)
            for name, sched in FIG9_SCHEDULES.items():
                _, fading = build_game(doc, seed, "ergodic")
                rec = learning.run(game, sched, iterations, fading=fading, log_stride=stride,
                                   stop_on_convergence=False)
                vals = sampled_potential_batch(game, rec.powers, samples)
                acc = sums.setdefault(f"{name}_lam{lam:g}", [0.0, 0])
                acc[0] = acc[0] + bounds.eql(vals)
                acc[1] += 1
                its = rec.iterations
    cols = ["iteration"] + [f"eql_{k}" for k in sums]
    rows = []
    for j, n in enumerate(its):
        row = {"iteration": int(n)}
        for key, (e, m) in sums.items():
            row[f"eql_{key}"] = float(e[j] / m)
        rows.append(row)
    return [Table("fig9", title, cols, rows)]


PRESETS = {
    "fig1": preset_fig1, "fig2": preset_fig2, "fig3": preset_fig3, "fig4": preset_fig4,
    "fig5": preset_fig5, "fig6": preset_fig6, "fig7": preset_fig7, "fig8": preset_fig8,
    "fig9": preset_fig9,
}


def version_string() -> str:
    """git-describe style version: v<package version>[-g<commit>]."""
    base = f"v{__version__}"
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{base}-g{sha}" if sha else base


def scenario_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def write_manifest(path, name: str, ctx_or_seeds, scale, base_doc, files) -> Path:
    seeds = ctx_or_seeds.seeds if isinstance(ctx_or_seeds, PresetContext) else list(ctx_or_seeds)
    manifest = {
        "name": name,
        "version": version_string(),
        "scale": scale if isinstance(scale, (str, type(None))) else scale.label,
        "seeds": seeds,
        "scenario_sha256": scenario_hash(base_doc),
        "files": {Path(f).name: hashlib.sha256(Path(f).read_bytes()).hexdigest() for f in files},
    }
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def reproduce_figure(preset: str, out_dir, seed: int = 0, scale="full",
                     workers: int = 1) -> list[Path]:
    """Run a figure preset and write its CSV tables plus ``<preset>_manifest.json``."""
    if preset not in PRESETS:
        raise ScenarioError("preset", f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    ctx = PresetContext(int(seed), Scale.parse(scale), workers)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(t.rows, out_dir / f"{t.name}.csv", t.columns, t.title)
             for t in PRESETS[preset](ctx)]
    manifest = write_manifest(out_dir / f"{preset}_manifest.json", preset, ctx, ctx.scale,
                              ctx.scenario(), paths)
    return paths + [manifest]

