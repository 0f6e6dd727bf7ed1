"""Reporting metrics: violation index, EQL, rates, PU rate, revenue, uniform baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import game as gm

NATS_TO_BITS = 1.0 / np.log(2.0)


def violation_index(w, i_max):
    """Psi_s = w_s / I_s and its mean over subcarriers."""
    i_max = np.asarray(i_max, dtype=float)
    if np.any(i_max <= 0):
        raise ValueError("interference tolerance must be positive")
    psi = np.asarray(w, dtype=float) / i_max
    return psi, float(psi.mean())


def eql(v, v_min: float, v_max: float):
    """Equilibration level (V - V_min) / (V_max - V_min); works on arrays."""
    if not v_max > v_min:
        raise ValueError(f"degenerate EQL range: V_max={v_max!r} <= V_min={v_min!r}")
    out = (np.asarray(v, dtype=float) - v_min) / (v_max - v_min)
    return float(out) if out.ndim == 0 else out


def congestion_index(num_users: int, num_subcarriers: int) -> float:
    return num_users / num_subcarriers


def iterations_to_target(eql_series, iterations, target: float = 0.95):
    """First logged iteration whose EQL reaches ``target`` (None if never)."""
    e = np.asarray(eql_series, dtype=float)
    hit = np.nonzero(e >= target)[0]
    return int(np.asarray(iterations)[hit[0]]) if hit.size else None


@dataclass
class MetricReport:
    psi: np.ndarray
    psi_mean: float
    su_rate_nats: float
    su_rate_bits: float
    pu_rate_nats: float
    revenue: float
    total_power: float
    congestion: float
    potential: float
    eql: float | None = None
    eql_sampled: bool = False
    iterations_to_target: int | None = None
    eql_series: np.ndarray | None = field(default=None, repr=False)

    def row(self) -> dict:
        """Flat scalar columns for CSV output."""
        d = {k: v for k, v in asdict(self).items() if k not in ("psi", "eql_series")}
        d["psi_max"] = float(np.max(self.psi))
        return d


def metric_report(game: gm.Game, p, bounds=None, eql_series=None, iterations=None,
                  target: float = 0.95) -> MetricReport:
    """Metrics of profile ``p``; ``bounds`` (an EqlBounds) adds the EQL columns."""
    p = np.asarray(p, dtype=float)
    snap = gm.snapshot(game, p)
    psi, psi_mean = violation_index(snap.w, game.i_max)
    su = float(snap.rates.sum())
    report = MetricReport(
        psi=psi,
        psi_mean=psi_mean,
        su_rate_nats=su,
        su_rate_bits=su * NATS_TO_BITS,
        pu_rate_nats=gm.game_pu_rate(game, p),
        revenue=gm.operator_revenue(game, p),
        total_power=float(p.sum()),
        congestion=congestion_index(*game.gains.shape),
        potential=snap.potential,
    )
    if bounds is not None:
        report.eql = bounds.eql(snap.potential)
        report.eql_sampled = not bounds.exact
        if eql_series is not None:
            report.eql_series = np.asarray(eql_series, dtype=float)
            report.iterations_to_target = iterations_to_target(eql_series, iterations, target)
    return report


def uniform_profile(game: gm.Game) -> np.ndarray:
    """Full power spread evenly: p_ks = P_k / S."""
    K, S = game.gains.shape
    return np.repeat(game.max_power[:, None] / S, S, axis=1)


def uniform_baseline(game: gm.Game, bounds=None) -> MetricReport:
    return metric_report(game, uniform_profile(game), bounds)
