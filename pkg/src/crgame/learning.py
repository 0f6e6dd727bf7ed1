"""Exponential learning (XL) for the priced power-allocation game.

Each user keeps a score per subcarrier, maps scores to powers through
the exponential (Gibbs) map with a slack unit, measures its SINR and adds
the step-weighted marginal utility to the scores. The same loop runs on
static gains or on one fresh fading draw per iteration.

Scores are incremented by gamma_n * P_k * v_ks: marginals are expressed
per unit of normalized power p_ks / P_k, so step sizes are dimensionless.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import game as gm
from . import pricing

log = logging.getLogger(__name__)


def gibbs_map(y, max_power=1.0):
    """p_s = P e^{y_s} / (1 + sum_r e^{y_r}), row-wise, overflow-safe."""
    y = np.asarray(y, dtype=float)
    m = np.maximum(np.max(y, axis=-1, keepdims=True), 0.0)
    e = np.exp(y - m)
    denom = np.exp(-m) + e.sum(axis=-1, keepdims=True)
    P = np.asarray(max_power, dtype=float)
    if P.ndim:
        P = P[..., None]
    return P * e / denom


def detect_oscillation(history, threshold: int = 3, flat_tol: float = 1e-12) -> bool:
    """True when successive differences of `history` change sign at least `threshold` times.

    Differences smaller than ``flat_tol`` (relative to the series scale)
    count as converged, not as oscillation.
    """
    h = np.asarray(history, dtype=float)
    if h.size < 4:
        raise ValueError("oscillation window needs at least 4 values")
    d = np.diff(h)
    scale = max(1.0, float(np.max(np.abs(h))))
    d = d[np.abs(d) > flat_tol * scale]
    if d.size < 2:
        return False
    flips = int(np.sum(np.sign(d[1:]) != np.sign(d[:-1])))
    return flips >= threshold


class StepSchedule:
    """Base class; subclasses return gamma_n for iteration n (1-based)."""

    uses_history = False

    def reset(self):
        pass

    def step(self, n: int, history) -> float:
        raise NotImplementedError


@dataclass
class Constant(StepSchedule):
    gamma: float = 0.1

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("step size must be positive")

    def step(self, n, history=()):
        return self.gamma


@dataclass
class PowerLaw(StepSchedule):
    """gamma_n = gamma0 * n**(-beta); beta in (1/2, 1] keeps the convergence conditions."""

    gamma0: float = 1.0
    beta: float = 0.6

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0.5 < self.beta <= 1.0:
            raise ValueError("beta must lie in (1/2, 1]")

    def step(self, n, history=()):
        return self.gamma0 * float(n) ** (-self.beta)


@dataclass
class STC(StepSchedule):
    """Search-then-converge: constant exploration step, power-law decay once oscillation shows.

    After the switch at iteration n_s the step is
    gamma_switch * (n - n_s + 1)**(-beta_converge).
    """

    gamma_explore: float = 1.0
    beta_converge: float = 0.6
    window: int = 6
    threshold: int = 3
    switched_at: int | None = field(default=None, init=False)
    uses_history = True

    def __post_init__(self):
        if not self.gamma_explore > 0:
            raise ValueError("gamma_explore must be positive")
        if not 0.5 < self.beta_converge <= 1.0:
            raise ValueError("beta_converge must lie in (1/2, 1]")
        if self.window < 4:
            raise ValueError("window must be at least 4")

    def reset(self):
        self.switched_at = None

    def step(self, n, history=()):
        if self.switched_at is None and len(history) >= self.window:
            if detect_oscillation(history[-self.window:], self.threshold):
                self.switched_at = n
                log.debug("STC switched to decreasing steps at n=%d", n)
        if self.switched_at is None:
            return self.gamma_explore
        return self.gamma_explore * float(n - self.switched_at + 1) ** (-self.beta_converge)


def make_schedule(spec) -> StepSchedule:
    """Build a schedule from a mapping such as ``{"kind": "power_law", "gamma0": 1, "beta": 0.6}``."""
    if isinstance(spec, StepSchedule):
        return spec
    spec = dict(spec)
    kind = spec.pop("kind", "power_law").lower()
    if kind == "constant":
        return Constant(**spec)
    if kind in ("power_law", "powerlaw"):
        return PowerLaw(**spec)
    if kind == "stc":
        return STC(**spec)
    raise ValueError(f"unknown step schedule {kind!r}")


def partial_sum_ratio(schedule: StepSchedule, n: int) -> float:
    """sum_{j<=n} gamma_j^2 / sum_{j<=n} gamma_j for a history-free schedule."""
    j = np.arange(1, n + 1, dtype=float)
    gam = np.array([schedule.step(int(i), ()) for i in j]) if not isinstance(schedule, PowerLaw) \
        else schedule.gamma0 * j ** (-schedule.beta)
    return float(np.sum(gam ** 2) / np.sum(gam))


@dataclass
class LearningState:
    scores: np.ndarray
    n: int = 0
    gamma: float = 0.0

    @classmethod
    def initial(cls, num_users: int, num_subcarriers: int) -> "LearningState":
        return cls(np.zeros((num_users, num_subcarriers)))

    def powers(self, max_power) -> np.ndarray:
        return gibbs_map(self.scores, max_power)


def step_scales(game: gm.Game, kind: str = "power") -> np.ndarray:
    """Per-user step multipliers c_k; XL keeps its convergence guarantee for any constant c_k > 0.

    ``"watt"``: c_k = 1, the literal update on Watt-unit marginals.
    ``"power"``: c_k = P_k, marginals per unit of normalized power.
    ``"footprint"``: c_k = P_k / max(1, max_s g_ks P_k / I_s), which also
    slows down users whose full power alone would breach the tolerance.
    ``"price"``: c_k = P_k / max(1, L_k) with L_k the steepest marginal
    price the user can face, in normalized units, so one step of a
    violation penalty moves the user's scores by at most gamma_n.
    Every choice uses only the user's own channel, budget and public prices.
    """
    P = game.max_power
    if kind == "watt":
        return np.ones_like(P)
    if kind == "power":
        return P.copy()
    if kind == "footprint":
        reach = (game.gains * P[:, None] / game.i_max).max(axis=1)
        return P / np.maximum(1.0, reach)
    if kind == "price":
        _, levels = pricing.own_power_pieces(game.pricing, game.gains, np.zeros_like(game.gains),
                                             game.i_max)
        steep = (levels[..., -1] * P[:, None]).max(axis=1)
        return P / np.maximum(1.0, steep)
    raise ValueError(f"unknown step scaling {kind!r}")


def xl_step(state: LearningState, game: gm.Game, schedule: StepSchedule, gains=None,
            distributed: bool = False, history=(), scale=None, p=None):
    """One XL iteration; returns (new_state, powers used, marginals).

    With ``distributed`` the marginals come from each user's SINR
    measurement and its own channel; otherwise the equivalent closed form
    g/(sigma^2 + w) is used.
    """
    g = game.gains if gains is None else gains
    if p is None:
        p = state.powers(game.max_power)
    if distributed:
        sinr = gm.compute_sinr(g, p, game.noise)
        v = gm.measured_marginals(game, p, sinr, g)
    else:
        v = gm.marginal_utilities(game, p, g)
    n = state.n + 1
    gamma = schedule.step(n, history)
    c = game.max_power if scale is None else scale
    scores = state.scores + gamma * c[:, None] * v
    return LearningState(scores, n, gamma), p, v


@dataclass
class RunRecord:
    iterations: np.ndarray
    powers: np.ndarray            # T x K x S, p(n) after n updates
    potentials: np.ndarray        # V(p(n)) on game.gains (the mean gains in ergodic mode)
    violation: np.ndarray         # T x S, w_s / I_s of p(n) on game.gains
    gammas: np.ndarray
    termination: str
    converged_at: int | None
    final_powers: np.ndarray
    final_residual: float = np.nan
    br_gap: np.ndarray | None = None
    mode: str = "static"
    steps: int = 0                # updates actually performed

    @property
    def violations_per_iteration(self) -> np.ndarray:
        return (self.violation > 1.0).sum(axis=1)


class _CsvSink:
    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = None

    def write(self, n, game, p, gamma):
        row = gm.snapshot_row(game, p, n)
        row["gamma"] = gamma
        if self._writer is None:
            self._writer = csv.DictWriter(self._fh, fieldnames=list(row))
            self._writer.writeheader()
        self._writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    def close(self):
        self._fh.close()


def _residual(game, p, g, v, kink_band) -> float:
    lo, hi = gm.marginal_bounds(game, p, g, kink_band, v)
    return float(gm.stationarity_residual(lo, hi, p, game.max_power).max())


def run(game: gm.Game, schedule, max_iters: int = 2000, *, fading=None,
        power_change_tol: float = 1e-6, patience: int = 10, distributed: bool = False,
        stationarity_tol: float | None = 1e-3, kink_band: float = 1e-3,
        log_stride: int = 1, stop_on_convergence: bool = True,
        certify: bool = False, step_scale: str = "price",
        csv_path=None, callback: Callable | None = None) -> RunRecord:
    """Run XL from zero scores.

    Static mode uses ``game.gains`` throughout; passing a ``fading``
    process (anything with ``draw()``) switches to ergodic mode with one
    fresh realization per iteration.

    Convergence: for ``patience`` consecutive iterations the largest
    normalized power change |p(n+1) - p(n)| / P_k stays below
    ``power_change_tol`` and, in static mode, every user's first-order
    residual (see :func:`crgame.game.stationarity_residual`) stays below
    ``stationarity_tol``. Carriers within ``kink_band`` of a VP kink count
    as sitting on it. The residual check keeps a saturated exponential map,
    whose powers no longer move while its scores still do, from passing as
    converged. With ``stop_on_convergence=False`` the run continues to
    ``max_iters`` and only records when convergence was first declared.

    With ``csv_path`` every logged iteration is also streamed to a CSV file
    (columns of :func:`crgame.game.snapshot_row` plus the step size).
    """
    schedule = make_schedule(schedule)
    schedule.reset()
    K, S = game.gains.shape
    state = LearningState.initial(K, S)
    mode = "static" if fading is None else "ergodic"
    scale = step_scales(game, step_scale)

    check_kkt = stationarity_tol is not None and mode == "static"
    its, pows, pots, viol, gams = [], [], [], [], []
    history: list[float] = []

    sink = _CsvSink(csv_path) if csv_path is not None else None

    def record(n, p, gamma, value):
        if sink is not None:
            sink.write(n, game, p, gamma)
        its.append(n)
        pows.append(p)
        pots.append(value)
        viol.append(gm.aggregate_interference(game.gains, p) / game.i_max)
        gams.append(gamma)

    p0 = state.powers(game.max_power)
    record(0, p0, 0.0, gm.potential(game, p0))
    p_next = p0
    calm = 0
    converged_at = None
    termination = "max_iters"
    steps = 0
    for n in range(1, max_iters + 1):
        steps = n
        g = game.gains if fading is None else fading.draw()
        p = p_next
        state, _, v = xl_step(state, game, schedule, g, distributed, history, scale, p)
        p_next = state.powers(game.max_power)
        logged = n % log_stride == 0
        if logged or schedule.uses_history:
            value = gm.potential(game, p_next)
        if schedule.uses_history:
            history.append(value)
            if len(history) > 64:
                del history[:-64]
        if logged:
            record(n, p_next, state.gamma, value)
        if callback is not None:
            callback(n, state, p_next, v)
        if converged_at is not None:
            continue
        change = float(np.max(np.abs(p_next - p) / game.max_power[:, None]))
        calm_now = change < power_change_tol
        if calm_now and check_kkt:
            calm_now = _residual(game, p, g, v, kink_band) < stationarity_tol
        calm = calm + 1 if calm_now else 0
        if calm >= patience:
            converged_at = n
            termination = "converged"
            if stop_on_convergence:
                break

    final = p_next
    if sink is not None:
        sink.close()
    rec = RunRecord(
        iterations=np.array(its),
        powers=np.array(pows),
        potentials=np.array(pots),
        violation=np.array(viol),
        gammas=np.array(gams),
        final_residual=_residual(game, final, game.gains, None, kink_band) if mode == "static" else np.nan,
        termination=termination,
        converged_at=converged_at,
        final_powers=final,
        mode=mode,
        steps=steps,
    )
    if certify and mode == "static":
        from .oracle import best_response_gap

        rec.br_gap = best_response_gap(game, final)
    return rec


def bregman_divergence(p_ref, p, max_power=1.0) -> float:
    """Entropic Bregman divergence between two profiles, summed over users.

    Powers are normalized by P_k; the slack 1 - sum_s p_s is the extra
    coordinate of the lifted simplex. ``p`` must be strictly interior.
    """
    P = np.asarray(max_power, dtype=float)
    x_ref = np.atleast_2d(np.asarray(p_ref, dtype=float) / (P[:, None] if P.ndim else P))
    x = np.atleast_2d(np.asarray(p, dtype=float) / (P[:, None] if P.ndim else P))
    slack = 1.0 - x.sum(axis=1)
    slack_ref = np.maximum(1.0 - x_ref.sum(axis=1), 0.0)
    if np.any(x <= 0) or np.any(slack <= 0):
        raise ValueError("second argument must lie strictly inside the power polytope")
    with np.errstate(divide="ignore", invalid="ignore"):
        main = np.where(x_ref > 0, x_ref * np.log(x_ref / x), 0.0).sum()
        extra = np.where(slack_ref > 0, slack_ref * np.log(slack_ref / slack), 0.0).sum()
    return float(main + extra)
