"""The priced rate-maximization game.

Power profiles are K x S arrays of Watts. Rates are in nats (natural log).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import pricing
from .units import NetworkConfig, PricingSpec


@dataclass(frozen=True)
class Game:
    gains: np.ndarray
    noise: np.ndarray
    max_power: np.ndarray
    i_max: np.ndarray
    pricing: PricingSpec
    pu_gain: float = 0.0
    pu_power: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        K, S = g.shape
        for name, n in (("noise", S), ("max_power", K), ("i_max", S)):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gains", g)

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.gains.shape[1]

    @classmethod
    def from_config(cls, config: NetworkConfig, channel) -> "Game":
        return cls(
            gains=channel.gains,
            noise=config.noise,
            max_power=config.max_power,
            i_max=config.i_max,
            pricing=config.pricing,
            pu_gain=channel.pu_gain if channel.pu_gain else config.pu_gain,
            pu_power=config.pu_power,
        )

    def with_gains(self, gains) -> "Game":
        return dataclasses.replace(self, gains=np.asarray(gains, dtype=float))

    def with_pricing(self, spec: PricingSpec) -> "Game":
        return dataclasses.replace(self, pricing=spec)


@dataclass(frozen=True)
class GameSnapshot:
    sinr: np.ndarray
    w: np.ndarray
    rates: np.ndarray
    costs: np.ndarray
    utilities: np.ndarray
    potential: float

    def rate(self, k: int) -> float:
        return float(self.rates[k])


def is_feasible(p, max_power, atol: float = 1e-12) -> bool:
    p = np.asarray(p, dtype=float)
    scale = np.asarray(max_power, dtype=float)
    return bool(np.all(p >= 0) and np.all(p.sum(axis=-1) <= scale * (1 + atol)))


def aggregate_interference(g, p) -> np.ndarray:
    """w_s = sum_k g_ks p_ks (works on batches of gains)."""
    return (np.asarray(g) * np.asarray(p)).sum(axis=-2)


def compute_sinr(g, p, noise) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    p = np.asarray(p, dtype=float)
    own = g * p
    w = own.sum(axis=-2, keepdims=True)
    return own / (noise + (w - own))


def rates(game: Game, p, gains=None) -> np.ndarray:
    """R_k = sum_s log(1 + sinr_ks)."""
    g = game.gains if gains is None else gains
    return np.log1p(compute_sinr(g, p, game.noise)).sum(axis=-1)


def rate(k: int, snapshot: GameSnapshot) -> float:
    return snapshot.rate(k)


def costs(game: Game, p, gains=None) -> np.ndarray:
    g = game.gains if gains is None else gains
    w = aggregate_interference(g, p)
    flat = pricing.flat_value(game.pricing, w, game.i_max)
    return np.asarray(flat)[..., None] + pricing.user_values(game.pricing, p, g, game.i_max)


def utilities(game: Game, p, gains=None) -> np.ndarray:
    return rates(game, p, gains) - costs(game, p, gains)


def potential(game: Game, p, gains=None):
    """V(p) = sum_s log(sigma_s^2 + w_s) - pi_0(w) - sum_k pi_k(p_k).

    With a batch of gains (N x K x S) this returns one value per sample.
    """
    g = game.gains if gains is None else gains
    w = aggregate_interference(g, p)
    val = np.log(game.noise + w).sum(axis=-1)
    val = val - pricing.flat_value(game.pricing, w, game.i_max)
    val = val - pricing.user_values(game.pricing, p, g, game.i_max).sum(axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def marginal_utilities(game: Game, p, gains=None) -> np.ndarray:
    """v_ks = g_ks (1/(sigma_s^2 + w_s) - d pi_0/d w_s) - d pi_k/d p_ks."""
    g = game.gains if gains is None else gains
    p = np.asarray(p, dtype=float)
    w = aggregate_interference(g, p)
    flat = pricing.flat_grad(game.pricing, w, game.i_max)
    user = pricing.user_grads(game.pricing, p, g, game.i_max)
    return g * (1.0 / (game.noise + w) - flat)[..., None, :] - user


def marginal_bounds(game: Game, p, gains=None, kink_band: float = 1e-9, v=None):
    """Both ends of the marginal-utility superdifferential.

    The ends differ only on VP kinks; a kink counts as active when the
    priced ratio lies within ``kink_band`` of 1 on either side.
    """
    g = game.gains if gains is None else gains
    p = np.asarray(p, dtype=float)
    spec = game.pricing
    if v is None:
        v = marginal_utilities(game, p, g)
    v_lo, v_hi = np.array(v, dtype=float), np.array(v, dtype=float)
    if spec.flat_model == "vp" and spec.lambda0 > 0:
        ratio = aggregate_interference(g, p) / game.i_max
        near = np.abs(ratio - 1.0) <= kink_band
        step = g * (spec.lambda0 / game.i_max)
        v_lo -= np.where(near & (ratio <= 1.0), step, 0.0)
        v_hi += np.where(near & (ratio > 1.0), step, 0.0)
    if spec.user_model == "vp" and spec.user_basis == "interference":
        lam = spec.user_lambdas(p.shape[0])[:, None]
        ratio = g * p / game.i_max
        near = np.abs(ratio - 1.0) <= kink_band
        step = lam * g / game.i_max
        v_lo -= np.where(near & (ratio <= 1.0), step, 0.0)
        v_hi += np.where(near & (ratio > 1.0), step, 0.0)
    return v_lo, v_hi


def stationarity_residual(v_lo, v_hi, p, max_power) -> np.ndarray:
    """Per-user violation of the first-order conditions, in normalized power units.

    With budget multiplier mu_k >= 0 the conditions read v_ks <= mu_k,
    p_ks (mu_k - v_ks) = 0 and mu_k (P_k - sum_s p_ks) = 0, where v_ks may
    be any point of [v_lo, v_hi]. Marginals are scaled by P_k and powers
    divided by it. The best mu_k is searched over 0 and the interval ends
    on active carriers (p_ks > 0), so a silent user is measured against
    mu_k = 0.
    """
    P = np.asarray(max_power, dtype=float)[:, None]
    lo, hi = np.asarray(v_lo) * P, np.asarray(v_hi) * P
    frac = np.asarray(p, dtype=float) / P
    slack = np.maximum(1.0 - frac.sum(axis=1), 0.0)
    active = frac > 0
    cands = [np.zeros((lo.shape[0], 1)), np.where(active, lo, 0.0), np.where(active, hi, 0.0)]
    mu = np.maximum(np.concatenate(cands, axis=1), 0.0)
    over = np.maximum(lo[:, None, :] - mu[:, :, None], 0.0)
    under = np.maximum(mu[:, :, None] - hi[:, None, :], 0.0)
    dual = over.max(axis=2)
    comp = (frac[:, None, :] * (over + under)).max(axis=2)
    budget = mu * slack[:, None]
    return np.maximum(np.maximum(dual, comp), budget).min(axis=1)


def interference_from_sinr(g, p, sinr, noise):
    """Recover the aggregate interference w_s from a user's own measurement.

    g p (1 + sinr) / sinr equals sigma^2 + w, so the known noise level is
    subtracted. Undefined when the user is silent (sinr == 0).
    """
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr <= 0):
        raise ValueError("cannot recover interference locally from a zero SINR")
    return np.asarray(g) * np.asarray(p) * (1.0 + sinr) / sinr - noise


def measured_marginals(game: Game, p, sinr, gains=None) -> np.ndarray:
    """Marginal utilities from local measurements only.

    Each user combines its own SINR, power and channel with the public
    price functions: (1/p) sinr/(1+sinr) - dC_k/dp_ks.
    """
    g = game.gains if gains is None else gains
    p = np.asarray(p, dtype=float)
    sinr = np.asarray(sinr, dtype=float)
    rate_term = sinr / (1.0 + sinr) / p
    w_seen = interference_from_sinr(g, p, sinr, game.noise)  # K x S, one estimate per user
    flat = pricing.flat_grad(game.pricing, w_seen, game.i_max)
    user = pricing.user_grads(game.pricing, p, g, game.i_max)
    return rate_term - g * flat - user


def pu_rate(w, pu_gain: float, pu_power: float, floor=0.0) -> float:
    """PU sum-rate sum_s log(1 + g_PU P_PU / (w_s + floor)), in nats."""
    denom = np.maximum(np.asarray(w, dtype=float) + floor, np.finfo(float).tiny)
    return float(np.log1p(pu_gain * pu_power / denom).sum(axis=-1))


def game_pu_rate(game: Game, p, gains=None) -> float:
    """PU rate with the receiver noise as the floor on the SU interference."""
    g = game.gains if gains is None else gains
    return pu_rate(aggregate_interference(g, p), game.pu_gain, game.pu_power, game.noise)


def operator_revenue(game: Game, p, gains=None) -> float:
    """K * pi_0 + sum_k pi_k: every user pays the flat price."""
    g = game.gains if gains is None else gains
    w = aggregate_interference(g, p)
    flat = float(pricing.flat_value(game.pricing, w, game.i_max))
    user = float(pricing.user_values(game.pricing, p, g, game.i_max).sum())
    return game.num_users * flat + user


def snapshot(game: Game, p, gains=None) -> GameSnapshot:
    g = game.gains if gains is None else gains
    p = np.asarray(p, dtype=float)
    sinr = compute_sinr(g, p, game.noise)
    r = np.log1p(sinr).sum(axis=-1)
    c = costs(game, p, g)
    return GameSnapshot(
        sinr=sinr,
        w=aggregate_interference(g, p),
        rates=r,
        costs=c,
        utilities=r - c,
        potential=potential(game, p, g),
    )


def ergodic_potential_estimate(game: Game, p, fading, n_samples: int, batch: int = 4096):
    """Monte-Carlo estimate of the ergodic potential and its standard error.

    Draws ``n_samples`` fresh realizations from ``fading`` (anything with a
    ``draw(size)`` method, e.g. :class:`crgame.channel.FadingProcess`).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    vals = []
    left = n_samples
    while left > 0:
        m = min(batch, left)
        vals.append(np.atleast_1d(potential(game, p, fading.draw(m))))
        left -= m
    v = np.concatenate(vals)
    stderr = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), stderr


def sampled_potential(game: Game, p, samples) -> float:
    """Sample-average potential over a fixed N x K x S batch of gains."""
    return float(np.mean(potential(game, p, samples)))


def sampled_potential_grad(game: Game, p, samples) -> np.ndarray:
    return marginal_utilities(game, p, samples).mean(axis=0)


def snapshot_row(game: Game, p, iteration: int, gains=None) -> dict:
    """One flat CSV row: iteration, V, per-user rate/cost/utility, per-subcarrier w and Psi."""
    snap = snapshot(game, p, gains)
    row = {"iteration": int(iteration), "potential": snap.potential}
    for k in range(snap.rates.shape[0]):
        row[f"rate_{k}"] = float(snap.rates[k])
        row[f"cost_{k}"] = float(snap.costs[k])
        row[f"utility_{k}"] = float(snap.utilities[k])
    for s in range(snap.w.shape[0]):
        row[f"w_{s}"] = float(snap.w[s])
        row[f"psi_{s}"] = float(snap.w[s] / game.i_max[s])
    return row
