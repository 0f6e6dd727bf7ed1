"""Flat-rate and per-user price functions.

Flat prices act on the aggregate interference w_s; per-user prices act on
a user's own charged quantity q_ks, which is g_ks * p_ks (interference
basis) or p_ks (power basis). Both LP and VP are convex and
non-decreasing. At a VP kink the derivative is taken from below (0).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .units import PricingSpec


class PriceEvaluation(NamedTuple):
    value: float
    grad: np.ndarray


def _lp_vp_value(model: str, ratio: np.ndarray) -> np.ndarray:
    if model == "lp":
        return ratio.sum(axis=-1)
    if model == "vp":
        return np.maximum(ratio - 1.0, 0.0).sum(axis=-1)
    return np.zeros(ratio.shape[:-1])


def _lp_vp_slope(model: str, ratio: np.ndarray) -> np.ndarray:
    """d/d(ratio) of the per-coordinate price, kink convention: 0 at ratio == 1."""
    if model == "lp":
        return np.ones_like(ratio)
    if model == "vp":
        return (ratio > 1.0).astype(float)
    return np.zeros_like(ratio)


def flat_value(spec: PricingSpec, w, i_max) -> np.ndarray:
    """pi_0(w); `w` may carry leading batch dimensions."""
    w = np.asarray(w, dtype=float)
    if spec.flat_model == "none" or spec.lambda0 == 0.0:
        return np.zeros(w.shape[:-1]) if w.ndim > 1 else 0.0
    return spec.lambda0 * _lp_vp_value(spec.flat_model, w / i_max)


def flat_terms(spec: PricingSpec, w, i_max) -> np.ndarray:
    """Per-subcarrier summands of pi_0 (the flat price is separable across subcarriers)."""
    w = np.asarray(w, dtype=float)
    if spec.flat_model == "none" or spec.lambda0 == 0.0:
        return np.zeros_like(w)
    ratio = w / i_max
    if spec.flat_model == "lp":
        return spec.lambda0 * ratio
    return spec.lambda0 * np.maximum(ratio - 1.0, 0.0)


def flat_grad(spec: PricingSpec, w, i_max) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if spec.flat_model == "none":
        return np.zeros_like(w)
    return spec.lambda0 * _lp_vp_slope(spec.flat_model, w / i_max) / i_max


def flat_price(spec: PricingSpec, w, i_max) -> PriceEvaluation:
    """Flat-rate price pi_0 and its gradient with respect to w."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("aggregate interference must be nonnegative")
    return PriceEvaluation(float(flat_value(spec, w, i_max)), flat_grad(spec, w, i_max))


def _charged(spec: PricingSpec, p, g):
    """Per-user charged quantity and its derivative with respect to own power."""
    if spec.user_basis == "power":
        return np.asarray(p, dtype=float), np.ones_like(np.asarray(g, dtype=float))
    g = np.asarray(g, dtype=float)
    return g * p, g


def _user_norm(spec: PricingSpec, i_max):
    # power-basis LP charges raw Watts: lambda_k * sum_s p_ks
    return 1.0 if spec.user_basis == "power" else i_max


def user_terms(spec: PricingSpec, p, g, i_max) -> np.ndarray:
    """Per-subcarrier summands of pi_k, shaped like `p` (K x S)."""
    p = np.asarray(p, dtype=float)
    if spec.user_model == "none":
        return np.zeros_like(p)
    lam = spec.user_lambdas(p.shape[-2])[:, None]
    q, _ = _charged(spec, p, g)
    ratio = q / _user_norm(spec, i_max)
    if spec.user_model == "lp":
        return lam * ratio
    return lam * np.maximum(ratio - 1.0, 0.0)


def user_values(spec: PricingSpec, p, g, i_max) -> np.ndarray:
    """pi_k(p_k) for every user; `p` and `g` are K x S."""
    p = np.asarray(p, dtype=float)
    lam = spec.user_lambdas(p.shape[-2])
    if spec.user_model == "none":
        return np.zeros(p.shape[:-1])
    q, _ = _charged(spec, p, g)
    return lam * _lp_vp_value(spec.user_model, q / _user_norm(spec, i_max))


def user_grads(spec: PricingSpec, p, g, i_max) -> np.ndarray:
    """d pi_k / d p_ks as a K x S matrix."""
    p = np.asarray(p, dtype=float)
    if spec.user_model == "none":
        return np.zeros_like(p)
    lam = spec.user_lambdas(p.shape[-2])
    q, dq = _charged(spec, p, g)
    norm = _user_norm(spec, i_max)
    return lam[:, None] * _lp_vp_slope(spec.user_model, q / norm) * dq / norm


def user_price(spec: PricingSpec, k: int, p_k, g_k, i_max) -> PriceEvaluation:
    """Per-user price of user `k` evaluated on its own power vector."""
    p_k = np.asarray(p_k, dtype=float)
    g_k = np.asarray(g_k, dtype=float)
    lk = np.asarray(spec.lambda_k, dtype=float)
    lam = float(lk) if lk.ndim == 0 else float(lk[k])
    if spec.user_model == "none" or lam == 0.0:
        return PriceEvaluation(0.0, np.zeros_like(p_k))
    q, dq = _charged(spec, p_k, g_k)
    norm = _user_norm(spec, i_max)
    ratio = q / norm
    value = lam * float(_lp_vp_value(spec.user_model, ratio))
    grad = lam * _lp_vp_slope(spec.user_model, ratio) * dq / norm
    return PriceEvaluation(value, grad)


def total_cost(spec: PricingSpec, k: int, p, g, i_max) -> float:
    """C_k(p) = pi_0(w(p)) + pi_k(p_k)."""
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    w = (g * p).sum(axis=0)
    return flat_price(spec, w, i_max).value + user_price(spec, k, p[k], g[k], i_max).value


def own_power_pieces(spec: PricingSpec, g, others, i_max):
    """Piecewise-constant price derivative seen by each user in its own power.

    For user k on subcarrier s with interference `others[k, s]` from the
    rest of the system, d C_k / d p_ks is a non-decreasing step function
    of p_ks with at most two jumps. Returns ``(breaks, levels)`` with
    shapes (K, S, 2) and (K, S, 3): the derivative equals ``levels[..., j]``
    on ``[breaks[..., j-1], breaks[..., j])`` (with breaks[-1] = 0 and
    breaks[2] = inf). Missing jumps sit at +inf.
    """
    g = np.asarray(g, dtype=float)
    K, S = g.shape
    base = np.zeros((K, S))
    kinks = np.full((K, S, 2), np.inf)
    jumps = np.zeros((K, S, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.flat_model == "lp":
            base += g * spec.lambda0 / i_max
        elif spec.flat_model == "vp" and spec.lambda0 > 0:
            slope = g * spec.lambda0 / i_max
            x = np.where(g > 0, (i_max - others) / g, np.inf)
            already = x <= 0
            base += np.where(already, slope, 0.0)
            kinks[..., 0] = np.where(already, np.inf, x)
            jumps[..., 0] = np.where(already, 0.0, slope)
        if spec.user_model != "none":
            lam = spec.user_lambdas(K)[:, None]
            if spec.user_basis == "power":
                base += lam * np.ones_like(g)
            else:
                slope = lam * g / i_max
                if spec.user_model == "lp":
                    base += slope
                else:
                    kinks[..., 1] = np.where(g > 0, i_max / np.where(g > 0, g, 1.0), np.inf)
                    jumps[..., 1] = slope
    order = np.argsort(kinks, axis=-1)
    breaks = np.take_along_axis(kinks, order, axis=-1)
    jumps = np.take_along_axis(jumps, order, axis=-1)
    levels = np.stack([base, base + jumps[..., 0], base + jumps[..., 0] + jumps[..., 1]], axis=-1)
    return breaks, levels


def uniqueness_conditions(spec: PricingSpec, g, noise, max_power, i_max) -> dict:
    """Check the two sufficient conditions for a unique equilibrium.

    ``c1``: every per-user price is strictly increasing in each argument.
    ``c2``: on every subcarrier the flat-price slope is either below
    1/(sigma^2 + sum_k g_ks P_k) everywhere or above 1/sigma^2 everywhere.
    """
    g = np.asarray(g, dtype=float)
    K, S = g.shape
    lam = spec.user_lambdas(K)
    if spec.user_model == "lp":
        coeff = np.ones_like(g) if spec.user_basis == "power" else g
        c1 = bool(np.all(lam > 0) and np.all(coeff > 0))
    else:
        c1 = False

    if spec.flat_model == "none" or spec.lambda0 == 0:
        slopes = [np.zeros(S)]
    elif spec.flat_model == "lp":
        slopes = [spec.lambda0 / i_max * np.ones(S)]
    else:
        slopes = [np.zeros(S), spec.lambda0 / i_max * np.ones(S)]
    gentle_cap = 1.0 / (noise + (g * max_power[:, None]).sum(axis=0))
    steep_floor = 1.0 / noise
    gentle = np.all([sl < gentle_cap for sl in slopes], axis=0)
    steep = np.all([sl > steep_floor for sl in slopes], axis=0)
    c2 = bool(np.all(gentle | steep))
    return {"c1": c1, "c2": c2, "gentle": gentle, "steep": steep}
