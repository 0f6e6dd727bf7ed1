"""Equilibrium certification independent of the learning dynamics.

Maximizers of the potential are exactly the Nash equilibria, so the tools
here attack the potential directly: projected ascent, exact per-user best
responses, a conic reformulation for the non-smooth VP prices, grid
search on tiny games and vertex enumeration for the potential's minimum.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import game as gm
from . import pricing

log = logging.getLogger(__name__)

VERTEX_ENUM_LIMIT = 2 ** 20
VERTEX_SAMPLES = 100_000
KINK_TOL = 1e-9
CONIC_SOLVERS = ("CLARABEL", "SCS")


class OracleError(RuntimeError):
    pass


@dataclass
class EquilibriumCertificate:
    p_star: np.ndarray
    V_star: float
    br_gap: np.ndarray
    kkt_residual: float
    method: str
    iterations: int = 0
    converged: bool = True


@dataclass
class EqlBounds:
    v_min: float
    v_max: float
    exact: bool
    argmin: np.ndarray
    certificate: EquilibriumCertificate | None = field(default=None, repr=False)

    def eql(self, v):
        return (np.asarray(v) - self.v_min) / (self.v_max - self.v_min)


# ---------------------------------------------------------------------------
# projections


def project_corner(z, cap=1.0):
    """Row-wise Euclidean projection onto {x >= 0, sum(x) <= cap}."""
    z = np.asarray(z, dtype=float)
    cap = np.broadcast_to(np.asarray(cap, dtype=float), z.shape[:-1])
    x = np.maximum(z, 0.0)
    over = x.sum(axis=-1) > cap
    if np.any(over):
        zo = z[over]
        co = cap[over][:, None]
        u = -np.sort(-zo, axis=-1)
        css = np.cumsum(u, axis=-1) - co
        j = np.arange(1, zo.shape[-1] + 1)
        cond = u - css / j > 0
        rho = zo.shape[-1] - 1 - np.argmax(cond[:, ::-1], axis=-1)
        theta = css[np.arange(len(rho)), rho] / (rho + 1)
        x[over] = np.maximum(zo - theta[:, None], 0.0)
    return x


# ---------------------------------------------------------------------------
# best responses


def _pieces_solution(mu, a, g, breaks, levels, cap):
    """sup{x in [0, cap] : f'(x) > mu} for f'(x) = g/(a + g x) - price step function."""
    with np.errstate(divide="ignore", invalid="ignore"):
        best = np.full(a.shape, np.inf)
        lowers = (np.zeros_like(a), breaks[..., 0], breaks[..., 1])
        for j in range(3):
            denom = mu + levels[..., j]
            root = np.where(denom > 0, 1.0 / denom - a / g, np.inf)
            best = np.minimum(best, np.maximum(root, lowers[j]))
    x = np.clip(best, 0.0, cap)
    return np.where(g > 0, x, 0.0)


def best_response(game: gm.Game, p, users=None) -> np.ndarray:
    """Exact best responses of ``users`` (default: all) to the current profile.

    Each user's problem separates across subcarriers except for the power
    budget; for a multiplier mu the per-subcarrier optimum has a closed form
    on every linear piece of the price, and mu is found by bisection.
    Rows of users not listed are copied from ``p``.
    """
    p = np.asarray(p, dtype=float)
    K, S = p.shape
    rows = np.arange(K) if users is None else np.atleast_1d(users)
    g = game.gains
    w = gm.aggregate_interference(g, p)
    others = (w[None, :] - g * p)[rows]
    others = np.maximum(others, 0.0)
    gr = g[rows]
    a = game.noise[None, :] + others
    breaks, levels = pricing.own_power_pieces(game.pricing, g, w[None, :] - g * p, game.i_max)
    breaks, levels = breaks[rows], levels[rows]
    cap = game.max_power[rows][:, None]

    x0 = _pieces_solution(0.0, a, gr, breaks, levels, cap)
    need = x0.sum(axis=1) > cap[:, 0] * (1 + 1e-15)
    out = x0
    if np.any(need):
        with np.errstate(divide="ignore", invalid="ignore"):
            slope0 = np.where(gr > 0, gr / a - levels[..., 0], -np.inf)
        hi = np.max(slope0, axis=1)[:, None] * 2.0 + 1e-300
        lo = np.zeros_like(hi)
        sub = need
        a_, g_, b_, l_, c_ = a[sub], gr[sub], breaks[sub], levels[sub], cap[sub]
        lo, hi = lo[sub], hi[sub]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            tot = _pieces_solution(mid, a_, g_, b_, l_, c_).sum(axis=1, keepdims=True)
            over = tot > c_
            lo = np.where(over, mid, lo)
            hi = np.where(over, hi, mid)
            if np.all(hi - lo <= 1e-15 * hi):
                break
        xs = _pieces_solution(hi, a_, g_, b_, l_, c_)
        scale = np.minimum(1.0, c_[:, 0] / np.maximum(xs.sum(axis=1), 1e-300))
        out = out.copy()
        out[sub] = xs * scale[:, None]
    result = p.copy()
    result[rows] = out
    return result


def _user_utility_with_row(game: gm.Game, p, k: int, row) -> float:
    q = p.copy()
    q[k] = row
    return float(gm.utilities(game, q)[k])


def best_response_gap(game: gm.Game, p) -> np.ndarray:
    """Per-user utility gain available from a unilateral deviation (>= 0 up to rounding)."""
    p = np.asarray(p, dtype=float)
    br = best_response(game, p)
    base = gm.utilities(game, p)
    return np.array([_user_utility_with_row(game, p, k, br[k]) - base[k]
                     for k in range(p.shape[0])])


# ---------------------------------------------------------------------------
# first-order certificate


def kkt_residual(game: gm.Game, p, normalized: bool = True) -> float:
    """Largest violation of the first-order conditions of potential maximization.

    Conditions per user k with budget multiplier mu_k >= 0:
    v_ks <= mu_k, p_ks (mu_k - v_ks) = 0 and mu_k (P_k - sum_s p_ks) = 0.
    Marginals are scaled by P_k when ``normalized`` so the residual is
    dimensionless; complementarity terms use p_ks / P_k. At VP kinks any
    marginal in the superdifferential is accepted, user by user.
    """
    p = np.asarray(p, dtype=float)
    v_lo, v_hi = gm.marginal_bounds(game, p, kink_band=KINK_TOL)
    if not normalized:
        v_lo = v_lo / game.max_power[:, None]
        v_hi = v_hi / game.max_power[:, None]
    return float(gm.stationarity_residual(v_lo, v_hi, p, game.max_power).max())


# ---------------------------------------------------------------------------
# maximization


def projected_ascent(value_grad: Callable, z0, tol: float = 1e-10, max_iter: int = 20_000,
                     memory: int = 10):
    """Spectral projected gradient ascent over a product of corner-of-cubes.

    ``value_grad(z)`` returns (f, grad) in normalized coordinates, where
    each row of z must satisfy z >= 0 and sum(z) <= 1. Uses a
    nonmonotone Armijo backtracking line search and Barzilai-Borwein step
    lengths. Stops when max|proj(z + grad) - z| <= tol.
    """
    z = project_corner(z0)
    f, grad = value_grad(z)
    hist = [f] * memory
    alpha = 1.0 / max(np.max(np.abs(grad)), 1e-12)
    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        res = np.max(np.abs(project_corner(z + grad) - z))
        if res <= tol:
            break
        d = project_corner(z + alpha * grad) - z
        slope = float(np.sum(grad * d))
        fref = max(hist)
        floor = 1e-15 * max(1.0, abs(f))     # increases below this are rounding noise
        t = 1.0
        while True:
            zn = z + t * d
            fn, gn = value_grad(zn)
            if np.isfinite(fn) and fn >= fref + 1e-4 * t * slope:
                break
            t *= 0.5
            if t * abs(slope) < floor:
                t = 0.0
                zn, fn, gn = z, f, grad
                break
        s = zn - z
        y = gn - grad
        sy = -float(np.sum(s * y))
        alpha = float(np.sum(s * s)) / sy if sy > 0 else alpha * 2.0
        alpha = min(max(alpha, 1e-14), 1e14)
        z, f, grad = zn, fn, gn
        hist = hist[1:] + [f]
        if t == 0.0:
            break
    return z, f, it, res


def _potential_value_grad(game: gm.Game):
    P = game.max_power[:, None]

    def fg(z):
        p = z * P
        return gm.potential(game, p), gm.marginal_utilities(game, p) * P

    return fg


def block_ascent(game: gm.Game, p, tol: float = 1e-12, max_sweeps: int = 2000):
    """Gauss-Seidel sweeps of exact best responses; V never decreases."""
    p = np.array(p, dtype=float)
    v = gm.potential(game, p)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for k in range(p.shape[0]):
            cand = best_response(game, p, users=[k])
            if gm.potential(game, cand) >= gm.potential(game, p):
                p = cand
        v_new = gm.potential(game, p)
        if v_new - v <= tol * max(1.0, abs(v_new)):
            v = v_new
            break
        v = v_new
    return p, v, sweeps


def conic_maximize(game: gm.Game, solver: str = "CLARABEL", samples=None) -> np.ndarray:
    """Solve the potential maximization as an exponential-cone program.

    Works in normalized variables x = p / P_k and u_s = w_s / I_s so the
    problem is well scaled whatever the physical units. Handles the VP
    kinks exactly through pos(). With ``samples`` (N x K x S gains) the
    objective is the sample-average potential. Requires cvxpy.
    """
    import cvxpy as cp

    spec = game.pricing
    K, S = game.gains.shape
    P = game.max_power
    G = game.gains[None] if samples is None else np.asarray(samples, dtype=float)
    N = G.shape[0]
    A = G * P[None, :, None] / game.i_max[None, None, :]
    x = cp.Variable((K, S), nonneg=True)
    lam = spec.user_lambdas(K)[:, None] * np.ones((1, S))
    obj = 0
    for s in range(S):
        u = A[:, :, s] @ x[:, s]                      # N realizations of w_s / I_s
        obj += cp.sum(cp.log(game.noise[s] / game.i_max[s] + u))
        if spec.flat_model == "lp":
            obj -= spec.lambda0 * cp.sum(u)
        elif spec.flat_model == "vp":
            obj -= spec.lambda0 * cp.sum(cp.pos(u - 1.0))
    if spec.user_model != "none":
        if spec.user_basis == "power":
            obj -= N * cp.sum(cp.multiply(lam * P[:, None], x))
        else:
            for n in range(N):
                q = cp.multiply(A[n], x)
                if spec.user_model == "lp":
                    obj -= cp.sum(cp.multiply(lam, q))
                else:
                    obj -= cp.sum(cp.multiply(lam, cp.pos(q - 1.0)))
    prob = cp.Problem(cp.Maximize(obj / N), [cp.sum(x, axis=1) <= 1.0])
    prob.solve(solver=solver)
    if x.value is None:
        raise OracleError(f"conic solver failed: {prob.status}")
    z = project_corner(np.asarray(x.value))
    return z * P[:, None]


def _has_kinks(game: gm.Game) -> bool:
    spec = game.pricing
    return (spec.flat_model == "vp" and spec.lambda0 > 0) or (
        spec.user_model == "vp" and np.any(spec.user_lambdas(game.num_users) > 0))


def certify(game: gm.Game, p, method: str = "given", iterations: int = 0,
            converged: bool = True) -> EquilibriumCertificate:
    p = np.asarray(p, dtype=float)
    return EquilibriumCertificate(
        p_star=p,
        V_star=gm.potential(game, p),
        br_gap=best_response_gap(game, p),
        kkt_residual=kkt_residual(game, p),
        method=method,
        iterations=iterations,
        converged=converged,
    )


def maximize_potential(game: gm.Game, tol: float = 1e-9, start=None, method: str = "auto",
                       max_iter: int = 20_000) -> EquilibriumCertificate:
    """Maximize the (concave) potential over the product of power polytopes.

    ``method``:
      * ``"pga"``   projected ascent (Armijo + BB) then best-response polish;
      * ``"conic"`` exponential-cone solve then best-response polish;
      * ``"auto"``  conic when VP prices introduce kinks, pga otherwise.

    The start point defaults to the uniform interior profile P_k/(S+1).
    Failure to reach ``tol`` (first-order residual) is reported in the
    certificate and logged, never silent.
    """
    K, S = game.gains.shape
    P = game.max_power[:, None]
    if start is None:
        start = np.ones((K, S)) * P / (S + 1)
    if method == "auto":
        method = "conic" if _has_kinks(game) else "pga"
    if method == "pga":
        z, _, iters, res = projected_ascent(_potential_value_grad(game), np.asarray(start) / P,
                                            tol=tol, max_iter=max_iter)
        p = z * P
    elif method == "conic":
        p = conic_maximize(game)
        iters = 1
    elif method == "bca":
        p, iters = np.asarray(start, dtype=float), 0
    else:
        raise ValueError(f"unknown method {method!r}")
    p, _, sweeps = block_ascent(game, p)
    cert = certify(game, p, method=method, iterations=iters + sweeps)
    cert.converged = bool(cert.kkt_residual <= max(tol, 1e-6) or np.max(cert.br_gap) <= tol)
    if not cert.converged:
        log.warning("potential maximization stopped with residual %.3g, max br gap %.3g",
                    cert.kkt_residual, np.max(cert.br_gap))
    return cert


def maximize_sampled_potential(game: gm.Game, samples, tol: float = 1e-9, start=None,
                               max_iter: int = 20_000, method: str = "auto",
                               polish_iter: int = 2000,
                               conic_samples: int = 1000) -> EquilibriumCertificate:
    """Maximize the sample-average (ergodic) potential over a fixed batch of gains.

    ``method="auto"`` solves the exponential-cone program on the first
    ``conic_samples`` draws (the cone count grows with the batch and the
    solve time with it) and then polishes on the whole batch with at most
    ``polish_iter`` projected-ascent steps. Plain projected ascent
    (``"pga"``) can crawl when one user's gain dwarfs the noise.
    """
    K, S = game.gains.shape
    P = game.max_power[:, None]
    samples = np.asarray(samples, dtype=float)

    def fg(z):
        p = z * P
        return gm.sampled_potential(game, p, samples), gm.sampled_potential_grad(game, p, samples) * P

    label, budget = "pga-saa", max_iter
    if method in ("auto", "conic") and start is None:
        for solver in CONIC_SOLVERS:
            try:
                start = conic_maximize(game, solver, samples=samples[:conic_samples])
                label, budget = f"conic-saa-{solver.lower()}", polish_iter
                break
            except Exception as exc:  # solver failures surface as several cvxpy types
                log.info("conic SAA solve with %s failed: %s", solver, exc)
        if start is None:
            if method == "conic":
                raise OracleError("every conic solver failed on the sample-average problem")
            log.warning("conic SAA solves failed; falling back to projected ascent")
    elif method not in ("auto", "conic", "pga"):
        raise ValueError(f"unknown method {method!r}")
    z0 = np.ones((K, S)) / (S + 1) if start is None else np.asarray(start) / P
    z, f, iters, res = projected_ascent(fg, z0, tol=tol, max_iter=budget)
    p = z * P
    return EquilibriumCertificate(p_star=p, V_star=f, br_gap=np.full(K, np.nan),
                                  kkt_residual=float(res), method=label, iterations=iters,
                                  converged=bool(res <= max(tol, 1e-6)))


# ---------------------------------------------------------------------------
# grids and vertices


def _compositions(n: int, S: int) -> np.ndarray:
    """All integer vectors a in N^S with sum(a) <= n."""
    out = [c for c in itertools.product(range(n + 1), repeat=S) if sum(c) <= n]
    return np.array(out, dtype=float)


def grid_size(K: int, S: int, levels: int) -> int:
    return math.comb(levels + S, S) ** K


def _grid_search(game: gm.Game, levels: int, max_points: float):
    """Maximize V over the joint grid.

    Profiles of the first K-1 users are enumerated. Given those, the last
    user's problem is a separable concave allocation of ``levels`` power
    units over the subcarriers, which greedy unit-by-unit allocation
    solves exactly on the grid.
    """
    K, S = game.gains.shape
    total = grid_size(K, S, levels)
    if total > max_points:
        raise OracleError(f"grid has {total:.3g} joint points (limit {max_points:.3g}); "
                          "use a coarser step or a smaller game")
    unit = _compositions(levels, S) / levels
    n = len(unit)
    rows = [unit * game.max_power[k] for k in range(K)]
    costs = []
    for k in range(K):
        z = np.zeros((n, K, S))
        z[:, k] = rows[k]
        costs.append(pricing.user_values(game.pricing, z, game.gains, game.i_max)[:, k])

    last = K - 1
    xs = np.arange(levels + 1) / levels * game.max_power[last]          # power per unit count
    z = np.zeros((levels + 1, K, S))
    z[:, last] = xs[:, None]
    last_cost = pricing.user_terms(game.pricing, z, game.gains, game.i_max)[:, last]  # (L+1) x S
    last_w = xs[:, None] * game.gains[last]                               # (L+1) x S

    best_val, best = -np.inf, None
    heads = itertools.product(*[range(n) for _ in range(K - 1)])
    chunk = 4096
    while True:
        batch = list(itertools.islice(heads, chunk))
        if not batch:
            break
        idx = np.array(batch, dtype=int).reshape(len(batch), K - 1)
        B = idx.shape[0]
        w_head = np.zeros((B, S))
        c_head = np.zeros(B)
        for k in range(K - 1):
            w_head += rows[k][idx[:, k]] * game.gains[k]
            c_head += costs[k][idx[:, k]]
        w = w_head[:, None, :] + last_w[None]                             # B x (L+1) x S
        table = (np.log(game.noise + w) - pricing.flat_terms(game.pricing, w, game.i_max)
                 - last_cost[None])
        counts = np.zeros((B, S), dtype=int)
        rb = np.arange(B)
        for _ in range(levels):
            nxt = np.minimum(counts + 1, levels)
            gain = (np.take_along_axis(table, nxt[:, None, :], 1)[:, 0]
                    - np.take_along_axis(table, counts[:, None, :], 1)[:, 0])
            s = np.argmax(gain, axis=1)
            ok = gain[rb, s] > 0
            if not ok.any():
                break
            counts[rb[ok], s[ok]] += 1
        vals = np.take_along_axis(table, counts[:, None, :], 1)[:, 0].sum(axis=1) - c_head
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best = vals[i], (idx[i], counts[i])
        if K == 1:
            break
    head_idx, cnt = best
    p = np.zeros((K, S))
    for k in range(K - 1):
        p[k] = rows[k][head_idx[k]]
    p[last] = cnt / levels * game.max_power[last]
    return p, float(best_val)


def brute_force_ne(game: gm.Game, grid_step: float = 0.01, max_points: float = 5e7) -> np.ndarray:
    """Exhaustive grid maximizer of the potential.

    Each user's powers range over multiples of ``grid_step * P_k`` with
    total at most P_k. A step above 1 degenerates to the vertices of the
    power polytope.
    """
    if not grid_step > 0:
        raise ValueError("grid step must be positive")
    levels = max(1, int(round(1.0 / grid_step))) if grid_step <= 1 else 1
    p, _ = _grid_search(game, levels, max_points)
    return p


def grid_cell_tolerance(game: gm.Game, p, grid_step: float) -> float:
    """Largest potential change between a grid point and its feasible grid neighbours."""
    K, S = p.shape
    step = grid_step * game.max_power[:, None]
    v0 = gm.potential(game, p)
    worst = 0.0
    for moves in itertools.product((-1, 0, 1), repeat=K * S):
        q = p + np.reshape(moves, (K, S)) * step
        if np.any(q < -1e-15) or np.any(q.sum(axis=1) > game.max_power * (1 + 1e-12)):
            continue
        worst = max(worst, abs(gm.potential(game, np.maximum(q, 0.0)) - v0))
    return worst


def _vertex_profiles(choices, P, S):
    """Profiles where user k puts all power on subcarrier choices[k] (choice S = silent)."""
    choices = np.atleast_2d(choices)
    B, K = choices.shape
    prof = np.zeros((B, K, S + 1))
    np.put_along_axis(prof, choices[..., None], P[None, :, None] * np.ones((B, K, 1)), axis=2)
    return prof[..., :S]


def potential_minimum(game: gm.Game, rng=None, value_fn=None, enum_limit: int = VERTEX_ENUM_LIMIT,
                      n_samples: int = VERTEX_SAMPLES):
    """Minimum of the concave potential, attained at a vertex of the feasible set.

    Enumerates all (S+1)^K vertices when that is at most ``enum_limit``;
    otherwise evaluates ``n_samples`` random vertices plus the all-silent
    one and runs a vertex-exchange descent from the best of them. Returns
    (value, profile, exact).
    """
    K, S = game.gains.shape
    value_fn = value_fn or (lambda prof: gm.potential(game, prof))
    if (S + 1) ** K <= enum_limit:
        best_v, best_c = np.inf, None
        for block in _chunked(itertools.product(range(S + 1), repeat=K), 65536):
            c = np.array(block, dtype=int)
            vals = np.asarray(value_fn(_vertex_profiles(c, game.max_power, S)))
            i = int(np.argmin(vals))
            if vals[i] < best_v:
                best_v, best_c = float(vals[i]), c[i]
        return best_v, _vertex_profiles(best_c, game.max_power, S)[0], True

    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    c = rng.integers(0, S + 1, size=(n_samples, K))
    c[0] = S
    vals = np.concatenate([np.asarray(value_fn(_vertex_profiles(blk, game.max_power, S)))
                           for blk in np.array_split(c, max(1, n_samples // 8192))])
    order = np.argsort(vals)[:5]
    best_v, best_c = float(vals[order[0]]), c[order[0]].copy()
    for start in order:
        cur = c[start].copy()
        cur_v = float(vals[start])
        improved = True
        while improved:
            improved = False
            for k in range(K):
                trial = np.repeat(cur[None], S + 1, axis=0)
                trial[:, k] = np.arange(S + 1)
                tv = np.asarray(value_fn(_vertex_profiles(trial, game.max_power, S)))
                j = int(np.argmin(tv))
                if tv[j] < cur_v - 1e-15 * abs(cur_v):
                    cur_v, cur = float(tv[j]), trial[j]
                    improved = True
        if cur_v < best_v:
            best_v, best_c = cur_v, cur.copy()
    return best_v, _vertex_profiles(best_c, game.max_power, S)[0], False


def _chunked(it, n):
    while True:
        block = list(itertools.islice(it, n))
        if not block:
            return
        yield block


def potential_extrema_for_eql(game: gm.Game, rng=None, certificate=None) -> EqlBounds:
    """(V_min, V_max) for the equilibration level; ``exact`` is False when V_min was sampled."""
    cert = certificate or maximize_potential(game)
    v_min, arg, exact = potential_minimum(game, rng)
    if not exact:
        log.info("V_min from sampled vertices; EQL denominators are lower bounds")
    return EqlBounds(v_min=v_min, v_max=cert.V_star, exact=exact, argmin=arg, certificate=cert)


def verify_uniqueness(game: gm.Game, n_starts: int = 10, tol: float = 1e-10, rng=None,
                      method: str = "pga"):
    """Maximize from random interior starts and report the spread of the endpoints.

    Returns (max pairwise L-infinity distance, endpoints).
    """
    if n_starts < 2:
        raise ValueError("need at least two starts")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    K, S = game.gains.shape
    ends = []
    for _ in range(n_starts):
        z = rng.dirichlet(np.ones(S + 1), size=K)[:, :S]
        cert = maximize_potential(game, tol=tol, start=z * game.max_power[:, None], method=method)
        ends.append(cert.p_star)
    ends = np.array(ends)
    dist = 0.0
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            dist = max(dist, float(np.max(np.abs(ends[i] - ends[j]))))
    return dist, ends
