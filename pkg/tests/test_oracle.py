import numpy as np
import pytest

from conftest import random_game, random_profile
from crgame import game as gm
from crgame import oracle
from crgame.game import Game
from crgame.units import PricingSpec

NONE = PricingSpec()


def single_user(gains, noise, P=1.0, spec=NONE):
    g = np.atleast_2d(np.asarray(gains, dtype=float))
    return Game(g, np.asarray(noise, dtype=float), P, np.ones(g.shape[1]), spec)


# maximize_potential ---------------------------------------------------------

def test_single_user_single_carrier_uses_full_power():
    cert = oracle.maximize_potential(single_user([1.5], [0.3], P=2.0))
    assert cert.p_star[0, 0] == pytest.approx(2.0, abs=1e-9)
    assert cert.converged


def test_symmetric_two_carriers_split_evenly():
    cert = oracle.maximize_potential(single_user([1.0, 1.0], [0.5, 0.5]))
    np.testing.assert_allclose(cert.p_star, [[0.5, 0.5]], atol=1e-8)


@pytest.mark.parametrize("noise, expected", [
    ((0.1, 0.5), (0.7, 0.3)),      # water level 0.8
    ((0.1, 1.5), (1.0, 0.0)),      # second carrier stays dry
    ((0.2, 0.2), (0.5, 0.5)),
])
def test_water_filling_closed_form(noise, expected):
    cert = oracle.maximize_potential(single_user([1.0, 1.0], noise))
    np.testing.assert_allclose(cert.p_star[0], expected, atol=1e-7)


def test_water_filling_with_unequal_gains():
    g, noise = np.array([2.0, 0.5]), np.array([0.2, 0.1])
    floor = noise / g                                  # 0.1, 0.2
    level = (1.0 + floor.sum()) / 2                    # both carriers active
    cert = oracle.maximize_potential(single_user(g, noise))
    np.testing.assert_allclose(cert.p_star[0], level - floor, atol=1e-7)


def test_conic_and_projected_ascent_agree(rng):
    for _ in range(5):
        game = random_game(rng, K=3, S=3, flat="lp", user="lp")
        a = oracle.maximize_potential(game, method="pga")
        b = oracle.maximize_potential(game, method="conic")
        assert a.V_star == pytest.approx(b.V_star, abs=1e-9)


def test_vp_maximizer_is_certified(rng):
    for _ in range(5):
        game = random_game(rng, K=3, S=3, flat="vp", user="vp")
        cert = oracle.maximize_potential(game)
        assert cert.converged
        assert np.max(cert.br_gap) <= 1e-6
        assert gm.is_feasible(cert.p_star, game.max_power)


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        oracle.maximize_potential(single_user([1.0], [1.0]), method="newton")


# best_response_gap ----------------------------------------------------------

def test_gap_vanishes_at_the_maximizer(rng):
    for _ in range(10):
        game = random_game(rng, K=3, S=3)
        cert = oracle.maximize_potential(game)
        assert np.all(cert.br_gap <= 1e-6)
        assert np.all(cert.br_gap >= -1e-9)


def test_uniform_full_power_under_steep_lp_has_large_gaps(rng):
    game = random_game(rng, K=3, S=2, flat="lp", user="none", lam0=20.0,
                       noise=np.full(2, 0.1), i_max=np.ones(2))
    uniform = np.repeat(game.max_power[:, None] / 2, 2, axis=1)
    gaps = oracle.best_response_gap(game, uniform)
    assert np.all(gaps > 1.0)
    # the best response under a steep price is silence
    np.testing.assert_allclose(oracle.best_response(game, uniform), 0.0, atol=1e-12)


def test_single_user_gap_at_closed_form_optimum():
    game = single_user([1.0, 1.0], [0.1, 0.5])
    gap = oracle.best_response_gap(game, np.array([[0.7, 0.3]]))
    assert abs(gap[0]) <= 1e-12


def test_best_response_is_a_maximizer_of_own_utility(rng):
    for _ in range(20):
        game = random_game(rng, K=3, S=3)
        p = random_profile(rng, game)
        br = oracle.best_response(game, p)
        assert gm.is_feasible(br, game.max_power)
        base = [oracle._user_utility_with_row(game, p, k, br[k]) for k in range(3)]
        for _ in range(20):
            alt = random_profile(rng, game)
            for k in range(3):
                assert oracle._user_utility_with_row(game, p, k, alt[k]) <= base[k] + 1e-10


# kkt_residual ---------------------------------------------------------------

def test_residual_small_at_maximizer(rng):
    for _ in range(10):
        game = random_game(rng, K=3, S=3)
        assert oracle.maximize_potential(game).kkt_residual <= 1e-6


def test_residual_positive_at_random_profile(rng):
    game = random_game(rng, K=3, S=3, flat="lp", user="lp")
    assert oracle.kkt_residual(game, random_profile(rng, game, interior=True)) > 1e-4


def test_residual_of_silent_profile_is_largest_positive_marginal():
    game = single_user([1.0, 2.0], [1.0, 1.0])
    assert oracle.kkt_residual(game, np.zeros((1, 2))) == pytest.approx(2.0)
    assert oracle.kkt_residual(game, np.zeros((1, 2)), normalized=False) == pytest.approx(2.0)


def test_certificates_agree_on_near_optimal_profiles(rng):
    for _ in range(10):
        game = random_game(rng, K=3, S=3, flat="lp", user="lp")
        star = oracle.maximize_potential(game).p_star
        near = oracle.project_corner((star + 1e-9 * rng.standard_normal(star.shape))
                                     / game.max_power[:, None]) * game.max_power[:, None]
        far = random_profile(rng, game, interior=True)
        assert np.max(oracle.best_response_gap(game, near)) <= 1e-8
        assert oracle.kkt_residual(game, near) <= 1e-6
        assert np.max(oracle.best_response_gap(game, far)) > 1e-6
        assert oracle.kkt_residual(game, far) > 1e-4


# brute_force_ne -------------------------------------------------------------

def test_grid_single_user_single_carrier():
    p = oracle.brute_force_ne(single_user([1.0], [1.0]), grid_step=0.01)
    assert abs(p[0, 0] - 1.0) <= 0.01


def test_grid_matches_maximizer_within_one_cell(rng):
    for _ in range(10):
        K, S = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        game = random_game(rng, K=K, S=S)
        grid_p = oracle.brute_force_ne(game, grid_step=0.02)
        v_grid = gm.potential(game, grid_p)
        v_star = oracle.maximize_potential(game).V_star
        assert v_grid <= v_star + 1e-10
        assert v_star - v_grid <= oracle.grid_cell_tolerance(game, grid_p, 0.02) + 1e-12


def test_grid_agrees_with_exhaustive_enumeration(rng):
    game = random_game(rng, K=2, S=2)
    levels = 10
    unit = oracle._compositions(levels, 2) / levels
    best = -np.inf
    for a in unit:
        for b in unit:
            p = np.stack([a * game.max_power[0], b * game.max_power[1]])
            best = max(best, gm.potential(game, p))
    p = oracle.brute_force_ne(game, grid_step=0.1)
    assert gm.potential(game, p) == pytest.approx(best, abs=1e-12)


def test_coarse_grid_falls_back_to_vertices():
    game = single_user([1.0, 3.0], [1.0, 1.0])
    p = oracle.brute_force_ne(game, grid_step=2.0)
    np.testing.assert_allclose(p, [[0.0, 1.0]])


def test_oversized_grid_rejected():
    game = single_user(np.ones((4, 4)), np.ones(4))
    with pytest.raises(oracle.OracleError, match="joint points"):
        oracle.brute_force_ne(game, grid_step=0.01)


# potential extrema and EQL --------------------------------------------------

def test_extrema_single_user_single_carrier():
    game = single_user([2.0], [0.5])
    b = oracle.potential_extrema_for_eql(game)
    assert b.exact
    assert b.v_min == pytest.approx(np.log(0.5), abs=1e-12)
    assert b.v_max == pytest.approx(np.log(0.5 + 2.0), abs=1e-9)


def test_symmetric_minimum_at_silent_vertex():
    game = single_user([1.0, 1.0], [1.0, 1.0])
    b = oracle.potential_extrema_for_eql(game)
    np.testing.assert_allclose(b.argmin, 0.0)
    assert b.eql(b.v_max) == pytest.approx(1.0, abs=1e-12)


def test_eql_of_maximizer_is_one(rng):
    for _ in range(5):
        game = random_game(rng, K=3, S=3)
        b = oracle.potential_extrema_for_eql(game, rng=0)
        assert b.exact
        assert b.eql(gm.potential(game, b.certificate.p_star)) == pytest.approx(1.0, abs=1e-9)


def test_extrema_bound_random_profiles(rng):
    for _ in range(3):
        game = random_game(rng, K=3, S=3)
        b = oracle.potential_extrema_for_eql(game)
        v = gm.potential(game, random_profile(rng, game, n=10_000))
        assert np.all(v <= b.v_max + 1e-12)
        assert np.all(v >= b.v_min - 1e-12)


def test_sampled_minimum_is_flagged(rng):
    game = random_game(rng, K=3, S=3)
    v_exact, _, exact = oracle.potential_minimum(game)
    v_sampled, _, flagged = oracle.potential_minimum(game, rng=1, enum_limit=10, n_samples=200)
    assert exact and not flagged
    assert v_sampled >= v_exact - 1e-12


# uniqueness -----------------------------------------------------------------

def test_c1_instances_have_one_endpoint(rng):
    for _ in range(3):
        game = random_game(rng, K=3, S=3, flat="lp", user="lp")
        dist, ends = oracle.verify_uniqueness(game, n_starts=5, rng=1)
        assert ends.shape == (5, 3, 3)
        assert dist <= 1e-2 * game.max_power.min()


def test_single_user_is_unique(rng):
    game = random_game(rng, K=1, S=4, flat="vp", user="none")
    dist, _ = oracle.verify_uniqueness(game, n_starts=4, tol=1e-10, rng=2, method="auto")
    assert dist <= 1e-6


def test_degenerate_game_is_reported_not_raised():
    game = Game(np.ones((2, 2)), np.ones(2), np.ones(2), np.ones(2), NONE)
    dist, ends = oracle.verify_uniqueness(game, n_starts=4, rng=3)
    assert np.isfinite(dist) and dist >= 0
    v = [gm.potential(game, e) for e in ends]
    assert max(v) - min(v) <= 1e-9      # a flat set of maximizers, all optimal


def test_uniqueness_needs_two_starts():
    with pytest.raises(ValueError):
        oracle.verify_uniqueness(single_user([1.0], [1.0]), n_starts=1)


# ergodic ---------------------------------------------------------------------

def test_sampled_maximizer_with_point_mass_matches_static(rng):
    game = random_game(rng, K=2, S=3, flat="lp", user="none")
    samples = np.repeat(game.gains[None], 4, axis=0)
    a = oracle.maximize_sampled_potential(game, samples)
    b = oracle.maximize_potential(game)
    assert a.V_star == pytest.approx(b.V_star, abs=1e-8)
    assert a.converged


def test_sampled_maximizer_projected_ascent_fallback(rng):
    game = random_game(rng, K=2, S=2, flat="lp", user="none")
    samples = game.gains * rng.standard_exponential((50, 2, 2))
    a = oracle.maximize_sampled_potential(game, samples, method="pga")
    b = oracle.maximize_sampled_potential(game, samples)
    assert a.V_star == pytest.approx(b.V_star, abs=1e-8)
