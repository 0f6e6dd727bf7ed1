import numpy as np
import pytest

from crgame.game import Game
from crgame.units import PricingSpec

MODELS = ("none", "lp", "vp")


def random_game(rng, K=None, S=None, flat=None, user=None, lam0=None, lamk=None,
                noise=None, i_max=None, max_power=None, gain_range=(0.2, 2.0)):
    """A random game in normalized units (P, sigma^2, I of order one)."""
    K = K or int(rng.integers(1, 6))
    S = S or int(rng.integers(1, 6))
    flat = flat or MODELS[rng.integers(3)]
    user = user or MODELS[rng.integers(3)]
    spec = PricingSpec(
        flat_model=flat,
        user_model=user,
        lambda0=float(rng.uniform(0.05, 2.0)) if lam0 is None else lam0,
        lambda_k=rng.uniform(0.05, 1.0, K) if lamk is None else lamk,
    )
    return Game(
        gains=rng.uniform(*gain_range, (K, S)),
        noise=rng.uniform(0.1, 1.0, S) if noise is None else noise,
        max_power=rng.uniform(0.5, 2.0, K) if max_power is None else max_power,
        i_max=rng.uniform(0.5, 2.0, S) if i_max is None else i_max,
        pricing=spec,
        pu_gain=1.0,
        pu_power=1.0,
    )


def random_profile(rng, game, n=None, interior=False):
    """Feasible profile(s): rows drawn from a Dirichlet over the lifted simplex."""
    K, S = game.gains.shape
    size = (K,) if n is None else (n, K)
    z = rng.dirichlet(np.ones(S + 1), size=size)[..., :S]
    if interior:
        z = 0.98 * z + 0.01 / (S + 1)
    return z * game.max_power[:, None]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
