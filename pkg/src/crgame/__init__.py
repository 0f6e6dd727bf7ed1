"""Priced multi-carrier power allocation for cognitive-radio uplinks.

Game model, exponential-learning dynamics, an optimization oracle for
certifying equilibria and experiment drivers.
"""

from .units import NetworkConfig, PricingSpec, dbm_to_watt, load_scenario, noise_power, watt_to_dbm
from .channel import ChannelRealization, FadingProcess, generate_channel
from .game import Game, potential, marginal_utilities
from .learning import PowerLaw, Constant, STC, run, gibbs_map

__version__ = "0.1.0"
