"""Channel gains: user placement, static path loss and Rayleigh fast fading.

The receiver sits at the centre of the square service area. Gains follow
a log-distance law g = c0 * d**(-alpha), optionally multiplied by a
unit-mean exponential draw (the power of a circular complex Gaussian).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .units import NetworkConfig, PathLossParams


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray  # K x S power gains |h_ks|^2
    pu_gain: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2:
            raise ValueError("gains must be a K x S matrix")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gains must be finite and nonnegative")
        if not (np.isfinite(self.pu_gain) and self.pu_gain >= 0):
            raise ValueError("PU gain must be finite and nonnegative")
        object.__setattr__(self, "gains", g)


class FadingProcess:
    """I.i.d. Rayleigh block fading around fixed large-scale gains.

    Each call to :meth:`sample` draws a fresh realization
    g_ks = mean_ks * e_ks with e_ks ~ Exp(1).
    """

    def __init__(self, mean_gains, rng=None, pu_gain: float = 0.0):
        mean_gains = np.asarray(mean_gains, dtype=float)
        if mean_gains.ndim != 2 or np.any(mean_gains < 0) or not np.all(np.isfinite(mean_gains)):
            raise ValueError("mean gains must be a finite nonnegative K x S matrix")
        self.mean_gains = mean_gains
        self.pu_gain = float(pu_gain)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def draw(self, size=None) -> np.ndarray:
        """Raw gain samples; ``size`` adds leading sample dimensions."""
        shape = self.mean_gains.shape if size is None else (*np.atleast_1d(size), *self.mean_gains.shape)
        return self.mean_gains * self.rng.standard_exponential(shape)

    def sample(self) -> ChannelRealization:
        return ChannelRealization(self.draw(), self.pu_gain)


def sample_fading(process: FadingProcess) -> ChannelRealization:
    return process.sample()


def place_users(rng, num_users: int, edge: float) -> np.ndarray:
    """K points drawn uniformly on the square [0, edge]^2."""
    if not edge > 0:
        raise ValueError(f"area edge must be positive, got {edge!r}")
    if num_users < 1:
        raise ValueError("need at least one user")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.uniform(0.0, edge, size=(num_users, 2))


def distances(positions, receiver) -> np.ndarray:
    return np.linalg.norm(np.asarray(positions, dtype=float) - np.asarray(receiver, dtype=float), axis=1)


def pathloss_gain(d, params: PathLossParams):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be strictly positive")
    out = params.reference_gain * d ** (-params.exponent)
    return float(out) if out.ndim == 0 else out


def pu_link_gain(d: float, params: PathLossParams) -> float:
    """Gain of the PU link at distance `d` from the receiver."""
    return pathloss_gain(d, params)


def static_gains(positions, params: PathLossParams, rng=None, num_subcarriers: int = 1,
                 receiver=None, pu_gain: float = 0.0) -> ChannelRealization:
    """Path-loss gains for users at `positions`, flat across subcarriers unless fading is on.

    Distances below ``params.min_distance`` are clipped up to it; an exact
    zero distance is rejected.
    """
    positions = np.asarray(positions, dtype=float)
    if receiver is None:
        receiver = np.zeros(2)
    d = distances(positions, receiver)
    if np.any(d <= 0):
        raise ValueError("a user sits exactly on the receiver")
    d = np.maximum(d, params.min_distance)
    mean = pathloss_gain(d, params)[:, None] * np.ones((1, num_subcarriers))
    if params.fading:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        mean = mean * rng.standard_exponential(mean.shape)
    return ChannelRealization(mean, pu_gain)


def generate_channel(config: NetworkConfig, seed=None) -> ChannelRealization:
    """Geometry + path loss for a scenario, reproducible from ``seed`` (default: the config seed)."""
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    pos = place_users(rng, config.num_users, config.area_edge)
    centre = np.full(2, config.area_edge / 2.0)
    return static_gains(pos, config.pathloss, rng, config.num_subcarriers, centre, config.pu_gain)


def fading_process(config: NetworkConfig, seed=None) -> FadingProcess:
    """Fast-fading process whose large-scale gains come from the scenario geometry.

    Geometry and fading draws use independent streams spawned from ``seed``.
    """
    seq = np.random.SeedSequence(config.rng_seed if seed is None else seed)
    geo_seq, fade_seq = seq.spawn(2)
    rng = np.random.default_rng(geo_seq)
    pos = place_users(rng, config.num_users, config.area_edge)
    centre = np.full(2, config.area_edge / 2.0)
    d = np.maximum(distances(pos, centre), config.pathloss.min_distance)
    mean = pathloss_gain(d, config.pathloss)[:, None] * np.ones((1, config.num_subcarriers))
    return FadingProcess(mean, np.random.default_rng(fade_seq), config.pu_gain)


def save_gains_csv(realization: ChannelRealization, path) -> None:
    """Rows = users, columns = subcarriers; a trailing comment line keeps the PU gain."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"s{s}" for s in range(realization.gains.shape[1])])
        for row in realization.gains:
            writer.writerow([repr(float(x)) for x in row])
        writer.writerow([f"# pu_gain={realization.pu_gain!r}"])


def load_gains_csv(path) -> ChannelRealization:
    rows, pu_gain = [], 0.0
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row and row[0].startswith("# pu_gain="):
                pu_gain = float(row[0].split("=", 1)[1])
            elif row:
                rows.append([float(x) for x in row])
    return ChannelRealization(np.array(rows), pu_gain)
