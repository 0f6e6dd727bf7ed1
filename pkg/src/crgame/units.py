"""Unit conversions and scenario configuration.

Everything past this module works in linear units (Watt, dimensionless
gains); dBm only shows up in scenario documents and reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

PRICE_MODELS = ("none", "lp", "vp")
USER_BASES = ("interference", "power")


class ScenarioError(ValueError):
    """Raised when a scenario document is missing a field or holds a bad value."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def dbm_to_watt(x):
    """Convert dBm to Watt. Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"dBm value must be finite, got {x!r}")
    out = 10.0 ** (arr / 10.0) * 1e-3
    return float(out) if out.ndim == 0 else out


def watt_to_dbm(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"power must be positive and finite, got {x!r}")
    out = 10.0 * np.log10(arr * 1e3)
    return float(out) if out.ndim == 0 else out


def noise_power(psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over a band: PSD [dBm/Hz] integrated over `bandwidth_hz`."""
    if not bandwidth_hz > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz!r}")
    return dbm_to_watt(psd_dbm_hz + 10.0 * math.log10(bandwidth_hz))


@dataclass(frozen=True)
class PricingSpec:
    """Flat-rate (aggregate) and per-user price models.

    ``flat_model`` prices the aggregate interference w_s, ``user_model`` the
    individual one. ``user_basis`` selects what the per-user price charges:
    the user's own interference g_ks p_ks (default) or raw power p_ks
    (LP only).
    """

    flat_model: str = "none"
    user_model: str = "none"
    lambda0: float = 0.0
    lambda_k: Any = 0.0
    user_basis: str = "interference"

    def __post_init__(self):
        if self.flat_model not in PRICE_MODELS:
            raise ScenarioError("pricing.flat", f"unknown model {self.flat_model!r}")
        if self.user_model not in PRICE_MODELS:
            raise ScenarioError("pricing.user", f"unknown model {self.user_model!r}")
        if self.user_basis not in USER_BASES:
            raise ScenarioError("pricing.user_basis", f"unknown basis {self.user_basis!r}")
        if self.user_basis == "power" and self.user_model == "vp":
            raise ScenarioError("pricing.user_basis", "power basis supports only LP")
        if not (math.isfinite(self.lambda0) and self.lambda0 >= 0):
            raise ScenarioError("pricing.lambda0", "must be finite and >= 0")
        lk = np.asarray(self.lambda_k, dtype=float)
        if not np.all(np.isfinite(lk)) or np.any(lk < 0):
            raise ScenarioError("pricing.lambda_k", "must be finite and >= 0")

    def user_lambdas(self, num_users: int) -> np.ndarray:
        lk = np.asarray(self.lambda_k, dtype=float)
        if lk.ndim == 0:
            return np.full(num_users, float(lk))
        if lk.shape != (num_users,):
            raise ScenarioError("pricing.lambda_k", f"expected {num_users} values, got {lk.shape}")
        return lk.copy()


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss g = c0 * d**(-exponent), optional Rayleigh power fading."""

    exponent: float = 3.0
    reference_gain: float = 1.0
    fading: bool = False
    min_distance: float = 1.0


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    iterations: int = 2000
    step_schedule: Mapping[str, Any] = field(default_factory=lambda: {"kind": "power_law"})
    mode: str = "static"
    log_stride: int = 1


@dataclass(frozen=True)
class NetworkConfig:
    """A validated scenario in linear units.

    Per-user and per-subcarrier quantities are stored as arrays of length
    K and S respectively, even when the document gave a single value.
    """

    num_users: int
    num_subcarriers: int
    max_power: np.ndarray
    noise: np.ndarray
    i_max: np.ndarray
    pricing: PricingSpec
    pu_power: float
    pu_gain: float
    area_edge: float
    pathloss: PathLossParams = PathLossParams()
    rng_seed: int = 0
    run: RunSettings = RunSettings()

    def __post_init__(self):
        K, S = self.num_users, self.num_subcarriers
        if K < 1:
            raise ScenarioError("network.users", "need at least one user")
        if S < 1:
            raise ScenarioError("network.subcarriers", "need at least one subcarrier")
        for name, arr, n in (("max_power", self.max_power, K), ("noise", self.noise, S),
                             ("i_max", self.i_max, S)):
            if np.shape(arr) != (n,):
                raise ScenarioError(name, f"expected shape ({n},), got {np.shape(arr)}")
            if not np.all(np.isfinite(arr)) or np.any(np.asarray(arr) <= 0):
                raise ScenarioError(name, "must be strictly positive")
        if not self.pu_power > 0:
            raise ScenarioError("pu.power", "must be strictly positive")
        if not self.pu_gain >= 0:
            raise ScenarioError("pu.gain", "must be nonnegative")
        if not self.area_edge > 0:
            raise ScenarioError("network.area_m", "must be strictly positive")

    def replace(self, **changes) -> "NetworkConfig":
        import dataclasses

        return dataclasses.replace(self, **changes)


def free_space_gain(carrier_hz: float, distance_m: float = 1.0) -> float:
    """Friis free-space power gain (isotropic antennas) at `distance_m`."""
    wavelength = 299_792_458.0 / carrier_hz
    return (wavelength / (4.0 * math.pi * distance_m)) ** 2


DEFAULT_SCENARIO: dict = {
    "network": {"users": 10, "subcarriers": 10, "area_m": 200.0},
    "radio": {
        "max_power_dbm": 21.03,
        "noise_psd_dbm_hz": -173.0,
        "bandwidth_hz": 10930.0,
        "carrier_hz": 2.4e9,
        "pathloss_exponent": 3.0,
        "fading": False,
        "min_distance_m": 1.0,
    },
    "pu": {"power_dbm": 30.0, "distance_m": 50.0, "i_max_dbm": -70.0},
    "pricing": {"flat": "vp", "user": "none", "lambda0": 10.0, "lambda_k": 0.0},
    "run": {"seed": 0, "iterations": 2000, "step_schedule": {"kind": "power_law"}},
}


def _require(section: Mapping, key: str, where: str):
    if key not in section:
        raise ScenarioError(f"{where}.{key}", "missing required field")
    return section[key]


def _section(doc: Mapping, name: str) -> Mapping:
    sec = doc.get(name)
    if sec is None:
        raise ScenarioError(name, "missing required section")
    if not isinstance(sec, Mapping):
        raise ScenarioError(name, "must be a mapping")
    return sec


def _per_index(value, n: int, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ScenarioError(where, f"expected a scalar or {n} values")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(where, "must be finite")
    return arr


def config_from_dict(doc: Mapping) -> NetworkConfig:
    """Validate a parsed scenario document and convert it to linear units."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("<root>", "scenario must be a mapping")
    net = _section(doc, "network")
    radio = _section(doc, "radio")
    pu = _section(doc, "pu")
    pricing = doc.get("pricing", {}) or {}
    run = doc.get("run", {}) or {}

    K = int(_require(net, "users", "network"))
    S = int(_require(net, "subcarriers", "network"))
    if K < 1:
        raise ScenarioError("network.users", "need at least one user")
    if S < 1:
        raise ScenarioError("network.subcarriers", "need at least one subcarrier")
    area = float(net.get("area_m", 200.0))

    max_power = dbm_to_watt(_per_index(_require(radio, "max_power_dbm", "radio"), K,
                                       "radio.max_power_dbm"))
    if "noise_dbm" in radio:
        noise = dbm_to_watt(_per_index(radio["noise_dbm"], S, "radio.noise_dbm"))
    else:
        if "noise_psd_dbm_hz" not in radio:
            raise ScenarioError("radio.noise_psd_dbm_hz", "missing noise specification "
                                "(give noise_psd_dbm_hz + bandwidth_hz or noise_dbm)")
        bw = float(_require(radio, "bandwidth_hz", "radio"))
        if not bw > 0:
            raise ScenarioError("radio.bandwidth_hz", "must be strictly positive")
        psd = _per_index(radio["noise_psd_dbm_hz"], S, "radio.noise_psd_dbm_hz")
        noise = np.array([noise_power(x, bw) for x in psd])

    carrier = float(radio.get("carrier_hz", 2.4e9))
    if "reference_gain_db" in radio:
        c0 = 10.0 ** (float(radio["reference_gain_db"]) / 10.0)
    else:
        c0 = free_space_gain(carrier)
    pathloss = PathLossParams(
        exponent=float(radio.get("pathloss_exponent", 3.0)),
        reference_gain=c0,
        fading=bool(radio.get("fading", False)),
        min_distance=float(radio.get("min_distance_m", 1.0)),
    )
    if not pathloss.exponent > 0:
        raise ScenarioError("radio.pathloss_exponent", "must be strictly positive")
    if not pathloss.min_distance > 0:
        raise ScenarioError("radio.min_distance_m", "must be strictly positive")

    pu_power = dbm_to_watt(float(_require(pu, "power_dbm", "pu")))
    i_max = dbm_to_watt(_per_index(_require(pu, "i_max_dbm", "pu"), S, "pu.i_max_dbm"))
    if "gain_db" in pu:
        pu_gain = 10.0 ** (float(pu["gain_db"]) / 10.0)
    else:
        d = float(_require(pu, "distance_m", "pu"))
        if not d > 0:
            raise ScenarioError("pu.distance_m", "must be strictly positive")
        pu_gain = c0 * d ** (-pathloss.exponent)

    spec = PricingSpec(
        flat_model=str(pricing.get("flat", "none")).lower(),
        user_model=str(pricing.get("user", "none")).lower(),
        lambda0=float(pricing.get("lambda0", 0.0)),
        lambda_k=pricing.get("lambda_k", 0.0),
        user_basis=str(pricing.get("user_basis", "interference")).lower(),
    )
    spec.user_lambdas(K)

    settings = RunSettings(
        seed=int(run.get("seed", 0)),
        iterations=int(run.get("iterations", 2000)),
        step_schedule=dict(run.get("step_schedule", {"kind": "power_law"})),
        mode=str(run.get("mode", "static")),
        log_stride=int(run.get("log_stride", 1)),
    )
    if settings.iterations < 0:
        raise ScenarioError("run.iterations", "must be >= 0")
    if settings.mode not in ("static", "ergodic"):
        raise ScenarioError("run.mode", f"unknown mode {settings.mode!r}")

    return NetworkConfig(
        num_users=K,
        num_subcarriers=S,
        max_power=np.asarray(max_power, dtype=float),
        noise=np.asarray(noise, dtype=float),
        i_max=np.asarray(i_max, dtype=float),
        pricing=spec,
        pu_power=pu_power,
        pu_gain=float(pu_gain),
        area_edge=area,
        pathloss=pathloss,
        rng_seed=settings.seed,
        run=settings,
    )


def load_scenario(source) -> NetworkConfig:
    """Load a scenario from a YAML path, a YAML string or an already-parsed mapping."""
    if isinstance(source, Mapping):
        doc = source
    else:
        text = None
        if isinstance(source, Path):
            text = source.read_text()
        elif isinstance(source, str) and "\n" not in source and Path(source).is_file():
            text = Path(source).read_text()
        else:
            text = str(source)
        doc = yaml.safe_load(text)
    return config_from_dict(doc)


def default_scenario(**overrides) -> dict:
    """A deep copy of the default scenario with section-level overrides merged in.

    ``default_scenario(pricing={"flat": "lp", "lambda0": 1.0})`` updates only
    the given keys of the ``pricing`` section.
    """
    import copy

    doc = copy.deepcopy(DEFAULT_SCENARIO)
    for section, values in overrides.items():
        doc.setdefault(section, {})
        doc[section].update(copy.deepcopy(values))
    return doc
