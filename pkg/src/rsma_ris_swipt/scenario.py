"""Scenario configuration, geometry and random channel generation.

All powers are stored in watts. Decibel conversions happen only when a
configuration is parsed from a file (see :func:`load_config`).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .conic import SolverSettings

__all__ = [
    "PathLossExponents",
    "ScenarioConfig",
    "ChannelSet",
    "PhaseShifts",
    "path_loss",
    "db_to_linear",
    "dbm_to_watts",
    "generate_channels",
    "effective_channel",
    "effective_channels",
    "config_from_dict",
    "load_config",
    "config_hash",
]


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


def dbm_to_watts(value_dbm: float) -> float:
    return db_to_linear(value_dbm - 30.0)


def path_loss(distance, exponent: float, reference_gain: float):
    """Large-scale power gain ``L * d**(-alpha)``.

    ``distance`` may be a scalar or an array (metres); every entry must be
    strictly positive.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss requires strictly positive distances")
    if reference_gain <= 0:
        raise ValueError("reference gain must be positive")
    out = reference_gain * d ** (-float(exponent))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PathLossExponents:
    bs_ir: float = 2.0
    bs_er: float = 3.0
    bs_ris: float = 3.0
    ris_ir: float = 3.5
    ris_er: float = 1.5


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and algorithmic parameters of one SWIPT scenario.

    Defaults reproduce the simulation setup of the reference study with the
    transmit power interpreted as 10 dBW. ``noise_power`` and ``ir_weights``
    accept a scalar (broadcast to every IR) or a per-IR sequence.
    """

    num_tx_antennas: int = 2
    num_irs: int = 2
    num_ers: int = 2
    num_ris_elements: int = 8
    tx_power: float = 10.0
    energy_threshold: float = 20e-6
    conversion_efficiency: float = 0.5
    noise_power: Any = 1e-11
    ir_weights: Any = 1.0
    bs_position: tuple = (0.0, 0.0)
    ris_position: tuple = (1.0, 1.0)
    ir_region: tuple = ((20.0, 0.0), 1.0)
    er_region: tuple = ((1.0, 0.0), 0.1)
    path_loss_ref: float = 1e-3
    path_loss_exponents: PathLossExponents = field(default_factory=PathLossExponents)
    convergence_tol: float = 1e-3
    penalty_constant: float = 10.0
    rng_seed: int = 0
    max_ao_iterations: int = 30
    max_outer_iterations: int = 100
    max_inner_iterations: int = 50
    max_phase_iterations: int = 50
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        K = int(self.num_irs)
        noise = np.broadcast_to(np.asarray(self.noise_power, dtype=float), (K,))
        weights = np.broadcast_to(np.asarray(self.ir_weights, dtype=float), (K,))
        object.__setattr__(self, "noise_power", tuple(float(v) for v in noise))
        object.__setattr__(self, "ir_weights", tuple(float(v) for v in weights))
        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        object.__setattr__(self, "ris_position", tuple(float(v) for v in self.ris_position))
        for name in ("ir_region", "er_region"):
            center, radius = getattr(self, name)
            object.__setattr__(self, name, (tuple(float(v) for v in center), float(radius)))
        if isinstance(self.path_loss_exponents, Mapping):
            object.__setattr__(self, "path_loss_exponents", PathLossExponents(**self.path_loss_exponents))
        if isinstance(self.solver, Mapping):
            object.__setattr__(self, "solver", SolverSettings(**self.solver))
        self.validate()

    def validate(self) -> None:
        if self.num_tx_antennas < 1 or self.num_irs < 1:
            raise ValueError("need at least one transmit antenna and one IR")
        if self.num_ers < 0 or self.num_ris_elements < 0:
            raise ValueError("ER and RIS element counts must be nonnegative")
        if not self.tx_power > 0:
            raise ValueError("tx_power must be positive")
        if self.energy_threshold < 0:
            raise ValueError("energy_threshold must be nonnegative")
        if not 0.0 <= self.conversion_efficiency <= 1.0:
            raise ValueError("conversion_efficiency must lie in [0, 1]")
        if min(self.noise_power) <= 0 or min(self.ir_weights) <= 0:
            raise ValueError("noise powers and IR weights must be positive")
        if self.convergence_tol <= 0 or self.penalty_constant <= 0:
            raise ValueError("convergence_tol and penalty_constant must be positive")
        if self.num_ers == 0 and self.energy_threshold != 0:
            raise ValueError("energy_threshold must be 0 when there are no ERs")
        if self.ir_region[1] < 0 or self.er_region[1] < 0:
            raise ValueError("region radii must be nonnegative")

    @property
    def noise(self) -> np.ndarray:
        return np.asarray(self.noise_power)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.ir_weights)

    def replace(self, **changes) -> "ScenarioConfig":
        if "num_irs" in changes:
            # per-IR tuples must follow the new K unless given explicitly
            changes.setdefault("noise_power", self.noise_power[0])
            changes.setdefault("ir_weights", self.ir_weights[0])
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class PhaseShifts:
    """RIS reflection coefficients ``s_n = exp(j theta_n)``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.mod(np.asarray(self.theta, dtype=float).reshape(-1), 2 * np.pi)
        theta[theta >= 2 * np.pi] = 0.0     # mod rounds tiny negatives up to 2*pi
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def s(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @property
    def size(self) -> int:
        return self.theta.size

    @classmethod
    def from_coefficients(cls, s) -> "PhaseShifts":
        """Project arbitrary coefficients onto the unit circle."""
        s = np.asarray(s, dtype=complex).reshape(-1)
        return cls(np.where(np.abs(s) > 0, np.angle(s), 0.0))

    @classmethod
    def zeros(cls, n: int) -> "PhaseShifts":
        return cls(np.zeros(n))


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all direct and reflected channels.

    Rows hold channel *vectors* (not their Hermitian transposes): the
    effective channel of IR ``k`` is ``h_k^H = h_r[k]^H diag(s) H + h_d[k]^H``.
    """

    H: np.ndarray       # (N, Nt) BS -> RIS
    h_d: np.ndarray     # (K, Nt)
    g_d: np.ndarray     # (J, Nt)
    h_r: np.ndarray     # (K, N)
    g_r: np.ndarray     # (J, N)
    ir_positions: np.ndarray = None
    er_positions: np.ndarray = None

    def __post_init__(self):
        for name in ("H", "h_d", "g_d", "h_r", "g_r"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=complex)))
        K, Nt = self.h_d.shape
        N = self.H.shape[0]
        J = self.g_d.shape[0]
        if self.H.shape != (N, Nt) or self.h_r.shape != (K, N):
            raise ValueError("inconsistent IR / RIS channel dimensions")
        if self.g_d.shape != (J, Nt) or self.g_r.shape != (J, N):
            raise ValueError("inconsistent ER channel dimensions")
        for name, rows in (("ir_positions", K), ("er_positions", J)):
            pos = getattr(self, name)
            object.__setattr__(self, name, _frozen(np.zeros((rows, 2)) if pos is None else np.asarray(pos, float)))

    @property
    def num_tx_antennas(self) -> int:
        return self.h_d.shape[1]

    @property
    def num_irs(self) -> int:
        return self.h_d.shape[0]

    @property
    def num_ers(self) -> int:
        return self.g_d.shape[0]

    @property
    def num_ris_elements(self) -> int:
        return self.H.shape[0]

    def without_ris(self) -> "ChannelSet":
        Nt = self.num_tx_antennas
        return ChannelSet(
            H=np.zeros((0, Nt)),
            h_d=self.h_d,
            g_d=self.g_d,
            h_r=np.zeros((self.num_irs, 0)),
            g_r=np.zeros((self.num_ers, 0)),
            ir_positions=self.ir_positions,
            er_positions=self.er_positions,
        )


def _points_in_disk(rng, center, radius, count) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    phi = rng.uniform(0.0, 2 * np.pi, size=count)
    return np.asarray(center) + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def _rayleigh(rng, shape, gain) -> np.ndarray:
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return z * np.sqrt(gain)


def generate_channels(cfg: ScenarioConfig, realization_index: int = 0) -> ChannelSet:
    """Draw one i.i.d. Rayleigh realization scaled by the distance path loss.

    The generator is seeded by ``(cfg.rng_seed, realization_index)``, so the
    output is bit-identical across calls and processes.
    """
    rng = np.random.default_rng([int(cfg.rng_seed), int(realization_index)])
    K, J, N, Nt = cfg.num_irs, cfg.num_ers, cfg.num_ris_elements, cfg.num_tx_antennas
    alpha, L = cfg.path_loss_exponents, cfg.path_loss_ref
    bs, ris = np.asarray(cfg.bs_position), np.asarray(cfg.ris_position)

    ir_pos = _points_in_disk(rng, *cfg.ir_region, K)
    er_pos = _points_in_disk(rng, *cfg.er_region, J)

    def dist(a, b):
        return np.linalg.norm(np.atleast_2d(a) - b, axis=-1)

    H = _rayleigh(rng, (N, Nt), path_loss(np.linalg.norm(ris - bs), alpha.bs_ris, L)) if N else np.zeros((0, Nt))
    h_d = _rayleigh(rng, (K, Nt), path_loss(dist(ir_pos, bs), alpha.bs_ir, L)[:, None])
    g_d = _rayleigh(rng, (J, Nt), path_loss(dist(er_pos, bs), alpha.bs_er, L)[:, None]) if J else np.zeros((0, Nt))
    if N:
        h_r = _rayleigh(rng, (K, N), path_loss(dist(ir_pos, ris), alpha.ris_ir, L)[:, None])
        g_r = _rayleigh(rng, (J, N), path_loss(dist(er_pos, ris), alpha.ris_er, L)[:, None]) if J else np.zeros((0, N))
    else:
        h_r, g_r = np.zeros((K, 0)), np.zeros((J, 0))
    return ChannelSet(H=H, h_d=h_d, g_d=g_d, h_r=h_r, g_r=g_r, ir_positions=ir_pos, er_positions=er_pos)


def _coefficients(ch: ChannelSet, phases) -> np.ndarray:
    if phases is None:
        return np.zeros(ch.num_ris_elements, dtype=complex)
    s = phases.s if isinstance(phases, PhaseShifts) else np.asarray(phases, dtype=complex)
    if s.shape != (ch.num_ris_elements,):
        raise ValueError(f"expected {ch.num_ris_elements} reflection coefficients, got {s.shape}")
    return s


def effective_channels(ch: ChannelSet, phases=None) -> tuple[np.ndarray, np.ndarray]:
    """Effective IR and ER channel vectors, shapes ``(K, Nt)`` and ``(J, Nt)``.

    ``phases`` may be a :class:`PhaseShifts`, a raw coefficient vector (the
    relaxed ``|s_n| <= 1`` iterates) or ``None`` for no reflection.
    """
    s = _coefficients(ch, phases)
    # h_k = h_d + H^H diag(conj(s)) h_r  <=>  h_k^H = h_r^H diag(s) H + h_d^H
    h = ch.h_d + (ch.h_r * s.conj()) @ ch.H.conj()
    g = ch.g_d + (ch.g_r * s.conj()) @ ch.H.conj()
    return h, g


def effective_channel(ch: ChannelSet, phases, kind: str, index: int) -> np.ndarray:
    """Effective channel vector of a single receiver (``kind`` is 'ir' or 'er')."""
    count = {"ir": ch.num_irs, "er": ch.num_ers}.get(kind)
    if count is None:
        raise ValueError(f"unknown receiver kind {kind!r}")
    if not 0 <= index < count:
        raise IndexError(f"{kind} index {index} out of range")
    s = _coefficients(ch, phases)
    direct, reflected = (ch.h_d, ch.h_r) if kind == "ir" else (ch.g_d, ch.g_r)
    return direct[index] + ch.H.conj().T @ (s.conj() * reflected[index])


# ----------------------------------------------------------------------------
# configuration files

_LINK_KEYS = ("bs_ir", "bs_er", "bs_ris", "ris_ir", "ris_er")


def _pick_power(section: Mapping, stem: str, default):
    """Resolve a power given as ``<stem>_w``, ``<stem>_dbw``, ``<stem>_dbm`` or ``<stem>_uw``."""
    if f"{stem}_w" in section:
        return float(section[f"{stem}_w"])
    if f"{stem}_dbw" in section:
        return db_to_linear(section[f"{stem}_dbw"])
    if f"{stem}_dbm" in section:
        return dbm_to_watts(section[f"{stem}_dbm"])
    if f"{stem}_uw" in section:
        return float(section[f"{stem}_uw"]) / 1e6
    return default


def _reject_unknown(section: str, values: Mapping, allowed) -> None:
    unknown = set(values) - set(allowed)
    if unknown:
        raise KeyError(f"unknown {section} keys: {sorted(unknown)}")


def config_from_dict(data: Mapping) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from the nested file schema.

    Unknown sections or keys raise ``KeyError`` so typos do not pass silently.
    """
    known = {"system", "power", "geometry", "path_loss", "algorithm", "solver", "seed"}
    unknown = set(data) - known
    if unknown:
        raise KeyError(f"unknown config sections: {sorted(unknown)}")
    base = ScenarioConfig()
    kw: dict[str, Any] = {}

    system = dict(data.get("system", {}))
    for key, target in (("tx_antennas", "num_tx_antennas"), ("irs", "num_irs"),
                        ("ers", "num_ers"), ("ris_elements", "num_ris_elements")):
        if key in system:
            kw[target] = int(system.pop(key))
    if "ir_weights" in system:
        kw["ir_weights"] = system.pop("ir_weights")
    if system:
        raise KeyError(f"unknown system keys: {sorted(system)}")

    power = dict(data.get("power", {}))
    units = ("w", "dbw", "dbm", "uw")
    _reject_unknown("power", power, [f"{stem}_{u}" for stem in ("tx_power", "energy_threshold") for u in units]
                    + ["noise_dbm", "noise_w", "conversion_efficiency"])
    kw["tx_power"] = _pick_power(power, "tx_power", base.tx_power)
    kw["energy_threshold"] = _pick_power(power, "energy_threshold", base.energy_threshold)
    if any(k.startswith("noise") for k in power):
        if "noise_dbm" in power:
            noise = np.asarray(power["noise_dbm"], dtype=float)
            kw["noise_power"] = 10.0 ** ((noise - 30.0) / 10.0)
        else:
            kw["noise_power"] = power["noise_w"]
    if "conversion_efficiency" in power:
        kw["conversion_efficiency"] = float(power["conversion_efficiency"])

    geometry = data.get("geometry", {})
    _reject_unknown("geometry", geometry, ("bs_position", "ris_position", "ir_region", "er_region"))
    for key in ("bs_position", "ris_position"):
        if key in geometry:
            kw[key] = tuple(geometry[key])
    for key in ("ir_region", "er_region"):
        if key in geometry:
            region = geometry[key]
            kw[key] = (tuple(region["center"]), float(region["radius"]))

    pl = data.get("path_loss", {})
    _reject_unknown("path_loss", pl, ("ref_db", "exponents"))
    if "ref_db" in pl:
        kw["path_loss_ref"] = db_to_linear(pl["ref_db"])
    if "exponents" in pl:
        exps = pl["exponents"]
        bad = set(exps) - set(_LINK_KEYS)
        if bad:
            raise KeyError(f"unknown path-loss links: {sorted(bad)}")
        kw["path_loss_exponents"] = dataclasses.replace(base.path_loss_exponents, **exps)

    algo = data.get("algorithm", {})
    algo_keys = ("convergence_tol", "penalty_constant", "max_ao_iterations", "max_outer_iterations",
                 "max_inner_iterations", "max_phase_iterations")
    _reject_unknown("algorithm", algo, algo_keys)
    for key in algo_keys:
        if key in algo:
            kw[key] = type(getattr(base, key))(algo[key])
    if "solver" in data:
        kw["solver"] = dataclasses.replace(base.solver, **data["solver"])
    if "seed" in data:
        kw["rng_seed"] = int(data["seed"])
    if kw.get("num_ers", base.num_ers) == 0:
        kw["energy_threshold"] = 0.0
    if "num_irs" in kw:
        kw.setdefault("noise_power", base.noise_power[0])
        kw.setdefault("ir_weights", base.ir_weights[0])
    return ScenarioConfig(**{**{f.name: getattr(base, f.name) for f in dataclasses.fields(base)}, **kw})


def load_config(path) -> ScenarioConfig:
    import yaml

    with open(Path(path)) as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)
