"""Exact evaluation of rates, harvested energy, WSR and feasibility.

Channel arguments are effective channel *vectors* stacked row-wise, so the
received amplitude of precoder ``p`` at IR ``k`` is ``vdot(h[k], p)``.
Rates are in bits/s/Hz.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .scenario import ChannelSet, PhaseShifts, ScenarioConfig, effective_channels

__all__ = [
    "FEASIBILITY_TOL",
    "StreamLayout",
    "TransmitDesign",
    "FeasibilityReport",
    "SolutionSummary",
    "received_powers",
    "rate_private",
    "private_rates",
    "rate_common_at",
    "common_rates",
    "common_rate_bound",
    "harvested_energy",
    "harvested_energies",
    "sum_energy",
    "wsr",
    "design_wsr",
    "repair_common_rates",
    "check_feasibility",
    "summarize",
]

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class StreamLayout:
    """Which streams a multiple-access strategy may use.

    ``private[k]`` enables the private stream of IR ``k``; ``share[k]`` allows
    IR ``k`` a portion of the common rate. SDMA disables the common stream,
    two-user NOMA keeps only the strong IR's private stream and hands the
    whole common stream to the weak IR.
    """

    common: bool
    private: tuple
    share: tuple

    @classmethod
    def rsma(cls, K: int) -> "StreamLayout":
        return cls(True, (True,) * K, (True,) * K)

    @classmethod
    def sdma(cls, K: int) -> "StreamLayout":
        return cls(False, (True,) * K, (False,) * K)

    @classmethod
    def noma(cls, weak: int, K: int = 2) -> "StreamLayout":
        if K != 2:
            raise ValueError("NOMA is only supported for two IRs")
        return cls(True, tuple(k != weak for k in range(K)), tuple(k == weak for k in range(K)))


@dataclass
class TransmitDesign:
    p_common: np.ndarray                # (Nt,)
    p_private: np.ndarray               # (Nt, K), column k feeds IR k
    f_energy: np.ndarray                # (Nt, J)
    common_rates: np.ndarray = None     # (K,) bits/s/Hz

    def __post_init__(self):
        self.p_common = np.asarray(self.p_common, dtype=complex).reshape(-1)
        Nt = self.p_common.size
        self.p_private = np.asarray(self.p_private, dtype=complex).reshape(Nt, -1)
        self.f_energy = np.asarray(self.f_energy, dtype=complex).reshape(Nt, -1)
        K = self.p_private.shape[1]
        if self.common_rates is None:
            self.common_rates = np.zeros(K)
        self.common_rates = np.asarray(self.common_rates, dtype=float).reshape(K)

    @classmethod
    def zeros(cls, Nt: int, K: int, J: int) -> "TransmitDesign":
        return cls(np.zeros(Nt), np.zeros((Nt, K)), np.zeros((Nt, J)), np.zeros(K))

    @property
    def num_irs(self) -> int:
        return self.p_private.shape[1]

    @property
    def info_precoders(self) -> np.ndarray:
        """``P = [p_c, p_1, ..., p_K]``."""
        return np.column_stack([self.p_common, self.p_private])

    @property
    def all_precoders(self) -> np.ndarray:
        return np.column_stack([self.p_common, self.p_private, self.f_energy])

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.all_precoders) ** 2))

    def copy(self, **changes) -> "TransmitDesign":
        base = replace(self, p_common=self.p_common.copy(), p_private=self.p_private.copy(),
                       f_energy=self.f_energy.copy(), common_rates=self.common_rates.copy())
        return replace(base, **changes) if changes else base

    def scaled(self, factor: float) -> "TransmitDesign":
        return self.copy(p_common=self.p_common * factor, p_private=self.p_private * factor,
                         f_energy=self.f_energy * factor)

    def to_dict(self) -> dict:
        pair = lambda a: np.stack([a.real, a.imag], axis=-1).tolist()  # noqa: E731
        return {"p_common": pair(self.p_common), "p_private": pair(self.p_private),
                "f_energy": pair(self.f_energy), "common_rates": self.common_rates.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TransmitDesign":
        unpair = lambda v: np.asarray(v, float)[..., 0] + 1j * np.asarray(v, float)[..., 1]  # noqa: E731
        return cls(unpair(data["p_common"]), unpair(data["p_private"]),
                   unpair(data["f_energy"]) if len(data["f_energy"]) else np.zeros((len(data["p_common"]), 0)),
                   data["common_rates"])


def received_powers(h: np.ndarray, precoders: np.ndarray) -> np.ndarray:
    """``|h_k^H p_i|^2`` for every receiver row ``k`` and precoder column ``i``."""
    return np.abs(np.conj(h) @ precoders) ** 2


def rate_private(h: np.ndarray, design: TransmitDesign, k: int, noise) -> float:
    gains = received_powers(h[k:k + 1], design.p_private)[0]
    interference = gains.sum() - gains[k]
    return float(np.log2(1.0 + gains[k] / (interference + np.broadcast_to(noise, (h.shape[0],))[k])))


def private_rates(h: np.ndarray, design: TransmitDesign, noise) -> np.ndarray:
    noise = np.broadcast_to(np.asarray(noise, float), (h.shape[0],))
    gains = received_powers(h, design.p_private)
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return np.log2(1.0 + signal / (interference + noise))


def rate_common_at(h: np.ndarray, design: TransmitDesign, k: int, noise) -> float:
    return float(common_rates(h, design, noise)[k])


def common_rates(h: np.ndarray, design: TransmitDesign, noise) -> np.ndarray:
    """Per-IR common-stream rates ``R_{c,k}`` (all private streams interfere)."""
    noise = np.broadcast_to(np.asarray(noise, float), (h.shape[0],))
    signal = received_powers(h, design.p_common[:, None])[:, 0]
    interference = received_powers(h, design.p_private).sum(axis=1)
    return np.log2(1.0 + signal / (interference + noise))


def common_rate_bound(h: np.ndarray, design: TransmitDesign, noise) -> float:
    return float(np.min(common_rates(h, design, noise)))


def harvested_energies(g: np.ndarray, design: TransmitDesign, efficiency: float) -> np.ndarray:
    if g.shape[0] == 0:
        return np.zeros(0)
    return efficiency * received_powers(g, design.all_precoders).sum(axis=1)


def harvested_energy(g: np.ndarray, design: TransmitDesign, j: int, efficiency: float) -> float:
    return float(harvested_energies(g[j:j + 1], design, efficiency)[0])


def sum_energy(g: np.ndarray, design: TransmitDesign, efficiency: float) -> float:
    return float(np.sum(harvested_energies(g, design, efficiency)))


def wsr(weights, common, private) -> float:
    """Weighted sum-rate ``sum_k u_k (C_k + R_k)``."""
    return float(np.dot(np.asarray(weights, float), np.asarray(common, float) + np.asarray(private, float)))


def design_wsr(cfg: ScenarioConfig, h: np.ndarray, design: TransmitDesign, layout: StreamLayout = None) -> float:
    rates = private_rates(h, design, cfg.noise)
    if layout is not None:
        rates = np.where(layout.private, rates, 0.0)
    return wsr(cfg.weights, design.common_rates, rates)


def repair_common_rates(c, bound: float, layout: StreamLayout = None) -> np.ndarray:
    """Clip negatives, zero disallowed shares and scale down so ``sum(c) <= bound``."""
    c = np.maximum(np.asarray(c, dtype=float), 0.0)
    if layout is not None:
        c = np.where(layout.share, c, 0.0) if layout.common else np.zeros_like(c)
    total = c.sum()
    bound = max(float(bound), 0.0)
    if total > bound:
        c = c * (bound / total) if total > 0 else c
    return c


@dataclass
class FeasibilityReport:
    power_used: float
    power_ok: bool
    sum_energy: float
    energy_ok: bool
    common_rate_slack: np.ndarray
    common_ok: bool
    worst_violation: float

    @property
    def feasible(self) -> bool:
        return self.power_ok and self.energy_ok and self.common_ok


def check_feasibility(cfg: ScenarioConfig, ch: ChannelSet, phases, design: TransmitDesign,
                      tol: float = FEASIBILITY_TOL) -> FeasibilityReport:
    """Evaluate the power, energy, common-rate and sign constraints.

    Violations are measured relative to the constraint's own scale (``P_t``,
    ``E_th`` and ``max(R_{c,k}, 1)``), and each flag compares against ``tol``.
    """
    h, g = effective_channels(ch, phases)
    power = design.power
    power_violation = max(power - cfg.tx_power, 0.0) / cfg.tx_power

    energy = sum_energy(g, design, cfg.conversion_efficiency)
    if cfg.energy_threshold > 0:
        energy_violation = max(cfg.energy_threshold - energy, 0.0) / cfg.energy_threshold
    else:
        energy_violation = 0.0

    rc = common_rates(h, design, cfg.noise)
    slack = rc - design.common_rates.sum()
    common_violation = float(np.max(np.maximum(-slack, 0.0) / np.maximum(rc, 1.0)))
    sign_violation = float(np.max(np.maximum(-design.common_rates, 0.0), initial=0.0))
    common_violation = max(common_violation, sign_violation)

    worst = max(power_violation, energy_violation, common_violation)
    return FeasibilityReport(
        power_used=power,
        power_ok=power_violation <= tol,
        sum_energy=energy,
        energy_ok=energy_violation <= tol,
        common_rate_slack=slack,
        common_ok=common_violation <= tol,
        worst_violation=worst,
    )


@dataclass
class SolutionSummary:
    design: TransmitDesign
    phases: PhaseShifts
    private_rates: np.ndarray
    common_rates_at: np.ndarray
    total_rates: np.ndarray
    wsr: float
    energies: np.ndarray
    sum_energy: float
    weights: np.ndarray = field(default=None)

    def recomputed_wsr(self) -> float:
        return wsr(self.weights, self.design.common_rates, self.private_rates)


def summarize(cfg: ScenarioConfig, ch: ChannelSet, phases, design: TransmitDesign,
              layout: StreamLayout = None) -> SolutionSummary:
    h, g = effective_channels(ch, phases)
    rp = private_rates(h, design, cfg.noise)
    if layout is not None:
        rp = np.where(layout.private, rp, 0.0)
    q = harvested_energies(g, design, cfg.conversion_efficiency)
    if phases is None:
        phases = PhaseShifts.zeros(ch.num_ris_elements)
    return SolutionSummary(
        design=design,
        phases=phases,
        private_rates=rp,
        common_rates_at=common_rates(h, design, cfg.noise),
        total_rates=design.common_rates + rp,
        wsr=wsr(cfg.weights, design.common_rates, rp),
        energies=q,
        sum_energy=float(q.sum()),
        weights=cfg.weights,
    )
