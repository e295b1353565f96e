"""Transmit precoders and common-rate split for fixed RIS phases.

Block-coordinate WMMSE: MMSE equalizers and MSE weights are updated in
closed form, then a convex program in ``(P, F, x)`` is solved with the sum
harvested-energy constraint linearized around the previous precoders.

The augmented-MSE objective used inside the convex program is the natural-log
WMMSE form rescaled to bits,

    r(w, e) = (1 - w e + ln w) / ln 2  <=  log2(1 / e),

which is a lower bound on the rate for *any* weight and tight at
``w = 1 / e_mmse``. With this bound the common-rate split returned by the
solver is always decodable and the WSR ascends monotonically.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _csv
from .conic import Affine, ConicProgram, hstack, vdot
from .metrics import (
    StreamLayout,
    TransmitDesign,
    check_feasibility,
    common_rate_bound,
    design_wsr,
    received_powers,
    repair_common_rates,
    sum_energy,
)
from .scenario import ChannelSet, ScenarioConfig, effective_channels

__all__ = [
    "InfeasibleError",
    "EqualizerWeights",
    "BeamformingResult",
    "mmse_update",
    "mse_values",
    "augmented_mse",
    "rate_minorant",
    "energy_taylor_bound",
    "wmmse_value",
    "initial_design",
    "build_beamforming_problem",
    "optimize_beamforming",
    "write_trace_csv",
]

log = logging.getLogger(__name__)
LN2 = math.log(2.0)
MONOTONE_SLACK = 1e-9


class InfeasibleError(RuntimeError):
    """The energy constraint cannot be met from the given starting point."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class EqualizerWeights:
    common_eq: np.ndarray       # g_{c,k}
    private_eq: np.ndarray      # g_k
    common_weight: np.ndarray   # w_{c,k}
    private_weight: np.ndarray  # w_k


def _terms(h, design, noise):
    gains = received_powers(h, design.info_precoders)    # (K, K+1)
    amp_c = np.conj(h) @ design.p_common
    amp_p = np.diag(np.conj(h) @ design.p_private)
    total_private = gains[:, 1:].sum(axis=1)
    t_common = gains[:, 0] + total_private + noise
    t_private = total_private + noise
    return amp_c, amp_p, t_common, t_private


def mmse_update(h: np.ndarray, design: TransmitDesign, noise) -> EqualizerWeights:
    noise = np.broadcast_to(np.asarray(noise, float), (h.shape[0],))
    amp_c, amp_p, t_c, t_p = _terms(h, design, noise)
    if np.any(t_c <= 0) or np.any(t_p <= 0):
        raise ValueError("received power plus noise must be positive")
    eps_c = 1.0 - np.abs(amp_c) ** 2 / t_c
    eps_p = 1.0 - np.abs(amp_p) ** 2 / t_p
    return EqualizerWeights(
        common_eq=np.conj(amp_c) / t_c,
        private_eq=np.conj(amp_p) / t_p,
        common_weight=1.0 / eps_c,
        private_weight=1.0 / eps_p,
    )


def mse_values(h: np.ndarray, design: TransmitDesign, eq: EqualizerWeights, noise):
    """Common and private MSEs ``(e_c, e_p)`` for arbitrary equalizers."""
    noise = np.broadcast_to(np.asarray(noise, float), (h.shape[0],))
    amp_c, amp_p, t_c, t_p = _terms(h, design, noise)
    e_c = np.abs(eq.common_eq) ** 2 * t_c - 2 * np.real(eq.common_eq * amp_c) + 1.0
    e_p = np.abs(eq.private_eq) ** 2 * t_p - 2 * np.real(eq.private_eq * amp_p) + 1.0
    return e_c, e_p


def augmented_mse(weight, mse):
    """``w e - log2 w``; equals ``1 - R`` at the MMSE equalizer and weight."""
    weight = np.asarray(weight, float)
    return weight * np.asarray(mse, float) - np.log2(weight)


def rate_minorant(weight, mse):
    weight = np.asarray(weight, float)
    return (1.0 - weight * np.asarray(mse, float) + np.log(weight)) / LN2


def energy_taylor_bound(p, p_anchor, g) -> float:
    """First-order lower bound of ``|g^H p|^2`` expanded at ``p_anchor``."""
    p, p_anchor, g = (np.asarray(v, dtype=complex) for v in (p, p_anchor, g))
    anchor_amp = np.vdot(g, p_anchor)
    return float(2 * np.real(np.conj(anchor_amp) * np.vdot(g, p)) - abs(anchor_amp) ** 2)


def wmmse_value(cfg: ScenarioConfig, h, design: TransmitDesign, eq: EqualizerWeights,
                layout: StreamLayout) -> float:
    """``sum_k u_k (X_k + 1 - r_k)`` with ``X = -c``; equals ``sum u - WSR`` at MMSE."""
    _, e_p = mse_values(h, design, eq, cfg.noise)
    bound = np.where(layout.private, rate_minorant(eq.private_weight, e_p), 0.0)
    return float(np.dot(cfg.weights, 1.0 - design.common_rates - bound))


def initial_design(cfg: ScenarioConfig, h: np.ndarray, g: np.ndarray, layout: StreamLayout,
                   margin: float = 1e-4) -> TransmitDesign:
    """Maximum-ratio starting point that meets the power and energy budgets.

    Information streams get MRT directions with equal power. Only when the
    harvested energy falls short is the smallest sufficient power fraction
    moved to energy beams matched to the ER channels (or, if those are too
    weak, to the dominant eigenvector of ``sum_j g_j g_j^H``).
    """
    K, Nt = h.shape
    J = g.shape[0]
    unit = lambda v: v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else np.ones(Nt) / np.sqrt(Nt)  # noqa: E731

    p_private = np.zeros((Nt, K), dtype=complex)
    for k in range(K):
        if layout.private[k]:
            p_private[:, k] = unit(h[k])
    p_common = np.zeros(Nt, dtype=complex)
    if layout.common:
        candidates = [k for k in range(K) if layout.share[k]] or list(range(K))
        strongest = max(candidates, key=lambda k: np.linalg.norm(h[k]))
        p_common = unit(h[strongest])
    n_info = int(layout.common) + int(sum(layout.private))
    info = TransmitDesign(p_common, p_private, np.zeros((Nt, J)), np.zeros(K)).scaled(
        math.sqrt(cfg.tx_power / n_info))

    e_th = cfg.energy_threshold * (1.0 + margin)
    e_info = sum_energy(g, info, cfg.conversion_efficiency)
    if cfg.energy_threshold == 0 or e_info >= e_th:
        design = info
    else:
        f = np.column_stack([unit(g[j]) for j in range(J)]) * math.sqrt(cfg.tx_power / J)
        energy = TransmitDesign(np.zeros(Nt), np.zeros((Nt, K)), f)
        e_energy = sum_energy(g, energy, cfg.conversion_efficiency)
        if e_energy < e_th:
            gram = sum(np.outer(g[j], np.conj(g[j])) for j in range(J))
            _, vecs = np.linalg.eigh(gram)
            f = np.zeros((Nt, J), dtype=complex)
            f[:, 0] = vecs[:, -1] * math.sqrt(cfg.tx_power)
            energy = TransmitDesign(np.zeros(Nt), np.zeros((Nt, K)), f)
            e_energy = sum_energy(g, energy, cfg.conversion_efficiency)
        if e_energy < cfg.energy_threshold:
            raise InfeasibleError(
                f"maximum harvestable energy {e_energy:.3e} W is below E_th={cfg.energy_threshold:.3e} W")
        rho = min(1.0, (e_th - e_info) / (e_energy - e_info))
        design = TransmitDesign(info.p_common * math.sqrt(1 - rho), info.p_private * math.sqrt(1 - rho),
                                energy.f_energy * math.sqrt(rho))
    bound = common_rate_bound(h, design, cfg.noise) if layout.common else 0.0
    c = np.zeros(K)
    if layout.common:
        shares = [k for k in range(K) if layout.share[k]]
        best = max(shares, key=lambda k: cfg.weights[k])
        c[best] = bound
    design.common_rates = repair_common_rates(c, bound, layout)
    return design


def build_beamforming_problem(cfg: ScenarioConfig, h: np.ndarray, g: np.ndarray, eq: EqualizerWeights,
                              anchor: TransmitDesign, layout: StreamLayout) -> ConicProgram:
    """Convex WMMSE subproblem in ``(P, F, x)`` with equalizers and weights fixed.

    Precoders are scaled by ``sqrt(P_t)`` internally: variable ``p_k`` holds
    ``p_k / sqrt(P_t)``. ``x = -c`` is in bits/s/Hz.
    """
    if anchor.power > cfg.tx_power * (1 + 1e-6):
        raise InfeasibleError("anchor violates the transmit power budget")
    K, Nt = h.shape
    J = g.shape[0]
    amp = math.sqrt(cfg.tx_power)
    noise = cfg.noise
    prog = ConicProgram("beamforming")

    p_c = prog.variable("p_c", Nt, is_complex=True) if layout.common else None
    p = [prog.variable(f"p_{k}", Nt, is_complex=True) if layout.private[k] else None for k in range(K)]
    f = [prog.variable(f"f_{j}", Nt, is_complex=True) for j in range(J)]
    x = prog.variable("x", K)
    t = prog.variable("t", K)

    streams = ([p_c] if p_c is not None else []) + [v for v in p if v is not None] + f
    prog.add_quad_le(hstack(streams), 1.0, name="power")
    for k in range(K):
        if not (layout.common and layout.share[k]):
            prog.add_eq(x[k], 0.0, name=f"x_fixed_{k}")
    prog.add_le(x, np.zeros(K), name="x_nonpositive")

    active = [i for i in range(K) if p[i] is not None]
    objective = Affine.constant(0.0)
    for k in range(K):
        if p[k] is None:
            prog.add_eq(t[k], 0.0, name=f"t_fixed_{k}")
            objective = objective + cfg.weights[k] * (x[k] + 1.0)
            continue
        sw = math.sqrt(eq.private_weight[k])
        gk = eq.private_eq[k]
        rows = [sw * (gk * amp * vdot(h[k], p[k]) - 1.0)]
        rows += [sw * gk * amp * vdot(h[k], p[i]) for i in active if i != k]
        rows.append(Affine.constant(sw * gk * math.sqrt(noise[k])))
        prog.add_quad_le(hstack(rows), t[k], name=f"mse_private_{k}")
        ln_w = math.log(eq.private_weight[k])
        objective = objective + cfg.weights[k] * (x[k] + 1.0 + (t[k] - 1.0 - ln_w) / LN2)
    prog.minimize(objective)

    if layout.common:
        x_sum = x.sum()
        for k in range(K):
            sw = math.sqrt(eq.common_weight[k])
            gk = eq.common_eq[k]
            rows = [sw * (gk * amp * vdot(h[k], p_c) - 1.0)]
            rows += [sw * gk * amp * vdot(h[k], p[i]) for i in active]
            rows.append(Affine.constant(sw * gk * math.sqrt(noise[k])))
            rhs = 1.0 + math.log(eq.common_weight[k]) + LN2 * x_sum
            prog.add_quad_le(hstack(rows), rhs, name=f"mse_common_{k}")

    if cfg.energy_threshold > 0 and J > 0:
        anchors = ([anchor.p_common] if layout.common else []) + \
                  [anchor.p_private[:, k] for k in active] + [anchor.f_energy[:, j] for j in range(J)]
        total = Affine.constant(0.0)
        for j in range(J):
            for var, p0 in zip(streams, anchors):
                v0 = np.vdot(g[j], p0)
                lin = (np.conj(v0) * amp * vdot(g[j], var)).real
                total = total + 2.0 * lin - abs(v0) ** 2
        prog.add_ge(cfg.conversion_efficiency * total / cfg.energy_threshold, 1.0, name="energy")
    return prog


def _design_from(cfg, result, layout, K, Nt, J) -> TransmitDesign:
    amp = math.sqrt(cfg.tx_power)
    a = result.assignment
    p_c = a["p_c"] * amp if layout.common else np.zeros(Nt)
    p = np.column_stack([a[f"p_{k}"] * amp if layout.private[k] else np.zeros(Nt) for k in range(K)])
    f = np.column_stack([a[f"f_{j}"] * amp for j in range(J)]) if J else np.zeros((Nt, 0))
    design = TransmitDesign(p_c, p, f, -a["x"])
    power = design.power
    if power > cfg.tx_power:
        design = design.scaled(math.sqrt(cfg.tx_power / power))
    return design


@dataclass
class BeamformingResult:
    design: TransmitDesign
    wsr: float
    converged: bool
    outer_iterations: int
    trace: list = field(default_factory=list)
    status: str = "converged"


def _layout_sanitized(design: TransmitDesign, layout: StreamLayout) -> TransmitDesign:
    d = design.copy()
    if not layout.common:
        d.p_common[:] = 0
    for k, on in enumerate(layout.private):
        if not on:
            d.p_private[:, k] = 0
    return d


def optimize_beamforming(cfg: ScenarioConfig, ch: ChannelSet, phases, init: TransmitDesign = None,
                         layout: StreamLayout = None) -> BeamformingResult:
    """Alternate MMSE updates and convex solves until the WSR settles.

    The inner loop re-linearizes the energy constraint until the WMMSE value
    changes by at most ``cfg.convergence_tol``; the outer loop refreshes
    equalizers and weights until the WSR does. The returned design is the
    best feasible iterate.
    """
    h, g = effective_channels(ch, phases)
    K, Nt = h.shape
    J = g.shape[0]
    layout = layout or StreamLayout.rsma(K)
    tol = cfg.convergence_tol
    settings = cfg.solver

    design = initial_design(cfg, h, g, layout) if init is None else _layout_sanitized(init, layout)
    if design.power > cfg.tx_power:
        design = design.scaled(math.sqrt(cfg.tx_power / design.power))
    bound = common_rate_bound(h, design, cfg.noise)
    design.common_rates = repair_common_rates(design.common_rates, bound, layout)
    report = check_feasibility(cfg, ch, phases, design)
    if not report.energy_ok:
        raise InfeasibleError("starting design violates the energy constraint", report)

    current = design_wsr(cfg, h, design, layout)
    trace = [dict(outer=0, inner=0, wmmse=float(np.sum(cfg.weights)) - current, wsr=current,
                  power=design.power, energy=sum_energy(g, design, cfg.conversion_efficiency))]
    converged = False
    status = "iteration_limit"
    m = 0
    for m in range(1, cfg.max_outer_iterations + 1):
        eq = mmse_update(h, design, cfg.noise)
        anchor = design
        wm_prev = wmmse_value(cfg, h, anchor, eq, layout)
        solved_any = False
        for n in range(1, cfg.max_inner_iterations + 1):
            prog = build_beamforming_problem(cfg, h, g, eq, anchor, layout)
            result = prog.solve(settings)
            if not result.optimal:
                if m == 1 and n == 1:
                    raise InfeasibleError(f"first beamforming subproblem returned {result.status}", report)
                log.debug("beamforming solve stopped with %s", result.status)
                break
            candidate = _design_from(cfg, result, layout, K, Nt, J)
            wm = wmmse_value(cfg, h, candidate, eq, layout)
            if wm > wm_prev + MONOTONE_SLACK * max(1.0, abs(wm_prev)):
                break
            solved_any = True
            step = abs(wm_prev - wm)
            anchor, wm_prev = candidate, wm
            if step <= tol:
                break
        if not solved_any:
            status = "stalled"
            break
        candidate = anchor
        candidate.common_rates = repair_common_rates(
            candidate.common_rates, common_rate_bound(h, candidate, cfg.noise), layout)
        value = design_wsr(cfg, h, candidate, layout)
        if value < current - MONOTONE_SLACK * max(1.0, abs(current)):
            status = "stalled"
            break
        if not check_feasibility(cfg, ch, phases, candidate).feasible:
            status = "stalled"
            break
        step = value - current
        design, current = candidate, value
        trace.append(dict(outer=m, inner=n, wmmse=wm_prev, wsr=value, power=design.power,
                          energy=sum_energy(g, design, cfg.conversion_efficiency)))
        if abs(step) <= tol:
            converged, status = True, "converged"
            break
    if status == "stalled":
        # no further progress possible within solver accuracy: a fixed point
        converged = True
    return BeamformingResult(design=design, wsr=current, converged=converged, outer_iterations=m,
                             trace=trace, status=status)


TRACE_COLUMNS = ("outer", "inner", "wmmse", "wsr", "power", "energy")


def write_trace_csv(path, trace) -> None:
    _csv.write_rows(path, trace, TRACE_COLUMNS)
