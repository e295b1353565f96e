"""RIS reflection coefficients and common-rate split for fixed precoders.

Penalized SCA on the relaxed coefficients ``|s_n| <= 1``: each received
amplitude is affine in ``s``, SINR constraints are split into
``signal >= beta * eta`` and ``interference + noise <= beta``, the bilinear
products and the harvested energy are linearized at the previous iterate,
and the unit-modulus requirement becomes a linearized reward for
``|s_n|^2``. The converged coefficients are projected onto the unit circle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _csv
from .beamforming import InfeasibleError
from .conic import Affine, ConicProgram, hstack
from .metrics import (
    StreamLayout,
    TransmitDesign,
    check_feasibility,
    common_rate_bound,
    design_wsr,
    private_rates,
    repair_common_rates,
    sum_energy,
)
from .scenario import ChannelSet, PhaseShifts, ScenarioConfig, effective_channels

__all__ = [
    "PhaseAuxiliaries",
    "PhaseAnchor",
    "PhaseResult",
    "assemble_auxiliaries",
    "energy_phase_bound",
    "signal_phase_bound",
    "bilinear_upper_bound",
    "anchor_from",
    "build_phase_problem",
    "phase_objective",
    "optimize_phases",
    "write_trace_csv",
]

log = logging.getLogger(__name__)
MONOTONE_SLACK = 1e-9
MODULUS_FLOOR = 0.99
MAX_PENALTY_RAISES = 3


@dataclass
class PhaseAuxiliaries:
    """Per-stream reflected and direct amplitudes, affine in ``s``.

    Stream order is ``[p_c, p_1..p_K, f_1..f_J]``. For IR ``k`` and stream
    ``i`` the received amplitude is ``vdot(a[k, i], s) + d[k, i]``; ERs use
    ``b`` and ``e`` likewise.
    """

    a: np.ndarray   # (K, S, N)
    d: np.ndarray   # (K, S)
    b: np.ndarray   # (J, S, N)
    e: np.ndarray   # (J, S)

    @property
    def a_common(self):
        return self.a[:, 0]

    def ir_amplitudes(self, s) -> np.ndarray:
        return np.einsum("ksn,n->ks", np.conj(self.a), s) + self.d

    def er_amplitudes(self, s) -> np.ndarray:
        return np.einsum("jsn,n->js", np.conj(self.b), s) + self.e


def assemble_auxiliaries(ch: ChannelSet, design: TransmitDesign, check: bool = True) -> PhaseAuxiliaries:
    W = design.all_precoders
    HW = ch.H @ W                                    # (N, S)
    # a_{k,i} = h_r,k * conj(H w_i) so that a^H s = h_r^H diag(s) H w_i
    a = ch.h_r[:, None, :] * np.conj(HW.T)[None]
    b = ch.g_r[:, None, :] * np.conj(HW.T)[None]
    d = np.conj(ch.h_d) @ W
    e = np.conj(ch.g_d) @ W
    aux = PhaseAuxiliaries(a=a, d=d, b=b, e=e)
    if check:
        probe = np.exp(1j * np.linspace(0.3, 2.9, ch.num_ris_elements))
        h, g = effective_channels(ch, probe)
        err = max(np.max(np.abs(aux.ir_amplitudes(probe) - np.conj(h) @ W), initial=0.0),
                  np.max(np.abs(aux.er_amplitudes(probe) - np.conj(g) @ W), initial=0.0))
        scale = max(np.max(np.abs(np.conj(h) @ W), initial=0.0), 1e-300)
        if err > 1e-10 * max(scale, 1.0):
            raise AssertionError(f"auxiliary amplitudes disagree with effective channels ({err:.2e})")
    return aux


def energy_phase_bound(b, direct, s, s_anchor) -> float:
    """Lower bound of ``|b^H s + direct|^2`` linearized at ``s_anchor``."""
    b, s, s_anchor = (np.asarray(v, dtype=complex) for v in (b, s, s_anchor))
    v0 = np.vdot(b, s_anchor) + direct
    return float(2 * np.real(np.conj(v0) * np.vdot(b, s)) - abs(np.vdot(b, s_anchor)) ** 2 + abs(direct) ** 2)


signal_phase_bound = energy_phase_bound


def bilinear_upper_bound(beta, eta, beta0, eta0) -> float:
    """Upper bound of ``beta * eta`` from linearizing ``-(beta - eta)^2`` at the anchor."""
    diff0 = beta0 - eta0
    return 0.25 * ((beta + eta) ** 2 - 2 * diff0 * (beta - eta) + diff0 ** 2)


def _lin_power(coef_conj_row, direct, s_expr, s0) -> Affine:
    """Affine minorant of ``|a^H s + d|^2`` at ``s0`` (``coef_conj_row = conj(a)``)."""
    reflected0 = complex(coef_conj_row @ s0)
    v0 = reflected0 + direct
    amp = coef_conj_row.reshape(1, -1) @ s_expr
    return 2.0 * (np.conj(v0) * amp).real - abs(reflected0) ** 2 + abs(direct) ** 2


@dataclass
class PhaseAnchor:
    s: np.ndarray
    c: np.ndarray
    eta: np.ndarray          # private SINRs
    beta: np.ndarray         # private interference + noise
    eta_t: float             # common SINR
    beta_t: np.ndarray       # common interference + noise, per IR


def anchor_from(cfg: ScenarioConfig, aux: PhaseAuxiliaries, s, c) -> PhaseAnchor:
    """Slacks set to the exact SINRs and interference levels at ``s``."""
    amps = np.abs(aux.ir_amplitudes(s)) ** 2       # (K, S)
    K = amps.shape[0]
    private = amps[:, 1:K + 1]
    signal = np.diag(private)
    beta = private.sum(axis=1) - signal + cfg.noise
    beta_t = private.sum(axis=1) + cfg.noise
    eta_t = float(np.min(amps[:, 0] / beta_t))
    return PhaseAnchor(s=np.asarray(s, complex), c=np.asarray(c, float), eta=signal / beta, beta=beta,
                       eta_t=eta_t, beta_t=beta_t)


def _active_streams(design: TransmitDesign, layout: StreamLayout):
    K = design.num_irs
    private = [k for k in range(K) if layout.private[k] and np.linalg.norm(design.p_private[:, k]) > 0]
    common = layout.common and np.linalg.norm(design.p_common) > 0 and any(layout.share)
    return private, common


def build_phase_problem(cfg: ScenarioConfig, aux: PhaseAuxiliaries, anchor: PhaseAnchor, design: TransmitDesign,
                        layout: StreamLayout, penalty: float) -> ConicProgram:
    """Convexified phase subproblem around ``anchor``.

    Slacks are normalized by their anchor values (``beta = beta0 * beta_hat``
    and ``eta = max(eta0, 1) * eta_hat``) so every variable is of order one.
    Common-stream interference gets one slack per IR; a single shared slack is
    a restriction of the same SINR constraint.
    """
    K = aux.a.shape[0]
    N = aux.a.shape[2]
    J = aux.b.shape[0]
    noise = cfg.noise
    s0 = anchor.s
    private, common = _active_streams(design, layout)
    prog = ConicProgram("phases")

    s = prog.variable("s", N, is_complex=True)
    eta = prog.variable("eta", K)
    beta = prog.variable("beta", K)
    eta_t = prog.variable("eta_t", 1)
    beta_t = prog.variable("beta_t", K)
    c = prog.variable("c", K)

    for n in range(N):
        prog.add_quad_le(s[n], 1.0, name=f"modulus_{n}")
    prog.add_ge(c, np.zeros(K), name="c_nonneg")
    prog.add_ge(eta, np.zeros(K), name="eta_nonneg")
    prog.add_ge(eta_t, 0.0, name="eta_t_nonneg")

    def amp(k, i):
        return np.conj(aux.a[k, i]).reshape(1, -1) @ s + aux.d[k, i]

    streams_private = [1 + i for i in range(K) if np.linalg.norm(design.p_private[:, i]) > 0]
    eta_scale = np.maximum(anchor.eta, 1.0)
    objective = Affine.constant(0.0)
    for k in range(K):
        if k not in private:
            prog.add_eq(eta[k], 0.0, name=f"eta_fixed_{k}")
            prog.add_eq(beta[k], 1.0, name=f"beta_fixed_{k}")
            continue
        b0 = anchor.beta[k]
        rows = [amp(k, i) / math.sqrt(b0) for i in streams_private if i != 1 + k]
        rows.append(Affine.constant(math.sqrt(noise[k] / b0)))
        prog.add_quad_le(hstack(rows), beta[k], name=f"interference_private_{k}")
        sig_scale = b0 * eta_scale[k]
        lin = _lin_power(np.conj(aux.a[k, 1 + k]), aux.d[k, 1 + k], s, s0) / sig_scale
        eh0 = anchor.eta[k] / eta_scale[k]
        diff0 = 1.0 - eh0
        rhs = lin + 0.5 * diff0 * (beta[k] - eta[k]) - 0.25 * diff0 ** 2
        prog.add_quad_le(0.5 * (beta[k] + eta[k]), rhs, name=f"signal_private_{k}")
        prog.add_log2_objective(cfg.weights[k], eta_scale[k] * eta[k], anchor=anchor.eta[k], name=f"rate_{k}")

    if common:
        et_scale = max(anchor.eta_t, 1.0)
        eth0 = anchor.eta_t / et_scale
        diff0 = 1.0 - eth0
        for k in range(K):
            b0 = anchor.beta_t[k]
            rows = [amp(k, i) / math.sqrt(b0) for i in streams_private]
            rows.append(Affine.constant(math.sqrt(noise[k] / b0)))
            prog.add_quad_le(hstack(rows), beta_t[k], name=f"interference_common_{k}")
            lin = _lin_power(np.conj(aux.a[k, 0]), aux.d[k, 0], s, s0) / (b0 * et_scale)
            rhs = lin + 0.5 * diff0 * (beta_t[k] - eta_t) - 0.25 * diff0 ** 2
            prog.add_quad_le(0.5 * (beta_t[k] + eta_t), rhs, name=f"signal_common_{k}")
        for k in range(K):
            if not layout.share[k]:
                prog.add_eq(c[k], 0.0, name=f"c_fixed_{k}")
        prog.add_log2_ge(et_scale * eta_t, c.sum(), anchor=anchor.eta_t, name="common_rate")
    else:
        prog.add_eq(c, np.zeros(K), name="c_fixed")
        prog.add_eq(eta_t, 0.0, name="eta_t_fixed")
        prog.add_eq(beta_t, np.ones(K), name="beta_t_fixed")

    if cfg.energy_threshold > 0 and J > 0:
        total = Affine.constant(0.0)
        for j in range(J):
            for i in range(aux.b.shape[1]):
                if np.any(aux.b[j, i]) or aux.e[j, i] != 0:
                    total = total + _lin_power(np.conj(aux.b[j, i]), aux.e[j, i], s, s0)
        prog.add_ge(cfg.conversion_efficiency * total / cfg.energy_threshold, 1.0, name="energy")

    objective = objective + (np.asarray(cfg.weights) @ c)
    # 2C sum_n Re(conj(s0_n) (s_n - s0_n))
    objective = objective + 2.0 * penalty * (np.conj(s0).reshape(1, -1) @ s).real - 2.0 * penalty * np.sum(np.abs(s0) ** 2)
    prog.maximize(objective)
    return prog


def phase_objective(cfg: ScenarioConfig, ch: ChannelSet, design: TransmitDesign, s, c, layout: StreamLayout) -> float:
    """Exact ``sum_k u_k (C_k + log2(1 + SINR_k))`` at coefficients ``s``."""
    h, _ = effective_channels(ch, s)
    rates = np.where(layout.private, private_rates(h, design, cfg.noise), 0.0)
    return float(np.dot(cfg.weights, np.asarray(c) + rates))


@dataclass
class PhaseResult:
    phases: PhaseShifts
    common_rates: np.ndarray
    wsr: float
    accepted: bool
    converged: bool
    iterations: int
    penalty: float
    trace: list = field(default_factory=list)
    relaxed: np.ndarray = None
    status: str = "converged"


def _sca_loop(cfg, ch, design, layout, aux, s_init, c_init, penalty):
    tol = cfg.convergence_tol
    s, c = np.asarray(s_init, complex), np.asarray(c_init, float)
    obj = phase_objective(cfg, ch, design, s, c, layout)
    energy_gap = lambda s_: sum_energy(effective_channels(ch, s_)[1], design, cfg.conversion_efficiency) \
        - cfg.energy_threshold  # noqa: E731
    trace = [dict(t=0, obj=obj, min_modulus=float(np.min(np.abs(s), initial=1.0)), energy_slack=energy_gap(s),
                  penalized=obj)]
    converged, status, t = False, "iteration_limit", 0
    for t in range(1, cfg.max_phase_iterations + 1):
        anchor = anchor_from(cfg, aux, s, c)
        prog = build_phase_problem(cfg, aux, anchor, design, layout, penalty)
        result = prog.solve(cfg.solver)
        if not result.optimal:
            status = "solver_failure" if t == 1 else "stalled"
            break
        s_new = result["s"]
        modulus = np.abs(s_new)
        s_new = np.where(modulus > 1.0, s_new / np.maximum(modulus, 1e-300), s_new)
        h_new = effective_channels(ch, s_new)[0]
        c_new = repair_common_rates(result["c"], common_rate_bound(h_new, design, cfg.noise), layout)
        obj_new = phase_objective(cfg, ch, design, s_new, c_new, layout)
        if obj_new < obj - MONOTONE_SLACK * max(1.0, abs(obj)) or energy_gap(s_new) < -1e-9 * cfg.energy_threshold:
            status = "stalled"
            break
        step = obj_new - obj
        s, c, obj = s_new, c_new, obj_new
        trace.append(dict(t=t, obj=obj, min_modulus=float(np.min(np.abs(s), initial=1.0)),
                          energy_slack=energy_gap(s), penalized=result.objective_value))
        if abs(step) <= tol:
            converged, status = True, "converged"
            break
    if status == "stalled":
        converged = True
    return s, c, converged, status, t, trace


def optimize_phases(cfg: ScenarioConfig, ch: ChannelSet, design: TransmitDesign, init: PhaseShifts,
                    layout: StreamLayout = None) -> PhaseResult:
    """Run the penalized SCA, project to unit modulus and keep the incumbent if worse.

    The returned ``PhaseResult.accepted`` is False when the projected
    solution violated the energy constraint or lowered the WSR; then the
    input phases and the design's own common-rate split are returned.
    """
    K = design.num_irs
    layout = layout or StreamLayout.rsma(K)
    if ch.num_ris_elements == 0:
        raise ValueError("phase optimization needs at least one RIS element")
    h0, _ = effective_channels(ch, init)
    incumbent_c = repair_common_rates(design.common_rates, common_rate_bound(h0, design, cfg.noise), layout)
    incumbent = design.copy(common_rates=incumbent_c)
    incumbent_wsr = design_wsr(cfg, h0, incumbent, layout)
    if not check_feasibility(cfg, ch, init, incumbent).energy_ok:
        raise InfeasibleError("initial phases violate the energy constraint")

    aux = assemble_auxiliaries(ch, design)
    penalty = cfg.penalty_constant
    for attempt in range(MAX_PENALTY_RAISES + 1):
        s, c, converged, status, iterations, trace = _sca_loop(cfg, ch, design, layout, aux, init.s, incumbent_c,
                                                               penalty)
        if np.min(np.abs(s), initial=1.0) >= MODULUS_FLOOR or attempt == MAX_PENALTY_RAISES:
            break
        log.debug("modulus %.3f below floor, raising penalty to %g", np.min(np.abs(s)), penalty * 10)
        penalty *= 10.0

    projected = PhaseShifts.from_coefficients(s)
    h1, _ = effective_channels(ch, projected)
    c1 = repair_common_rates(c, common_rate_bound(h1, design, cfg.noise), layout)
    candidate = design.copy(common_rates=c1)
    value = design_wsr(cfg, h1, candidate, layout)
    feasible = check_feasibility(cfg, ch, projected, candidate).feasible
    accepted = feasible and value >= incumbent_wsr - MONOTONE_SLACK * max(1.0, abs(incumbent_wsr))
    if not accepted:
        return PhaseResult(init, incumbent_c, incumbent_wsr, False, converged, iterations, penalty, trace,
                           relaxed=s, status="fallback")
    return PhaseResult(projected, c1, value, True, converged, iterations, penalty, trace, relaxed=s, status=status)


TRACE_COLUMNS = ("t", "obj", "min_modulus", "energy_slack", "penalized")


def write_trace_csv(path, trace) -> None:
    _csv.write_rows(path, trace, TRACE_COLUMNS)
