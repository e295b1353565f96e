"""Alternating optimization of precoders and RIS phases, and the six strategies."""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .beamforming import InfeasibleError, initial_design, optimize_beamforming
from .metrics import (
    FeasibilityReport,
    SolutionSummary,
    StreamLayout,
    TransmitDesign,
    check_feasibility,
    common_rate_bound,
    design_wsr,
    repair_common_rates,
    summarize,
)
from .phases import assemble_auxiliaries, optimize_phases
from .scenario import ChannelSet, PhaseShifts, ScenarioConfig, effective_channels

__all__ = [
    "Access",
    "Strategy",
    "ALL_STRATEGIES",
    "AORun",
    "strategy_layout",
    "initial_phases",
    "inject_common_stream",
    "gradient_phases",
    "run_ao",
    "run_strategies",
]

log = logging.getLogger(__name__)
MONOTONE_SLACK = 1e-9
INNER_TOL_FACTOR = 0.1


class Access(str, enum.Enum):
    RSMA = "RSMA"
    SDMA = "SDMA"
    NOMA = "NOMA"


@dataclass(frozen=True)
class Strategy:
    access: Access
    ris: bool

    @property
    def name(self) -> str:
        return self.access.value + ("+RIS" if self.ris else "")

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        text = text.strip().upper().replace(" ", "")
        base, _, suffix = text.partition("+")
        if suffix not in ("", "RIS"):
            raise ValueError(f"unknown strategy {text!r}")
        return cls(Access(base), suffix == "RIS")


ALL_STRATEGIES = tuple(Strategy.parse(n) for n in ("RSMA+RIS", "RSMA", "SDMA+RIS", "SDMA", "NOMA+RIS", "NOMA"))


def strategy_layout(strategy: Strategy, h: np.ndarray) -> StreamLayout:
    K = h.shape[0]
    if strategy.access is Access.RSMA:
        return StreamLayout.rsma(K)
    if strategy.access is Access.SDMA:
        return StreamLayout.sdma(K)
    if K != 2:
        raise ValueError("NOMA baseline requires exactly two IRs")
    weak = int(np.argmin(np.linalg.norm(h, axis=1)))
    return StreamLayout.noma(weak, K)


def initial_phases(cfg: ScenarioConfig, ch: ChannelSet, mode: str = "aligned", seed: int = None) -> PhaseShifts:
    """Starting RIS phases.

    ``zeros`` gives ``s = 1``; ``random`` draws i.i.d. uniform phases from
    ``seed`` (defaults to the scenario seed); ``aligned`` rotates every
    element so the BS-RIS-IR cascade of the strongest IR has zero phase
    under that IR's direct-channel MRT precoder; ``energy`` does the same for
    the strongest ER.
    """
    N = ch.num_ris_elements
    if mode == "zeros" or N == 0:
        return PhaseShifts.zeros(N)
    if mode == "random":
        rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
        return PhaseShifts(rng.uniform(0.0, 2 * np.pi, N))
    if mode in ("aligned", "energy"):
        direct, reflect = (ch.h_d, ch.h_r) if mode == "aligned" else (ch.g_d, ch.g_r)
        if direct.shape[0] == 0:
            return PhaseShifts.zeros(N)
        k = int(np.argmax(np.linalg.norm(direct, axis=1)))
        norm = np.linalg.norm(direct[k])
        p = direct[k] / norm if norm > 0 else np.conj(ch.H.T @ reflect[k]) / np.linalg.norm(ch.H.T @ reflect[k])
        cascade = np.conj(reflect[k]) * (ch.H @ p)
        return PhaseShifts(-np.angle(cascade))
    raise ValueError(f"unknown phase initialization {mode!r}")


def _rate_gradient(x: np.ndarray, signal: int, streams, noise: float) -> np.ndarray:
    """Wirtinger derivative of ``log2(1 + SINR)`` with respect to ``conj(x)``."""
    grad = np.zeros_like(x)
    total = float(np.sum(np.abs(x[streams]) ** 2)) + noise
    interference = total - abs(x[signal]) ** 2
    for i in streams:
        grad[i] = x[i] * (1.0 / total - (0.0 if i == signal else 1.0 / interference)) / math.log(2)
    return grad


def gradient_phases(cfg: ScenarioConfig, ch: ChannelSet, design: TransmitDesign, layout: StreamLayout) -> PhaseShifts:
    """Phases that make the reflected paths raise the WSR to first order.

    The WSR is linearized around the direct-link amplitudes of ``design``
    (as if the RIS were absent) and every element is rotated onto the
    gradient. Second-order interference leakage is ignored, which matters
    for near zero-forcing designs, so the phases are a warm start for a
    beamforming pass rather than an improvement on their own.
    """
    aux = assemble_auxiliaries(ch, design, check=False)
    K = design.num_irs
    private = [1 + k for k in range(K) if layout.private[k]]
    noise = cfg.noise
    grad = np.zeros(aux.d.shape, dtype=complex)
    for k in range(K):
        x = aux.d[k]
        if layout.private[k]:
            grad[k] += cfg.weights[k] * _rate_gradient(x, 1 + k, private, noise[k])
    if layout.common and np.any(design.p_common):
        weight = max(cfg.weights[k] for k in range(K) if layout.share[k])
        rc = [math.log2(1 + abs(aux.d[k, 0]) ** 2 / (np.sum(np.abs(aux.d[k, private]) ** 2) + noise[k]))
              for k in range(K)]
        k = int(np.argmin(rc))
        grad[k] += weight * _rate_gradient(aux.d[k], 0, [0] + private, noise[k])
    coeff = np.einsum("ks,ksn->n", np.conj(grad), np.conj(aux.a))
    return PhaseShifts(-np.angle(coeff))


def inject_common_stream(design: TransmitDesign, h: np.ndarray, fraction: float = 0.1) -> TransmitDesign:
    """Move a power fraction of an SDMA-type design into an MRT common stream.

    A common precoder of exactly zero is a fixed point of the MMSE updates,
    so a warm start from SDMA never activates rate splitting on its own.
    """
    K = h.shape[0]
    strongest = int(np.argmax(np.linalg.norm(h, axis=1)))
    info_power = float(np.sum(np.abs(design.info_precoders) ** 2))
    out = design.copy()
    out.p_private = design.p_private * math.sqrt(1.0 - fraction)
    out.p_common = design.p_common * math.sqrt(1.0 - fraction) + \
        h[strongest] / np.linalg.norm(h[strongest]) * math.sqrt(fraction * info_power)
    out.common_rates = np.zeros(K)
    return out


@dataclass
class AORun:
    strategy: Strategy
    summary: SolutionSummary
    layout: StreamLayout
    wsr_trace: list
    beamforming_traces: list = field(default_factory=list)
    phase_traces: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    runtime: float = 0.0
    feasibility: FeasibilityReport = None
    warm_start: str = "mrt"

    @property
    def wsr(self) -> float:
        return self.summary.wsr


def run_ao(cfg: ScenarioConfig, ch: ChannelSet, strategy: Strategy, init_design: TransmitDesign = None,
           init_phases: PhaseShifts = None, layout: StreamLayout = None, phase_mode: str = "aligned") -> AORun:
    """Alternate beamforming and phase optimization until the WSR settles.

    Strategies without RIS use the direct channels only and make a single
    beamforming call.
    """
    t0 = time.perf_counter()
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    if strategy.ris:
        channels = ch
        phases = init_phases if init_phases is not None else initial_phases(cfg, ch, phase_mode)
    else:
        channels = ch.without_ris()
        phases = PhaseShifts.zeros(0)
    h, g = effective_channels(channels, phases)
    layout = layout or strategy_layout(strategy, h)

    if init_design is None:
        try:
            design = initial_design(cfg, h, g, layout)
        except InfeasibleError:
            if not strategy.ris or init_phases is not None:
                raise
            phases = initial_phases(cfg, ch, "energy")
            h, g = effective_channels(channels, phases)
            design = initial_design(cfg, h, g, layout)
    else:
        design = init_design.copy()
    design.common_rates = repair_common_rates(design.common_rates, common_rate_bound(h, design, cfg.noise), layout)
    current = design_wsr(cfg, h, design, layout)
    wsr_trace = [current]
    bf_traces, ph_traces = [], []
    converged = False
    p = 0
    # subproblems stopping at eps each can leave the outer step above eps indefinitely
    sub_cfg = cfg.replace(convergence_tol=cfg.convergence_tol * INNER_TOL_FACTOR) if strategy.ris else cfg
    for p in range(1, cfg.max_ao_iterations + 1):
        bf = optimize_beamforming(sub_cfg, channels, phases, design, layout)
        bf_traces.append(bf.trace)
        design = bf.design
        if strategy.ris:
            ph = optimize_phases(sub_cfg, channels, design, phases, layout)
            ph_traces.append(ph.trace)
            phases = ph.phases
            design = design.copy(common_rates=ph.common_rates)
        h, _ = effective_channels(channels, phases)
        value = design_wsr(cfg, h, design, layout)
        if value < current - MONOTONE_SLACK * max(1.0, abs(current)):
            log.warning("AO step lowered the WSR by %.3e", current - value)
        step = value - current
        current = value
        wsr_trace.append(current)
        if not strategy.ris:
            converged = bf.converged
            break
        if abs(step) <= cfg.convergence_tol:
            converged = True
            break

    summary = summarize(cfg, channels, phases, design, layout)
    report = check_feasibility(cfg, channels, phases, design)
    return AORun(strategy=strategy, summary=summary, layout=layout, wsr_trace=wsr_trace,
                 beamforming_traces=bf_traces, phase_traces=ph_traces, converged=converged, iterations=p,
                 runtime=time.perf_counter() - t0, feasibility=report)


def _best(cfg, ch, strategy, candidates) -> AORun:
    best = None
    for label, kwargs in candidates:
        try:
            run = run_ao(cfg, ch, strategy, **kwargs)
        except InfeasibleError as exc:
            log.debug("%s start %s skipped: %s", strategy, label, exc)
            continue
        run.warm_start = label
        if best is None or run.wsr > best.wsr:
            best = run
    if best is None:
        raise InfeasibleError(f"no feasible start for {strategy}")
    return best


def run_strategies(cfg: ScenarioConfig, ch: ChannelSet, strategies=ALL_STRATEGIES,
                   warm_start: bool = True) -> dict[str, AORun]:
    """Run several strategies on one channel draw.

    Every strategy starts from the same MRT initialization. With
    ``warm_start`` the richer strategies are additionally re-run from the
    converged solutions of the strategies they contain, and the best result is
    kept: RSMA from SDMA (as is, and with a small injected common stream) and
    from NOMA, and each RIS strategy from its no-RIS counterpart. This makes
    the nesting ``RSMA+RIS >= SDMA+RIS, NOMA+RIS`` hold run by run.
    Strategies whose energy constraint cannot be met are absent from the
    result. With ``warm_start`` the contained strategies are solved even
    when not requested, so a subset obeys the same nesting as the full set.
    """
    wanted = {s.name: s for s in (Strategy.parse(s) if isinstance(s, str) else s for s in strategies)}
    order = ["SDMA", "NOMA", "RSMA", "SDMA+RIS", "NOMA+RIS", "RSMA+RIS"]
    sources = {"RSMA": ("SDMA", "NOMA"), "SDMA+RIS": ("SDMA",), "NOMA+RIS": ("NOMA",),
               "RSMA+RIS": ("SDMA+RIS", "NOMA+RIS", "RSMA")}
    needed = set(wanted)
    if warm_start:
        for name in reversed(order):
            if name in needed:
                needed.update(x for x in sources.get(name, ()) if ch.h_d.shape[0] == 2 or "NOMA" not in x)
    aligned = initial_phases(cfg, ch, "aligned")
    direct = ch.without_ris()
    results: dict[str, AORun] = {}

    def warm(name, with_phases):
        run = results.get(name)
        if run is None:
            return None
        kwargs = dict(init_design=run.summary.design)
        if with_phases:
            kwargs["init_phases"] = run.summary.phases if run.strategy.ris else \
                gradient_phases(cfg, ch, run.summary.design, run.layout)
        return kwargs

    for name in order:
        if name not in needed:
            continue
        strategy = Strategy.parse(name)
        candidates = [("mrt", {})]
        if warm_start:
            ris = strategy.ris
            h_ref = effective_channels(ch if ris else direct, aligned if ris else None)[0]
            if strategy.access is Access.RSMA:
                for source in (("SDMA+RIS", "NOMA+RIS", "RSMA") if ris else ("SDMA", "NOMA")):
                    kw = warm(source, ris)
                    if kw is None:
                        continue
                    candidates.append((f"warm:{source}", kw))
                    if source.startswith("SDMA"):
                        injected = dict(kw, init_design=inject_common_stream(kw["init_design"], h_ref))
                        candidates.append((f"warm:{source}+common", injected))
            elif ris:
                base = strategy.access.value
                kw = warm(base, True)
                if kw is not None:
                    kw["layout"] = results[base].layout
                    candidates.append((f"warm:{base}", kw))
        try:
            results[name] = _best(cfg, ch, strategy, candidates)
        except InfeasibleError:
            continue
    return {name: results[name] for name in wanted if name in results}
