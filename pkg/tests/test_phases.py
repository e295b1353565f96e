import math

import numpy as np
import pytest

from rsma_ris_swipt.beamforming import optimize_beamforming
from rsma_ris_swipt.metrics import StreamLayout, TransmitDesign, check_feasibility, common_rate_bound, design_wsr
from rsma_ris_swipt.phases import (anchor_from, assemble_auxiliaries, bilinear_upper_bound, build_phase_problem,
                                   energy_phase_bound, optimize_phases, phase_objective, write_trace_csv)
from rsma_ris_swipt.scenario import ChannelSet, PhaseShifts, ScenarioConfig, effective_channels

from conftest import crandn, random_channels, random_design


def test_auxiliaries_match_effective_channels(rng):
    ch = random_channels(rng, Nt=2, K=2, J=2, N=5)
    d = random_design(rng, 2, 2, 2)
    aux = assemble_auxiliaries(ch, d)
    for s in (np.ones(5), np.exp(1j * rng.uniform(0, 2 * np.pi, 5))):
        h, g = effective_channels(ch, s)
        np.testing.assert_allclose(aux.ir_amplitudes(s), np.conj(h) @ d.all_precoders, atol=1e-13)
        np.testing.assert_allclose(aux.er_amplitudes(s), np.conj(g) @ d.all_precoders, atol=1e-13)


def test_auxiliaries_vanish_without_reflection(rng):
    ch = random_channels(rng, N=3)
    ch = ChannelSet(ch.H, ch.h_d, ch.g_d, np.zeros_like(ch.h_r), ch.g_r)
    aux = assemble_auxiliaries(ch, random_design(rng, 2, 2, 2))
    assert not np.any(aux.a)


def test_auxiliaries_single_element_scalar_form(rng):
    ch = random_channels(rng, Nt=2, K=1, J=0, N=1)
    d = random_design(rng, 2, 1, 0)
    aux = assemble_auxiliaries(ch, d)
    s = np.exp(0.7j)
    expected = np.conj(ch.h_r[0, 0]) * s * (ch.H[0] @ d.p_private[:, 0]) + np.vdot(ch.h_d[0], d.p_private[:, 0])
    assert aux.ir_amplitudes(np.array([s]))[0, 1] == pytest.approx(expected, abs=1e-14)


def test_bilinear_bound(rng):
    beta, eta = rng.uniform(0, 5, (2, 10_000))
    np.testing.assert_allclose(beta * eta, 0.25 * ((beta + eta) ** 2 - (beta - eta) ** 2), atol=1e-12)
    assert bilinear_upper_bound(1.3, 0.4, 1.3, 0.4) == pytest.approx(1.3 * 0.4, rel=1e-14)
    b0, e0 = rng.uniform(0, 5, (2, 10_000))
    assert np.all(bilinear_upper_bound(beta, eta, b0, e0) >= beta * eta - 1e-12)


def test_energy_phase_bound(rng):
    b, s0 = crandn(rng, 4), np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    direct = complex(crandn(rng, 1)[0])
    exact = lambda s: abs(np.vdot(b, s) + direct) ** 2  # noqa: E731
    assert energy_phase_bound(b, direct, s0, s0) == pytest.approx(exact(s0), rel=1e-12)
    for _ in range(2000):
        s = rng.uniform(0, 1, 4) * np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        assert energy_phase_bound(b, direct, s, s0) <= exact(s) + 1e-12
    assert energy_phase_bound(np.zeros(4), direct, s0 * 0.3, s0) == pytest.approx(abs(direct) ** 2)


def _cfg(**kw):
    base = dict(num_tx_antennas=2, num_irs=2, num_ers=2, num_ris_elements=4, tx_power=1.0, noise_power=0.1,
                energy_threshold=0.0)
    return ScenarioConfig(**{**base, **kw})


def test_phase_subproblem_solution_and_anchor(rng):
    cfg = _cfg()
    ch = random_channels(rng, N=4, reflected=0.5)
    lay = StreamLayout.rsma(2)
    d = optimize_beamforming(cfg, ch, PhaseShifts.zeros(4), layout=lay).design
    s0 = np.ones(4, dtype=complex)
    aux = assemble_auxiliaries(ch, d)
    prog = build_phase_problem(cfg, aux, anchor_from(cfg, aux, s0, d.common_rates), d, lay, cfg.penalty_constant)
    res = prog.solve(cfg.solver)
    assert res.optimal
    assert max(prog.residuals(prog.pack(res.assignment)).values()) <= 1e-7
    assert res.objective_value >= phase_objective(cfg, ch, d, s0, d.common_rates, lay) - 1e-7


def test_no_ris_reduces_to_common_rate_reallocation(rng):
    cfg = _cfg(num_ris_elements=0, penalty_constant=1e-9)
    ch = random_channels(rng, N=0)
    lay = StreamLayout.rsma(2)
    d = random_design(rng, 2, 2, 2)
    aux = assemble_auxiliaries(ch, d)
    prog = build_phase_problem(cfg, aux, anchor_from(cfg, aux, np.zeros(0), np.zeros(2)), d, lay, 1e-9)
    res = prog.solve(cfg.solver)
    assert res.optimal
    h, _ = effective_channels(ch, None)
    assert res["c"].sum() == pytest.approx(common_rate_bound(h, d, cfg.noise), abs=1e-6)


def _single_element(rng, direct):
    ch = ChannelSet(crandn(rng, 1, 1), direct * crandn(rng, 1, 1), np.zeros((0, 1)), crandn(rng, 1, 1),
                    np.zeros((0, 1)))
    return ch, TransmitDesign([0], [[1.0]], np.zeros((1, 0)))


def _grid_best(cfg, ch, d, lay):
    grid = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    return max(design_wsr(cfg, effective_channels(ch, np.array([np.exp(1j * t)]))[0], d, lay) for t in grid)


def test_single_element_without_direct_link_matches_grid(rng):
    cfg = _cfg(num_tx_antennas=1, num_irs=1, num_ers=0, num_ris_elements=1)
    lay = StreamLayout.sdma(1)
    ch, d = _single_element(rng, 0.0)
    res = optimize_phases(cfg, ch, d, PhaseShifts([2.0]), lay)
    assert res.wsr >= _grid_best(cfg, ch, d, lay) - 1e-3


def test_single_element_with_direct_link_improves(rng):
    # the linearized penalty acts as a proximal term, so one call may stop short of the grid optimum
    cfg = _cfg(num_tx_antennas=1, num_irs=1, num_ers=0, num_ris_elements=1)
    lay = StreamLayout.sdma(1)
    ch, d = _single_element(rng, 1.0)
    init = PhaseShifts([2.0])
    start = design_wsr(cfg, effective_channels(ch, init)[0], d, lay)
    res = optimize_phases(cfg, ch, d, init, lay)
    assert start - 1e-9 <= res.wsr <= _grid_best(cfg, ch, d, lay) + 1e-9


def test_random_instance_behaviour(rng, tmp_path):
    cfg = _cfg(energy_threshold=1e-3)
    ch = random_channels(rng, N=4, reflected=0.5)
    lay = StreamLayout.rsma(2)
    init = PhaseShifts(rng.uniform(0, 2 * np.pi, 4))
    d = optimize_beamforming(cfg, ch, init, layout=lay).design
    h0, _ = effective_channels(ch, init)
    start = design_wsr(cfg, h0, d, lay)
    res = optimize_phases(cfg, ch, d, init, lay)
    objs = [row["obj"] for row in res.trace]
    assert all(b >= a - 1e-6 for a, b in zip(objs, objs[1:]))
    assert np.min(np.abs(res.relaxed)) >= 1 - 1e-2
    assert res.wsr >= start - 1e-6
    report = check_feasibility(cfg, ch, res.phases, d.copy(common_rates=res.common_rates))
    assert report.feasible and report.worst_violation <= 1e-6
    np.testing.assert_allclose(np.abs(res.phases.s), 1.0, atol=1e-15)
    write_trace_csv(tmp_path / "t.csv", res.trace)
    assert (tmp_path / "t.csv").read_text().startswith("t,obj,min_modulus,energy_slack,penalized")


def test_fixed_point_stops_immediately(rng):
    cfg = _cfg(num_tx_antennas=1, num_irs=1, num_ers=0, num_ris_elements=1)
    ch = ChannelSet(np.ones((1, 1)), np.ones((1, 1)), np.zeros((0, 1)), np.ones((1, 1)), np.zeros((0, 1)))
    d = TransmitDesign([0], [[1.0]], np.zeros((1, 0)))
    res = optimize_phases(cfg, ch, d, PhaseShifts([0.0]), StreamLayout.sdma(1))
    assert abs(res.trace[-1]["obj"] - res.trace[0]["obj"]) <= cfg.convergence_tol
    assert res.phases.theta[0] == pytest.approx(0.0, abs=1e-3) or res.phases.theta[0] == pytest.approx(2 * math.pi,
                                                                                                     abs=1e-3)


def test_fallback_keeps_incumbent_when_energy_breaks(rng):
    cfg = _cfg(energy_threshold=1e-3)
    ch = random_channels(rng, N=4)
    lay = StreamLayout.rsma(2)
    init = PhaseShifts.zeros(4)
    d = optimize_beamforming(cfg, ch, init, layout=lay).design
    res = optimize_phases(cfg, ch, d, init, lay)
    assert res.accepted or res.phases is init
