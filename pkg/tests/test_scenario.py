import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_ris_swipt.scenario import (ChannelSet, PhaseShifts, ScenarioConfig, config_from_dict, config_hash,
                                     dbm_to_watts, effective_channel, effective_channels, generate_channels,
                                     load_config, path_loss)

from conftest import crandn, random_channels


def test_path_loss_reference_values():
    assert path_loss(1.0, 3.0, 1e-3) == pytest.approx(1e-3, rel=1e-15)
    for alpha in (0.0, 1.5, 7.0):
        assert path_loss(1.0, alpha, 2e-4) == pytest.approx(2e-4, rel=1e-15)
    assert path_loss(20.0, 2.0, 1e-3) == pytest.approx(2.5e-6, rel=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_path_loss_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        path_loss(d, 2.0, 1e-3)


@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0), st.floats(0.1, 5.0))
def test_path_loss_decreasing(d1, d2, alpha):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert path_loss(lo, alpha, 1e-3) > path_loss(hi, alpha, 1e-3)


def test_unit_conversion():
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11, rel=1e-12)
    assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)


def test_default_config_matches_simulation_setup():
    cfg = ScenarioConfig()
    assert (cfg.num_tx_antennas, cfg.num_irs, cfg.num_ers, cfg.num_ris_elements) == (2, 2, 2, 8)
    assert cfg.tx_power == 10.0
    assert cfg.conversion_efficiency == 0.5
    assert cfg.noise_power == (1e-11, 1e-11)
    exps = cfg.path_loss_exponents
    assert (exps.bs_ir, exps.bs_er, exps.bs_ris, exps.ris_ir, exps.ris_er) == (2, 3, 3, 3.5, 1.5)


@pytest.mark.parametrize("changes", [
    dict(tx_power=0.0), dict(energy_threshold=-1.0), dict(conversion_efficiency=1.5), dict(noise_power=0.0),
    dict(ir_weights=-1.0), dict(num_irs=0), dict(num_ers=0), dict(convergence_tol=0.0), dict(penalty_constant=0.0),
])
def test_config_validation(changes):
    with pytest.raises(ValueError):
        ScenarioConfig().replace(**changes)


def test_zero_ers_require_zero_threshold():
    cfg = ScenarioConfig(num_ers=0, energy_threshold=0.0)
    assert cfg.num_ers == 0


def test_generate_channels_deterministic_and_independent():
    cfg = ScenarioConfig(rng_seed=1)
    a, b = generate_channels(cfg, 0), generate_channels(cfg, 0)
    c = generate_channels(cfg, 1)
    for name in ("H", "h_d", "g_d", "h_r", "g_r", "ir_positions", "er_positions"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.h_d, c.h_d)
    assert not np.array_equal(a.H, c.H)


def test_generate_channels_shapes_and_positions():
    cfg = ScenarioConfig()
    ch = generate_channels(cfg, 3)
    assert ch.H.shape == (8, 2) and ch.h_d.shape == (2, 2) and ch.g_r.shape == (2, 8)
    (cx, cy), r = cfg.ir_region
    assert np.all(np.hypot(ch.ir_positions[:, 0] - cx, ch.ir_positions[:, 1] - cy) <= r)
    (cx, cy), r = cfg.er_region
    assert np.all(np.hypot(ch.er_positions[:, 0] - cx, ch.er_positions[:, 1] - cy) <= r)


def test_channel_arrays_are_read_only():
    ch = generate_channels(ScenarioConfig(), 0)
    with pytest.raises(ValueError):
        ch.h_d[0, 0] = 0.0


def test_second_moment_matches_path_loss():
    # collapse the IR disk to a point so every draw sees the same distance
    cfg = ScenarioConfig(ir_region=((20.0, 0.0), 0.0))
    expected = path_loss(20.0, cfg.path_loss_exponents.bs_ir, cfg.path_loss_ref)
    samples = np.concatenate([np.abs(generate_channels(cfg, i).h_d).ravel() ** 2 for i in range(10_000)])
    assert abs(samples.mean() / expected - 1.0) < 0.05


def test_effective_channel_without_reflection_is_direct(rng):
    ch = random_channels(rng)
    zeroed = ChannelSet(ch.H, ch.h_d, ch.g_d, np.zeros_like(ch.h_r), np.zeros_like(ch.g_r))
    h, g = effective_channels(zeroed, np.exp(1j * rng.uniform(0, 2 * np.pi, 4)))
    np.testing.assert_allclose(h, ch.h_d)
    np.testing.assert_allclose(g, ch.g_d)
    h0, _ = effective_channels(ch.without_ris(), None)
    np.testing.assert_allclose(h0, ch.h_d)


def test_effective_channel_matches_matrix_product(rng):
    ch = random_channels(rng, Nt=3, K=2, J=2, N=5)
    phases = PhaseShifts(rng.uniform(0, 2 * np.pi, 5))
    Theta = np.diag(phases.s)
    for k in range(2):
        row = ch.h_r[k].conj() @ Theta @ ch.H + ch.h_d[k].conj()       # h_k^H
        np.testing.assert_allclose(effective_channel(ch, phases, "ir", k), row.conj(), atol=1e-13)
    for j in range(2):
        row = ch.g_r[j].conj() @ Theta @ ch.H + ch.g_d[j].conj()
        np.testing.assert_allclose(effective_channel(ch, phases, "er", j), row.conj(), atol=1e-13)


def test_single_element_identity(rng):
    ch = random_channels(rng, Nt=2, K=1, J=0, N=1)
    ch = ChannelSet(ch.H, np.zeros((1, 2)), ch.g_d, ch.h_r, ch.g_r)
    h = effective_channel(ch, PhaseShifts.zeros(1), "ir", 0)
    np.testing.assert_allclose(h, np.conj(np.conj(ch.h_r[0, 0]) * ch.H[0]), atol=1e-15)


def test_effective_channel_index_errors(rng):
    ch = random_channels(rng)
    with pytest.raises(IndexError):
        effective_channel(ch, None, "ir", 5)
    with pytest.raises(ValueError):
        effective_channel(ch, None, "relay", 0)


def test_effective_channel_superposition(rng):
    ch = random_channels(rng, N=6)
    base, _ = effective_channels(ch, np.zeros(6))
    for _ in range(20):
        s1, s2 = crandn(rng, 6), crandn(rng, 6)
        a, b = rng.standard_normal(2)
        lhs = effective_channels(ch, a * s1 + b * s2)[0] - base
        rhs = a * (effective_channels(ch, s1)[0] - base) + b * (effective_channels(ch, s2)[0] - base)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-20.0, 20.0, allow_nan=False), min_size=1, max_size=8))
def test_phase_shifts_unit_modulus(theta):
    ph = PhaseShifts(np.asarray(theta))
    assert np.all((ph.theta >= 0) & (ph.theta < 2 * np.pi))
    np.testing.assert_allclose(np.abs(ph.s), 1.0, atol=1e-15)
    np.testing.assert_allclose(PhaseShifts.from_coefficients(0.3 * ph.s).s, ph.s, atol=1e-12)


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(
        "system: {tx_antennas: 3, irs: 2, ers: 1, ris_elements: 4, ir_weights: [1, 2]}\n"
        "power: {tx_power_dbm: 30, energy_threshold_uw: 5, noise_dbm: -90, conversion_efficiency: 0.7}\n"
        "geometry: {ris_position: [2, 1], ir_region: {center: [10, 0], radius: 2}}\n"
        "path_loss: {ref_db: -30, exponents: {ris_ir: 2.5}}\n"
        "algorithm: {convergence_tol: 1.0e-4, penalty_constant: 5}\n"
        "seed: 7\n"
    )
    cfg = load_config(path)
    assert cfg.num_tx_antennas == 3 and cfg.num_ers == 1 and cfg.ir_weights == (1.0, 2.0)
    assert cfg.tx_power == pytest.approx(1.0)
    assert cfg.energy_threshold == pytest.approx(5e-6)
    assert cfg.noise_power[0] == pytest.approx(1e-12)
    assert cfg.ris_position == (2.0, 1.0) and cfg.ir_region == ((10.0, 0.0), 2.0)
    assert cfg.path_loss_exponents.ris_ir == 2.5 and cfg.path_loss_exponents.bs_ir == 2.0
    assert cfg.rng_seed == 7 and cfg.penalty_constant == 5.0


@pytest.mark.parametrize("data", [{"sytem": {}}, {"system": {"antennas": 2}}, {"geometry": {"ris": [0, 0]}},
                                  {"algorithm": {"tol": 1}}])
def test_config_unknown_keys_rejected(data):
    with pytest.raises(KeyError):
        config_from_dict(data)


def test_config_hash_stable():
    assert config_hash(ScenarioConfig()) == config_hash(ScenarioConfig())
    assert config_hash(ScenarioConfig()) != config_hash(ScenarioConfig(rng_seed=1))
