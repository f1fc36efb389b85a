"""Pilot placement, guards, and the pilot-window measurement model."""
import numpy as np
import pytest

from otfspnp.channel import (
    PathSet,
    build_truncated_response,
    response_vec,
    sample_paths,
    scalar_io_oracle,
)
from otfspnp.frame import FrameConfig
from otfspnp.pilots import (
    PilotLayout,
    build_measurement_matrix,
    extract_observation,
    pilot_frame,
    place_pilots,
    scatter_observation,
)

PAPER = dict(p_m=2, p_n=2, l_max=4, k_hat_max=5)


def paper_setup():
    cfg = FrameConfig(m=20, n=20, zp_len=4)
    return cfg, PilotLayout.for_channel(cfg, **PAPER)


def test_paper_scale_geometry():
    """2x2 pilots with l_max=4, k_hat_max=5 on a 20x20 grid: 91 observations
    over 55 hypothesis taps, 220 of 400 cells spent on pilot plus guards."""
    _, lay = paper_setup()
    assert lay.window_shape == (7, 13)
    assert lay.n_observations == 91
    assert lay.n_taps == 55
    assert (~lay.data_mask()).sum() == 220
    assert lay.overhead() == pytest.approx(0.55)


def test_single_pilot_classic_pattern():
    cfg = FrameConfig(m=20, n=20, zp_len=4)
    lay = PilotLayout.for_channel(cfg, p_m=1, p_n=1, l_max=4, k_hat_max=5)
    assert lay.window_shape == (6, 12)
    assert lay.pilot_values.shape == (1, 1)
    assert abs(abs(lay.pilot_values[0, 0]) - 1.0) < 1e-12


def test_layout_validation():
    cfg = FrameConfig(m=20, n=20)
    with pytest.raises(ValueError):  # anchor under the channel spread
        PilotLayout(p_m=2, p_n=2, anchor_l=3, anchor_k=10, l_max=4, k_hat_max=5, m=20, n=20)
    with pytest.raises(ValueError):  # delay extent leaves the grid
        PilotLayout(p_m=12, p_n=2, anchor_l=4, anchor_k=10, l_max=4, k_hat_max=5, m=20, n=20)
    with pytest.raises(ValueError):  # window wraps onto itself
        PilotLayout.for_channel(FrameConfig(m=20, n=12), p_m=2, p_n=2, l_max=4, k_hat_max=5)
    with pytest.raises(ValueError):
        PilotLayout(p_m=0, p_n=2, anchor_l=4, anchor_k=10, l_max=4, k_hat_max=5, m=20, n=20)
    with pytest.raises(ValueError):
        PilotLayout.for_channel(cfg, p_m=2, p_n=2, l_max=4, k_hat_max=5, pilot_power=-1.0)


def test_pilot_values_deterministic():
    _, lay = paper_setup()
    np.testing.assert_array_equal(lay.pilot_values, lay.pilot_values)
    other = PilotLayout.for_channel(FrameConfig(m=20, n=20), **PAPER, phase_seed=9)
    assert np.abs(other.pilot_values - lay.pilot_values).max() > 1e-3


def test_layout_serialization_roundtrip():
    _, lay = paper_setup()
    back = PilotLayout.from_dict(lay.to_dict())
    assert back.window_shape == lay.window_shape
    np.testing.assert_array_equal(back.pilot_values, lay.pilot_values)
    np.testing.assert_array_equal(back.data_mask(), lay.data_mask())


def test_pilot_frame_energy():
    _, lay = paper_setup()
    frame = pilot_frame(lay)
    assert np.sum(np.abs(frame) ** 2) == pytest.approx(lay.total_pilot_power())
    assert lay.total_pilot_power() == pytest.approx(4.0)  # 2x2 cells at unit power


def test_place_pilots_preserves_data():
    rng = np.random.default_rng(0)
    _, lay = paper_setup()
    data = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    frame = place_pilots(lay, data)
    mask = lay.data_mask()
    np.testing.assert_array_equal(frame[mask], data[mask])
    # guards zero except the pilot block itself
    guard = ~mask
    guard[np.ix_(lay.anchor_l + np.arange(2), (lay.anchor_k + np.arange(2)) % 20)] = False
    assert np.all(frame[guard] == 0)
    with pytest.raises(ValueError):
        place_pilots(lay, data[:, :10])


def test_zero_power_pilot_zeroes_matrix():
    cfg = FrameConfig(m=20, n=20, zp_len=4)
    lay = PilotLayout.for_channel(cfg, **PAPER, pilot_power=0.0)
    assert np.all(build_measurement_matrix(lay, cfg) == 0)


def test_matrix_row_sparsity():
    cfg, lay = paper_setup()
    phi = build_measurement_matrix(lay, cfg)
    assert phi.shape == (91, 55)
    assert (np.abs(phi) > 0).sum(axis=1).max() <= 4


def test_matrix_matches_windowed_oracle():
    """Phi h reproduces the cropped phase-free relation for random channels."""
    rng = np.random.default_rng(1)
    cfg, lay = paper_setup()
    phi = build_measurement_matrix(lay, cfg)
    x_pf = pilot_frame(lay)
    for trial in range(20):
        ps = sample_paths(rng, p=5, l_max=4, k_max=3, fractional=True, trunc=2,
                          fractional_delay=trial % 2 == 1)
        lhs = phi @ response_vec(build_truncated_response(ps, cfg))
        y = scalar_io_oracle(ps, x_pf, cfg, stride="block", trunc="path", include_phase=False)
        rhs = extract_observation(y, lay)
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_residual_is_phase_mismatch_only():
    # with the per-entry phase on, the window residual is the neglected-phase
    # error: small but strictly nonzero at paper scale
    rng = np.random.default_rng(2)
    cfg, lay = paper_setup()
    phi = build_measurement_matrix(lay, cfg)
    x_pf = pilot_frame(lay)
    ps = sample_paths(rng, p=5, l_max=4, k_max=3, fractional=True, trunc=2)
    model = phi @ response_vec(build_truncated_response(ps, cfg))
    y = scalar_io_oracle(ps, x_pf, cfg, stride="block", trunc="path", include_phase=True)
    obs = extract_observation(y, lay)
    rel = np.linalg.norm(obs - model) / np.linalg.norm(obs)
    assert 1e-8 < rel < 0.35


def single_path_cfg():
    cfg = FrameConfig(m=16, n=16, zp_len=3)
    lay = PilotLayout.for_channel(cfg, p_m=1, p_n=1, l_max=3, k_hat_max=3)
    return cfg, lay


def test_single_path_enumeration_recovery():
    """Every in-bounds single-path integer channel lights exactly one matrix
    entry (the pilot value) and least squares returns the exact gain."""
    cfg, lay = single_path_cfg()
    phi = build_measurement_matrix(lay, cfg)
    pilot = lay.pilot_values[0, 0]
    x_pf = pilot_frame(lay)
    r_d = lay.window_shape[0]
    gain = 0.7 - 0.4j
    for l in range(4):
        for k in range(-1, 2):
            ps = PathSet(gains=[gain], delays=[l], dopplers=[k], kappa=[0.0],
                         l_max=3, k_max=1, trunc=2)
            col = l + 4 * (3 + k)
            nz = np.nonzero(np.abs(phi[:, col]) > 0)[0]
            assert nz.tolist() == [l + r_d * (3 + k)]
            assert phi[nz[0], col] == pytest.approx(pilot, abs=1e-15)
            y = extract_observation(
                scalar_io_oracle(ps, x_pf, cfg, stride="block", trunc="path",
                                 include_phase=False), lay)
            h_hat, *_ = np.linalg.lstsq(phi, y, rcond=None)
            expect = response_vec(build_truncated_response(ps, cfg))
            np.testing.assert_allclose(h_hat, expect, atol=1e-12)
            assert h_hat[col] == pytest.approx(gain, abs=1e-12)


def test_isolation_exhaustive_single_path():
    """No data symbol reaches any observation entry, for every in-bounds
    single-path channel at minimum guard sizes."""
    rng = np.random.default_rng(3)
    cfg, lay = single_path_cfg()
    data = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    frame = place_pilots(lay, data)
    pf = pilot_frame(lay)
    assert lay.guard_dopplers.size < 16  # guards do not swallow the whole axis
    for l in range(4):
        for k in range(-1, 2):
            ps = PathSet(gains=[1.0], delays=[l], dopplers=[k], kappa=[0.0],
                         l_max=3, k_max=1, trunc=2)
            diff = scalar_io_oracle(ps, frame, cfg, stride="block") - scalar_io_oracle(
                ps, pf, cfg, stride="block")
            assert np.abs(extract_observation(diff, lay)).max() < 1e-13
    # fractional path under the truncated kernel: guards still isolate exactly
    ps = sample_paths(rng, p=1, l_max=3, k_max=1, fractional=True, trunc=2)
    diff = scalar_io_oracle(ps, frame, cfg, stride="block", trunc="path") - scalar_io_oracle(
        ps, pf, cfg, stride="block", trunc="path")
    assert np.abs(extract_observation(diff, lay)).max() < 1e-13


def test_paper_scale_isolation_is_total():
    # at 20x20 the Doppler guard spans the full axis, so even the untruncated
    # fractional relation leaks nothing into the window
    rng = np.random.default_rng(4)
    cfg, lay = paper_setup()
    data = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    frame = place_pilots(lay, data)
    pf = pilot_frame(lay)
    ps = sample_paths(rng, p=5, l_max=4, k_max=3, fractional=True, trunc=2)
    diff = scalar_io_oracle(ps, frame, cfg, stride="block") - scalar_io_oracle(
        ps, pf, cfg, stride="block")
    assert np.abs(extract_observation(diff, lay)).max() < 1e-13
    assert np.abs(diff).max() > 0.01  # the data itself does propagate


def test_identity_channel_observation_holds_pilots():
    cfg, lay = paper_setup()
    ps = PathSet(gains=[1.0], delays=[0], dopplers=[0], kappa=[0.0], l_max=4, k_max=3, trunc=2)
    obs = extract_observation(scalar_io_oracle(ps, pilot_frame(lay), cfg, stride="block"), lay)
    r_d = lay.window_shape[0]
    for j in range(2):
        for t in range(2):
            assert obs[j + r_d * (5 + t)] == pytest.approx(lay.pilot_values[j, t], abs=1e-12)


def test_scatter_extract_roundtrip():
    rng = np.random.default_rng(5)
    _, lay = paper_setup()
    obs = rng.standard_normal(91) + 1j * rng.standard_normal(91)
    np.testing.assert_allclose(extract_observation(scatter_observation(obs, lay), lay), obs)
    grid = rng.standard_normal((20, 20)) + 0j
    v = extract_observation(grid, lay)
    # delay index runs fastest in the observation vector
    assert v[3] == grid[lay.window_delays[3], lay.window_dopplers[0]]
    assert v[7] == grid[lay.window_delays[0], lay.window_dopplers[1]]
    with pytest.raises(ValueError):
        scatter_observation(obs[:10], lay)
    with pytest.raises(ValueError):
        extract_observation(grid[:, :10], lay)
