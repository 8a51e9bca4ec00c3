import json

import numpy as np
import pytest

from irs_walra.channel import (
    CascadedChannel,
    ChannelProfile,
    LinkTaps,
    OfdmConfig,
    autocorrelation,
    cascade,
    cfr,
    generate_bs_irs,
    generate_irs_rx,
    generate_location_channels,
    numerical_rank,
)
from irs_walra.errors import DimensionMismatch, InvalidProfile, PadError
from irs_walra.hermitian import map_from_coords, map_to_coords


def _links(g_col, r_col):
    g = LinkTaps(np.asarray(g_col, dtype=complex).reshape(-1, 1), 1)
    r = LinkTaps(np.asarray(r_col, dtype=complex).reshape(-1, 1), 1)
    return g, r


def naive_conv(a, b):
    out = np.zeros(len(a) + len(b) - 1, dtype=complex)
    for i in range(len(a)):
        for j in range(len(b)):
            out[i + j] += a[i] * b[j]
    return out


def test_cascade_trivial():
    c = cascade(*_links([1], [1]))
    assert c.L == 1
    np.testing.assert_array_equal(c.H[:, 0], [1])


def test_cascade_polynomial_product():
    c = cascade(*_links([1, 1], [1, -1]))
    np.testing.assert_array_equal(c.H[:, 0], [1, 0, -1])


def test_cascade_against_direct_sum(rng):
    for _ in range(20):
        Lg, Lr, N = (int(x) for x in rng.integers(1, 9, size=3))
        G = rng.standard_normal((Lg, N)) + 1j * rng.standard_normal((Lg, N))
        Rt = rng.standard_normal((Lr, N)) + 1j * rng.standard_normal((Lr, N))
        c = cascade(LinkTaps(G), LinkTaps(Rt))
        assert c.L == Lg + Lr - 1
        for n in range(N):
            assert np.max(np.abs(c.H[:, n] - naive_conv(G[:, n], Rt[:, n]))) <= 1e-12


def test_cascade_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cascade(LinkTaps(np.ones((2, 3))), LinkTaps(np.ones((2, 4))))


def test_autocorrelation_single_column():
    h = np.array([[1 + 1j], [2 - 1j], [0.5j]])
    R = autocorrelation(h)
    assert R.shape == (1, 1)
    assert R[0, 0] == pytest.approx(np.vdot(h, h).real)
    H = np.hstack([h, 2j * h])
    assert numerical_rank(autocorrelation(H)) == 1


def test_zero_channel():
    H = np.zeros((4, 3), dtype=complex)
    np.testing.assert_array_equal(autocorrelation(H), 0)
    np.testing.assert_array_equal(cfr(H, np.ones(3), 8), 0)


def test_rank_matches_svd(rng):
    for _ in range(30):
        L, N = (int(x) for x in rng.integers(1, 10, size=2))
        r = int(rng.integers(1, min(L, N) + 1))
        H = (rng.standard_normal((L, r)) + 1j * rng.standard_normal((L, r))) @ (
            rng.standard_normal((r, N)) + 1j * rng.standard_normal((r, N))
        )
        s = np.linalg.svd(H, compute_uv=False)
        svd_rank = int(np.sum(s > np.sqrt(1e-9) * s[0]))
        R = autocorrelation(H)
        assert numerical_rank(R) == svd_rank
        assert numerical_rank(R) <= min(L, N)
        ev = np.linalg.eigvalsh(R)
        assert ev.min() >= -1e-10 * ev.max()


def test_energy_identity(rng):
    for _ in range(50):
        L, N = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        M = L + int(rng.integers(0, 10))
        H = rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
        lhs = np.sum(np.abs(cfr(H, v, M)) ** 2)
        rhs = (v.conj() @ autocorrelation(H) @ v).real
        assert abs(lhs - rhs) <= 1e-10 * rhs


def test_cfr_flat_single_tap():
    H = np.ones((1, 1), dtype=complex)
    f = cfr(H, np.ones(1), 16)
    np.testing.assert_allclose(np.abs(f), 1 / np.sqrt(16))
    assert np.sum(np.abs(f) ** 2) == pytest.approx(1.0)


def test_cfr_batch_matches_single(rng):
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    V = np.exp(1j * np.pi / 2 * rng.integers(0, 4, size=(5, 4)))
    F = cfr(H, V, 8)
    for v, f in zip(V, F):
        np.testing.assert_allclose(f, cfr(H, v, 8))


def test_cfr_errors():
    H = np.ones((5, 2), dtype=complex)
    with pytest.raises(PadError):
        cfr(H, np.ones(2), 4)
    with pytest.raises(DimensionMismatch):
        cfr(H, np.ones(3), 8)
    with pytest.raises(ValueError):
        cfr(H, np.array([1.0, 0.5]), 8)


def test_autocorrelation_survives_coords_round_trip():
    prof = ChannelProfile()
    R = cascade(*generate_location_channels(3, 0, prof, 16)).autocorrelation()
    np.testing.assert_allclose(map_from_coords(map_to_coords(R)), R, rtol=0, atol=1e-12 * np.abs(R).max())


def test_single_path_link_has_one_nonzero_row():
    prof = ChannelProfile(bs_irs_paths=1, bs_irs_rician_db=np.inf, bs_irs_gain_db=0.0)
    g = generate_bs_irs(0, prof, 4)
    nonzero_rows = np.flatnonzero(np.any(g.taps != 0, axis=1))
    np.testing.assert_array_equal(nonzero_rows, [0])
    np.testing.assert_allclose(np.abs(g.taps[0]), 1.0)


def test_generation_is_deterministic():
    prof = ChannelProfile()
    a = generate_location_channels(11, 2, prof, 16)
    b = generate_location_channels(11, 2, prof, 16)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.taps, y.taps)
    c = generate_irs_rx(11, 3, prof, 16)
    assert not np.array_equal(a[1].taps, c.taps)


def test_bs_irs_shared_across_locations():
    prof = ChannelProfile()
    g0, _ = generate_location_channels(5, 0, prof, 16)
    g1, _ = generate_location_channels(5, 7, prof, 16)
    np.testing.assert_array_equal(g0.taps, g1.taps)


def test_evaluation_stream_independent():
    prof = ChannelProfile()
    assert not np.array_equal(
        generate_irs_rx(5, 0, prof, 16).taps, generate_irs_rx(5, 0, prof, 16, evaluation=True).taps
    )


def test_cascaded_path_counts_in_range():
    prof = ChannelProfile()
    counts = []
    for seed in range(5):
        for k in range(40):
            counts.append(cascade(*generate_location_channels(seed, k, prof, 16)).n_paths)
    assert min(counts) >= 4 and max(counts) <= 20
    # the whole range is actually used
    assert min(counts) == 4 and max(counts) == 20


def test_default_rank_bounded_by_taps():
    prof = ChannelProfile()
    for k in range(9):
        c = cascade(*generate_location_channels(1, k, prof, 16))
        assert c.L == prof.L == 8
        assert numerical_rank(c.autocorrelation()) <= min(c.L, c.N)


@pytest.mark.parametrize(
    "kw",
    [dict(decay=0.0), dict(decay=-1.0), dict(L_r=0), dict(bs_irs_paths=0), dict(irs_rx_paths=(5, 2)), dict(irs_rx_paths=(0, 3))],
)
def test_invalid_profile(kw):
    prof = ChannelProfile(**kw)
    with pytest.raises(InvalidProfile):
        generate_irs_rx(0, 0, prof, 4)


def test_profile_and_channel_json_round_trip():
    prof = ChannelProfile(L_r=4, irs_rx_paths=(3, 5))
    assert ChannelProfile.from_dict(json.loads(json.dumps(prof.to_dict()))) == prof
    c = cascade(*generate_location_channels(2, 1, prof, 6))
    back = CascadedChannel.from_json(json.loads(json.dumps(c.to_json())))
    np.testing.assert_array_equal(back.H, c.H)
    assert back.n_paths == c.n_paths
    with pytest.raises(InvalidProfile):
        ChannelProfile.from_dict({"bogus": 1})


def test_ofdm_config_validation():
    cfg = OfdmConfig(32, 1.0, 1e-15, 2, 16)
    np.testing.assert_allclose(cfg.phases, np.exp(1j * np.pi / 2 * np.arange(4)))
    assert cfg.noise_floor == pytest.approx(32e-15)
    for bad in [dict(M=0), dict(P0=0.0), dict(sigma2=-1.0), dict(b=0), dict(N=0)]:
        kw = dict(M=32, P0=1.0, sigma2=0.0, b=2, N=16)
        kw.update(bad)
        with pytest.raises(ValueError):
            OfdmConfig(**kw)

