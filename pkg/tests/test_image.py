import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsmimo.image import (
    GRID,
    BoxLabel,
    DegenerateInputError,
    ImageConfig,
    SpectralImage,
    angular_temporal_transform,
    dark_spot_profile,
    export_png,
    make_labels,
    matched_filter_image,
    normalize_image,
    read_labels,
    read_png,
    spectral_image,
    spot_size,
    to_image_orientation,
    transform_matrices,
    write_labels,
)
from nsmimo.model import ConfigurationError, PathParams, Scenario, SystemConfig, uplink_pilot_observation


def dense_transform(Y, ga, gt):
    """U_a^H Y U_t with U_a[m, k] = exp(-j2pi m k / Ka), built entry by entry."""
    M, N = Y.shape
    Ka, Kt = ga * M, gt * N
    Ua = np.array([[np.exp(-2j * np.pi * m * k / Ka) for k in range(Ka)] for m in range(M)])
    Ut = np.array([[np.exp(-2j * np.pi * n * k / Kt) for k in range(Kt)] for n in range(N)])
    return Ua.conj().T @ Y @ Ut


def single_path(M, N, S, theta, gamma, s_start=1, s_end=None, alpha=1.0):
    s_end = S if s_end is None else s_end
    return Scenario(SystemConfig(M, N, S), (PathParams(theta, gamma, alpha, alpha, s_start, s_end),))


def first_nulls(profile, idx):
    """Indices of the nearest local minima on both sides of ``idx`` (circular)."""
    K = profile.size
    out = []
    for step in (1, -1):
        k = 1
        while profile[(idx + step * (k + 1)) % K] < profile[(idx + step * k) % K]:
            k += 1
        out.append(k)
    return out


# --- transform -------------------------------------------------------------


def test_constant_pilots_peak_at_origin():
    M, N = 8, 6
    Y = uplink_pilot_observation(single_path(M, N, 1, 0.0, 0.0), noise=False)
    T = angular_temporal_transform(Y, ImageConfig(4, 4))
    assert np.unravel_index(np.argmax(np.abs(T)), T.shape) == (0, 0)
    assert abs(T[0, 0]) == pytest.approx(M * N)


def test_transform_matches_dense_product(rng):
    Y = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    T = angular_temporal_transform(Y, ImageConfig(2, 2))
    np.testing.assert_allclose(T, dense_transform(Y, 2, 2), atol=1e-12)


@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 3), st.integers(1, 3), st.integers(0, 1000))
def test_transform_oracle_property(M, N, ga, gt, seed):
    r = np.random.default_rng(seed)
    Y = r.standard_normal((M, N)) + 1j * r.standard_normal((M, N))
    cfg = ImageConfig(ga, gt)
    ref = dense_transform(Y, ga, gt)
    out = angular_temporal_transform(Y, cfg)
    assert np.linalg.norm(out - ref) <= 1e-9 * np.linalg.norm(ref)
    Ua, Ut = transform_matrices(M, N, cfg)
    np.testing.assert_allclose(Ua.conj().T @ Y @ Ut, ref, atol=1e-9 * np.abs(ref).max())


def test_zero_pilots_give_zero_transform():
    assert not np.any(angular_temporal_transform(np.zeros((4, 4)), ImageConfig(2, 2)))


def test_transform_rejects_vectors():
    with pytest.raises(ValueError):
        angular_temporal_transform(np.zeros(4), ImageConfig())


def test_image_orientation_is_matched_filter(rng):
    Y = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    cfg = ImageConfig(3, 2)
    B = matched_filter_image(Y, cfg)
    np.testing.assert_allclose(to_image_orientation(angular_temporal_transform(Y, cfg)), B, atol=1e-10)
    # entry [r, c] correlates with a(r/Ka) and q(c/Kt)
    r, c = 7, 3
    a = np.exp(2j * np.pi * np.arange(6) * r / 18)
    q = np.exp(2j * np.pi * np.arange(5) * c / 10)
    assert B[r, c] == pytest.approx(a.conj() @ Y @ q.conj())


# --- normalization ---------------------------------------------------------


def test_normalize_proportional():
    np.testing.assert_allclose(normalize_image(np.array([1.0, 2.0, 4.0])), [63.75, 127.5, 255.0])


def test_normalize_rejects_zero():
    with pytest.raises(DegenerateInputError):
        normalize_image(np.zeros((3, 3)))


@given(st.integers(0, 1000), st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_normalize_scale_invariance_and_argmax(seed, c):
    r = np.random.default_rng(seed)
    Y = r.standard_normal((4, 5)) + 1j * r.standard_normal((4, 5))
    cfg = ImageConfig(2, 2)
    a = spectral_image(Y, 1, cfg).magnitudes
    b = spectral_image(c * Y, 1, cfg).magnitudes
    np.testing.assert_allclose(a, b, atol=1e-9)
    B = matched_filter_image(Y, cfg)
    assert np.argmax(a) == np.argmax(np.abs(B))
    assert a.max() == pytest.approx(255.0)


def test_image_config_validation():
    with pytest.raises(ConfigurationError):
        ImageConfig(gamma_a=0)
    with pytest.raises(ConfigurationError):
        ImageConfig(eta=0)
    with pytest.raises(ConfigurationError):
        ImageConfig(grid_size=416)


# --- geometry (spot center and size) ---------------------------------------


@given(
    st.sampled_from([(16, 16, 4), (32, 16, 4), (16, 32, 2), (24, 8, 3)]),
    st.floats(0, 1, exclude_max=True),
    st.floats(0, 1, exclude_max=True),
    st.data(),
)
def test_spot_center_and_extent(dims, theta, gamma, data):
    M, N, S = dims
    a = data.draw(st.integers(1, S))
    b = data.draw(st.integers(a, S))
    cfg = ImageConfig(8, 8)
    Ka, Kt = 8 * M, 8 * N
    Y = uplink_pilot_observation(single_path(M, N, S, theta, gamma, a, b), noise=False)
    mag = np.abs(matched_filter_image(Y, cfg))
    r, c = np.unravel_index(np.argmax(mag), mag.shape)

    def circ(x, y):
        d = abs(x - y) % 1.0
        return min(d, 1 - d)

    assert circ(r / Ka, theta) <= 1 / Ka
    assert circ(c / Kt, gamma) <= 1 / Kt
    w, h = spot_size(M, N, S, b - a + 1)
    up, down = first_nulls(mag[:, c], r)
    assert abs((up + down) / Ka - h) <= 1 / Ka + 1e-12
    right, left = first_nulls(mag[r, :], c)
    assert abs((left + right) / Kt - w) <= 1 / Kt + 1e-12


def test_dark_spot_profile_full_array():
    p = dark_spot_profile(0.3, 0.1, 1, 4, 64, 32, 4, offsets=[0.0, 1 / 64])
    assert p[0] == pytest.approx(64)
    assert p[1] == pytest.approx(0, abs=1e-9)


def test_dark_spot_profile_delay_axis():
    p = dark_spot_profile(0.3, 0.1, 1, 4, 64, 32, 4, probe_axis="delay", offsets=[0.0, 1 / 32])
    assert p[0] == pytest.approx(32)
    assert p[1] == pytest.approx(0, abs=1e-9)


def test_dark_spot_profile_half_array():
    full = dark_spot_profile(0.3, 0.1, 1, 4, 64, 32, 4, offsets=[0.0, 1 / 64, 2 / 64])
    half = dark_spot_profile(0.3, 0.1, 3, 4, 64, 32, 4, offsets=[0.0, 1 / 64, 2 / 64])
    assert half[0] == pytest.approx(full[0] / 2)
    assert half[1] > 1  # no null at the full-array spacing
    assert half[2] == pytest.approx(0, abs=1e-9)


def test_dark_spot_profile_grid_matches_image():
    M, N, S = 16, 8, 2
    sc = single_path(M, N, S, 0.27, 0.61, 2, 2)
    cfg = ImageConfig(4, 4)
    mag = np.abs(matched_filter_image(uplink_pilot_observation(sc, noise=False), cfg))
    c = int(np.argmax(mag.max(axis=0)))
    prof = dark_spot_profile(0.27, 0.61, 2, 2, M, N, S, oversampling=4)
    # the image column is the angle profile times the delay pattern at that column
    scale = mag[:, c].max() / prof.max()
    np.testing.assert_allclose(mag[:, c], scale * prof, atol=1e-9 * mag.max())


def test_dark_spot_profile_bad_axis():
    with pytest.raises(ValueError):
        dark_spot_profile(0.1, 0.1, 1, 1, 8, 8, 1, probe_axis="doppler")


# --- labels ----------------------------------------------------------------


def test_spot_size_examples():
    assert spot_size(64, 32, 4, 2)[1] == pytest.approx(8 / (2 * 64))
    assert spot_size(64, 32, 4, 4)[1] == pytest.approx(2 / 64)
    assert spot_size(64, 32, 4, 4)[0] == pytest.approx(2 / 32)


def test_label_corner_arithmetic():
    sc = single_path(32, 32, 4, 0.6195, 0.2909)
    (lb,) = make_labels(sc)
    assert (lb.x_min, lb.x_max) == (244, 303)
    assert lb.x_min == math.ceil(938 * (0.2909 - 1 / 32))


def test_labels_clamp_at_frame_edge():
    sc = single_path(32, 32, 1, 0.99, 0.005)
    (lb,) = make_labels(sc)
    assert lb.x_min == 0 and lb.y_max == GRID
    assert lb.x_max == math.ceil(938 * (0.005 + 1 / 32))


@given(st.integers(0, 2**31 - 1))
def test_labels_are_valid_boxes(seed):
    from nsmimo.model import sample_scenario

    sc = sample_scenario(SystemConfig(32, 64, 4), (1, 10), rng_seed=seed)
    labels = make_labels(sc)
    assert len(labels) == sc.L
    for lb in labels:
        assert 0 <= lb.x_min < lb.x_max <= GRID and 0 <= lb.y_min < lb.y_max <= GRID


def test_label_file_round_trip(tmp_path):
    labels = [BoxLabel(1, 2, 3, 4), BoxLabel(100, 0, 938, 17)]
    write_labels(labels, tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text().splitlines()[0] == "0 1 2 3 4"
    assert read_labels(tmp_path / "a.txt") == labels


@pytest.mark.parametrize("box", [(5, 0, 5, 10), (0, 0, 939, 10), (-1, 0, 4, 4)])
def test_box_label_validation(box):
    with pytest.raises(ValueError):
        BoxLabel(*box)


# --- PNG -------------------------------------------------------------------


def test_zero_image_is_white(tmp_path):
    img = SpectralImage(np.zeros((8, 8)), 4, 4, 1)
    export_png(img, tmp_path / "z.png")
    assert np.all(read_png(tmp_path / "z.png") == 255)


def test_darkest_pixel_at_path(tmp_path):
    M = N = 16
    theta, gamma = 0.3712, 0.8121
    cfg = ImageConfig(4, 4)
    img = spectral_image(uplink_pilot_observation(single_path(M, N, 1, theta, gamma), noise=False), 1, cfg)
    export_png(img, tmp_path / "p.png")
    px = read_png(tmp_path / "p.png")
    assert px.shape == (4 * M, 4 * N)
    row, col = np.unravel_index(np.argmin(px), px.shape)
    assert (col, row) == (round(gamma * 4 * N) % (4 * N), round(theta * 4 * M) % (4 * M))
    assert px.min() == 0


def test_png_round_trip(tmp_path, rng):
    mags = rng.uniform(0, 255, size=(12, 10))
    export_png(SpectralImage(mags, 3, 5, 1), tmp_path / "r.png")
    first = read_png(tmp_path / "r.png")
    export_png(SpectralImage(255.0 - first.astype(float), 3, 5, 1), tmp_path / "r2.png")
    np.testing.assert_array_equal(read_png(tmp_path / "r2.png"), first)
    np.testing.assert_array_equal(first, np.rint(255 - mags).astype(np.uint8))
