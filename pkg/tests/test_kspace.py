import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mrdlr.errors import ValidationError
from mrdlr.kspace import (Axis, ImageVolume, KSpaceVolume, WindowSpec, apply_window, fft_centered,
                          ifft_centered, tukey_profile, window_weights, zero_pad_or_crop)

from conftest import centered_dft_matrix

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _cvol(shape):
    return st.tuples(arrays(np.float64, shape, elements=finite),
                     arrays(np.float64, shape, elements=finite)).map(lambda t: t[0] + 1j * t[1])


def test_axis_mapping():
    assert [int(a) for a in (Axis.FREQUENCY, Axis.PHASE, Axis.SLICE)] == [0, 1, 2]
    assert Axis.parse("phase") is Axis.PHASE and Axis.parse(2) is Axis.SLICE
    with pytest.raises(ValidationError):
        Axis.parse("readout")


def test_fft_matches_explicit_dft(rng):
    x = rng.standard_normal((6, 5, 4)) + 1j * rng.standard_normal((6, 5, 4))
    ref = np.einsum("ax,by,cz,xyz->abc", centered_dft_matrix(6), centered_dft_matrix(5),
                    centered_dft_matrix(4), x)
    assert np.allclose(fft_centered(x), ref, atol=1e-12)


def test_delta_spectrum_gives_constant():
    k = np.array([0, 0, 1, 0], dtype=complex)
    x = ifft_centered(k, axes=(0,))
    assert np.allclose(x, 0.5)


def test_roundtrip_and_zero(rng):
    x = rng.standard_normal((8, 7, 6, 2)) + 1j * rng.standard_normal((8, 7, 6, 2))
    assert np.linalg.norm(ifft_centered(fft_centered(x)) - x) / np.linalg.norm(x) < 1e-6
    assert not np.any(ifft_centered(np.zeros((4, 4, 4), complex)))


def test_parseval_16cubed(rng):
    x = rng.standard_normal((16, 16, 16)) + 1j * rng.standard_normal((16, 16, 16))
    e0, e1 = np.sum(np.abs(x) ** 2), np.sum(np.abs(fft_centered(x)) ** 2)
    assert abs(e0 - e1) / e0 < 1e-9


def test_hermitian_kspace_gives_real_image(rng):
    x = rng.standard_normal((8, 6, 4))
    k = fft_centered(x)
    img = ifft_centered(k)
    assert np.abs(img.imag).max() < 1e-9 * np.abs(img.real).max()


def test_non_finite_named():
    x = np.zeros((4, 4, 4))
    x[1, 2, 3] = np.nan
    with pytest.raises(ValidationError, match=r"\(1, 2, 3\)"):
        fft_centered(x)


@given(_cvol((4, 6, 3)), _cvol((4, 6, 3)), finite)
def test_linearity_and_unitarity(x, y, a):
    fx, fy = fft_centered(x), fft_centered(y)
    lhs = fft_centered(a * x + y)
    scale = max(np.linalg.norm(lhs), 1e-30)
    assert np.linalg.norm(lhs - (a * fx + fy)) / scale < 1e-9 or np.linalg.norm(lhs) < 1e-12
    nx = np.linalg.norm(x)
    if nx > 0:
        assert abs(nx - np.linalg.norm(fx)) / nx < 1e-9


def test_tukey_endpoints():
    assert np.array_equal(tukey_profile(64, 0.0), np.ones(64))
    w = tukey_profile(64, 1.0)
    assert w[0] == 0.0 and w[32] == 1.0
    with pytest.raises(ValidationError):
        tukey_profile(8, 1.5)
    with pytest.raises(ValidationError):
        WindowSpec(alpha=-0.1)


@given(st.floats(0, 1), st.integers(1, 40))
def test_window_keeps_dc(alpha, n):
    assert tukey_profile(n, alpha)[n // 2] == 1.0


def test_window_alpha0_identity(rng):
    k = rng.standard_normal((8, 8, 4, 2)) + 1j * rng.standard_normal((8, 8, 4, 2))
    assert np.array_equal(apply_window(k, WindowSpec(alpha=0.0)), k)


def test_window_selected_axes_only():
    w = window_weights((16, 16, 4), WindowSpec(alpha=1.0, axes=("phase",)))
    assert np.all(w[:, 8, :] == 1.0)
    assert np.all(w[0, :, 0] == w[5, :, 3])


def _overshoot(alpha):
    # sharp rectangle truncated to its central 32 k-space lines, evaluated on a fine
    # sinc-interpolated grid so the ringing peak is not missed by the lattice
    n, fine = 64, 1024
    img = np.zeros((n, 1, 1))
    img[16:48] = 1.0
    k = zero_pad_or_crop(fft_centered(img), (32, 1, 1))
    k = apply_window(k, WindowSpec(alpha=alpha, axes=("frequency",)))
    rec = np.real(ifft_centered(zero_pad_or_crop(k, (fine, 1, 1)))) * np.sqrt(fine / n)
    return rec.max() - 1.0


def test_window_reduces_gibbs():
    assert _overshoot(0.5) < _overshoot(0.0)
    assert _overshoot(0.0) > 0.08  # classic Gibbs overshoot of about 9%


def test_zero_pad_roundtrip_and_identity(rng):
    k = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    big = zero_pad_or_crop(k, (16, 16, 16))
    assert np.array_equal(zero_pad_or_crop(big, (8, 8, 8)), k)
    assert np.array_equal(zero_pad_or_crop(k, (8, 8, 8)), k)
    assert big[8, 8, 8] == k[4, 4, 4]
    assert np.isclose(np.sum(np.abs(big) ** 2), np.sum(np.abs(k) ** 2))


def test_zero_pad_interpolates_on_original_lattice(rng):
    x = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    up = ifft_centered(zero_pad_or_crop(fft_centered(x), (16, 16, 16)))
    # centered lattice: sample i of the 8-grid sits at 2i of the 16-grid
    assert np.abs(up[::2, ::2, ::2] * np.sqrt(8.0) - x).max() < 1e-6


def test_zero_pad_with_coil_axis(rng):
    k = rng.standard_normal((4, 4, 2, 3))
    out = zero_pad_or_crop(k, (6, 8, 2))
    assert out.shape == (6, 8, 2, 3)


def test_volume_types_validate():
    with pytest.raises(ValidationError):
        ImageVolume(np.zeros((4, 4)))
    with pytest.raises(ValidationError):
        KSpaceVolume(np.zeros((4, 4, 4, 1)), is_centered=False)
    with pytest.raises(ValidationError):
        ImageVolume(np.full((2, 2, 2), np.inf))
    assert KSpaceVolume(np.zeros((4, 4, 2, 3))).ncoils == 3
