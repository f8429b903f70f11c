import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mechlab import spectral as S
from mechlab.errors import GroupError, ShapeError
from conftest import direct_circular_convolution

PRIMES = [3, 5, 7, 11, 13]
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def signal(n):
    return hnp.arrays(float, n, elements=finite)


# --- DFT ----------------------------------------------------------------------

def test_dirac_has_flat_spectrum():
    x = np.zeros(9)
    x[0] = 1
    np.testing.assert_allclose(S.dft(x), np.ones(9))


@given(st.integers(1, 64).flatmap(signal))
def test_roundtrip_1d(x):
    assert np.max(np.abs(S.idft(S.dft(x)) - x), initial=0) < 1e-10


@given(st.integers(1, 9), st.integers(1, 9), st.data())
def test_roundtrip_2d(r, c, data):
    x = data.draw(hnp.arrays(float, (r, c), elements=finite))
    assert np.max(np.abs(S.idft(S.dft(x)) - x)) < 1e-10


def test_dft_matches_explicit_sum(rng):
    x = rng.normal(size=7) + 1j * rng.normal(size=7)
    n = np.arange(7)
    ref = np.array([np.sum(x * np.exp(-2j * np.pi * u * n / 7)) for u in range(7)])
    np.testing.assert_allclose(S.dft(x), ref, atol=1e-12)


def test_batched_dft_matches_loop(rng):
    x = rng.normal(size=(4, 3, 5))
    np.testing.assert_allclose(S.dft(x), np.stack([S.dft(xi) for xi in x]), atol=1e-12)


@given(signal(9), signal(9), finite)
def test_dft_linear(a, b, s):
    np.testing.assert_allclose(S.dft(a + s * b), S.dft(a) + s * S.dft(b), atol=1e-9)


@pytest.mark.parametrize("n", [9, 1024])
def test_parseval(rng, n):
    x = rng.normal(size=n)
    assert abs(S.parseval_energy(x) - S.spectral_energy(S.dft(x))) < 1e-10 * max(1, S.parseval_energy(x))


def test_parseval_examples():
    d = np.zeros(9)
    d[0] = 1
    assert S.parseval_energy(d) == 1
    assert np.isclose(np.sum(np.abs(S.dft(d)) ** 2), 9)
    assert S.parseval_energy(np.zeros(9)) == 0


def test_real_kernel_spectrum_is_conjugate_symmetric(rng):
    k = rng.normal(size=(5, 9))
    K = S.dft(k)
    mirror = K[(-np.arange(5)) % 5][:, (-np.arange(9)) % 9]
    np.testing.assert_allclose(mirror, np.conj(K), atol=1e-12)


def test_empty_input_rejected():
    with pytest.raises(ShapeError):
        S.dft(np.array([]))


# --- convolution --------------------------------------------------------------

def test_dirac_is_identity(rng, backend):
    a = rng.normal(size=(5, 9))
    np.testing.assert_allclose(S.circular_convolve(a, S.dirac(a.shape), backend), a)


def test_translations_compose(backend):
    out = S.circular_convolve(S.dirac((1, 9), (0, 2)), S.dirac((1, 9), (0, 3)), backend)
    np.testing.assert_array_equal(out, S.dirac((1, 9), (0, 5)))


def test_convolution_matches_definition(rng, backend):
    a, b = rng.normal(size=(2, 5, 7))
    np.testing.assert_allclose(S.circular_convolve(a, b, backend), direct_circular_convolution(a, b), atol=1e-12)


def test_convolution_theorem_9x9(rng, backend):
    a, b = rng.normal(size=(2, 9, 9))
    ref = S.idft(S.dft(a) * S.dft(b))
    assert np.max(np.abs(S.circular_convolve(a, b, backend) - ref)) < 1e-10


def test_convolution_theorem_1d(rng):
    a, b = rng.normal(size=(2, 9))
    c = S.circular_convolve(a, b)
    assert c.shape == (9,)
    np.testing.assert_allclose(S.dft(c), S.dft(a) * S.dft(b), atol=1e-10)


@settings(max_examples=30)
@given(hnp.arrays(float, (3, 5), elements=finite), hnp.arrays(float, (3, 5), elements=finite),
       hnp.arrays(float, (3, 5), elements=finite))
def test_convolution_commutative_associative(a, b, c):
    ab = S.circular_convolve(a, b)
    np.testing.assert_allclose(ab, S.circular_convolve(b, a), atol=1e-9)
    np.testing.assert_allclose(S.circular_convolve(ab, c), S.circular_convolve(a, S.circular_convolve(b, c)),
                               atol=1e-7)


def test_complex_convolution(rng, backend):
    a = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    b = rng.normal(size=(3, 5))
    np.testing.assert_allclose(S.circular_convolve(a, b, backend), direct_circular_convolution(a, b), atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        S.circular_convolve(np.ones((1, 9)), np.ones((1, 7)))


# --- groups -------------------------------------------------------------------

def test_inverse_example():
    assert S.CyclicGroup(5).inverse(2) == 3


def test_generator_enumerates_d5():
    G = S.CyclicGroup(5)
    assert G.enumerate() == (1, 2, 3, 4)
    assert [G.power(2, k) for k in range(1, 5)] == [2, 4, 3, 1]


@pytest.mark.parametrize("d", PRIMES)
def test_group_axioms(d):
    G = S.CyclicGroup(d)
    els = G.enumerate()
    for g in els:
        assert G.multiply(g, 1) == g
        assert G.multiply(g, G.inverse(g)) == 1
        for h in els:
            assert G.multiply(g, h) in els
            assert G.multiply(g, h) == G.multiply(h, g)
            for k in els:
                assert G.multiply(G.multiply(g, h), k) == G.multiply(g, G.multiply(h, k))
    assert sorted(G.power(G.generator, k) for k in range(1, d)) == list(els)


@pytest.mark.parametrize("bad", [0, 5, 7, -1])
def test_element_out_of_range(bad):
    with pytest.raises(GroupError):
        S.CyclicGroup(5).inverse(bad)


@pytest.mark.parametrize("d", [1, 2, 4, 9, 15])
def test_non_prime_modulus(d):
    with pytest.raises(GroupError):
        S.CyclicGroup(d)


def test_haar_sample_uniform():
    # chi-square goodness of fit, 6 dof, 1% critical value 16.812
    G = S.CyclicGroup(7)
    draws = G.haar_sample(np.random.default_rng(7), size=100_000)
    counts = np.bincount(draws, minlength=7)[1:]
    expected = 100_000 / 6
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < 16.812


# --- stretching action --------------------------------------------------------

def test_stretch_identity(rng):
    k = rng.normal(size=(5, 9))
    for axes in ("horizontal", "vertical", "both"):
        g = (1, 1) if axes == "both" else 1
        np.testing.assert_array_equal(S.act_stretch(g, k, axes), k)


def test_stretch_moves_index_one_to_three():
    k = np.zeros(9)
    k[1] = 1
    assert np.flatnonzero(S.act_stretch(2, k)).tolist() == [3]


def test_stretch_keeps_sign():
    k = np.zeros(9)
    k[-1] = 1  # signed index -1
    out = S.act_stretch(2, k)
    assert np.flatnonzero(out).tolist() == [9 - 3]


@pytest.mark.parametrize("d", PRIMES)
def test_stretch_is_group_action_exhaustive(d):
    k = np.random.default_rng(d).normal(size=2 * d - 1)
    G = S.CyclicGroup(d)
    for g in G.enumerate():
        for h in G.enumerate():
            lhs = S.act_stretch(g, S.act_stretch(h, k))
            np.testing.assert_array_equal(lhs, S.act_stretch(G.multiply(g, h), k))
        np.testing.assert_array_equal(S.act_stretch(G.inverse(g), S.act_stretch(g, k)), k)
        assert sorted(S.act_stretch(g, k)) == sorted(k)


def test_stretch_on_positive_indices_is_permutation_matrix():
    d = 7
    for g in range(1, d):
        P = np.zeros((d - 1, d - 1))
        for m in range(1, d):
            e = np.zeros(2 * d - 1)
            e[m] = 1
            out = S.act_stretch(g, e)
            assert out[d:].sum() == 0  # positive indices stay positive
            P[:, m - 1] = out[1:d]
        np.testing.assert_array_equal(P @ P.T, np.eye(d - 1))


@pytest.mark.parametrize("d", PRIMES)
def test_spectral_action_remaps_by_inverse(d):
    K = np.arange(2 * d - 1, dtype=float)
    G = S.CyclicGroup(d)
    u = S.signed_indices(2 * d - 1)
    for g in G.enumerate():
        out = S.act_stretch_spectrum(g, K)
        gi = G.inverse(g)
        src = np.sign(u) * ((np.abs(u) * gi) % d)
        np.testing.assert_array_equal(out, K[src % (2 * d - 1)])


@pytest.mark.parametrize("d", [5, 7])
def test_spectral_action_preserves_real_kernels(d, rng):
    k = rng.normal(size=2 * d - 1)
    for g in range(1, d):
        back = S.idft(S.act_stretch_spectrum(g, S.dft(k)))
        assert np.max(np.abs(back.imag)) < 1e-12


@pytest.mark.parametrize("d", [5, 7, 11])
def test_haar_average_flattens_spectrum(d, rng):
    K = rng.normal(size=2 * d - 1) + 1j * rng.normal(size=2 * d - 1)
    avg = np.mean([S.act_stretch_spectrum(g, K) for g in range(1, d)], axis=0)
    assert np.isclose(avg[0], K[0], rtol=0, atol=1e-14)
    np.testing.assert_allclose(avg[1:d], np.full(d - 1, K[1:d].mean()), atol=1e-12)
    np.testing.assert_allclose(avg[d:], np.full(d - 1, K[d:].mean()), atol=1e-12)


def test_both_axes_product_group(rng):
    k = rng.normal(size=(5, 9))
    grp = S.StretchGroup(k.shape, "both")
    assert grp.order == 4 * 2 and len(grp.elements) == 8
    for g in grp.elements:
        for h in grp.elements:
            np.testing.assert_array_equal(S.act_stretch(g, S.act_stretch(h, k, "both"), "both"),
                                          S.act_stretch(grp.multiply(g, h), k, "both"))


def test_vertical_axis_of_1d_kernel_rejected():
    with pytest.raises(GroupError):
        S.act_stretch(2, np.ones((1, 9)), "vertical")


def test_non_prime_axis_rejected():
    with pytest.raises(GroupError):
        S.act_stretch(2, np.ones(7))  # half-extent 4


# --- Haar wavelets ------------------------------------------------------------

def haar_basis_1d(n, level):
    """Dense scaling and wavelet rows at ``level`` (support 2**level)."""
    w = 2 ** level
    phi = np.zeros((n // w, n))
    psi = np.zeros((n // w, n))
    for p in range(n // w):
        phi[p, p * w:(p + 1) * w] = 1
        psi[p, p * w:p * w + w // 2] = 1
        psi[p, p * w + w // 2:(p + 1) * w] = -1
    return phi / math.sqrt(w), psi / math.sqrt(w)


def dense_scale_energies(x, levels):
    """Per-scale energies from explicitly built 2D Haar basis functions."""
    n = x.shape[0]
    phiL, _ = haar_basis_1d(n, levels)
    out = [np.sum((phiL @ x @ phiL.T) ** 2)]
    for lv in range(levels, 0, -1):
        phi, psi = haar_basis_1d(n, lv)
        out.append(sum(np.sum((A @ x @ B.T) ** 2) for A, B in ((phi, psi), (psi, phi), (psi, psi))))
    return np.array(out)


def test_identical_images_zero():
    a = np.random.default_rng(0).normal(size=(8, 8))
    rep = S.haar_wavelet_mse_by_scale(a, a, 3)
    assert all(m == 0 for m in rep.mse)


def test_constant_difference_in_coarsest_scale():
    rep = S.haar_wavelet_mse_by_scale(np.full((8, 8), 3.0), np.ones((8, 8)), 3)
    assert rep.mse[0] > 0
    assert np.allclose(rep.mse[1:], 0, atol=1e-14)
    assert rep.scales == (1, 2, 3, 4)


def test_single_pixel_against_dense_oracle():
    a = np.zeros((8, 8))
    a[5, 2] = 1.0
    rep = S.haar_wavelet_mse_by_scale(a, np.zeros((8, 8)), 3)
    np.testing.assert_allclose(rep.energies, dense_scale_energies(a, 3), atol=1e-14)
    assert math.isclose(rep.total_energy, 1.0)


@settings(max_examples=25)
@given(st.sampled_from([2, 4, 8, 16]), st.data())
def test_haar_energy_conservation(n, data):
    x = data.draw(hnp.arrays(float, (n, n), elements=finite))
    levels = data.draw(st.integers(0, int(math.log2(n))))
    rep = S.haar_wavelet_mse_by_scale(x, np.zeros_like(x), levels)
    assert abs(rep.total_energy - np.sum(x ** 2)) < 1e-10 * max(1.0, np.sum(x ** 2))
    np.testing.assert_allclose(rep.energies, dense_scale_energies(x, levels), atol=1e-9)


@pytest.mark.parametrize("shape,levels", [((6, 6), 1), ((8, 4), 1), ((8, 8), 4)])
def test_haar_rejects_bad_shapes(shape, levels):
    with pytest.raises(ShapeError):
        S.haar_wavelet_mse_by_scale(np.zeros(shape), np.zeros(shape), levels)


def test_pad_to_pow2_symmetric():
    p, pads = S.pad_to_pow2(np.ones((1, 13)))
    assert p.shape == (16, 16)
    assert pads == ((7, 8), (1, 2))
    assert p.sum() == 13


# --- grid files ---------------------------------------------------------------

def test_grid_roundtrip(tmp_path, rng):
    x = rng.normal(size=(3, 5))
    path = tmp_path / "k.grid"
    S.write_grid(path, x)
    assert path.read_text().splitlines()[0] == "dims 5 3"
    np.testing.assert_array_equal(S.read_grid(path), x)


def test_complex_grid_roundtrip(rng):
    x = rng.normal(size=(1, 5)) + 1j * rng.normal(size=(1, 5))
    text = S.format_grid(x)
    assert "," in text.splitlines()[1]
    np.testing.assert_array_equal(S.parse_grid(text), x)


def test_grid_value_count_checked():
    with pytest.raises(ShapeError):
        S.parse_grid("dims 3 1\n1 2\n")
