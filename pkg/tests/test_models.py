import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mechlab import models as M
from mechlab import spectral as S
from mechlab.errors import InvalidModelError, NotInSolutionSetError, NotInvertibleError, ShapeError


def random_model(rng, d, d2=1):
    shape = S.grid_shape(d, d2)
    return M.ConvPairModel(M.random_invertible_kernel(rng, shape), M.random_invertible_kernel(rng, shape))


def eye5(rng=None):
    eye = np.array([[0.2, 0.9, 0.4], [0.7, 1.0, 0.3], [0.5, 0.6, 0.8]])
    return M.make_eye_generator(5, 5, eye, (0, 4))


# --- latent distribution ------------------------------------------------------

def test_latent_validation():
    with pytest.raises(InvalidModelError) as exc:
        M.LatentDistribution(np.array([[0.5, 0.6, -0.1]]) * 2)
    assert len(exc.value.failures) == 2


def test_latent_nonvanishing_dft():
    assert M.LatentDistribution.dirac((1, 9)).has_nonvanishing_dft()
    assert not M.LatentDistribution.uniform((1, 9)).has_nonvanishing_dft()


def test_sample_dirac_latent(rng):
    pi = M.LatentDistribution.dirac((3, 5), (1, 2))
    for _ in range(20):
        z = M.sample_latent(pi, rng)
        assert z[1, 2] == 1 and z.sum() == 1


def test_sample_uniform_frequencies():
    pi = M.LatentDistribution.uniform((1, 9))
    rng = np.random.default_rng(3)
    counts = np.zeros(9)
    for _ in range(100_000):
        counts += M.sample_latent(pi, rng)[0]
    p = 1 / 9
    sd = np.sqrt(100_000 * p * (1 - p))
    assert np.all(np.abs(counts - 100_000 * p) < 3 * sd)


def test_zero_cell_never_drawn(rng):
    pi = np.full((1, 5), 0.25)
    pi[0, 2] = 0
    for _ in range(500):
        assert M.sample_latent(pi, rng)[0, 2] == 0


# --- models -------------------------------------------------------------------

def test_non_invertible_kernel_rejected():
    k = np.ones((1, 9))  # spectrum vanishes off DC
    with pytest.raises(InvalidModelError, match="k1 is not invertible"):
        M.ConvPairModel(k, S.dirac((1, 9)))


def test_model_arrays_are_read_only(rng):
    m = random_model(rng, 5)
    with pytest.raises(ValueError):
        m.k1[0, 0] = 1.0


def test_diagonal_model_positivity():
    with pytest.raises(InvalidModelError):
        M.DiagonalModel([1, -1], [1, 1])


def test_forward_identity_mechanisms():
    d = S.dirac((3, 5))
    m = M.ConvPairModel(d, d)
    z = M.one_hot((3, 5), (2, 3))
    np.testing.assert_array_equal(M.forward(m, z), z)


def test_forward_diag_example():
    np.testing.assert_array_equal(M.forward_diag(M.DiagonalModel([1, 2], [3, 4]), [1, 1]), [3, 8])


def test_forward_requires_one_hot(rng):
    m = random_model(rng, 5)
    with pytest.raises(ShapeError):
        M.forward(m, np.ones(m.shape))


def test_eye_generator_two_copies():
    m = eye5()
    out = M.forward(m, M.one_hot(m.shape, (0, 0)))
    np.testing.assert_allclose(out[:3, :3], m.k2[:3, :3])
    np.testing.assert_allclose(out[:3, 4:7], m.k2[:3, :3])
    assert np.count_nonzero(out) == 18


def test_eye_generator_dirac_eye():
    m = M.make_eye_generator(5, 1, [[1.0]], (0, 2))
    out = M.forward(m, M.one_hot(m.shape, (0, 0)))
    assert np.flatnonzero(out[0]).tolist() == [0, 2]


def test_eye_generator_translation_equivariance():
    m = eye5()
    x0 = M.forward(m, M.one_hot(m.shape, (0, 0)))
    x1 = M.forward(m, M.one_hot(m.shape, (1, 0)))
    np.testing.assert_allclose(x1, np.roll(x0, 1, axis=0), atol=1e-14)


def test_eye_overlap_warns():
    with pytest.warns(M.OverlapWarning):
        m = M.make_eye_generator(5, 1, [[1.0, 0.5, 0.2]], (0, 2))
    assert m.notes


def test_eye_no_warning_when_separated():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m = M.make_eye_generator(7, 1, [[1.0, 0.5, 0.2]], (0, 3))
    assert m.notes == ()


@pytest.mark.parametrize("off,expected", [((0, 3), False), ((0, 2), True), ((0, 7), True), ((0, 6), False),
                                          ((3, 1), False), ((2, 2), True)])
def test_eye_overlap_is_circular(off, expected):
    assert M.eye_overlap((9, 9), (3, 3), off) is expected


# --- composed over-parameterization -------------------------------------------

def test_compose_identity(rng):
    m = random_model(rng, 5)
    c = M.compose_omega(m, S.dirac(m.shape))
    np.testing.assert_allclose(c.k1, m.k1, atol=1e-12)
    np.testing.assert_allclose(c.k2, m.k2, atol=1e-12)


def test_compose_diag_example():
    c = M.compose_omega(M.DiagonalModel([1, 2], [2, 1]), [2, 2])
    np.testing.assert_array_equal(c.a, [2, 4])
    np.testing.assert_array_equal(c.b, [1, 0.5])
    np.testing.assert_array_equal(c.product, [2, 2])


@pytest.mark.parametrize("d", [5, 7])
def test_cos_closure(d):
    rng = np.random.default_rng(d)
    for _ in range(250):
        m = random_model(rng, d)
        w = M.random_invertible_kernel(rng, m.shape)
        c = M.compose_omega(m, w)
        assert np.max(np.abs(c.product_spectrum - m.product_spectrum)) < 1e-10 * np.max(np.abs(m.product_spectrum))


def test_compose_changes_sdr_in_general(rng):
    from mechlab.genericity import sdr_closed_form
    m = random_model(rng, 5)
    c = M.compose_omega(m, M.random_invertible_kernel(rng, m.shape))
    assert abs(sdr_closed_form(c) - sdr_closed_form(m)) > 1e-6


def test_compose_rejects_singular_omega(rng):
    m = random_model(rng, 5)
    with pytest.raises(NotInvertibleError):
        M.compose_omega(m, np.ones(m.shape))
    with pytest.raises(NotInvertibleError):
        M.compose_omega(M.DiagonalModel([1, 2], [1, 1]), [1, 0])


def test_same_solution_set_examples(rng):
    m = random_model(rng, 5)
    assert M.same_solution_set(M.compose_omega(m, M.random_invertible_kernel(rng, m.shape)), m)
    assert not M.same_solution_set(m.replace(k2=1.01 * m.k2), m, tol=1e-6)


def test_same_solution_set_randomized():
    rng = np.random.default_rng(99)
    m = random_model(rng, 5)
    for _ in range(200):
        assert M.same_solution_set(M.compose_omega(m, M.random_invertible_kernel(rng, m.shape)), m)
    for _ in range(200):
        k2 = m.k2 + 0.01 * rng.normal(size=m.shape)
        assert not M.same_solution_set(m.replace(k2=k2), m)


def test_same_solution_set_dims(rng):
    with pytest.raises(ShapeError):
        M.same_solution_set(random_model(rng, 5), random_model(rng, 7))


def test_solution_set_reachable_by_composition():
    # any factorization of the product spectrum is the truth composed with some omega
    rng = np.random.default_rng(5)
    truth = random_model(rng, 5)
    for _ in range(100):
        k1 = M.random_invertible_kernel(rng, truth.shape)
        k2 = S.real_if_close(S.idft(truth.product_spectrum / S.dft(k1)))
        cand = truth.replace(k1=k1, k2=k2)
        w = M.recover_omega(cand, truth)
        back = M.compose_omega(truth, w)
        np.testing.assert_allclose(back.k1, cand.k1, atol=1e-9)
        np.testing.assert_allclose(back.k2, cand.k2, atol=1e-9)


# --- G-equivalence ------------------------------------------------------------

def test_equivalence_with_itself(rng):
    m = random_model(rng, 5)
    v = M.g_equivalent(m, m)
    assert v.equivalent and abs(v.lam - 1) < 1e-12


def test_lambda_two(rng):
    m = random_model(rng, 7)
    cand = m.replace(k1=0.5 * m.k1, k2=2 * m.k2)
    v = M.g_equivalent(cand, m)
    assert v.equivalent and abs(v.lam - 2) < 1e-8 and v.max_residual <= 1e-8


def test_complex_lambda(rng):
    m = random_model(rng, 5)
    v = M.g_equivalent(M.lambda_scaled(m, 0.3 - 1.2j), m)
    assert v.equivalent and abs(v.lam - (0.3 - 1.2j)) < 1e-8


def test_non_flat_omega_not_equivalent(rng):
    m = random_model(rng, 5)
    cand = M.compose_omega(m, M.random_invertible_kernel(rng, m.shape))
    assert not M.g_equivalent(cand, m).equivalent
    assert not M.g_equivalent(cand, m, method="definitional").equivalent


def test_equivalence_needs_same_solution_set(rng):
    with pytest.raises(NotInSolutionSetError):
        M.g_equivalent(random_model(rng, 5), random_model(rng, 5))


@pytest.mark.parametrize("d", [5, 7])
def test_closed_form_agrees_with_definition(d):
    rng = np.random.default_rng(100 + d)
    for i in range(200):
        m = random_model(rng, d)
        if i % 2:
            lam = complex(*rng.normal(size=2))
            cand = M.lambda_scaled(m, lam)
        else:
            cand = M.compose_omega(m, M.random_invertible_kernel(rng, m.shape))
        a = M.g_equivalent(cand, m).equivalent
        b = M.g_equivalent(cand, m, method="definitional").equivalent
        assert a == b == bool(i % 2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20), st.integers(0, 2 ** 32 - 1))
def test_scaling_always_equivalent(lam, seed):
    m = random_model(np.random.default_rng(seed), 5)
    cand = M.compose_omega(m, lam * S.dirac(m.shape))
    assert M.g_equivalent(cand, m).equivalent


def test_diag_equivalence():
    t = M.DiagonalModel([1.0, 2.0, 0.5, 3.0], [2.0, 1.0, 4.0, 0.7])
    v = M.g_equivalent(M.compose_omega(t, np.full(4, 0.25)), t)
    assert v.equivalent and abs(v.lam - 4.0) < 1e-12
    cand = M.compose_omega(t, [1.0, 2.0, 1.0, 1.0])
    assert not M.g_equivalent(cand, t).equivalent
    assert not M.g_equivalent(cand, t, method="definitional").equivalent
    assert M.g_equivalent(M.compose_omega(t, np.full(4, 3.0)), t, method="definitional").equivalent


def test_2d_equivalence_flagged_experimental(rng):
    m = random_model(rng, 5, 3)
    v = M.g_equivalent(M.lambda_scaled(m, 1.5), m)
    assert v.equivalent and v.experimental
    v = M.g_equivalent(M.compose_omega(m, M.random_invertible_kernel(rng, m.shape)), m)
    assert not v.equivalent


# --- extrapolated class -------------------------------------------------------

def test_extrapolated_class_basics(rng):
    m = random_model(rng, 7)
    cls = M.extrapolated_class(m)
    assert len(cls) == 6
    np.testing.assert_array_equal(cls[0].k1, m.k1)
    assert all(np.array_equal(c.k2, m.k2) and c.latent is m.latent for c in cls)


def test_extrapolated_eye_separations():
    from mechlab.extrapolation import eye_positions
    m = M.make_eye_generator(7, 1, [[1.0, 0.5]], (0, 2))
    G = S.CyclicGroup(7)
    for g, c in zip(G.enumerate(), M.extrapolated_class(m)):
        # (g.k1)(m) = k1(g m): the pixel at 2 moves to m with g m = 2 (mod 7)
        m2 = (2 * G.inverse(g)) % 7
        assert eye_positions(c.k1) == sorted([(0, 0), (0, m2)])


# --- model files --------------------------------------------------------------

def test_model_file_roundtrip(tmp_path, rng):
    m = random_model(rng, 5)
    M.save_model(tmp_path / "m.txt", m)
    back = M.load_model(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.k1, m.k1)
    np.testing.assert_array_equal(back.latent.pi, m.latent.pi)


def test_model_file_reports_all_failures():
    text = ("[pi]\ndims 3 1\n0.5 0.5 0.5\n[k1]\ndims 3 1\n1 1 1\n[k2]\ndims 3 1\n1 0 0\n")
    with pytest.raises(InvalidModelError) as exc:
        M.parse_model(text)
    assert len(exc.value.failures) == 2


def test_model_file_missing_section():
    with pytest.raises(InvalidModelError, match=r"\[k2\]"):
        M.parse_model("[pi]\ndims 1 1\n1\n[k1]\ndims 1 1\n1\n")
