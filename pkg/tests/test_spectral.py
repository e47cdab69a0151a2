import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rel, seeds, tensor_pair
from tkaczmarz.errors import AssumptionViolation, ConfigError, InternalConsistencyError, ShapeError
from tkaczmarz.sampling import make_all_of_size, make_singletons, make_whole
from tkaczmarz.spectral import (
    SpectralTensor,
    block_pinv,
    expected_projector,
    expected_projector_bcirc,
    from_spectral,
    gram_solve,
    half_weights,
    hat_sqnorm,
    least_norm_lsq,
    projector_apply,
    rfft3,
    singular_values,
    spectrum,
    to_spectral,
    tprod,
    tprod_fast,
)
from tkaczmarz.tensor import bcirc, fold, fro_norm, identity_tensor, inner, tprod_reference, ttranspose, unfold


def test_depth_one_spectrum_is_the_slice(rng):
    a = rng.standard_normal((3, 2, 1))
    np.testing.assert_array_equal(to_spectral(a).blocks[0], a[:, :, 0])


def test_round_trip(rng):
    a = rng.standard_normal((4, 3, 5))
    assert np.max(np.abs(from_spectral(to_spectral(a)) - a)) < 1e-10


def test_conjugate_symmetry(rng):
    b = to_spectral(rng.standard_normal((2, 3, 5))).blocks
    for k in range(1, 5):
        np.testing.assert_allclose(b[k], np.conj(b[5 - k]), atol=1e-12)


def test_non_symmetric_spectrum_is_refused(rng):
    blocks = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
    with pytest.raises(InternalConsistencyError):
        from_spectral(SpectralTensor(blocks))


def test_singular_values_match_dense_bcirc(rng):
    for shape in [(2, 3, 4), (3, 3, 5), (5, 2, 3), (1, 4, 2)]:
        a = rng.standard_normal(shape)
        dense = np.sort(np.linalg.svd(bcirc(a), compute_uv=False))[::-1]
        ours = singular_values(a)[: dense.size]
        np.testing.assert_allclose(ours, dense, atol=1e-9)


def test_spectrum_of_scalar_tube():
    a, b, c = 1.0, 2.0, 4.0
    w = np.exp(-2j * np.pi / 3)
    expect = sorted([abs(a + b + c), abs(a + w * b + w**2 * c), abs(a + w**2 * b + w * c)], reverse=True)
    np.testing.assert_allclose(singular_values(np.array([a, b, c]).reshape(1, 1, 3)), expect, rtol=1e-12)


def test_spectrum_summary(rng):
    s = spectrum(identity_tensor(3, 4))
    assert s.sigma_max == pytest.approx(1.0) and s.sigma_min_plus == pytest.approx(1.0)
    assert s.rank == 12
    a = rng.standard_normal((2, 3, 4))
    dense = np.linalg.svd(bcirc(a), compute_uv=False)
    s = spectrum(a)
    assert s.sigma_max == pytest.approx(dense.max(), rel=1e-9)
    assert s.sigma_min_plus == pytest.approx(dense.min(), rel=1e-9)
    assert s.rank == 8
    assert s.sigma_min <= s.sigma_min_plus <= s.sigma_max


def test_spectrum_counts_rank_deficiency():
    a = np.zeros((2, 2, 3))
    a[0, 0, 0] = 1.0
    s = spectrum(a)
    assert s.rank == 3 and s.sigma_min == 0.0 and s.sigma_min_plus == pytest.approx(1.0)


@given(tensor_pair())
def test_fast_product_matches_reference(ab):
    a, b = ab
    ref = tprod_reference(a, b)
    assert rel(from_spectral(tprod_fast(to_spectral(a), to_spectral(b))), ref) < 1e-10
    assert rel(tprod(a, b), ref) < 1e-10


def test_fast_product_identity_and_depth_one(rng):
    a = rng.standard_normal((3, 2, 4))
    assert rel(from_spectral(tprod_fast(to_spectral(a), to_spectral(identity_tensor(2, 4)))), a) < 1e-12
    a1, b1 = rng.standard_normal((3, 2, 1)), rng.standard_normal((2, 2, 1))
    prod = tprod_fast(to_spectral(a1), to_spectral(b1)).blocks
    assert np.all(prod.imag == 0)
    with pytest.raises(ShapeError):
        tprod_fast(to_spectral(a1), to_spectral(a1))


def test_parseval_weights(rng):
    for p in (1, 2, 5, 6):
        a = rng.standard_normal((3, 2, p))
        assert hat_sqnorm(rfft3(a), half_weights(p)) == pytest.approx(fro_norm(a) ** 2, rel=1e-12)


def test_gram_solve_identity(rng):
    r = rng.standard_normal((3, 2, 4))
    assert rel(gram_solve(identity_tensor(3, 4), r), r) < 1e-12


def test_gram_solve_matches_dense_projector(rng):
    m = rng.standard_normal((5, 4, 3))[[2]]
    x = rng.standard_normal((4, 2, 3))
    got = gram_solve(m, tprod(m, x))
    dense = fold(np.linalg.pinv(bcirc(m)) @ bcirc(m) @ unfold(x), 3)
    assert rel(got, dense) < 1e-10
    again = gram_solve(m, tprod(m, got))
    assert rel(again, got) < 1e-10


def test_gram_solve_flags_zero_row(rng):
    m = rng.standard_normal((2, 3, 4))
    m[1] = 0.0
    with pytest.raises(AssumptionViolation) as info:
        gram_solve(m, rng.standard_normal((2, 1, 4)))
    assert info.value.frequency == 0


def test_gram_solve_names_the_frequency():
    # a tube (1, -1, 1, -1) vanishes at every frequency except the Nyquist one
    m = np.array([1.0, -1.0, 1.0, -1.0]).reshape(1, 1, 4)
    with pytest.raises(AssumptionViolation) as info:
        gram_solve(m, np.ones((1, 1, 4)))
    assert info.value.frequency == 0
    assert "frequency 0" in str(info.value)


def test_block_pinv_tolerates_ill_conditioned_full_rank(rng):
    # condition number ~1e7: the gram would be ~1e14, the factor itself is fine
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    m = (q[:3] * np.array([1.0, 1e-3, 1e-7])[:, None])[:, :, None]
    pinv = block_pinv(rfft3(m))
    np.testing.assert_allclose((rfft3(m) @ pinv)[0], np.eye(3), atol=1e-8)


def test_shape_checks(rng):
    with pytest.raises(ShapeError):
        gram_solve(rng.standard_normal((2, 3, 2)), rng.standard_normal((3, 1, 2)))
    with pytest.raises(ShapeError):
        projector_apply(rng.standard_normal((2, 3, 2)), rng.standard_normal((2, 1, 2)))
    with pytest.raises(ShapeError):
        least_norm_lsq(rng.standard_normal((2, 3, 2)), rng.standard_normal((3, 1, 2)))


@st.composite
def projector_case(draw):
    k = draw(st.integers(1, 3))
    n2 = draw(st.integers(k, 5))
    l, p = draw(st.integers(1, 3)), draw(st.integers(1, 5))
    r = np.random.default_rng(draw(seeds))
    return r.standard_normal((k, n2, p)), r.standard_normal((n2, l, p)), r.standard_normal((k, l, p))


@given(projector_case())
def test_projector_idempotent_and_contracting(case):
    m, x, _ = case
    px = projector_apply(m, x)
    assert rel(projector_apply(m, px), px) < 1e-9
    assert fro_norm(px) <= fro_norm(x) * (1 + 1e-12)


@given(projector_case())
def test_projector_fixes_range_and_orthogonality(case):
    m, x, y = case
    mty = tprod(ttranspose(m), y)
    assert rel(projector_apply(m, mty), mty) < 1e-8
    resid = x - projector_apply(m, x)
    scale = fro_norm(x) * fro_norm(mty)
    assert abs(inner(resid, mty)) <= 1e-10 * max(scale, 1.0)


@given(projector_case())
def test_pythagorean_identity(case):
    m, x, y = case
    a = x - projector_apply(m, x)
    b = tprod(ttranspose(m), y)
    lhs = fro_norm(a + b) ** 2
    rhs = fro_norm(a) ** 2 + fro_norm(b) ** 2
    assert abs(lhs - rhs) <= 1e-8 * rhs


@given(tensor_pair(max_dim=5))
def test_operator_norm_bound(ab):
    u, x = ab
    assert fro_norm(tprod(u, x)) <= spectrum(u).sigma_max * fro_norm(x) * (1 + 1e-12)


@given(projector_case())
def test_projector_frobenius_bound(case):
    m, _, _ = case
    k, _, p = m.shape
    factor = gram_solve(m, identity_tensor(k, p))  # M* (M M*)^{-1}
    lhs = np.linalg.norm(bcirc(factor)) ** 2
    assert lhs <= k * p / spectrum(m).sigma_min_plus**2 * (1 + 1e-8)


@given(projector_case())
def test_dense_projector_symmetric_idempotent(case):
    m, _, _ = case
    n2, p = m.shape[1], m.shape[2]
    pm = bcirc(projector_apply(m, identity_tensor(n2, p)))
    np.testing.assert_allclose(pm, pm.T, atol=1e-9)
    np.testing.assert_allclose(pm @ pm, pm, atol=1e-9)


def test_least_norm_lsq_consistent(rng):
    a = rng.standard_normal((6, 3, 4))
    x = rng.standard_normal((3, 2, 4))
    got = least_norm_lsq(a, tprod(a, x))
    assert rel(got, x) < 1e-9
    b = rng.standard_normal((3, 2, 4))
    assert rel(least_norm_lsq(identity_tensor(3, 4), b), b) < 1e-12


def test_least_norm_lsq_matches_dense_pinv(rng):
    for a_shape, l in [((4, 3, 3), 2), ((2, 5, 4), 1), ((3, 3, 2), 3)]:
        a = rng.standard_normal(a_shape)
        b = rng.standard_normal((a_shape[0], l, a_shape[2]))
        dense = fold(np.linalg.pinv(bcirc(a)) @ unfold(b), a_shape[2])
        assert rel(least_norm_lsq(a, b), dense) < 1e-9


@given(tensor_pair(max_dim=5), seeds)
def test_least_squares_residual_orthogonal_to_range(ab, seed):
    a, x = ab
    b = np.random.default_rng(seed).standard_normal((a.shape[0], x.shape[1], a.shape[2]))
    r = b - tprod(a, least_norm_lsq(a, b))
    probe = tprod(a, x)
    assert abs(inner(r, probe)) <= 1e-8 * fro_norm(b) * fro_norm(probe)


def test_expected_projector_examples(rng):
    u = rng.standard_normal((3, 5, 2))
    np.testing.assert_allclose(expected_projector_bcirc(u, make_whole(3)),
                               bcirc(projector_apply(u, identity_tensor(5, 2))), atol=1e-12)
    square = rng.standard_normal((3, 3, 2))
    np.testing.assert_allclose(expected_projector_bcirc(square, make_whole(3)), np.eye(6), atol=1e-10)
    np.testing.assert_allclose(expected_projector_bcirc(identity_tensor(2, 1), make_singletons(2)),
                               0.5 * np.eye(2), atol=1e-15)


def test_expected_projector_eigenvalues_in_unit_interval(rng):
    u = rng.standard_normal((5, 3, 3))
    e = expected_projector(u, make_all_of_size(5, 2))
    eig = e.eigenvalues()
    assert e.exact
    assert eig.min() >= -1e-9 and eig.max() <= 1 + 1e-9
    dense = np.linalg.eigvalsh(expected_projector_bcirc(u, make_all_of_size(5, 2)))
    np.testing.assert_allclose(np.sort(dense), eig, atol=1e-10)


def test_expected_projector_limit_and_monte_carlo(rng):
    from tkaczmarz.rng import MONTE_CARLO, RandomStream

    u = rng.standard_normal((6, 4, 2))
    fam = make_all_of_size(6, 2)
    with pytest.raises(ConfigError):
        expected_projector(u, fam, enumeration_limit=10)
    est = expected_projector(u, fam, enumeration_limit=10, monte_carlo=3000, stream=RandomStream(0, MONTE_CARLO))
    assert not est.exact and est.n_samples == 3000
    exact = expected_projector(u, fam)
    assert rel(est.tensor, exact.tensor) < 0.1
