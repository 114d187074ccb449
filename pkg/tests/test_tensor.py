import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import circ_tprod
from tubalsr.tensor import (
    components_for_energy,
    dft3,
    energy_cdf,
    fro_norm,
    identity_tensor,
    idft3,
    l1_norm,
    tprod,
    tsvd,
    ttranspose,
    tubal_rank,
    unfolding_energy_cdf,
)
from tubalsr.synth import gen_low_tubal_rank

dims = st.integers(1, 8)


def test_dft_single_slice_is_identity(rng):
    t = rng.standard_normal((3, 2, 1))
    assert np.array_equal(dft3(t).real, t)


def test_dft_of_delta_tube_is_constant():
    t = np.zeros((1, 1, 4))
    t[0, 0, 0] = 1.0
    assert np.allclose(dft3(t)[0, 0], [1, 1, 1, 1])


@given(dims, dims, dims, st.integers(0, 2**32 - 1))
def test_dft_round_trip(n1, n2, n3, seed):
    t = np.random.default_rng(seed).standard_normal((n1, n2, n3))
    back = idft3(dft3(t))
    assert np.linalg.norm(back - t) <= 1e-12 * max(np.linalg.norm(t), 1.0)


def test_idft_rejects_non_conjugate_symmetric(rng):
    f = dft3(rng.standard_normal((2, 2, 4)))
    f[0, 0, 1] += 1j
    with pytest.raises(ValueError):
        idft3(f)


def test_dft_rejects_non_finite():
    t = np.zeros((2, 2, 2))
    t[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        dft3(t)


def test_tprod_identity_and_matrix_case(rng):
    b = rng.standard_normal((3, 2, 5))
    assert np.allclose(tprod(identity_tensor(3, 5), b), b, atol=1e-14)
    a = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
    assert np.allclose(tprod(a, np.ones((2, 1, 1))), [[[3.0]], [[7.0]]])


def test_tprod_matches_circular_convolution(rng):
    for _ in range(5):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((3, 2, 4))
        assert np.allclose(tprod(a, b), circ_tprod(a, b), atol=1e-10)


def test_tprod_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        tprod(rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 2, 4)))
    with pytest.raises(ValueError):
        tprod(rng.standard_normal((2, 3, 4)), rng.standard_normal((3, 2, 3)))


@given(dims, dims, dims, dims, st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_tprod_associative_and_transpose_law(n1, n2, n4, n5, n3, seed):
    r = np.random.default_rng(seed)
    a, b, c = r.standard_normal((n1, n2, n3)), r.standard_normal((n2, n4, n3)), r.standard_normal((n4, n5, n3))
    lhs, rhs = tprod(tprod(a, b), c), tprod(a, tprod(b, c))
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(np.linalg.norm(lhs), 1.0)
    ab_t = ttranspose(tprod(a, b))
    bt_at = tprod(ttranspose(b), ttranspose(a))
    assert np.linalg.norm(ab_t - bt_at) <= 1e-10 * max(np.linalg.norm(ab_t), 1.0)
    eye = identity_tensor(n1, n3)
    assert np.allclose(tprod(eye, a), a, atol=1e-12)
    assert np.allclose(tprod(a, identity_tensor(n2, n3)), a, atol=1e-12)


def test_transpose_conventions(rng):
    m = rng.standard_normal((3, 2, 1))
    assert np.array_equal(ttranspose(m)[:, :, 0], m[:, :, 0].T)
    t = rng.standard_normal((3, 4, 5))
    assert np.array_equal(ttranspose(ttranspose(t)), t)
    f, ft = dft3(t), dft3(ttranspose(t))
    for k in range(5):
        assert np.allclose(ft[:, :, k], f[:, :, k].conj().T, atol=1e-12)


def test_tsvd_identity():
    fac = tsvd(identity_tensor(4, 3))
    assert np.allclose(fac.Theta, identity_tensor(4, 3), atol=1e-14)
    assert np.allclose(fac.reconstruct(), identity_tensor(4, 3), atol=1e-14)


@given(dims, dims, dims, st.integers(0, 2**32 - 1))
def test_tsvd_invariants(n1, n2, n3, seed):
    t = np.random.default_rng(seed).standard_normal((n1, n2, n3))
    fac = tsvd(t)
    assert np.linalg.norm(fac.reconstruct() - t) / np.linalg.norm(t) < 1e-10
    for q in (fac.U, fac.V):
        n = q.shape[0]
        assert np.linalg.norm(tprod(q, ttranspose(q)) - identity_tensor(n, n3)) < 1e-10
    off = fac.Theta.copy()
    m = min(n1, n2)
    off[np.arange(m), np.arange(m), :] = 0.0
    assert np.all(off == 0.0)
    norms = np.linalg.norm(fac.singular_tubes(), axis=1)
    assert np.all(np.diff(norms) <= 1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_planted_tubal_rank_bound(seed):
    r_ = np.random.default_rng(seed)
    n1, n2, n3 = r_.integers(1, 8, size=3)
    r = int(r_.integers(0, min(n1, n2) + 1))
    t = gen_low_tubal_rank(n1, n2, n3, r, seed)
    assert tubal_rank(t, 1e-8) <= min(r, n1, n2)


def test_tubal_rank_examples():
    assert tubal_rank(np.zeros((3, 3, 2))) == 0
    assert tubal_rank(identity_tensor(4, 3)) == 4
    assert tubal_rank(gen_low_tubal_rank(6, 7, 4, 3, seed=1), 1e-8) == 3
    with pytest.raises(ValueError):
        tubal_rank(np.ones((2, 2, 2)), -1.0)


def test_norms_and_parseval(rng):
    assert fro_norm(np.zeros((2, 2, 2))) == 0.0
    assert l1_norm(np.ones((2, 2, 2))) == 8.0
    t = rng.standard_normal((3, 4, 5))
    f = dft3(t)
    freq = sum(np.linalg.norm(f[:, :, k]) ** 2 for k in range(5)) / 5
    assert np.isclose(fro_norm(t) ** 2, freq, rtol=1e-12)


def test_energy_cdf_properties(rng):
    rank1 = tprod(rng.standard_normal((4, 1, 3)), rng.standard_normal((1, 5, 3)))
    cdf = energy_cdf(rank1)
    assert np.isclose(cdf[0], 1.0, atol=1e-12)
    t = rng.standard_normal((5, 6, 4))
    for c in (energy_cdf(t), unfolding_energy_cdf(t, 1), unfolding_energy_cdf(t, 3)):
        assert np.all(np.diff(c) >= 0) and abs(c[-1] - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        energy_cdf(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        unfolding_energy_cdf(t, 4)


def test_energy_cdf_low_rank_plus_noise():
    t = gen_low_tubal_rank(12, 12, 6, 5, seed=4)
    noisy = t + 0.01 * np.std(t) * np.random.default_rng(5).standard_normal(t.shape)
    assert components_for_energy(energy_cdf(noisy), 0.95) <= 6


def test_centered_cdf_removes_offset(rng):
    t = rng.standard_normal((4, 5, 3)) - 80.0
    assert components_for_energy(energy_cdf(t)) == 1
    assert np.allclose(energy_cdf(t, center=True), energy_cdf(t - t.mean()))
