from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import ortho_group

from hdpa.asymptotics import AspectRatios, SpikedModel, cnorm_limit
from hdpa.errors import ContractViolation, DataParseError, DomainError, InsufficientDataError
from hdpa.simharness import GeneratorSpec, generate
from hdpa.spectral import (
    COVARIANCE_DIVISOR,
    RngSeed,
    augment,
    augmented_spectrum,
    derive_seed,
    eig_sym,
    original_eigenvalues,
    read_matrix_csv,
    sample_covariance,
    write_matrix_csv,
)


def _brute_cov(x):
    n, p = x.shape
    mean = [sum(x[i, j] for i in range(n)) / n for j in range(p)]
    out = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            out[a, b] = sum((x[i, a] - mean[a]) * (x[i, b] - mean[b]) for i in range(n)) / n
    return out


def test_covariance_two_points():
    assert COVARIANCE_DIVISOR == "n"
    assert sample_covariance([[0.0], [2.0]])[0, 0] == pytest.approx(1.0)


def test_covariance_constant_column():
    x = np.random.default_rng(0).standard_normal((6, 3))
    x[:, 1] = 7.0
    s = sample_covariance(x)
    assert np.all(s[1] == 0) and np.all(s[:, 1] == 0)


def test_covariance_matches_double_loop():
    x = np.random.default_rng(1).standard_normal((5, 3))
    np.testing.assert_allclose(sample_covariance(x), _brute_cov(x), atol=1e-12)
    s = sample_covariance(x)
    assert np.array_equal(s, s.T)


def test_covariance_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        sample_covariance([[1.0, 2.0]])


def test_augment_identity_and_determinism():
    x = np.random.default_rng(2).standard_normal((20, 4))
    seed = RngSeed(123, 1)
    z1 = augment(x, 1, 0.7, seed)
    z2 = augment(x, 1, 0.7, seed)
    assert z1.shape == (20, 5)
    assert np.array_equal(z1[:, :4], x)
    assert np.array_equal(z1, z2)
    assert not np.array_equal(z1, augment(x, 1, 0.7, RngSeed(124, 1)))


def test_augment_moments():
    n, r, sigma = 10_000, 5, 1.7
    z = augment(np.zeros((n, 1)), r, sigma, RngSeed(5))[:, 1:]
    se_mean = sigma / np.sqrt(n)
    se_var = sigma**2 * np.sqrt(2.0 / n)
    assert np.all(np.abs(z.mean(axis=0)) < 5 * se_mean)
    assert np.all(np.abs(z.var(axis=0) - sigma**2) < 5 * se_var)


def test_augment_rejects_zero_columns():
    with pytest.raises(DomainError):
        augment(np.zeros((4, 2)), 0, 1.0, RngSeed(0))


def test_rng_seed_bounds_and_derivation():
    with pytest.raises(DomainError):
        RngSeed(-1)
    with pytest.raises(DomainError):
        RngSeed(1 << 64)
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    a = RngSeed(7, 0).generator().standard_normal(4)
    b = RngSeed(7, 1).generator().standard_normal(4)
    assert not np.allclose(a, b)


def test_eig_identity():
    w, v = eig_sym(np.eye(4))
    np.testing.assert_allclose(w, 1.0)
    np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-12)


def test_eig_diag():
    w, v = eig_sym(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(w, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(v), [[0.0, 1.0], [1.0, 0.0]], atol=1e-14)


def test_eig_reconstruction():
    a = np.random.default_rng(3).standard_normal((6, 6))
    s = a + a.T
    w, v = eig_sym(s)
    norm = np.linalg.norm(s)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm(v @ np.diag(w) @ v.T - s) <= 1e-8 * norm
    assert np.linalg.norm(s @ v - v * w) <= 1e-8 * norm
    np.testing.assert_allclose(v.T @ v, np.eye(6), atol=1e-8)


def test_eig_partial_matches_full():
    a = np.random.default_rng(4).standard_normal((30, 30))
    s = a @ a.T
    w, v = eig_sym(s)
    wk, vk = eig_sym(s, 3)
    np.testing.assert_allclose(wk, w[:3], rtol=1e-12)
    np.testing.assert_allclose(np.abs(vk.T @ v[:, :3]), np.eye(3), atol=1e-8)


def test_eig_rejects_asymmetric():
    with pytest.raises(ContractViolation):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_spectrum_of_zero_data_is_in_range():
    spec = augmented_spectrum(np.zeros((50, 4)), 6, 1.0, 3, RngSeed(0))
    assert np.all(spec.eigenvalues >= 0)
    assert np.all((spec.c_norms >= 0) & (spec.c_norms <= 1))
    np.testing.assert_allclose(spec.c_norms, 1.0, atol=1e-12)


@pytest.mark.parametrize("shape,r", [((80, 10), 20), ((40, 10), 60)])
def test_block_norms_sum_to_one(shape, r):
    x = np.random.default_rng(6).standard_normal(shape)
    spec = augmented_spectrum(x, r, 1.0, 5, RngSeed(1))
    np.testing.assert_allclose(spec.c_norms + spec.x_norms, 1.0, atol=1e-10)
    assert len(spec.eigenvalues) == 6
    assert np.all(np.diff(spec.eigenvalues) <= 0)


def test_gram_route_matches_full_decomposition():
    # p + r > n triggers the n x n route; compare against a full (p+r)-square solve.
    x = np.random.default_rng(7).standard_normal((30, 8))
    x[:, 0] *= 3.0
    seed = RngSeed(11)
    spec = augmented_spectrum(x, 40, 0.8, 4, seed)
    z = augment(x, 40, 0.8, seed)
    w, v = eig_sym(sample_covariance(z))
    np.testing.assert_allclose(spec.eigenvalues, w[:5], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(spec.c_norms, np.sum(v[8:, :4] ** 2, axis=0), atol=1e-8)


def test_rank_constraint():
    n = 12
    z = np.random.default_rng(8).standard_normal((n, 5))
    w, _ = eig_sym(sample_covariance(augment(z, 30, 1.0, RngSeed(0))))
    assert np.sum(w > 1e-10 * w[0]) <= min(35, n - 1)
    tau = original_eigenvalues(np.random.default_rng(9).standard_normal((n, 40)))
    assert tau.shape == (40,)
    assert np.all(tau[n - 1:] <= 1e-10 * tau[0])


def test_spectrum_is_deterministic():
    x = np.random.default_rng(10).standard_normal((60, 6))
    a = augmented_spectrum(x, 9, 1.0, 4, RngSeed(3, 1))
    b = augmented_spectrum(x, 9, 1.0, 4, RngSeed(3, 1))
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.c_norms, b.c_norms)


def test_spectrum_rejects_large_J():
    with pytest.raises(DomainError):
        augmented_spectrum(np.zeros((10, 3)), 2, 1.0, 4, RngSeed(0))


def test_averaged_augmentations():
    x = np.random.default_rng(12).standard_normal((100, 5))
    one = augmented_spectrum(x, 5, 1.0, 3, RngSeed(2))
    avg = augmented_spectrum(x, 5, 1.0, 3, RngSeed(2), n_aug=4)
    assert np.array_equal(one.eigenvalues, avg.eigenvalues)
    assert not np.array_equal(one.c_norms, avg.c_norms)
    assert np.all((avg.c_norms >= 0) & (avg.c_norms <= 1))


def test_leading_block_norm_near_limit():
    n, p, r = 2000, 100, 100
    x = generate(GeneratorSpec("gaussian", (4.0,), p, n), RngSeed(21))
    spec = augmented_spectrum(x, r, 1.0, 2, RngSeed(21, 1))
    limit = cnorm_limit(SpikedModel((4.0,)), AspectRatios(p / n, r / n), 1)
    assert abs(spec.c_norms[0] - limit) <= 0.05


@pytest.mark.slow
def test_rotation_invariance_of_block_norms():
    n, p, r, reps = 200, 10, 10, 200
    rot = ortho_group.rvs(p, random_state=0)
    spec = GeneratorSpec("gaussian", (4.0,), p, n)
    plain, rotated = [], []
    for rep in range(reps):
        x = generate(spec, RngSeed(rep))
        plain.append(augmented_spectrum(x, r, 1.0, 2, RngSeed(rep, 1)).c_norms)
        y = generate(spec, RngSeed(10_000 + rep))
        rotated.append(augmented_spectrum(y @ rot.T, r, 1.0, 2, RngSeed(10_000 + rep, 1)).c_norms)
    plain, rotated = np.array(plain), np.array(rotated)
    se = np.sqrt(plain.var(axis=0, ddof=1) / reps + rotated.var(axis=0, ddof=1) / reps)
    assert np.all(np.abs(plain.mean(axis=0) - rotated.mean(axis=0)) <= 3 * se)


def test_csv_round_trip(tmp_path):
    x = np.random.default_rng(13).standard_normal((7, 3))
    path = tmp_path / "x.csv"
    write_matrix_csv(path, x)
    assert np.array_equal(read_matrix_csv(path), x)


def test_csv_without_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("1,2\n3.5,-4e-1\n")
    np.testing.assert_array_equal(read_matrix_csv(path), [[1, 2], [3.5, -0.4]])


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n", "1,2\n3,x\n", "1,2\n3\n", "1,nan\n", "1;2\n3;4\n"],
)
def test_csv_rejects_bad_input(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataParseError):
        read_matrix_csv(path)


def test_csv_missing_file(tmp_path):
    with pytest.raises(DataParseError):
        read_matrix_csv(tmp_path / "absent.csv")
