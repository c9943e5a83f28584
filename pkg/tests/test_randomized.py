import numpy as np
import pytest

from shimsense import ParameterError, RsvdConfig, range_finder, rsvd, svd


def low_rank_matrix(n, m, values, seed):
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((n, len(values))))
    v, _ = np.linalg.qr(rng.standard_normal((m, len(values))))
    return (u * values) @ v.T


def test_range_finder_exact_rank_recovery():
    a = low_rank_matrix(60, 30, [4.0, 2.0, 1.0], seed=0)
    q = range_finder(a, RsvdConfig(rank=3, oversample=5, seed=1))
    rel = np.linalg.norm(a - q @ (q.T @ a)) / np.linalg.norm(a)
    assert rel <= 1e-10


def test_range_finder_full_sketch_spans_everything():
    n = 12
    a = np.eye(n)
    q = range_finder(a, RsvdConfig(rank=6, oversample=6, power_iters=0, seed=2))
    assert np.linalg.norm(a - q @ (q.T @ a)) <= 1e-10


def test_range_finder_deterministic_given_seed():
    a = low_rank_matrix(40, 20, [3.0, 1.0], seed=5)
    cfg = RsvdConfig(rank=4, oversample=3, seed=99)
    assert np.array_equal(range_finder(a, cfg), range_finder(a, cfg))


def test_range_finder_orthonormal_columns():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((30, 25))
    q = range_finder(a, RsvdConfig(rank=5, oversample=4, seed=0))
    assert np.abs(q.T @ q - np.eye(9)).max() <= 1e-10


def test_range_finder_rejects_oversized_sketch():
    a = np.eye(6)
    with pytest.raises(ParameterError):
        range_finder(a, RsvdConfig(rank=5, oversample=5, seed=0))


def test_rsvd_matches_deterministic_on_exact_rank():
    a = low_rank_matrix(300, 40, [10.0, 5.0, 1.0], seed=3)
    approx = rsvd(a, RsvdConfig(rank=3, oversample=10, power_iters=2, seed=7))
    exact = svd(a)
    rel = np.abs(approx.singular_values - exact.singular_values[:3])
    assert (rel / exact.singular_values[:3]).max() <= 1e-8
    recon = (approx.u * approx.singular_values) @ approx.vt
    assert np.linalg.norm(recon - a) / np.linalg.norm(a) <= 1e-8


def test_rsvd_degenerate_sketch_equals_svd():
    rng = np.random.default_rng(10)
    a = rng.standard_normal((9, 6))
    approx = rsvd(a, RsvdConfig(rank=6, oversample=0, power_iters=0, seed=4))
    exact = svd(a)
    rel = np.abs(approx.singular_values - exact.singular_values)
    assert (rel / exact.singular_values).max() <= 1e-8


def test_rsvd_never_exceeds_deterministic_values():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((50, 30))
    approx = rsvd(a, RsvdConfig(rank=8, oversample=6, power_iters=1, seed=5))
    exact = svd(a)
    assert (approx.singular_values
            <= exact.singular_values[:8] + 1e-8).all()


def test_power_iterations_sharpen_noisy_subspace():
    wins = 0
    trials = 25
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        u, _ = np.linalg.qr(rng.standard_normal((200, 3)))
        v, _ = np.linalg.qr(rng.standard_normal((60, 3)))
        a = (u * [10.0, 5.0, 2.0]) @ v.T + 0.5 * rng.standard_normal((200, 60))

        def subspace_error(q_iters):
            q = range_finder(a, RsvdConfig(rank=3, oversample=2,
                                           power_iters=q_iters, seed=seed))
            return np.linalg.norm(u - q @ (q.T @ u))

        if subspace_error(2) <= subspace_error(0):
            wins += 1
    assert wins >= 0.9 * trials


def test_rsvd_deterministic_given_seed():
    a = low_rank_matrix(40, 25, [5.0, 2.0], seed=6)
    cfg = RsvdConfig(rank=2, oversample=4, seed=123)
    r1, r2 = rsvd(a, cfg), rsvd(a, cfg)
    assert np.array_equal(r1.u, r2.u)
    assert np.array_equal(r1.singular_values, r2.singular_values)
    assert np.array_equal(r1.vt, r2.vt)


def test_rsvd_config_validation():
    with pytest.raises(ParameterError):
        RsvdConfig(rank=0)
    with pytest.raises(ParameterError):
        RsvdConfig(rank=1, oversample=-1)
    with pytest.raises(ParameterError):
        RsvdConfig(rank=1, power_iters=-2)
