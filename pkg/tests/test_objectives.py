import numpy as np
import pytest

from rpslab import objectives as obj


def _two_point_task():
    # one-dimensional pair with unit curvature and targets -1, +1:
    # zeta^2 = 1, optimum at the origin, minimum value 1
    return obj.QuadraticTask(
        a_mats=np.ones((2, 1, 1)),
        b_vecs=np.array([[-1.0], [1.0]]),
        noise_sigma=0.0,
        lipschitz=1.0,
        x_star=np.zeros(1),
        f_zero=1.0,
        f_star=1.0,
        zeta=1.0,
    )


class TestTwoPointClosedForm:
    def test_loss_and_gradient_at_origin(self):
        task = _two_point_task()
        assert obj.loss(task, np.zeros(1)) == 1.0
        assert obj.full_gradient(task, np.zeros(1)) == np.zeros(1)

    def test_worker_gradients(self):
        task = _two_point_task()
        assert obj.worker_gradient(task, np.zeros(1), 0) == np.array([1.0])
        assert obj.worker_gradient(task, np.zeros(1), 1) == np.array([-1.0])


class TestMakeQuadratic:
    def test_identical_workers_when_heterogeneity_zero(self):
        task = obj.make_quadratic(4, 6, heterogeneity=0.0, seed=1)
        assert task.zeta == 0.0
        assert np.array_equal(task.b_vecs[0], task.b_vecs[3])

    def test_single_worker_zeta_zero(self):
        task = obj.make_quadratic(1, 5, heterogeneity=2.0, seed=1)
        assert task.zeta == 0.0

    def test_requested_heterogeneity_exact_for_shared_curvature(self):
        task = obj.make_quadratic(6, 10, heterogeneity=0.8, seed=2)
        grads = np.stack([obj.worker_gradient(task, np.zeros(10), i) for i in range(6)])
        zeta_sq = ((grads - grads.mean(axis=0)) ** 2).sum(axis=1).mean()
        assert np.sqrt(zeta_sq) == pytest.approx(0.8, rel=1e-12)
        # shared curvature: heterogeneity is the same at any point
        x = obj.rng.normals((10,), 4)
        grads = np.stack([obj.worker_gradient(task, x, i) for i in range(6)])
        zeta_sq = ((grads - grads.mean(axis=0)) ** 2).sum(axis=1).mean()
        assert np.sqrt(zeta_sq) == pytest.approx(0.8, rel=1e-12)

    def test_lipschitz_is_top_eigenvalue(self):
        task = obj.make_quadratic(3, 8, seed=5)
        assert task.lipschitz == pytest.approx(1.0, abs=1e-10)
        spread = obj.make_quadratic(5, 8, seed=5, curvature_spread=0.5)
        tops = [np.linalg.eigvalsh(spread.a_mats[i]).max() for i in range(5)]
        assert spread.lipschitz == pytest.approx(max(tops), abs=1e-12)
        assert spread.lipschitz == pytest.approx(1.5, abs=1e-10)

    def test_optimum_and_values(self):
        for spread in (0.0, 0.4):
            task = obj.make_quadratic(5, 7, heterogeneity=0.6, seed=3, curvature_spread=spread)
            assert np.abs(obj.full_gradient(task, task.x_star)).max() < 1e-12
            assert obj.loss(task, task.x_star) == pytest.approx(task.f_star, abs=1e-12)
            assert obj.loss(task, np.zeros(7)) == pytest.approx(task.f_zero, abs=1e-12)

    def test_loss_never_below_minimum(self):
        task = obj.make_quadratic(4, 6, heterogeneity=1.0, seed=7)
        for k in range(50):
            x = obj.rng.normals((6,), 70, k) * 3
            assert obj.loss(task, x) >= task.f_star - 1e-12

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            obj.make_quadratic(0, 4)
        with pytest.raises(ValueError):
            obj.make_quadratic(2, 4, heterogeneity=-1)
        with pytest.raises(ValueError):
            obj.make_quadratic(2, 4, curvature_spread=1.0)


class TestGradients:
    def test_finite_differences_match(self):
        task = obj.make_quadratic(4, 9, heterogeneity=0.5, seed=11, curvature_spread=0.3)
        h = 1e-6
        eye = np.eye(9)
        for k in range(100):
            x = obj.rng.normals((9,), 99, k)
            g = obj.full_gradient(task, x)
            fd = np.array([(obj.loss(task, x + h * e) - obj.loss(task, x - h * e)) / (2 * h) for e in eye])
            assert np.abs(fd - g).max() <= 1e-6 * max(1.0, np.abs(g).max())

    def test_noiseless_sample_is_exact_gradient(self):
        task = obj.make_quadratic(3, 5, heterogeneity=0.4, seed=2, noise_sigma=0.0)
        x = obj.rng.normals((5,), 8)
        sample = obj.stochastic_gradient(task, x, 1, key=(0, 0))
        assert np.array_equal(sample.value, obj.worker_gradient(task, x, 1))

    def test_gradient_zero_at_own_minimizer(self):
        task = obj.make_quadratic(3, 5, heterogeneity=0.4, seed=2)
        own_min = np.linalg.solve(task.a_mats[2], task.b_vecs[2])
        sample = obj.stochastic_gradient(task, own_min, 2, key=4)
        assert np.abs(sample.value).max() < 1e-12

    def test_noise_unbiased_and_variance_matches(self):
        task = obj.make_quadratic(2, 8, noise_sigma=0.5, seed=6)
        x = obj.rng.normals((8,), 12)
        exact = obj.worker_gradient(task, x, 0)
        draws = np.stack([obj.stochastic_gradient(task, x, 0, key=(3, k)).value for k in range(10_000)])
        err = draws - exact
        # mean within 4 standard errors, per coordinate
        se = err.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(err.mean(axis=0)) <= 4 * se)
        # total variance within 10% of sigma^2
        assert (err**2).sum(axis=1).mean() == pytest.approx(task.sigma_sq, rel=0.1)

    def test_matrix_form_matches_per_worker_calls(self):
        task = obj.make_quadratic(4, 6, heterogeneity=0.3, noise_sigma=0.2, seed=9)
        x_mat = obj.rng.normals((6, 4), 21)
        mat = obj.stochastic_gradient_matrix(task, x_mat, key=(5, 77))
        for i in range(4):
            single = obj.stochastic_gradient(task, x_mat[:, i], i, key=(5, 77))
            # same keyed noise lanes exactly; deterministic parts agree to
            # round-off (batched einsum vs single matvec)
            noise_mat = mat[:, i] - obj.worker_gradient(task, x_mat[:, i], i)
            noise_single = single.value - obj.worker_gradient(task, x_mat[:, i], i)
            assert np.allclose(mat[:, i], single.value, rtol=0, atol=1e-12)
            assert np.allclose(noise_mat, noise_single, rtol=0, atol=1e-12)

    def test_grad_norm_sq_avg_on_synced_columns(self):
        task = obj.make_quadratic(5, 6, heterogeneity=0.9, seed=13)
        x = obj.rng.normals((6,), 31)
        x_mat = np.tile(x[:, None], (1, 5))
        expect = float(np.sum(obj.full_gradient(task, x) ** 2))
        assert obj.grad_norm_sq_avg(task, x_mat) == pytest.approx(expect, rel=1e-12)


class TestLogisticTask:
    def test_reference_optimum_beats_origin(self):
        task = obj.make_logistic(3, 6, samples_per_worker=40, seed=1)
        assert task.f_star < task.f_zero
        assert np.linalg.norm(obj.logistic_full_gradient(task, task.x_star)) < 1e-8

    def test_full_gradient_matches_finite_differences(self):
        task = obj.make_logistic(2, 5, samples_per_worker=30, seed=2)
        x = obj.rng.normals((5,), 44) * 0.5
        g = obj.logistic_full_gradient(task, x)
        h = 1e-6
        fd = np.array(
            [(obj.logistic_loss(task, x + h * e) - obj.logistic_loss(task, x - h * e)) / (2 * h) for e in np.eye(5)]
        )
        assert np.abs(fd - g).max() <= 1e-6

    def test_minibatch_gradient_unbiased(self):
        task = obj.make_logistic(2, 4, samples_per_worker=16, batch=4, seed=3)
        x_mat = np.zeros((4, 2))
        draws = np.stack([obj.logistic_gradient_matrix(task, x_mat, key=(1, k))[:, 0] for k in range(4000)])
        exact = obj.logistic_worker_gradient(task, np.zeros(4), 0)
        se = draws.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - exact) <= 4 * se + 1e-12)
