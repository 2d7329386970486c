import numpy as np
import pytest

from dcvdn.errors import InvalidInput, SingularCovariance
from dcvdn.numkit import Adam, SeededRng, derive_seed, grad_check, svd, sym_inv_sqrt


class TestSvd:
    def test_identity(self):
        _, s, _ = svd(np.eye(3))
        assert np.allclose(s, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        _, s, _ = svd(np.diag([3.0, 2.0]))
        assert np.allclose(s, [3.0, 2.0])

    def test_reconstruction(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(5, 4))
        u, s, vt = svd(a)
        err = np.linalg.norm(u @ np.diag(s) @ vt - a) / np.linalg.norm(a)
        assert err < 1e-10

    def test_singular_values_descending_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            _, s, _ = svd(rng.normal(size=(6, 3)))
            assert (s >= 0).all()
            assert (np.diff(s) <= 1e-12).all()

    def test_orthogonal_matrix_has_unit_singular_values(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
            _, s, _ = svd(q)
            assert np.abs(s - 1.0).max() < 1e-10

    def test_nonfinite_rejected(self):
        a = np.eye(3)
        a[1, 1] = np.nan
        with pytest.raises(InvalidInput):
            svd(a)


class TestSymInvSqrt:
    def test_identity(self):
        assert np.allclose(sym_inv_sqrt(np.eye(4), 0.0), np.eye(4))

    def test_diagonal(self):
        out = sym_inv_sqrt(np.diag([4.0, 9.0]), 0.0)
        assert np.allclose(out, np.diag([0.5, 1.0 / 3.0]))

    def test_defining_identity_on_random_spd(self):
        rng = np.random.default_rng(5)
        b = rng.normal(size=(4, 4))
        a = b @ b.T + 0.5 * np.eye(4)
        for ridge in (0.0, 1e-3):
            s = sym_inv_sqrt(a, ridge)
            assert np.abs(s @ (a + ridge * np.eye(4)) @ s - np.eye(4)).max() < 1e-8
            # squaring then inverting recovers a + ridge*I
            assert np.abs(np.linalg.inv(s @ s) - (a + ridge * np.eye(4))).max() < 1e-8

    def test_result_symmetric(self):
        rng = np.random.default_rng(9)
        b = rng.normal(size=(6, 6))
        s = sym_inv_sqrt(b @ b.T + np.eye(6), 1e-4)
        assert np.array_equal(s, s.T)

    def test_singular_rejected(self):
        with pytest.raises(SingularCovariance):
            sym_inv_sqrt(-np.eye(3), 0.5)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidInput):
            sym_inv_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]), 0.0)


class TestGradCheck:
    def test_square(self):
        def f(p):
            x = p[0, 0]
            return x * x, np.array([[2.0 * x]])

        assert grad_check(f, np.array([[3.0]]), eps=1e-5) < 1e-8

    def test_quadratic_form(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(5, 5))

        def f(x):
            v = x[:, 0]
            return float(v @ a @ v), ((a + a.T) @ v)[:, None]

        x0 = rng.normal(size=(5, 1))
        assert grad_check(f, x0, eps=1e-5) < 1e-6

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(4)
        target = 2

        def f(z):
            v = z[0]
            e = np.exp(v - v.max())
            p = e / e.sum()
            grad = p.copy()
            grad[target] -= 1.0
            return -float(np.log(p[target])), grad[None, :]

        assert grad_check(f, rng.normal(size=(1, 6)), eps=1e-5) < 1e-6

    def test_eps_validated(self):
        with pytest.raises(InvalidInput):
            grad_check(lambda p: (0.0, np.zeros_like(p)), np.zeros((1, 1)), eps=0.1)


class TestSeededRng:
    def test_same_seed_same_stream(self):
        a = SeededRng(123).random(16)
        b = SeededRng(123).random(16)
        assert np.array_equal(a, b)

    def test_different_seed_differs(self):
        assert not np.array_equal(SeededRng(1).random(16), SeededRng(2).random(16))

    def test_spawn_stable_and_distinct(self):
        r = SeededRng(99)
        assert r.spawn("elda").seed == SeededRng(99).spawn("elda").seed
        assert r.spawn("elda").seed != r.spawn("ewe").seed

    def test_derive_seed_label_sensitive(self):
        assert derive_seed(7, "a", "b") != derive_seed(7, "ab")


class TestAdam:
    def test_minimizes_quadratic(self):
        target = np.array([1.0, -2.0, 3.0])
        x = np.zeros(3)
        opt = Adam([x], lr=0.05)
        for _ in range(500):
            opt.step([2.0 * (x - target)])
        assert np.abs(x - target).max() < 1e-3
