import numpy as np
import pytest

from adcsd.errors import ContractError, ShapeError
from adcsd.optim import AdamState, adam_step, clip_gradients, grad_check, sgd_step
from adcsd.series import masked_mse

from conftest import tensor


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self, rng):
        p = rng.normal(size=20)
        state = AdamState.fresh(20)
        p2, s2 = adam_step(state, p, np.zeros(20))
        assert np.array_equal(p, p2)
        assert s2.step == 1

    def test_first_step_magnitude_oracle(self):
        state = AdamState.fresh(1, lr=1e-4)
        p2, _ = adam_step(state, np.array([1.0]), np.array([0.5]))
        want = -1e-4 * 0.5 / (0.5 + 1e-8)
        assert abs((p2[0] - 1.0) - want) <= 1e-8 * abs(want)

    def test_deterministic(self, rng):
        p = rng.normal(size=10)
        g = rng.normal(size=10)
        st = AdamState.fresh(10)
        a1, s1 = adam_step(st, p, g)
        a2, s2 = adam_step(st, p, g)
        assert np.array_equal(a1, a2)
        assert np.array_equal(s1.m, s2.m) and np.array_equal(s1.v, s2.v)

    def test_inputs_not_mutated(self, rng):
        p = rng.normal(size=10)
        g = rng.normal(size=10)
        st = AdamState.fresh(10)
        p_copy, m_copy = p.copy(), st.m.copy()
        adam_step(st, p, g)
        assert np.array_equal(p, p_copy) and np.array_equal(st.m, m_copy)

    def test_permutation_invariance(self, rng):
        n = 16
        p = rng.normal(size=n)
        g = rng.normal(size=n)
        st = AdamState.fresh(n)
        perm = rng.permutation(n)
        direct, _ = adam_step(st, p, g)
        permuted, _ = adam_step(st, p[perm], g[perm])
        assert np.allclose(direct[perm], permuted)

    def test_first_step_bounded_by_lr(self, rng):
        for lr in (1e-4, 1e-2, 0.5):
            st = AdamState.fresh(50, lr=lr)
            p = rng.normal(size=50)
            g = rng.normal(size=50) * rng.choice([1e-6, 1.0, 1e4], size=50)
            p2, _ = adam_step(st, p, g)
            assert np.all(np.abs(p2 - p) <= lr * (1.0 + 1e-6))

    def test_nonfinite_gradient_rejected(self):
        st = AdamState.fresh(2)
        with pytest.raises(ContractError):
            adam_step(st, np.zeros(2), np.array([1.0, np.nan]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState.fresh(2), np.zeros(3), np.zeros(3))

    def test_second_moment_nonnegative_and_step_counts(self, rng):
        st = AdamState.fresh(5)
        p = rng.normal(size=5)
        for k in range(1, 6):
            p, st = adam_step(st, p, rng.normal(size=5))
            assert st.step == k
            assert np.all(st.v >= 0.0)


class TestSgd:
    def test_zero_lr(self, rng):
        p = rng.normal(size=4)
        assert np.array_equal(sgd_step(0.0, p, rng.normal(size=4)), p)

    def test_hand_oracle(self):
        assert sgd_step(0.1, np.array([1.0]), np.array([2.0])).tolist() == [0.8]

    def test_linear_in_grads(self, rng):
        p = rng.normal(size=6)
        g1 = rng.normal(size=6)
        g2 = rng.normal(size=6)
        lhs = sgd_step(0.05, p, g1 + g2)
        rhs = sgd_step(0.05, p, g1) + sgd_step(0.05, p, g2) - p
        assert np.allclose(lhs, rhs)

    def test_some_grid_lr_strictly_descends(self, rng):
        # smooth masked_mse in the prediction argument; gradient 2*(p-y)/n
        for _ in range(10):
            y = rng.normal(size=(2, 3, 1))
            p = rng.normal(size=(2, 3, 1))
            base = masked_mse(tensor(y), tensor(p))
            grad = 2.0 * (p - y) / p.size
            assert base > 0.0
            descended = False
            for lr in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
                p2 = sgd_step(lr, p.ravel(), grad.ravel()).reshape(p.shape)
                if masked_mse(tensor(y), tensor(p2)) < base:
                    descended = True
                    break
            assert descended


def test_clip_gradients(rng):
    g = rng.normal(size=30)
    clipped = clip_gradients(g, 0.5)
    assert np.linalg.norm(clipped) <= 0.5 + 1e-12
    small = clip_gradients(g, 1e9)
    assert np.array_equal(small, g)


class TestGradCheck:
    def test_quadratic_loss(self, rng):
        # coordinates bounded away from 0 so the relative form is meaningful
        p = rng.uniform(0.5, 1.5, size=12) * rng.choice([-1.0, 1.0], size=12)
        err = grad_check(lambda q: float(q @ q), p, 2.0 * p)
        assert err <= 1e-9

    def test_constant_loss(self, rng):
        p = rng.normal(size=5)
        err = grad_check(lambda q: 42.0, p, np.zeros(5))
        assert err <= 1e-9

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(ContractError):
            grad_check(lambda q: float("nan"), np.zeros(2), np.zeros(2))

    def test_detects_wrong_gradient(self, rng):
        p = rng.normal(size=4)
        err = grad_check(lambda q: float(q @ q), p, 3.0 * p)
        assert err > 0.1
