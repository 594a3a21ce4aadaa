"""Adam and the polynomial learning-rate schedule."""

import numpy as np
import pytest

from neusample.autodiff import Value
from neusample.optim import AdamState, PolynomialSchedule, adam_step


class TestSchedule:
    def test_endpoints(self):
        s = PolynomialSchedule(5e-4, 5e-6, total_steps=1000, power=1.0)
        assert s.lr(0) == pytest.approx(5e-4, rel=0, abs=0)
        assert s.lr(1000) == pytest.approx(5e-6, rel=0, abs=0)

    def test_monotone_non_increasing_for_power_one(self):
        s = PolynomialSchedule(5e-4, 5e-6, total_steps=123, power=1.0)
        lrs = [s.lr(k) for k in range(160)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_clamps_past_total_steps(self):
        s = PolynomialSchedule(1e-3, 1e-5, total_steps=10)
        assert s.lr(50) == 1e-5

    def test_power_two_midpoint(self):
        s = PolynomialSchedule(1.0, 0.0, total_steps=2, power=2.0)
        assert s.lr(1) == pytest.approx(0.25)


class TestAdam:
    def test_single_step_magnitude_is_bias_corrected_lr(self):
        p = Value(np.array([0.0]))
        params = [("p", p)]
        state = AdamState.init(params, PolynomialSchedule(5e-4, 5e-6, 1000))
        adam_step(params, state, grads=[np.array([1.0])])
        # With zero moments and one step, m_hat = 1 and v_hat = 1, so the
        # update magnitude is lr/(1 + eps).
        assert abs(abs(p.data[0]) - 5e-4) < 1e-9
        assert state.step == 1

    def test_descends_a_quadratic(self):
        p = Value(np.array([3.0]))
        params = [("p", p)]
        state = AdamState.init(params, PolynomialSchedule(0.1, 0.1, 200))
        for _ in range(200):
            adam_step(params, state, grads=[2.0 * p.data])
        assert abs(p.data[0]) < 0.2

    def test_shape_mismatch_rejected(self):
        p = Value(np.zeros(3))
        params = [("p", p)]
        state = AdamState.init(params, PolynomialSchedule(1e-3, 1e-4, 10))
        with pytest.raises(ValueError, match="shape mismatch"):
            adam_step(params, state, grads=[np.zeros(4)])

    def test_missing_grad_rejected(self):
        p = Value(np.zeros(3))
        params = [("p", p)]
        state = AdamState.init(params, PolynomialSchedule(1e-3, 1e-4, 10))
        with pytest.raises(ValueError, match="missing gradient"):
            adam_step(params, state)

    def test_uses_schedule_at_current_step(self):
        p = Value(np.array([0.0]))
        params = [("p", p)]
        sched = PolynomialSchedule(1e-2, 0.0, total_steps=2, power=1.0)
        state = AdamState.init(params, sched)
        adam_step(params, state, grads=[np.array([1.0])])
        first = abs(p.data[0])
        assert first == pytest.approx(1e-2, rel=1e-6)
