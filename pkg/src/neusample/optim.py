"""Adam with a polynomial learning-rate decay.

The schedule interpolates lr_initial -> lr_final over total_steps with
lr(k) = lr_final + (lr_initial - lr_final) * (1 - k/K)**power, clamped at
lr_final once k reaches K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PolynomialSchedule:
    lr_initial: float = 5e-4
    lr_final: float = 5e-6
    total_steps: int = 400_000
    power: float = 1.0

    def lr(self, step):
        if self.total_steps <= 0:
            return self.lr_final
        t = min(step, self.total_steps) / self.total_steps
        return self.lr_final + (self.lr_initial - self.lr_final) * (1.0 - t) ** self.power


@dataclass
class AdamState:
    """Per-parameter first/second moments keyed by parameter name."""

    schedule: PolynomialSchedule
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def init(cls, named_params, schedule, **kw):
        state = cls(schedule=schedule, **kw)
        for name, p in named_params:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(named_params, state, grads=None):
    """One Adam update in place on the parameter data.

    ``grads`` defaults to each Value's populated ``.grad``.  The learning
    rate is read from the schedule at the pre-increment step count, so the
    very first update uses lr(0) = lr_initial.
    """
    params = list(named_params)
    if grads is None:
        grads = [p.grad for _, p in params]
    lr = state.schedule.lr(state.step)
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for (name, p), g in zip(params, grads):
        if g is None:
            raise ValueError(f"adam_step: missing gradient for {name!r}")
        g = np.asarray(g)
        if g.shape != p.data.shape or state.m[name].shape != p.data.shape:
            raise ValueError(
                f"adam_step: shape mismatch for {name!r}: param {p.data.shape}, "
                f"grad {g.shape}, moment {state.m[name].shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    state.step = t
    return state
