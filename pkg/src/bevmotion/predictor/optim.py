"""AdamW with decoupled weight decay and cosine annealing with warm restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainingConfig
from ..errors import NonFiniteGradient


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, arrays: dict[str, np.ndarray]) -> "AdamState":
        return cls(0, {n: np.zeros_like(a) for n, a in arrays.items()}, {n: np.zeros_like(a) for n, a in arrays.items()})


def adamw_step(params: dict, grads: dict, state: AdamState, config: TrainingConfig, lr: float) -> dict:
    """One AdamW update; ``state`` is advanced in place, new arrays returned.

    ``theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)``
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name!r} at step {state.step + 1}")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = {}
    for name, theta in params.items():
        g = grads[name]
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        out[name] = theta - lr * ((m / c1) / (np.sqrt(v / c2) + config.eps) + config.weight_decay * theta)
    return out


def cosine_warm_restart_lr(iteration: int, config: TrainingConfig) -> float:
    """SGDR learning rate at ``iteration`` (0-based).

    With ``t_mult == 1`` the period is ``t0``; otherwise the i-th period is
    ``t0 * t_mult**i``.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    t0, mult = config.t0, config.t_mult
    if mult == 1:
        t_cur, t_i = iteration % t0, t0
    else:
        n = int(math.log(iteration / t0 * (mult - 1) + 1, mult))
        start = t0 * (mult**n - 1) // (mult - 1)
        # guard against float log landing one period off
        while start > iteration:
            n -= 1
            start = t0 * (mult**n - 1) // (mult - 1)
        while start + t0 * mult**n <= iteration:
            start += t0 * mult**n
            n += 1
        t_cur, t_i = iteration - start, t0 * mult**n
    return config.eta_min + 0.5 * (config.lr - config.eta_min) * (1.0 + math.cos(math.pi * t_cur / t_i))
