"""Adam with optional per-parameter freezing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .network import EXTRACTOR, HEAD, ParamTree


@dataclass
class OptimizerState:
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamTree, **hyper) -> "OptimizerState":
        st = cls(**hyper)
        st.m = {k: np.zeros_like(a) for k, a in params.items()}
        st.v = {k: np.zeros_like(a) for k, a in params.items()}
        return st


def freeze_mask(params: ParamTree, part: str | None) -> dict[str, bool]:
    """``True`` for parameters excluded from updates.

    ``part`` is ``"extractor"``, ``"head"``, ``"all"`` or ``None`` (freeze nothing).
    """
    if part not in (None, EXTRACTOR, HEAD, "all"):
        raise ValueError(f"unknown part {part!r}")
    return {k: part == "all" or params.tags[k] == part for k in params}


def adam_step(params: ParamTree, grads: ParamTree, state: OptimizerState,
              mask: dict[str, bool] | None = None):
    """One bias-corrected Adam update, in place; frozen entries and their moments are untouched.

    Returns ``(params, state)`` for chaining.
    """
    for k in params:
        if (mask is None or not mask[k]) and not np.all(np.isfinite(grads[k])):
            raise TrainingError(f"non-finite gradient in {k!r} at step {state.t + 1}")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        if mask is not None and mask[k]:
            continue
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state
