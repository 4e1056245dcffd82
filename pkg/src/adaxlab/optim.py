"""Adaptive-gradient update rules behind a single stepping interface.

Every optimizer here follows the same skeleton: accumulate a first moment
``m_t`` of the gradients, accumulate some second moment ``v_t`` of their
squares, then move against ``m_t`` scaled by a per-coordinate denominator
built from ``v_t``.  The kinds differ only in how the two accumulators and
the denominator are formed:

    kind      m_t                          v_t                              denominator
    sgd       g_t                          (identity)                       1
    sgdm      b1*m + g_t                   (identity)                       1
    adagrad   g_t (b1=0 default)           mean of g_i^2 over i <= t        sqrt(v) + eps
    rmsprop   g_t (b1=0 default)           b2*v + (1-b2)*g^2                sqrt(v) + eps
    adam      b1*m + (1-b1)*g              b2*v + (1-b2)*g^2                sqrt(v/(1-b2^t)) + eps
    amsgrad   b1*m + (1-b1)*g              max_t of the rmsprop v           sqrt(vmax) + eps
    adax      b1*m + (1-b1)*g              (1+b2)*v + b2*g^2                (sqrt(v)+eps)/sqrt((1+b2)^t-1)
    padam     b1*m + (1-b1)*g              max_t of the rmsprop v           vmax^p + eps
    padax     b1*m + (1-b1)*g              (1+b2)*v + b2*g^2                vhat^p + eps

``adam`` additionally divides m by (1 - b1^t).  The adax family applies no
first-moment correction; its second-moment correction divides by
(1 + b2)^t - 1, which makes the accumulator an average whose weights decay
by (1+b2)^-1 per step backwards in time, so old gradients keep a fixed
share of the total weight instead of being forgotten exponentially.

Weight decay comes in two flavors: ``l2`` folds wd*x into the gradient
before the moments see it, ``decoupled`` subtracts alpha_t*wd*x from the
iterate after the adaptive part of the step is formed.

The iterate returned by :func:`apply_step` is unprojected; callers keep
their own feasible set and clamp with :func:`project_box`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

KINDS = ("sgd", "sgdm", "adagrad", "rmsprop", "adam", "amsgrad", "adax", "padam", "padax")
DECAY_MODES = ("none", "l2", "decoupled")
STEP_SCHEDULES = ("constant", "invsqrt")
BETA1_SCHEDULES = ("constant", "geometric")
BETA2_SCHEDULES = ("constant", "invtime")

# Kinds using the long-memory accumulator v <- (1+b2)*v + b2*g^2.
ADAX_FAMILY = frozenset({"adax", "padax"})
# Kinds tracking the running max of the EMA second moment.
MAX_TRACKING = frozenset({"amsgrad", "padam"})
# Kinds whose denominator depends on the gradient history at all.
ADAPTIVE = frozenset(KINDS) - {"sgd", "sgdm"}

# Once t*log1p(b2) passes this, (1+b2)^t (and with it the raw accumulator)
# is about to overflow float64, so the state switches to carrying the
# corrected average directly; see apply_step.
LONG_RUN_SWITCH = 700.0

_DEFAULT_ALPHA = {
    "sgd": 0.1, "sgdm": 0.1, "adagrad": 0.01, "rmsprop": 1e-3, "adam": 1e-3,
    "amsgrad": 1e-3, "adax": 5e-3, "padam": 0.1, "padax": 0.05,
}
_ZERO_BETA1 = frozenset({"sgd", "adagrad", "rmsprop"})


class NumericsError(RuntimeError):
    """A non-finite value entered an update."""


class UpdateStep(NamedTuple):
    """One step's outputs: the applied delta, the second moment actually
    used (bias-corrected / max-tracked where applicable), and the
    per-coordinate denominator."""

    delta: np.ndarray
    vhat: np.ndarray
    denom: np.ndarray


@dataclass
class OptimizerConfig:
    """Hyperparameters for one optimizer run.

    alpha / beta1 / beta2 / epsilon default to per-kind values when left as
    None (e.g. adax gets beta2=1e-4 and epsilon=1e-12, the adam family gets
    beta2=0.999 and epsilon=1e-8).  ``beta1_decay`` is the per-step factor
    of the geometric beta1 schedule; ``power_p`` is the denominator
    exponent of padam/padax.
    """

    kind: str = "adam"
    alpha: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    epsilon: float | None = None
    power_p: float = 0.125
    weight_decay: float = 0.0
    decay_mode: str = "none"
    step_schedule: str = "constant"
    beta1_schedule: str = "constant"
    beta1_decay: float = 1.0
    beta2_schedule: str = "constant"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha is None:
            self.alpha = _DEFAULT_ALPHA[self.kind]
        if self.beta1 is None:
            self.beta1 = 0.0 if self.kind in _ZERO_BETA1 else 0.9
        if self.beta2 is None:
            self.beta2 = 1e-4 if self.kind in ADAX_FAMILY else 0.999
        if self.epsilon is None:
            self.epsilon = 1e-12 if self.kind in ADAX_FAMILY else 1e-8
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if self.kind == "sgd" and self.beta1 != 0.0:
            raise ValueError(f"kind 'sgd' takes no momentum; got beta1={self.beta1} (use 'sgdm')")
        if not self.beta2 > 0:
            raise ValueError(f"beta2 must be > 0, got {self.beta2}")
        if self.kind not in ADAX_FAMILY and not self.beta2 < 1.0:
            raise ValueError(f"beta2 must be < 1 for kind {self.kind!r}, got {self.beta2}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 < self.power_p <= 0.5:
            raise ValueError(f"power_p must be in (0, 0.5], got {self.power_p}")
        if not self.weight_decay >= 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.decay_mode not in DECAY_MODES:
            raise ValueError(f"unknown decay_mode {self.decay_mode!r}; expected one of {DECAY_MODES}")
        if self.weight_decay > 0 and self.decay_mode == "none":
            raise ValueError("weight_decay > 0 requires decay_mode 'l2' or 'decoupled'")
        if self.step_schedule not in STEP_SCHEDULES:
            raise ValueError(f"unknown step_schedule {self.step_schedule!r}")
        if self.beta1_schedule not in BETA1_SCHEDULES:
            raise ValueError(f"unknown beta1_schedule {self.beta1_schedule!r}")
        if self.beta2_schedule not in BETA2_SCHEDULES:
            raise ValueError(f"unknown beta2_schedule {self.beta2_schedule!r}")
        if self.beta1_schedule == "geometric" and not 0.0 < self.beta1_decay < 1.0:
            raise ValueError(f"geometric beta1 schedule needs beta1_decay in (0, 1), got {self.beta1_decay}")
        if self.beta2_schedule == "invtime" and self.kind != "adax":
            raise ValueError("the 1/t beta2 schedule is only supported for kind 'adax'")


class OptimizerState:
    """Mutable per-run state: step count and moment accumulators.

    ``v_is_corrected`` flips once a very long constant-beta2 adax run would
    overflow the raw accumulator; from then on ``v`` stores the corrected
    average itself.
    """

    __slots__ = ("t", "m", "v", "vmax", "v_is_corrected")

    def __init__(self, dim: int):
        self.t = 0
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.vmax = np.zeros(dim)
        self.v_is_corrected = False


@dataclass
class BoxDomain:
    """Axis-aligned box constraint; bounds may be scalars or per-coordinate
    arrays, infinities allowed."""

    lower: float | np.ndarray = -math.inf
    upper: float | np.ndarray = math.inf

    def __post_init__(self):
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError(f"empty box: lower {self.lower} above upper {self.upper}")

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= np.asarray(self.lower) - atol)
                    and np.all(x <= np.asarray(self.upper) + atol))


def schedules(config: OptimizerConfig, t: int):
    """Effective (alpha_t, beta1_t, beta2_t) at 1-based step t."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    alpha_t = config.alpha
    if config.step_schedule == "invsqrt":
        alpha_t = alpha_t / math.sqrt(t)
    beta1_t = config.beta1
    if config.beta1_schedule == "geometric":
        beta1_t = beta1_t * config.beta1_decay ** (t - 1)
    beta2_t = config.beta2
    if config.beta2_schedule == "invtime":
        beta2_t = beta2_t / t
    return alpha_t, beta1_t, beta2_t


def first_moment(m_prev, g, beta1_t: float, heavy_ball: bool = False):
    """One first-moment accumulation.

    heavy_ball=True gives the momentum form beta1_t*m_prev + g used by
    sgd/sgdm; otherwise the EMA form beta1_t*m_prev + (1-beta1_t)*g.
    """
    if heavy_ball:
        return beta1_t * m_prev + g
    return beta1_t * m_prev + (1.0 - beta1_t) * g


def second_moment(kind: str, v_prev, g, t: int, beta2_t: float):
    """One second-moment accumulation for the given kind (raw, uncorrected)."""
    if kind in ("sgd", "sgdm"):
        return v_prev
    g2 = g * g
    if kind == "adagrad":
        # running mean of squared gradients: v_t = ((t-1)*v_{t-1} + g_t^2)/t
        return (v_prev * (t - 1) + g2) / t
    if kind in ADAX_FAMILY:
        return (1.0 + beta2_t) * v_prev + beta2_t * g2
    return beta2_t * v_prev + (1.0 - beta2_t) * g2


def growth_correction(t: int, beta2_t: float) -> float:
    """(1+b2)^t - 1 evaluated stably; floored at t*b2, which it never falls
    below in exact arithmetic (Bernoulli), so rounding cannot make the
    correction collapse for tiny b2.  Returns inf once the value exceeds
    float64 range."""
    e = t * math.log1p(beta2_t)
    if e > 709.0:
        return math.inf
    return max(math.expm1(e), t * beta2_t)


def adax_bias_correct(v, t: int, beta2_t: float, epsilon: float):
    """Correction for the long-memory accumulator.

    Returns (vhat, denom) with vhat = v / ((1+b2)^t - 1) and
    denom = (sqrt(v) + epsilon) / sqrt((1+b2)^t - 1).  epsilon joins the
    raw sqrt(v) before the correction divides, so denom differs from
    sqrt(vhat) + epsilon by design.
    """
    w = growth_correction(t, beta2_t)
    return v / w, (np.sqrt(v) + epsilon) / math.sqrt(w)


def project_box(y, domain: BoxDomain, vhat=None):
    """Projection onto the box under the diagonal norm weighted by sqrt(vhat).

    A diagonal weight matrix makes the weighted least-squares projection
    separable, so each coordinate clamps independently and the (nonnegative)
    weights do not change the answer; zero-weight coordinates take the clamp
    as the canonical minimizer.  vhat is accepted to make the projection's
    dependence on the metric explicit at call sites.
    """
    return np.minimum(np.maximum(y, domain.lower), domain.upper)


def apply_step(config: OptimizerConfig, state: OptimizerState, x, g):
    """Advance one step: returns (x_raw, UpdateStep, state).

    x_raw = x + delta is unprojected; the caller clamps it to its feasible
    set.  state is mutated in place (t, moments) and returned.
    """
    t = state.t + 1
    alpha_t, beta1_t, beta2_t = schedules(config, t)
    g = np.asarray(g, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError(f"gradient shape {g.shape} does not match iterate shape {x.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericsError(f"non-finite gradient at step {t}")
    if config.decay_mode == "l2" and config.weight_decay:
        g = g + config.weight_decay * x

    kind = config.kind
    m = first_moment(state.m, g, beta1_t, heavy_ball=kind in ("sgd", "sgdm"))
    num = m

    if kind in ("sgd", "sgdm"):
        v = state.v
        vhat = np.ones_like(x)
        denom = np.ones_like(x)
    elif kind in ADAX_FAMILY:
        if state.v_is_corrected:
            # v already holds the corrected average; the incoming sample's
            # weight b2/((1+b2)^t - 1) underflows smoothly toward zero.
            log_w = t * math.log1p(beta2_t)
            u = beta2_t * math.exp(-log_w)
            v = state.v + u * (g * g - state.v)
            vhat = v
            if kind == "adax":
                denom = np.sqrt(v) + config.epsilon * math.exp(-0.5 * log_w)
            else:
                denom = vhat ** config.power_p + config.epsilon
        else:
            v = second_moment(kind, state.v, g, t, beta2_t)
            vhat, denom = adax_bias_correct(v, t, beta2_t, config.epsilon)
            if kind == "padax":
                denom = vhat ** config.power_p + config.epsilon
            if (config.beta2_schedule == "constant"
                    and (t + 1) * math.log1p(beta2_t) > LONG_RUN_SWITCH):
                # next step's raw accumulator would overflow; carry the
                # corrected value from here on
                state.v_is_corrected = True
                v = vhat
    elif kind == "adam":
        v = second_moment(kind, state.v, g, t, beta2_t)
        num = m / (1.0 - config.beta1 ** t)
        vhat = v / (1.0 - config.beta2 ** t)
        denom = np.sqrt(vhat) + config.epsilon
    elif kind in MAX_TRACKING:
        v = second_moment(kind, state.v, g, t, beta2_t)
        np.maximum(state.vmax, v, out=state.vmax)
        vhat = state.vmax.copy()
        if kind == "padam":
            denom = vhat ** config.power_p + config.epsilon
        else:
            denom = np.sqrt(vhat) + config.epsilon
    else:  # adagrad / rmsprop
        v = second_moment(kind, state.v, g, t, beta2_t)
        vhat = v
        denom = np.sqrt(v) + config.epsilon

    delta = -alpha_t * num / denom
    if config.decay_mode == "decoupled" and config.weight_decay:
        delta = delta - alpha_t * config.weight_decay * x
    x_raw = x + delta

    state.t = t
    state.m = m
    state.v = v
    return x_raw, UpdateStep(delta=delta, vhat=vhat, denom=denom), state
