"""Closed-form reference values and diagnostic checks for optimizer runs.

This module provides independent formulas and estimators against which
simulated optimizer trajectories can be verified:

* ``adam_vt_closed`` / ``adax_vhat_closed`` -- exact second-moment values
  for the geometric gradient stream ``g_t = C * lam**(t-1)`` (the gradient
  sequence produced by the one-dimensional decaying problem while the
  iterate stays positive).
* ``adam_step_lower_bound`` / ``adax_ratio_bound`` -- scale-free bounds on
  the normalized update ``|delta_t| / alpha_t`` for the same stream.
* ``amsgrad_tmax`` -- the real-valued stationary time of
  ``h(t) = lam**(2t) - beta2**t``, i.e. where the uncorrected
  exponential-moving-average second moment on the geometric stream stops
  increasing (the point up to which max-tracking has no effect).
* ``gamma_diag`` / ``diagnostics`` -- the per-step change of the effective
  inverse step size ``sqrt(vhat_t) / alpha_t``; entrywise nonnegativity of
  this quantity is the monotonicity property that distinguishes the
  long-memory second moment from the exponential moving average.
* ``mc_bias_check`` -- Monte-Carlo confirmation that the long-memory bias
  correction is unbiased: for i.i.d. standard-normal gradients the
  corrected second moment has expectation exactly 1.
* ``first_crossing`` / ``avg_second_moment`` -- trajectory probes used by
  the experiment harness.

All functions are pure and operate on plain floats / numpy arrays.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .problems import Trajectory

__all__ = [
    "DiagnosticRecord",
    "adam_step_lower_bound",
    "adam_vt_closed",
    "adax_ratio_bound",
    "adax_vhat_closed",
    "amsgrad_tmax",
    "avg_second_moment",
    "diagnostics",
    "first_crossing",
    "gamma_diag",
    "mc_bias_check",
]


class DiagnosticRecord(NamedTuple):
    """Per-step diagnostic summary of an optimizer trajectory.

    ``gamma_min`` is the minimum entry of
    ``sqrt(vhat_t)/alpha_t - sqrt(vhat_prev)/alpha_prev`` relative to the
    previous recorded step (0.0 for the first record, which has no
    predecessor).  ``vhat_avg`` is the mean of the entrywise square roots
    of the corrected second moment, and ``update_norm`` is the Euclidean
    norm of the applied update.
    """

    t: int
    gamma_min: float
    vhat_avg: float
    update_norm: float


def gamma_diag(vhat_t, vhat_prev, alpha_t: float, alpha_prev: float) -> np.ndarray:
    """Entrywise change of the effective inverse step size.

    Returns ``sqrt(vhat_t)/alpha_t - sqrt(vhat_prev)/alpha_prev`` as an
    array.  A negative entry means the optimizer's effective per-coordinate
    step size *grew* between the two steps -- the instability that
    long-memory second moments rule out.
    """
    if not alpha_t > 0 or not alpha_prev > 0:
        raise ValueError(
            f"alpha values must be > 0, got alpha_t={alpha_t}, alpha_prev={alpha_prev}"
        )
    vt = np.asarray(vhat_t, dtype=np.float64)
    vp = np.asarray(vhat_prev, dtype=np.float64)
    if np.any(vt < 0) or np.any(vp < 0):
        raise ValueError("vhat entries must be >= 0")
    return np.sqrt(vt) / alpha_t - np.sqrt(vp) / alpha_prev


def adam_vt_closed(t: int, C: float, lam: float, beta2: float) -> float:
    """Uncorrected EMA second moment after t steps of ``g_i = C*lam**(i-1)``.

    Closed form ``(1-beta2) * C**2 * (lam**(2t) - beta2**t) / (lam**2 - beta2)``
    for the recursion ``v_i = beta2*v_{i-1} + (1-beta2)*g_i**2`` started at 0.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    l2 = lam * lam
    if beta2 == l2:
        raise ValueError(
            f"closed form is singular at beta2 == lam**2 (got beta2={beta2})"
        )
    return (1.0 - beta2) * C * C * (l2**t - beta2**t) / (l2 - beta2)


def adam_step_lower_bound(beta2: float, lam: float) -> float:
    """Asymptotic lower bound on ``|delta_t|/alpha_t`` for EMA-normalized steps.

    For the stream ``g_t = C*lam**(t-1)`` with ``beta2 < lam**2``, the
    normalized update ``g_t/sqrt(vhat_t)`` of a bias-corrected EMA optimizer
    (no momentum, no epsilon) never falls below
    ``sqrt((lam**2 - beta2) / (lam**2 * (1 - beta2)))``: even though the
    gradients decay geometrically, the steps do not shrink with them.
    """
    if not 0 < lam <= 1:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    l2 = lam * lam
    if not 0 <= beta2 < l2:
        raise ValueError(f"beta2 must satisfy 0 <= beta2 < lam**2, got beta2={beta2}")
    return math.sqrt((l2 - beta2) / (l2 * (1.0 - beta2)))


def adax_vhat_closed(t: int, C: float, lam: float, beta2: float) -> float:
    """Corrected long-memory second moment after t steps of ``g_i = C*lam**(i-1)``.

    Closed form
    ``beta2*C**2/(1+beta2-lam**2) * ((1+beta2)**t - lam**(2t)) / ((1+beta2)**t - 1)``
    for the recursion ``v_i = (1+beta2)*v_{i-1} + beta2*g_i**2`` with
    correction ``vhat = v / ((1+beta2)**t - 1)``.  Evaluated with negative
    exponents so it neither overflows nor loses precision for large t.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if not beta2 > 0:
        raise ValueError(f"beta2 must be > 0, got {beta2}")
    if not 0 < lam <= 1:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    log_growth = math.log1p(beta2)
    # ((1+b2)^t - lam^(2t)) / ((1+b2)^t - 1), both divided by (1+b2)^t:
    num = -math.expm1(t * (2.0 * math.log(lam) - log_growth))
    den = -math.expm1(-t * log_growth)
    return beta2 * C * C / (1.0 + beta2 - lam * lam) * (num / den)


def adax_ratio_bound(beta2: float, lam: float) -> float:
    """Coefficient of the decaying envelope on long-memory normalized steps.

    For the stream ``g_t = C*lam**(t-1)``, the normalized update
    ``g_t/sqrt(vhat_t)`` of the long-memory optimizer (no momentum, no
    epsilon) is bounded by ``sqrt((1+beta2-lam**2)/beta2) * lam**(t-1)``:
    the steps decay at the same geometric rate as the gradients.  This
    returns the coefficient ``sqrt((1+beta2-lam**2)/beta2)``.
    """
    if not beta2 > 0:
        raise ValueError(f"beta2 must be > 0, got {beta2}")
    if not 0 <= lam <= 1:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    return math.sqrt((1.0 + beta2 - lam * lam) / beta2)


def amsgrad_tmax(beta2: float, lam: float) -> float:
    """Stationary time of the EMA second moment on a geometric stream.

    ``v_t`` of the uncorrected EMA recursion on ``g_i = C*lam**(i-1)`` is
    proportional to ``h(t) = lam**(2t) - beta2**t``, which increases up to
    ``tmax = ln(ln(beta2)/ln(lam**2)) / ln(lam**2/beta2)`` and decreases
    afterwards.  Up to ``tmax`` a running maximum of ``v_t`` equals ``v_t``
    itself, so max-tracking changes nothing there.  Requires
    ``sqrt(beta2) < lam < 1``.
    """
    if not 0 < beta2 < 1:
        raise ValueError(f"beta2 must be in (0, 1), got {beta2}")
    if not lam < 1:
        raise ValueError(f"lam must be < 1, got {lam}")
    l2 = lam * lam
    if not l2 > beta2:
        raise ValueError(
            f"requires sqrt(beta2) < lam, got beta2={beta2}, lam={lam}"
        )
    return math.log(math.log(beta2) / math.log(l2)) / math.log(l2 / beta2)


def mc_bias_check(
    t: int, beta2: float, trials: int = 10_000, seed: int = 0
) -> tuple[float, float]:
    """Monte-Carlo check that the long-memory correction is unbiased.

    Draws ``trials`` i.i.d. standard-normal gradient sequences of length
    ``t``, runs the recursion ``v = (1+beta2)*v + beta2*g**2`` and corrects
    by ``(1+beta2)**t - 1``.  Returns ``(mean, stderr)`` of the corrected
    second moment across trials; the population mean is exactly 1, so
    ``|mean - 1| <= 3*stderr`` is expected.  Deterministic per seed.
    """
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if not beta2 > 0:
        raise ValueError(f"beta2 must be > 0, got {beta2}")
    rng = np.random.default_rng(seed)
    v = np.zeros(trials, dtype=np.float64)
    for _ in range(t):
        g = rng.standard_normal(trials)
        v = (1.0 + beta2) * v + beta2 * g * g
    w = math.expm1(t * math.log1p(beta2))
    vhat = v / w
    mean = float(vhat.mean())
    stderr = float(vhat.std(ddof=1) / math.sqrt(trials))
    return mean, stderr


def first_crossing(
    trajectory: Union[Trajectory, Sequence[float]]
) -> Optional[int]:
    """Position of the first negative iterate, or None if there is none.

    The iterate sequence is 1-indexed with position 1 being the initial
    point; the update applied at step t produces the iterate at position
    t+1.  Accepts a one-dimensional :class:`~adaxlab.problems.Trajectory`
    (recorded pre-update iterates plus ``x_final``) or any plain 1-D
    sequence of values.  For a downsampled trajectory the result is the
    first *recorded* crossing.
    """
    if isinstance(trajectory, Trajectory):
        iterates = np.asarray(trajectory.iterates, dtype=np.float64)
        if iterates.ndim != 1:
            raise ValueError("first_crossing requires a 1-D trajectory")
        neg = np.flatnonzero(iterates < 0.0)
        if neg.size:
            return int(np.asarray(trajectory.ts)[neg[0]])
        if float(np.asarray(trajectory.x_final).reshape(-1)[0]) < 0.0:
            return int(trajectory.steps_run) + 1
        return None
    xs = np.asarray(trajectory, dtype=np.float64)
    if xs.ndim != 1:
        raise ValueError("first_crossing requires a 1-D sequence")
    neg = np.flatnonzero(xs < 0.0)
    return int(neg[0]) + 1 if neg.size else None


def avg_second_moment(vhat) -> float:
    """Mean of the entrywise square roots of a corrected second moment."""
    v = np.asarray(vhat, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("vhat entries must be >= 0")
    return float(np.mean(np.sqrt(v)))


def diagnostics(trajectory: Trajectory) -> list[DiagnosticRecord]:
    """Per-recorded-step diagnostic records for a trajectory.

    ``gamma_min`` is computed between consecutive *recorded* rows, so it
    equals the true per-step quantity only when the trajectory was recorded
    at every step.  The first record has ``gamma_min = 0.0``.
    """
    vhats = np.asarray(trajectory.vhats, dtype=np.float64)
    deltas = np.asarray(trajectory.deltas, dtype=np.float64)
    if vhats.ndim == 1:
        vhats = vhats[:, None]
        deltas = deltas[:, None]
    alphas = np.asarray(trajectory.alphas, dtype=np.float64)
    ts = np.asarray(trajectory.ts)
    records: list[DiagnosticRecord] = []
    prev_ratio: Optional[np.ndarray] = None
    for r in range(len(ts)):
        ratio = np.sqrt(vhats[r]) / alphas[r]
        gamma_min = 0.0 if prev_ratio is None else float(np.min(ratio - prev_ratio))
        records.append(
            DiagnosticRecord(
                t=int(ts[r]),
                gamma_min=gamma_min,
                vhat_avg=float(np.mean(np.sqrt(vhats[r]))),
                update_norm=float(np.linalg.norm(deltas[r])),
            )
        )
        prev_ratio = ratio
    return records
