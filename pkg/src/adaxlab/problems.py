"""Synthetic online problems and the run loop that drives an optimizer
over them.

Two scalar constructions are the workhorses:

``ReddiProblem``
    Every third cost is C*x with C > 2, the rest are -x, on the box
    [-1, 1].  The rare large gradient points the right way (toward -1) but
    short-memory adaptive methods shrink exactly those steps, so average
    regret separates optimizers that remember from those that forget.

``DecayProblem``
    Cost scale decays geometrically, C*lam^(t-1).  For the first n steps
    the cost is a vee |C*lam^(t-1)*x| centered at the optimum 0; afterwards
    the region x <= 0 becomes flat (zero cost, zero gradient), so any
    optimizer that overshoots below 0 stalls there forever.  Methods whose
    per-step movement collapses slower than the gradient scale walk
    straight past the optimum.

``run`` records the pre-update iterate of each step together with the
step's gradient, cost, delta, raw and corrected second moments,
denominator and effective alpha.  One-dimensional problems take a plain
Python float loop that reproduces :func:`adaxlab.optim.apply_step`
bit-for-bit (covered by tests) at a fraction of the per-step overhead;
``engine="array"`` forces the generic path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .optim import (
    LONG_RUN_SWITCH,
    BoxDomain,
    NumericsError,
    OptimizerConfig,
    OptimizerState,
    apply_step,
    growth_correction,
    project_box,
)


class ReddiProblem:
    """Alternating linear costs on [-1, 1]: C*x when t % 3 == 1, else -x.

    The best fixed point is -1 for every horizon because one slope C
    outweighs two slopes -1 whenever C > 2.
    """

    def __init__(self, C: float = 3.0):
        if not C > 2:
            raise ValueError(f"C must be > 2 so the rare large gradient wins on average, got {C}")
        self.C = float(C)
        self.dim = 1
        self.domain = BoxDomain(-1.0, 1.0)

    def cost_and_grad_scalar(self, t: int, x: float):
        if t % 3 == 1:
            return self.C * x, self.C
        return -x, -1.0

    def cost_and_grad(self, t: int, x):
        c, g = self.cost_and_grad_scalar(t, float(np.asarray(x).reshape(())))
        return c, np.array([g])

    def best_fixed_point(self, T: int):
        return np.array([-1.0])


class DecayProblem:
    """Geometrically decaying costs with an absorbing flat region.

    For t <= n the cost is |C*lam^(t-1) * x| (subgradient 0 at the kink);
    for t > n it is C*lam^(t-1)*x on x >= 0 and 0 on x < 0.  Domain is
    [-2, C/(1-lam)], optimum 0.  Total gradient mass is at most C/(1-lam).
    """

    def __init__(self, C: float = 1e-3, lam: float = 0.9999, n: int = 1):
        if not C > 0:
            raise ValueError(f"C must be > 0, got {C}")
        if not 0.0 < lam < 1.0:
            raise ValueError(f"lam must be in (0, 1), got {lam}")
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise ValueError(f"n must be an integer >= 1, got {n}")
        self.C = float(C)
        self.lam = float(lam)
        self.n = int(n)
        self.dim = 1
        self.domain = BoxDomain(-2.0, self.C / (1.0 - self.lam))

    def cost_and_grad_scalar(self, t: int, x: float):
        s = self.C * self.lam ** (t - 1)
        if x > 0.0:
            return s * x, s
        if t <= self.n and x < 0.0:
            return -s * x, -s
        return 0.0, 0.0

    def cost_and_grad(self, t: int, x):
        c, g = self.cost_and_grad_scalar(t, float(np.asarray(x).reshape(())))
        return c, np.array([g])

    def best_fixed_point(self, T: int):
        return np.array([0.0])


class QuadraticProblem:
    """Stationary quadratic 0.5*x'Ax - b'x over a box (same cost every t)."""

    def __init__(self, A, b, domain: BoxDomain | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if not np.allclose(A, A.T):
            raise ValueError("A must be symmetric")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b length {b.shape[0]} does not match A of shape {A.shape}")
        self.A = A
        self.b = b
        self.dim = b.shape[0]
        self.domain = domain if domain is not None else BoxDomain()

    def cost_and_grad(self, t: int, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x - self.b @ x), self.A @ x - self.b

    def best_fixed_point(self, T: int):
        lo = np.broadcast_to(np.asarray(self.domain.lower, dtype=float), (self.dim,))
        hi = np.broadcast_to(np.asarray(self.domain.upper, dtype=float), (self.dim,))
        diag = np.diagonal(self.A)
        if np.count_nonzero(self.A - np.diag(diag)) == 0:
            # separable: per coordinate pick the best among the endpoints and
            # the unconstrained stationary point (exact for any sign of a_i)
            out = np.empty(self.dim)
            for i in range(self.dim):
                cands = [c for c in (lo[i], hi[i]) if math.isfinite(c)]
                if diag[i] > 0:
                    cands.append(min(max(self.b[i] / diag[i], lo[i]), hi[i]))
                if not cands:
                    raise NotImplementedError("unbounded non-convex coordinate")
                costs = [0.5 * diag[i] * c * c - self.b[i] * c for c in cands]
                out[i] = cands[int(np.argmin(costs))]
            return out
        x = np.linalg.solve(self.A, self.b)
        if self.domain.contains(x):
            return x
        if self.dim > 2 or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NotImplementedError(
                "box-constrained minimizer for coupled A implemented only for "
                "dim <= 2 with finite bounds (grid search)")
        # two refinement passes of dense grid search
        centers = [np.linspace(lo[i], hi[i], 501) for i in range(self.dim)]
        for _ in range(3):
            grids = np.meshgrid(*centers, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
            costs = 0.5 * np.einsum("ni,ij,nj->n", pts, self.A, pts) - pts @ self.b
            best = pts[int(np.argmin(costs))]
            spans = [(c[1] - c[0]) * 2 for c in centers]
            centers = [np.linspace(max(lo[i], best[i] - spans[i]), min(hi[i], best[i] + spans[i]), 501)
                       for i in range(self.dim)]
        return best


@dataclass
class Trajectory:
    """Columnar per-step trace of one run.

    Row r describes step ts[r]: iterates[r] is the point the cost was
    evaluated at (pre-update), vs[r] the raw second moment after the step,
    vhats[r] the corrected/max-tracked moment the denominator used.
    x_final is the iterate after the last executed step (it has no row).
    """

    ts: np.ndarray
    iterates: np.ndarray
    gradients: np.ndarray
    costs: np.ndarray
    deltas: np.ndarray
    vhats: np.ndarray
    denoms: np.ndarray
    vs: np.ndarray
    alphas: np.ndarray
    x_final: np.ndarray
    steps_run: int
    stopped: bool = False

    def __len__(self):
        return len(self.ts)


def _empty_trajectory(x0, dim):
    z = np.zeros((0,)) if dim == 1 else np.zeros((0, dim))
    return Trajectory(ts=np.zeros(0, dtype=np.int64), iterates=z, gradients=z,
                      costs=np.zeros(0), deltas=z, vhats=z, denoms=z, vs=z,
                      alphas=np.zeros(0), x_final=np.asarray(x0, dtype=float),
                      steps_run=0)


def run(problem, config: OptimizerConfig, x0, T: int,
        record_every: int = 1,
        stop_when: Optional[Callable] = None,
        engine: str = "auto") -> Trajectory:
    """Drive the configured optimizer over the problem for T steps.

    Rows are recorded for steps 1, 1+record_every, ... plus the final
    executed step.  stop_when, if given, sees each post-update iterate
    (a float for 1-D problems) and ends the run after the step that
    produced it.  x0 must lie in the problem's domain.
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    if engine not in ("auto", "scalar", "array"):
        raise ValueError(f"unknown engine {engine!r}")
    dim = problem.dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (dim,):
        raise ValueError(f"x0 shape {x0.shape} does not match problem dim {dim}")
    if not problem.domain.contains(x0):
        raise ValueError(f"x0 {x0} lies outside the domain")
    if T == 0:
        return _empty_trajectory(x0 if dim > 1 else x0[0], dim)
    scalar_ok = dim == 1 and hasattr(problem, "cost_and_grad_scalar")
    if engine == "scalar" and not scalar_ok:
        raise ValueError("scalar engine needs a 1-D problem with a scalar cost")
    if engine == "auto":
        engine = "scalar" if scalar_ok else "array"
    if engine == "scalar":
        return _run_scalar(problem, config, float(x0[0]), T, record_every, stop_when)
    return _run_array(problem, config, x0, T, record_every, stop_when)


def _run_array(problem, config, x0, T, every, stop_when):
    dim = problem.dim
    nrows = (T + every - 1) // every + 1
    ts = np.zeros(nrows, dtype=np.int64)
    xs = np.zeros((nrows, dim))
    gs = np.zeros((nrows, dim))
    cs = np.zeros(nrows)
    ds = np.zeros((nrows, dim))
    vh = np.zeros((nrows, dim))
    dn = np.zeros((nrows, dim))
    vv = np.zeros((nrows, dim))
    al = np.zeros(nrows)
    state = OptimizerState(dim)
    x = x0.copy()
    r = 0
    stopped = False
    last_t = 0
    for t in range(1, T + 1):
        cost, g = problem.cost_and_grad(t, x)
        x_raw, step, state = apply_step(config, state, x, g)
        x_next = project_box(x_raw, problem.domain, step.vhat)
        stop = stop_when is not None and stop_when(x_next if dim > 1 else float(x_next[0]))
        if (t - 1) % every == 0 or t == T or stop:
            ts[r] = t
            xs[r] = x
            gs[r] = g
            cs[r] = cost
            ds[r] = step.delta
            vh[r] = step.vhat
            dn[r] = step.denom
            vv[r] = state.v
            al[r] = config.alpha / math.sqrt(t) if config.step_schedule == "invsqrt" else config.alpha
            r += 1
        x = x_next
        last_t = t
        if stop:
            stopped = True
            break

    def cut(a):
        a = a[:r]
        return a[:, 0].copy() if dim == 1 and a.ndim == 2 else a

    return Trajectory(ts=ts[:r].copy(), iterates=cut(xs), gradients=cut(gs),
                      costs=cs[:r].copy(), deltas=cut(ds), vhats=cut(vh),
                      denoms=cut(dn), vs=cut(vv), alphas=al[:r].copy(),
                      x_final=x if dim > 1 else np.asarray(float(x[0])),
                      steps_run=last_t, stopped=stopped)


# Family tags for the scalar loop's dispatch.
_F_IDENT, _F_ADAGRAD, _F_RMS, _F_ADAM, _F_MAX, _F_LONG = range(6)
_FAMILY = {"sgd": _F_IDENT, "sgdm": _F_IDENT, "adagrad": _F_ADAGRAD,
           "rmsprop": _F_RMS, "adam": _F_ADAM, "amsgrad": _F_MAX,
           "padam": _F_MAX, "adax": _F_LONG, "padax": _F_LONG}


def _run_scalar(problem, config, x0, T, every, stop_when):
    """Python-float twin of the apply_step loop for 1-D problems.

    Operation order mirrors apply_step exactly so trajectories match the
    array engine bit for bit; keep the two in sync when touching either.
    """
    kind = config.kind
    fam = _FAMILY[kind]
    power = kind in ("padam", "padax")
    heavy = fam == _F_IDENT
    a0, b1_0, b2_0 = config.alpha, config.beta1, config.beta2
    eps, p, wd = config.epsilon, config.power_p, config.weight_decay
    invsqrt = config.step_schedule == "invsqrt"
    geo = config.beta1_schedule == "geometric"
    lam_m = config.beta1_decay
    invtime = config.beta2_schedule == "invtime"
    l2 = config.decay_mode == "l2" and wd > 0
    dec = config.decay_mode == "decoupled" and wd > 0
    l1p_const = math.log1p(b2_0)
    cost_grad = problem.cost_and_grad_scalar
    lo = float(np.asarray(problem.domain.lower).reshape(()))
    hi = float(np.asarray(problem.domain.upper).reshape(()))

    nrows = (T + every - 1) // every + 1
    ts = np.zeros(nrows, dtype=np.int64)
    xs = np.zeros(nrows)
    gs = np.zeros(nrows)
    cs = np.zeros(nrows)
    ds = np.zeros(nrows)
    vh = np.zeros(nrows)
    dn = np.zeros(nrows)
    vv = np.zeros(nrows)
    al = np.zeros(nrows)

    x = x0
    m = v = vmax = 0.0
    corrected = False
    r = 0
    stopped = False
    last_t = 0
    for t in range(1, T + 1):
        cost, g_raw = cost_grad(t, x)
        if not math.isfinite(g_raw):
            raise NumericsError(f"non-finite gradient at step {t}")
        at = a0 / math.sqrt(t) if invsqrt else a0
        b1t = b1_0 * lam_m ** (t - 1) if geo else b1_0
        b2t = b2_0 / t if invtime else b2_0
        g = g_raw + wd * x if l2 else g_raw
        if heavy:
            m = b1t * m + g
        else:
            m = b1t * m + (1.0 - b1t) * g
        num = m
        if fam == _F_IDENT:
            vhat = 1.0
            denom = 1.0
        elif fam == _F_LONG:
            if corrected:
                log_w = t * math.log1p(b2t)
                u = b2t * math.exp(-log_w)
                v = v + u * (g * g - v)
                vhat = v
                if power:
                    # numpy's array pow, not libm's: bitwise parity with the
                    # array engine (their results differ in the last ulp)
                    denom = float(np.asarray(vhat) ** p) + eps
                else:
                    denom = math.sqrt(v) + eps * math.exp(-0.5 * log_w)
            else:
                v = (1.0 + b2t) * v + b2t * (g * g)
                w = growth_correction(t, b2t)
                vhat = v / w
                if power:
                    denom = float(np.asarray(vhat) ** p) + eps
                else:
                    denom = (math.sqrt(v) + eps) / math.sqrt(w)
                if not invtime and (t + 1) * l1p_const > LONG_RUN_SWITCH:
                    corrected = True
                    v = vhat
        elif fam == _F_ADAM:
            v = b2t * v + (1.0 - b2t) * (g * g)
            num = m / (1.0 - b1_0 ** t)
            vhat = v / (1.0 - b2_0 ** t)
            denom = math.sqrt(vhat) + eps
        elif fam == _F_MAX:
            v = b2t * v + (1.0 - b2t) * (g * g)
            if v > vmax:
                vmax = v
            vhat = vmax
            if power:
                denom = float(np.asarray(vhat) ** p) + eps
            else:
                denom = math.sqrt(vhat) + eps
        elif fam == _F_ADAGRAD:
            v = (v * (t - 1) + g * g) / t
            vhat = v
            denom = math.sqrt(v) + eps
        else:
            v = b2t * v + (1.0 - b2t) * (g * g)
            vhat = v
            denom = math.sqrt(v) + eps
        delta = -at * num / denom
        if dec:
            delta = delta - at * wd * x
        x_raw = x + delta
        x_next = x_raw if lo <= x_raw <= hi else (lo if x_raw < lo else (hi if x_raw > hi else x_raw))
        stop = stop_when is not None and stop_when(x_next)
        if (t - 1) % every == 0 or t == T or stop:
            ts[r] = t
            xs[r] = x
            gs[r] = g_raw
            cs[r] = cost
            ds[r] = delta
            vh[r] = vhat
            dn[r] = denom
            vv[r] = v
            al[r] = at
            r += 1
        x = x_next
        last_t = t
        if stop:
            stopped = True
            break
    return Trajectory(ts=ts[:r].copy(), iterates=xs[:r].copy(), gradients=gs[:r].copy(),
                      costs=cs[:r].copy(), deltas=ds[:r].copy(), vhats=vh[:r].copy(),
                      denoms=dn[:r].copy(), vs=vv[:r].copy(), alphas=al[:r].copy(),
                      x_final=np.asarray(x), steps_run=last_t, stopped=stopped)


def regret_series(trajectory: Trajectory, problem) -> np.ndarray:
    """Cumulative regret sum_{s<=t} f_s(x_s) - f_s(x*) for each recorded t.

    Needs an undownsampled trajectory (rows 1..T) since regret sums every
    step's cost.
    """
    ts = trajectory.ts
    if len(ts) == 0:
        return np.zeros(0)
    if ts[0] != 1 or np.any(np.diff(ts) != 1):
        raise ValueError("regret needs a trajectory recorded at every step")
    T = int(ts[-1])
    xstar = problem.best_fixed_point(T)
    if hasattr(problem, "cost_and_grad_scalar"):
        xs = float(xstar[0])
        star = np.array([problem.cost_and_grad_scalar(t, xs)[0] for t in range(1, T + 1)])
    else:
        star = np.array([problem.cost_and_grad(t, xstar)[0] for t in range(1, T + 1)])
    return np.cumsum(trajectory.costs - star)


def regret(trajectory: Trajectory, problem, T: int | None = None) -> float:
    """Final (or step-T) cumulative regret against the best fixed point."""
    series = regret_series(trajectory, problem)
    if T is None:
        return float(series[-1])
    if not 1 <= T <= len(series):
        raise ValueError(f"T={T} outside the recorded range 1..{len(series)}")
    return float(series[T - 1])
