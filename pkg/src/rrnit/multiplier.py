"""Choosing the Lagrange multiplier of one range-relaxed step.

Given ``x_prev`` with residual ``r = ||A x_prev - y||`` and the noise level
``delta``, any ``lam > 0`` whose step lands at a residual in
``[delta, theta]`` with ``theta = p r + (1 - p) delta`` is accepted. Since
``G(lam) = ||A pi(lam) - y||^2`` is continuous and strictly decreasing, the
feasible multipliers form an interval; it is located with a Newton iteration
that aims at ``G = 0`` (greedy), over-relaxes its step while far from the
target, and starts from a warm guess built from previous multipliers.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tikhonov
from .tikhonov import DEFAULT_TOL

__all__ = [
    "RangeTarget",
    "MultiplierResult",
    "MultiplierError",
    "lambda_lower_bound",
    "initial_guess",
    "solve_range",
]

WARM_START_MODES = ("extrapolate", "previous")


class MultiplierError(RuntimeError):
    """The inner multiplier iteration failed; ``trials`` holds (lam, G) pairs."""

    def __init__(self, message, trials=()):
        super().__init__(message)
        self.trials = list(trials)


@dataclass(frozen=True)
class RangeTarget:
    """Admissible residual interval ``[delta, theta]`` for the next iterate.

    ``prev_residual`` is ``||A x_prev - y||``. Acceptance is tested as
    ``delta <= r <= theta`` and, redundantly in exact arithmetic,
    ``r - delta <= p (prev_residual - delta)``, so that the geometric decay
    of ``r - delta`` also holds bit-for-bit in floating point.
    """
    delta: float
    theta: float
    p: float
    prev_residual: float

    @classmethod
    def from_residual(cls, prev_residual, delta, p):
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        theta = p * prev_residual + (1.0 - p) * delta
        return cls(float(delta), float(theta), float(p), float(prev_residual))

    def contains(self, residual):
        return (self.delta <= residual <= self.theta
                and residual - self.delta <= self.p * (self.prev_residual - self.delta))

    def too_large(self, residual):
        return residual >= self.delta and not self.contains(residual)


@dataclass
class MultiplierResult:
    lam: float
    candidate: np.ndarray
    accepted_residual: float
    inner_iterations: int
    linear_solves: int
    krylov_iterations: int = 0
    initial_lam: float = float("nan")
    omega_history: list = field(default_factory=list)
    trials: list = field(default_factory=list)


def lambda_lower_bound(op, x_prev, y_delta, mu):
    """Lower bound on any multiplier that maps ``x_prev`` to residual ``mu``.

    Returns ``(r - mu) r / ||A*(A x_prev - y)||^2`` with ``r = ||A x_prev - y||``.

    Raises
    ------
    ValueError
        If ``mu >= r`` or ``A*(A x_prev - y) = 0`` (``x_prev`` is a
        least-squares solution already).
    """
    b = op.forward(x_prev) - np.asarray(y_delta, dtype=float)
    r = float(np.linalg.norm(b))
    if not mu < r:
        raise ValueError("mu={} must be smaller than the residual {}".format(mu, r))
    g = op.adjoint(b)
    denom = float(g @ g)
    if denom == 0.0:
        raise ValueError("A*(A x_prev - y) vanishes; x_prev is stationary")
    return (r - mu) * r / denom


def initial_guess(k, history, op, x_prev, y_delta, theta, mode="extrapolate"):
    """Starting multiplier for outer iteration ``k`` (1-based).

    ``k = 1`` uses :func:`lambda_lower_bound` at ``theta``; ``k = 2`` reuses
    ``lam_1``. For ``k >= 3``, ``mode='extrapolate'`` extends the last two
    multipliers linearly in ``log(lam)`` (``lam_{k-1}^2 / lam_{k-2}``) while
    ``mode='previous'`` keeps ``lam_{k-1}``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return lambda_lower_bound(op, x_prev, y_delta, theta)
    if len(history) < 1:
        raise ValueError("warm start at k={} needs previous multipliers".format(k))
    if mode not in WARM_START_MODES:
        raise ValueError("unknown warm start mode {!r}".format(mode))
    if k == 2 or mode == "previous" or len(history) < 2:
        return float(history[-1])
    return float(history[-1]) ** 2 / float(history[-2])


def solve_range(op, x_prev, y_delta, target, k=1, history=(), tol=DEFAULT_TOL,
                max_iter=None, method="cg", m1=True, m2=True, m3=True,
                warm_start_mode="extrapolate", max_inner=50, max_bisect=60):
    """Find ``lam`` with ``target.delta <= ||A pi(lam) - y|| <= target.theta``.

    Newton steps ``lam <- lam - omega G(lam) / G'(lam)`` are taken while the
    residual is above the range (``m1=False`` uses ``G - delta^2`` as the
    numerator instead of ``G``). With ``m2`` the factor ``omega`` doubles
    after every step taken from a point with ``G > 2 theta^2`` and resets to
    1 otherwise. With ``m3`` the start is :func:`initial_guess`; without it
    every outer iteration starts from the lower bound at ``theta``.

    A step that overshoots below ``delta`` switches to geometric bisection
    between the largest multiplier known to be too small and the overshoot.

    Each failed Newton iteration costs two SPD solves (derivative and next
    value), each bisection one, and the initial evaluation one.

    Raises
    ------
    MultiplierError
        On exhausting ``max_inner`` Newton steps or ``max_bisect`` bisections,
        or when ``G'`` vanishes numerically.
    tikhonov.ConvergenceError
        Propagated from the linear solver.
    """
    delta, theta = target.delta, target.theta
    solve_kw = dict(tol=tol, max_iter=max_iter, method=method)
    if m3:
        lam = initial_guess(k, history, op, x_prev, y_delta, theta, warm_start_mode)
    else:
        lam = lambda_lower_bound(op, x_prev, y_delta, theta)
    lam0 = lam

    step = tikhonov.g_value(op, x_prev, y_delta, lam, **solve_kw)
    solves, krylov = step.linear_solves, step.krylov_iterations
    trials = [(lam, step.residual_sq)]
    omega = 1.0
    omegas = [omega]
    newton_steps = bisections = 0
    lo = hi = None

    while not target.contains(step.residual):
        g = step.residual_sq
        newton = False
        if target.too_large(step.residual):
            lo = lam
            if hi is None:
                newton = True
        else:
            hi = lam
            if lo is None:
                # every lam below the bound at theta leaves the residual above theta
                lo = lambda_lower_bound(op, x_prev, y_delta, theta)

        if newton:
            if newton_steps >= max_inner:
                raise MultiplierError(
                    "no admissible multiplier after {} Newton steps".format(max_inner), trials)
            dg, n_solves, n_kry = tikhonov.derivative_with_stats(
                op, y_delta, lam, step.candidate, **solve_kw)
            solves += n_solves
            krylov += n_kry
            if not abs(dg) >= 1e-300 * max(1.0, g):
                raise MultiplierError("G' vanished at lam={:.6g}".format(lam), trials)
            numer = g if m1 else g - delta ** 2
            lam = lam - omega * numer / dg
            newton_steps += 1
        else:
            if bisections >= max_bisect:
                raise MultiplierError(
                    "bisection did not reach the range in {} steps".format(max_bisect), trials)
            lam = math.sqrt(lo * hi)
            bisections += 1

        step = tikhonov.g_value(op, x_prev, y_delta, lam, **solve_kw)
        solves += step.linear_solves
        krylov += step.krylov_iterations
        trials.append((lam, step.residual_sq))
        if newton:
            omega = 2.0 * omega if (m2 and g > 2.0 * theta ** 2) else 1.0
            omegas.append(omega)

    return MultiplierResult(
        lam=float(lam),
        candidate=step.candidate,
        accepted_residual=step.residual,
        inner_iterations=newton_steps + bisections,
        linear_solves=solves,
        krylov_iterations=krylov,
        initial_lam=float(lam0),
        omega_history=omegas,
        trials=trials,
    )
