"""Single iterated-Tikhonov steps and the residual function of the multiplier.

For a previous iterate ``x_prev`` and a multiplier ``lam > 0`` the step is::

    pi(lam) = x_prev - lam (I + lam A*A)^{-1} A*(A x_prev - y)

i.e. the minimizer of ``lam ||A x - y||^2 + ||x - x_prev||^2``, and the
residual function is ``G(lam) = ||A pi(lam) - y||^2``.
"""

import weakref
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .linop import DimensionError, LinearOperator

__all__ = [
    "SolveStats",
    "StepResult",
    "ConvergenceError",
    "spd_solve",
    "tikhonov_step",
    "g_value",
    "g_derivative",
]

DEFAULT_TOL = 1e-10
ROUNDOFF_FLOOR = 1e-14
METHODS = ("cg", "direct", "auto")
# Above this size the dense path refuses to materialize A*A.
DIRECT_MAX_DIM = 4096
# 'auto' factors densely up to this size when no fast exact solve exists.
AUTO_DENSE_MAX_DIM = 1024


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_relative_residual: float


@dataclass(frozen=True)
class StepResult:
    """Outcome of one regularized step ``pi(lam)``.

    ``residual_sq`` is ``G(lam) = ||A candidate - y||^2``. ``linear_solves``
    counts SPD systems solved (0 or 1); ``krylov_iterations`` is the total
    number of CG iterations spent on them.
    """
    lam: float
    candidate: np.ndarray
    residual_sq: float
    linear_solves: int
    krylov_iterations: int

    @property
    def residual(self):
        return float(np.sqrt(self.residual_sq))


class ConvergenceError(RuntimeError):
    """CG hit its iteration cap; carries the best iterate found."""

    def __init__(self, message, best=None, relative_residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.relative_residual = relative_residual
        self.iterations = iterations


def _scaling(lam):
    # (I + lam A*A) x = b  <=>  (c0 I + c1 A*A) x = b / lam_scale
    if lam > 1.0:
        return 1.0 / lam, 1.0, lam
    return 1.0, lam, 1.0


def _cg(matvec, rhs, tol, max_iter, x0=None, matrix_norm=0.0, floor=0.0, sweeps=5):
    """Conjugate gradients for an SPD ``matvec``; returns (x, iterations, relres).

    Converged once ``||b - M x|| <= tol ||b|| + floor matrix_norm ||x||``.
    The second term is the roundoff level of evaluating ``M x`` and only
    matters when ``tol ||b||`` lies below it; with ``floor=0`` this is the
    plain relative residual test. The recursive residual drifts from the
    true one; after each sweep the true residual is recomputed and CG
    restarts from it if the test fails.
    """
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=float)
        r = rhs - matvec(x)

    def target():
        return tol * bnorm + floor * matrix_norm * np.linalg.norm(x)

    it = 0
    best_x, best_ratio, best_rel = x.copy(), np.inf, np.inf
    for _ in range(sweeps):
        p = r.copy()
        rr = r @ r
        while it < max_iter and np.sqrt(rr) > target():
            q = matvec(p)
            pq = p @ q
            if pq <= 0.0:
                break
            alpha = rr / pq
            x += alpha * p
            r -= alpha * q
            rr_new = r @ r
            p = r + (rr_new / rr) * p
            rr = rr_new
            it += 1
        r = rhs - matvec(x)
        rnorm = np.linalg.norm(r)
        ratio = rnorm / target()
        if ratio < best_ratio:
            best_x, best_ratio, best_rel = x.copy(), ratio, rnorm / bnorm
        if rnorm <= target():
            return x, it, rnorm / bnorm
        if it >= max_iter:
            break
    raise ConvergenceError(
        "CG did not reach relative residual {:.3g} in {} iterations (got {:.3g})".format(
            tol, max_iter, best_rel),
        best=best_x, relative_residual=best_rel, iterations=it)


_factor_cache = weakref.WeakKeyDictionary()


def _direct_solve(op, lam, rhs):
    c0, c1, scale = _scaling(lam)
    x = op.normal_solve(c0, c1, rhs / scale)
    if x is not None:
        return x
    if op.domain_dim > DIRECT_MAX_DIM:
        raise ValueError("direct solver limited to domain_dim <= {}".format(DIRECT_MAX_DIM))
    entry = _factor_cache.setdefault(op, {})
    key = float(lam)
    if key not in entry:
        if "gram" not in entry:
            a = op.to_dense()
            entry["gram"] = a.T @ a
        m = c1 * entry["gram"] + c0 * np.eye(op.domain_dim)
        if len(entry) > 8:
            # keep the gram matrix, drop stale factorizations
            for k in [k for k in entry if k != "gram"]:
                del entry[k]
        entry[key] = linalg.cho_factor(m)
    return linalg.cho_solve(entry[key], rhs / scale)


def _has_fast_solve(op):
    return type(op).normal_solve is not LinearOperator.normal_solve and \
        op.normal_solve(1.0, 0.0, np.zeros(op.domain_dim)) is not None


def spd_solve(op, lam, rhs, tol=DEFAULT_TOL, max_iter=None, method="cg", x0=None):
    """Solve ``(I + lam A*A) x = rhs``.

    For ``lam > 1`` the equivalent system ``(lam^-1 I + A*A) x = lam^-1 rhs``
    is solved instead, which keeps the matrix scale bounded as ``lam`` grows.

    Parameters
    ----------
    op : LinearOperator
    lam : float
        Positive multiplier.
    rhs : array
        Right-hand side in the operator's domain.
    tol : float
        Relative residual target. With ``M`` the (scaled) system matrix, CG
        stops once ``||M x - b|| <= tol ||b|| + 1e-14 ||M|| ||x||``. The
        second term is the roundoff level of ``M x``; without it a plain
        relative residual ``tol ||b||`` is unattainable in double precision
        when ``x`` is large and ``b`` small.
    max_iter : int, optional
        CG iteration cap, default ``10 * domain_dim``.
    method : {'cg', 'direct', 'auto'}
        ``'direct'`` uses the operator's exact ``normal_solve`` when it has
        one (e.g. FFT diagonalization of periodic convolutions) and a cached
        Cholesky factorization of the dense matrix otherwise. ``'auto'`` is
        ``'direct'`` for operators with a fast exact solve or with
        ``domain_dim <= 1024`` and ``'cg'`` for the rest.
    x0 : array, optional
        CG starting vector (warm start).

    Returns
    -------
    x : array
    stats : SolveStats
        ``final_relative_residual`` is ``||M x - b|| / ||b||``.

    Raises
    ------
    ConvergenceError
        If CG does not converge within ``max_iter`` iterations.
    """
    if not lam > 0:
        raise ValueError("lam must be positive, got {}".format(lam))
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.domain_dim,):
        raise DimensionError("rhs has shape {}, expected ({},)".format(rhs.shape, op.domain_dim))
    c0, c1, scale = _scaling(lam)

    def matvec(v):
        return c0 * v + c1 * op.adjoint(op.forward(v))

    if method == "auto":
        small = op.domain_dim <= AUTO_DENSE_MAX_DIM
        method = "direct" if small or _has_fast_solve(op) else "cg"
    if method == "direct":
        x = _direct_solve(op, lam, rhs)
        bnorm = np.linalg.norm(rhs / scale)
        res = np.linalg.norm(matvec(x) - rhs / scale)
        return x, SolveStats(0, float(res / bnorm) if bnorm else 0.0)
    if method != "cg":
        raise ValueError("unknown solver method {!r}".format(method))
    if max_iter is None:
        max_iter = 10 * op.domain_dim
    mnorm = c0 + c1 * op.norm() ** 2
    x, it, relres = _cg(matvec, rhs / scale, tol, max_iter, x0=x0, matrix_norm=mnorm,
                        floor=ROUNDOFF_FLOOR)
    return x, SolveStats(it, float(relres))


def tikhonov_step(op, x_prev, y_delta, lam, tol=DEFAULT_TOL, max_iter=None,
                  method="cg", form="update"):
    """One iterated-Tikhonov step with multiplier ``lam``.

    ``form='update'`` computes ``x_prev - lam (I + lam A*A)^{-1} A*(A x_prev - y)``;
    ``form='normal'`` solves ``(lam^-1 I + A*A) x = lam^-1 x_prev + A* y``.
    The two agree in exact arithmetic. The update form is the default because
    its solver error scales with the current gradient rather than with
    ``||A* y||``, which keeps the step stationary to high relative accuracy.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    y_delta = np.asarray(y_delta, dtype=float)
    if form == "update":
        grad = op.adjoint(op.forward(x_prev) - y_delta)
        s, stats = spd_solve(op, lam, lam * grad, tol, max_iter, method)
        candidate = x_prev - s
    elif form == "normal":
        rhs = x_prev + lam * op.adjoint(y_delta)
        candidate, stats = spd_solve(op, lam, rhs, tol, max_iter, method)
    else:
        raise ValueError("unknown form {!r}".format(form))
    res = op.forward(candidate) - y_delta
    return StepResult(float(lam), candidate, float(res @ res), 1, stats.iterations)


def g_value(op, x_prev, y_delta, lam, tol=DEFAULT_TOL, max_iter=None, method="cg"):
    """Evaluate ``G(lam)`` together with the candidate ``pi(lam)``.

    ``lam == 0`` is the limit ``pi(0) = x_prev`` and costs no solve.
    """
    if lam == 0:
        x_prev = np.asarray(x_prev, dtype=float)
        res = op.forward(x_prev) - np.asarray(y_delta, dtype=float)
        return StepResult(0.0, x_prev.copy(), float(res @ res), 0, 0)
    return tikhonov_step(op, x_prev, y_delta, lam, tol, max_iter, method)


def g_derivative(op, x_prev, y_delta, lam, candidate, tol=DEFAULT_TOL, max_iter=None,
                 method="cg"):
    """Return ``dG/dlam`` at ``lam``; ``candidate`` must be ``pi(lam)``.

    Uses ``G'(lam) = -2 <v, (I + lam A*A)^{-1} v>`` with
    ``v = A*(A pi(lam) - y)``, at the price of one SPD solve.
    """
    return derivative_with_stats(op, y_delta, lam, candidate, tol, max_iter, method)[0]


def derivative_with_stats(op, y_delta, lam, candidate, tol=DEFAULT_TOL, max_iter=None,
                          method="cg"):
    """Like :func:`g_derivative` but also returns (linear_solves, krylov_iterations)."""
    v = op.adjoint(op.forward(candidate) - np.asarray(y_delta, dtype=float))
    if not np.any(v):
        return 0.0, 0, 0
    w, stats = spd_solve(op, lam, v, tol, max_iter, method)
    return float(-2.0 * (v @ w)), 1, stats.iterations
