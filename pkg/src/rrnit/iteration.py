"""Outer iterations: range-relaxed (rrNIT), geometric (gNIT) and stationary (SIT).

All three update ``x_k = x_{k-1} - lam_k (I + lam_k A*A)^{-1} A*(A x_{k-1} - y)``
and stop by the discrepancy principle, i.e. at the first ``k`` with
``||A x_k - y|| <= tau * delta``. They differ in how ``lam_k`` is chosen.
Cost is measured in SPD linear solves, accumulated over outer and inner
iterations.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import tikhonov
from .linop import operator_norm_estimate
from .multiplier import (WARM_START_MODES, MultiplierError, RangeTarget,
                         lambda_lower_bound, solve_range)

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "RunTrace",
    "CheckResult",
    "VerificationReport",
    "run_rrnit",
    "run_gnit",
    "run_sit",
    "solve",
    "verify_trace",
    "stopping_index_bound",
]

log = logging.getLogger(__name__)

METHODS = ("rrnit", "gnit", "sit")
STOP_REASONS = ("discrepancy", "max_outer", "inner_failure", "unstable")


@dataclass
class SolverConfig:
    """Parameters shared by the three methods.

    ``p`` is used by rrNIT, ``q`` by gNIT (``lam_k = q**k``) and
    ``lambda_bar`` by SIT. ``m1``/``m2``/``m3`` switch the greedy numerator,
    the step over-relaxation and the warm start of the rrNIT multiplier
    search. gNIT is declared unstable once its residual exceeds
    ``divergence_factor`` times its running minimum for ``divergence_patience``
    consecutive iterations.
    """
    method: str = "rrnit"
    p: float = 0.2
    q: float = 2.0
    lambda_bar: float = 2.0
    tau: float = 2.0
    max_outer: int = 1000
    tol: float = tikhonov.DEFAULT_TOL
    cg_max_iter: Optional[int] = None
    linear_solver: str = "auto"
    max_inner: int = 50
    max_bisect: int = 60
    m1: bool = True
    m2: bool = True
    m3: bool = True
    warm_start_mode: str = "extrapolate"
    keep_iterates: bool = True
    divergence_factor: float = 10.0
    divergence_patience: int = 3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError("method must be one of {}".format(METHODS))
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if not self.tau > 1.0:
            raise ValueError("tau must exceed 1")
        if not self.q > 1.0:
            raise ValueError("q must exceed 1")
        if not self.lambda_bar > 0.0:
            raise ValueError("lambda_bar must be positive")
        if self.max_outer < 0:
            raise ValueError("max_outer must be nonnegative")
        if self.linear_solver not in tikhonov.METHODS:
            raise ValueError("linear_solver must be one of {}".format(tikhonov.METHODS))
        if self.warm_start_mode not in WARM_START_MODES:
            raise ValueError("warm_start_mode must be one of {}".format(WARM_START_MODES))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class IterationRecord:
    k: int
    lam: float
    residual: float
    error: Optional[float]
    inner_iterations: int
    cumulative_linear_solves: int
    linear_solves: int = 1
    krylov_iterations: int = 0


@dataclass
class RunTrace:
    """Everything recorded by one outer iteration run.

    ``iterates`` holds ``x_0, ..., x_k`` when the config keeps them.
    ``k_star`` is set only for a discrepancy stop.
    """
    method: str
    delta: float
    tau: float
    initial_residual: float
    initial_error: Optional[float]
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: str = "max_outer"
    k_star: Optional[int] = None
    message: str = ""
    iterates: List[np.ndarray] = field(default_factory=list)
    x: Optional[np.ndarray] = None
    step_norm_sq_sum: float = 0.0

    @property
    def residuals(self):
        return np.array([self.initial_residual] + [r.residual for r in self.records])

    @property
    def errors(self):
        if self.initial_error is None:
            return None
        return np.array([self.initial_error] + [r.error for r in self.records])

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    @property
    def total_linear_solves(self):
        return self.records[-1].cumulative_linear_solves if self.records else 0

    @property
    def iterations(self):
        return len(self.records)


def _start(problem, config):
    x = np.array(problem.x0, dtype=float)
    trace = RunTrace(config.method, problem.delta, config.tau, problem.residual(x),
                     problem.error(x), x=x)
    if config.keep_iterates:
        trace.iterates.append(x)
    return trace


def _accept(trace, problem, config, x_new, record):
    dx = x_new - trace.x
    trace.step_norm_sq_sum += float(dx @ dx)
    trace.x = x_new
    trace.records.append(record)
    if config.keep_iterates:
        trace.iterates.append(x_new)


def _discrepancy(residual, problem, config):
    return residual <= config.tau * problem.delta


def run_rrnit(problem, config):
    """Range-relaxed NIT: each ``lam_k`` puts the residual in ``[delta, theta_k]``."""
    trace = _start(problem, config)
    r = trace.initial_residual
    if _discrepancy(r, problem, config):
        trace.stop_reason, trace.k_star = "discrepancy", 0
        return trace
    op, y = problem.operator, problem.y_delta
    history, cum = [], 0
    for k in range(1, config.max_outer + 1):
        target = RangeTarget.from_residual(r, problem.delta, config.p)
        try:
            res = solve_range(
                op, trace.x, y, target, k, history, tol=config.tol,
                max_iter=config.cg_max_iter, method=config.linear_solver,
                m1=config.m1, m2=config.m2, m3=config.m3,
                warm_start_mode=config.warm_start_mode,
                max_inner=config.max_inner, max_bisect=config.max_bisect)
        except (MultiplierError, tikhonov.ConvergenceError, ValueError) as exc:
            trace.stop_reason, trace.message = "inner_failure", "k={}: {}".format(k, exc)
            log.warning("rrNIT stopped: %s", trace.message)
            return trace
        cum += res.linear_solves
        history.append(res.lam)
        r = res.accepted_residual
        _accept(trace, problem, config, res.candidate, IterationRecord(
            k, res.lam, r, problem.error(res.candidate), res.inner_iterations, cum,
            res.linear_solves, res.krylov_iterations))
        log.debug("rrNIT k=%d lam=%.4g residual=%.4g solves=%d", k, res.lam, r, cum)
        if _discrepancy(r, problem, config):
            trace.stop_reason, trace.k_star = "discrepancy", k
            return trace
    trace.stop_reason = "max_outer"
    return trace


def _run_fixed(problem, config, lam_of_k, watch_divergence):
    trace = _start(problem, config)
    r = trace.initial_residual
    if _discrepancy(r, problem, config):
        trace.stop_reason, trace.k_star = "discrepancy", 0
        return trace
    op, y = problem.operator, problem.y_delta
    r_min, strikes = r, 0
    for k in range(1, config.max_outer + 1):
        lam = lam_of_k(k)
        try:
            step = tikhonov.tikhonov_step(op, trace.x, y, lam, config.tol,
                                          config.cg_max_iter, config.linear_solver)
        except tikhonov.ConvergenceError as exc:
            trace.stop_reason, trace.message = "inner_failure", "k={}: {}".format(k, exc)
            return trace
        r = step.residual
        _accept(trace, problem, config, step.candidate, IterationRecord(
            k, lam, r, problem.error(step.candidate), 0, k, 1, step.krylov_iterations))
        if _discrepancy(r, problem, config):
            trace.stop_reason, trace.k_star = "discrepancy", k
            return trace
        if watch_divergence:
            strikes = strikes + 1 if r > config.divergence_factor * r_min else 0
            r_min = min(r_min, r)
            if strikes >= config.divergence_patience:
                trace.stop_reason = "unstable"
                trace.message = "residual above {:g}x its minimum for {} iterations".format(
                    config.divergence_factor, strikes)
                return trace
    trace.stop_reason = "max_outer"
    return trace


def run_gnit(problem, config):
    """Geometric NIT with ``lam_k = q**k``; one linear solve per iteration."""
    q = float(config.q)
    return _run_fixed(problem, config, lambda k: q ** k, watch_divergence=True)


def run_sit(problem, config):
    """Stationary iterated Tikhonov with constant ``lam_k = lambda_bar``."""
    lam = float(config.lambda_bar)
    return _run_fixed(problem, config, lambda k: lam, watch_divergence=False)


def solve(problem, config):
    """Dispatch on ``config.method``."""
    return {"rrnit": run_rrnit, "gnit": run_gnit, "sit": run_sit}[config.method](
        problem, config)


def stopping_index_bound(initial_residual, delta, p, tau):
    """Upper bound ``ln((r0 - delta) / ((tau - 1) delta)) / |ln p| + 1`` on k*."""
    return math.log((initial_residual - delta) / ((tau - 1.0) * delta)) / abs(math.log(p)) + 1.0


@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "n/a"
    detail: str = ""

    def __str__(self):
        label = {"pass": "PASS", "fail": "FAIL", "n/a": "N/A "}[self.status]
        return "{} {:<18s} {}".format(label, self.name, self.detail)


@dataclass
class VerificationReport:
    checks: List[CheckResult]

    @property
    def passed(self):
        return all(c.status != "fail" for c in self.checks)

    @property
    def failed(self):
        return [c.name for c in self.checks if c.status == "fail"]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


def _check(name, failures, n, what):
    if failures:
        return CheckResult(name, "fail", "{} of {} {} violated (first at k={})".format(
            len(failures), n, what, failures[0]))
    return CheckResult(name, "pass", "{} {} hold".format(n, what))


def verify_trace(trace, problem, config, gain_rtol=1e-6, op_norm=None):
    """Check a trace against the guarantees of the range-relaxed method.

    Checks
    ------
    discrepancy
        ``k*`` is the first index with residual ``<= tau delta`` (all methods).
    residual_decay
        ``r_k - delta <= p (r_{k-1} - delta)`` at every step.
    gain_identity
        ``|e_{k-1}|^2 - |e_k|^2 = |x_k - x_{k-1}|^2 + lam_k |A(x* - x_k)|^2
        + lam_k (r(x_k) - r(x*))`` with ``r(x) = |A x - y|^2``, to ``gain_rtol``.
    error_monotone
        ``||x* - x_k||`` is nonincreasing.
    multiplier_bound
        ``lam_k`` is at least the lower bound evaluated at ``(x_{k-1}, r_k)``;
        for exact data also ``lam_k >= (1 - p) / ||A||^2``.
    stopping_bound
        ``k*`` does not exceed :func:`stopping_index_bound` (needs delta > 0).

    Only ``discrepancy`` applies to gNIT and SIT traces; the others report
    ``n/a`` there, and whenever iterates or ground truth are missing.
    """
    checks = []
    tau, delta, p = config.tau, problem.delta, config.p
    res = trace.residuals
    recs = trace.records

    # discrepancy semantics
    bad = []
    thresh = tau * delta
    last = len(res) - 1
    for k in range(len(res)):
        below = res[k] <= thresh
        stop_here = trace.stop_reason == "discrepancy" and k == last
        if below != stop_here:
            bad.append(k)
    if trace.stop_reason == "discrepancy" and trace.k_star != last:
        bad.append(last)
    checks.append(_check("discrepancy", bad, len(res), "stopping conditions"))

    rr = trace.method == "rrnit"
    na = "not applicable to {}".format(trace.method)
    if not rr:
        for name in ("residual_decay", "gain_identity", "error_monotone",
                     "multiplier_bound", "stopping_bound"):
            checks.append(CheckResult(name, "n/a", na))
        return VerificationReport(checks)

    bad = [k for k in range(1, len(res)) if not res[k] - delta <= p * (res[k - 1] - delta)]
    checks.append(_check("residual_decay", bad, len(res) - 1, "decay inequalities"))

    have_iterates = len(trace.iterates) == len(recs) + 1
    x_star = problem.x_star
    op, y = problem.operator, problem.y_delta

    if have_iterates and x_star is not None:
        r_star = float(np.sum((op.forward(x_star) - y) ** 2))
        bad = []
        for rec in recs:
            xp, xk = trace.iterates[rec.k - 1], trace.iterates[rec.k]
            lhs = float(np.sum((x_star - xp) ** 2) - np.sum((x_star - xk) ** 2))
            dx = xk - xp
            rk = float(np.sum((op.forward(xk) - y) ** 2))
            rhs = float(dx @ dx + rec.lam * np.sum(op.forward(x_star - xk) ** 2)
                        + rec.lam * (rk - r_star))
            if not abs(lhs - rhs) <= gain_rtol * max(abs(lhs), abs(rhs)):
                bad.append(rec.k)
        checks.append(_check("gain_identity", bad, len(recs), "gain identities"))
    else:
        checks.append(CheckResult("gain_identity", "n/a", "needs iterates and ground truth"))

    errs = trace.errors
    if errs is not None:
        bad = [k for k in range(1, len(errs)) if errs[k] > errs[k - 1]]
        checks.append(_check("error_monotone", bad, len(errs) - 1, "error decreases"))
    else:
        checks.append(CheckResult("error_monotone", "n/a", "no ground truth"))

    if have_iterates:
        bad = []
        for rec in recs:
            try:
                bound = lambda_lower_bound(op, trace.iterates[rec.k - 1], y, rec.residual)
            except ValueError:
                bad.append(rec.k)
                continue
            if not rec.lam >= bound:
                bad.append(rec.k)
        detail_extra = ""
        if delta == 0 and recs:
            norm = op_norm if op_norm is not None else operator_norm_estimate(op, 200)
            floor = (1.0 - p) / norm ** 2
            bad += [rec.k for rec in recs if not rec.lam >= floor]
            detail_extra = " (exact-data floor {:.4g})".format(floor)
        c = _check("multiplier_bound", sorted(set(bad)), len(recs), "multiplier bounds")
        c.detail += detail_extra
        checks.append(c)
    else:
        checks.append(CheckResult("multiplier_bound", "n/a", "needs iterates"))

    if delta > 0 and trace.stop_reason == "discrepancy" and trace.k_star:
        bound = stopping_index_bound(trace.initial_residual, delta, p, tau)
        status = "pass" if trace.k_star <= bound else "fail"
        checks.append(CheckResult("stopping_bound", status,
                                  "k*={} bound={:.3f}".format(trace.k_star, bound)))
    else:
        checks.append(CheckResult("stopping_bound", "n/a", "needs delta > 0 and k* >= 1"))
    return VerificationReport(checks)
