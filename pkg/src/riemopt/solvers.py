"""Retraction-based solvers: gradient descent, conjugate gradient,
trust-region, and limited-memory quasi-Newton.

All four share the same iterate loop: compute the Riemannian gradient,
pick a search direction/step in the current tangent space, retract back to
the manifold, and repeat until the gradient norm drops below the tolerance.
Every iterate is kept feasible by construction and asserted against the
manifold's feasibility tolerance.

Solvers are pure functions of ``(cost, manifold, x0, config)``: they hold no
hidden state and, for a fixed configuration, produce bitwise-identical traces
on repeated runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np

from .costs import CostFunction
from .manifolds import (
    DegenerateStepError,
    Manifold,
    StepTooLongError,
    Tangent,
    tree_norm,
)

MAX_BACKTRACKS = 50


class LineSearchError(RuntimeError):
    pass


class NotDescentDirectionError(LineSearchError):
    pass


class StepTooSmallError(LineSearchError):
    pass


class Termination(str, Enum):
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    STEP_TOO_SMALL = "step_too_small"


@dataclass
class SolverConfig:
    """Shared solver settings.

    ``cg_restart`` defaults to the ambient real dimension of the manifold
    when left as None.  Trust-region constants follow standard practice and
    can be overridden per run.
    """

    grad_tol: float = 1e-6
    max_iters: int = 500
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    initial_step: float = 1.0
    cg_restart: Optional[int] = None
    tr_radius0: float = 1.0
    tr_radius_max: float = 100.0
    tr_accept_rho: float = 0.1
    tr_expand: float = 2.0
    tr_shrink: float = 0.25
    lbfgs_memory: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError("SolverConfig: need 0 < armijo_c < 1")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("SolverConfig: need 0 < armijo_shrink < 1")
        if not 0 < self.tr_accept_rho < 0.25:
            raise ValueError("SolverConfig: need 0 < tr_accept_rho < 0.25")
        if self.grad_tol <= 0 or self.initial_step <= 0:
            raise ValueError("SolverConfig: tolerances must be positive")
        if self.max_iters < 0 or self.lbfgs_memory < 0:
            raise ValueError("SolverConfig: counts must be nonnegative")


@dataclass
class SolverReport:
    final_point: Any
    final_cost: float
    cost_trace: list = field(default_factory=list)
    gradnorm_trace: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    termination: Termination = Termination.MAX_ITERS
    per_iter_events: list = field(default_factory=list)


def _rgrad(cost: CostFunction, manifold: Manifold, x) -> Tangent:
    return manifold.egrad_to_rgrad(x, cost.euclidean_grad(x))


def armijo_linesearch(
    cost: CostFunction,
    manifold: Manifold,
    x,
    d: Tangent,
    f0: float,
    slope: float,
    cfg: SolverConfig,
):
    """Backtracking line search with the sufficient-decrease condition.

    Returns ``(step, x_new, f_new, backtracks)`` for the largest step in
    ``{initial_step * shrink^k}`` satisfying
    ``f(retract(x, t d)) <= f0 + armijo_c * t * slope``.

    Raises :class:`NotDescentDirectionError` when ``slope >= 0`` and
    :class:`StepTooSmallError` after ``MAX_BACKTRACKS`` failures.  A
    degenerate retraction counts as a failed trial and backtracking continues.
    """
    if not slope < 0:
        raise NotDescentDirectionError(f"slope {slope:.3e} is not negative")
    t = cfg.initial_step
    for k in range(MAX_BACKTRACKS):
        try:
            x_new = manifold.retract(x, t * d)
            f_new = cost.value(x_new)
        except DegenerateStepError:
            f_new = np.inf
            x_new = None
        if np.isfinite(f_new) and f_new <= f0 + cfg.armijo_c * t * slope:
            if f0 - f_new < -10.0 * cfg.armijo_c * t * slope:
                # barely above the acceptance threshold: a step this marginal
                # can bounce across a symmetric valley forever, so peek one
                # level deeper and keep the better of the two
                t2 = t * cfg.armijo_shrink
                try:
                    x2 = manifold.retract(x, t2 * d)
                    f2 = cost.value(x2)
                    if f2 < f_new:
                        return t2, x2, f2, k + 1
                except DegenerateStepError:
                    pass
            return t, x_new, f_new, k
        t *= cfg.armijo_shrink
    raise StepTooSmallError(f"no sufficient decrease after {MAX_BACKTRACKS} backtracks")


def _descent_loop(cost, manifold, x0, cfg, direction_rule) -> SolverReport:
    """Common driver for the line-search solvers (RGD / RCG / L-BFGS).

    ``direction_rule(state) -> Tangent`` picks the search direction from the
    current state; the driver owns gradient evaluation, the Armijo search,
    feasibility assertions, traces, and termination.
    """
    t0 = time.perf_counter()
    manifold.check_point(x0)
    x = x0
    f = cost.value(x)
    g = _rgrad(cost, manifold, x)
    gnorm = manifold.norm(x, g)

    report = SolverReport(final_point=x, final_cost=f)
    report.cost_trace.append(f)
    report.gradnorm_trace.append(gnorm)

    state = {"x": x, "f": f, "g": g, "gnorm": gnorm, "iter": 0,
             "prev": None, "manifold": manifold, "cfg": cfg}

    termination = Termination.MAX_ITERS
    it = 0
    while it < cfg.max_iters:
        if gnorm < cfg.grad_tol:
            termination = Termination.GRAD_TOL
            break
        d = direction_rule(state)
        slope = manifold.inner(x, g, d)
        is_steepest = False
        if not slope < 0:
            # quasi-Newton / CG direction failed the descent test: steepest
            # descent always qualifies here since gnorm >= grad_tol > 0
            d = -g
            slope = -gnorm * gnorm
            is_steepest = True
        try:
            step, x_new, f_new, backtracks = armijo_linesearch(
                cost, manifold, x, d, f, slope, cfg
            )
        except StepTooSmallError:
            if is_steepest:
                termination = Termination.STEP_TOO_SMALL
                break
            # the accumulated curvature model produced an unusable direction;
            # drop it and retry along the plain gradient before giving up
            state["reset_memory"] = True
            d = -g
            slope = -gnorm * gnorm
            try:
                step, x_new, f_new, backtracks = armijo_linesearch(
                    cost, manifold, x, d, f, slope, cfg
                )
            except StepTooSmallError:
                termination = Termination.STEP_TOO_SMALL
                break
        if not f_new < f:
            # accepted step made no numerical progress: stagnation
            termination = Termination.STEP_TOO_SMALL
            break
        manifold.check_point(x_new)

        g_new = _rgrad(cost, manifold, x_new)
        state["prev"] = {
            "x": x, "g": g, "d": d, "step": step, "gnorm": gnorm,
        }
        x, f, g = x_new, f_new, g_new
        gnorm = manifold.norm(x, g)
        state.update(x=x, f=f, g=g, gnorm=gnorm)

        it += 1
        state["iter"] = it
        report.cost_trace.append(f)
        report.gradnorm_trace.append(gnorm)
        report.per_iter_events.append({"step": step, "backtracks": backtracks})
    else:
        if gnorm < cfg.grad_tol:
            termination = Termination.GRAD_TOL

    report.final_point = x
    report.final_cost = f
    report.iterations = it
    report.termination = termination
    report.wall_time = time.perf_counter() - t0
    return report


def solve_rgd(cost, manifold, x0, cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Riemannian gradient descent with Armijo backtracking."""
    cfg = cfg or SolverConfig()

    def direction(state):
        return -state["g"]

    return _descent_loop(cost, manifold, x0, cfg, direction)


def solve_rcg(cost, manifold, x0, cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Riemannian conjugate gradient (Polak-Ribiere+ with restarts).

    The previous gradient and direction are carried to the new tangent space
    by vector transport; beta is clamped at zero and the direction resets to
    steepest descent when conjugacy degrades or every ``cg_restart``
    iterations.
    """
    cfg = cfg or SolverConfig()
    restart = cfg.cg_restart or manifold.ambient_dim

    def direction(state):
        prev = state["prev"]
        man: Manifold = state["manifold"]
        x, g = state["x"], state["g"]
        if prev is None or state["iter"] % restart == 0 or state.pop("reset_memory", False):
            return -g
        g_old = man.transport(prev["x"], x, prev["g"])
        d_old = man.transport(prev["x"], x, prev["d"])
        denom = prev["gnorm"] ** 2
        beta = max(0.0, man.inner(x, g, g - g_old) / denom)
        return -g + beta * d_old

    return _descent_loop(cost, manifold, x0, cfg, direction)


def solve_lbfgs(cost, manifold, x0, cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Limited-memory Riemannian BFGS with the two-loop recursion.

    The stored ``(s, y)`` pairs are transported into the current tangent
    space every iteration.  A pair is discarded (cautious update) when
    ``<s, y>`` is not safely positive.  With ``lbfgs_memory = 0`` the method
    reduces exactly to gradient descent.
    """
    cfg = cfg or SolverConfig()
    history: list = []  # (s, y) pairs, kept in the current tangent space

    def direction(state):
        man: Manifold = state["manifold"]
        x, g = state["x"], state["g"]
        prev = state["prev"]

        if state.pop("reset_memory", False):
            history.clear()

        if prev is not None and cfg.lbfgs_memory > 0:
            # move the memory, then append the newest pair
            for i, (s, y) in enumerate(history):
                history[i] = (
                    man.transport(prev["x"], x, s),
                    man.transport(prev["x"], x, y),
                )
            s_new = man.transport(prev["x"], x, prev["step"] * prev["d"])
            y_new = g - man.transport(prev["x"], x, prev["g"])
            history.append((s_new, y_new))
            if len(history) > cfg.lbfgs_memory:
                history.pop(0)

        # pair products live in the current metric: recompute after transport
        # and re-apply the cautious test, dropping pairs that lost positivity
        pairs = []
        for s, y in history:
            sy = man.inner(x, s, y)
            if sy > 1e-10 * man.norm(x, s) * man.norm(x, y):
                pairs.append((s, y, sy))

        if not pairs:
            return -g

        q = g
        alphas = []
        for s, y, sy in reversed(pairs):
            alpha = man.inner(x, s, q) / sy
            q = q - alpha * y
            alphas.append(alpha)
        s_k, y_k, sy_k = pairs[-1]
        gamma = sy_k / man.inner(x, y_k, y_k)
        r = gamma * q
        for (s, y, sy), alpha in zip(pairs, reversed(alphas)):
            beta = man.inner(x, y, r) / sy
            r = r + (alpha - beta) * s
        return -r

    return _descent_loop(cost, manifold, x0, cfg, direction)


def hessian_vec_fd(
    cost: CostFunction,
    manifold: Manifold,
    x,
    v: Tangent,
    g0: Optional[Tangent] = None,
) -> Tangent:
    """Finite-difference Riemannian Hessian-vector product.

    Steps a normalized copy of ``v`` through the retraction, transports the
    gradient back, and rescales:
    ``H v ~ ||v|| * (transport(rgrad(R(x, h v/||v||))) - rgrad(x)) / h``
    with ``h = sqrt(eps) * (1 + ||x||)``.  ``g0`` lets callers reuse an
    already-computed gradient at ``x``.
    """
    nv = manifold.norm(x, v)
    if nv == 0:
        raise ValueError("hessian_vec_fd: v must be nonzero")
    vhat = (1.0 / nv) * v
    h = np.sqrt(np.finfo(float).eps) * (1.0 + tree_norm(x))
    y = manifold.retract(x, h * vhat)
    gy = _rgrad(cost, manifold, y)
    gx = g0 if g0 is not None else _rgrad(cost, manifold, x)
    return (nv / h) * (manifold.transport(y, x, gy) - gx)


@dataclass
class TCGResult:
    step: Tangent
    hess_step: Tangent
    hit_boundary: bool
    iterations: int
    reason: str


def truncated_cg(
    g: Tangent,
    hess_vec: Callable[[Tangent], Tangent],
    manifold: Manifold,
    x,
    radius: float,
    max_iters: Optional[int] = None,
) -> TCGResult:
    """Steihaug-Toint truncated CG on the local quadratic model.

    Minimizes ``m(s) = <g, s> + <s, H s>/2`` inside ``||s|| <= radius``,
    stopping at the boundary on negative curvature or trust-region exit, or
    when the residual beats the superlinear forcing target
    ``min(0.5, sqrt(||g||)) ||g||``.  The model value never increases along
    the returned step.
    """
    if radius <= 0:
        raise ValueError("truncated_cg: radius must be positive")
    zero = manifold.zero_tangent(x)
    gnorm = manifold.norm(x, g)
    if gnorm == 0.0:
        return TCGResult(zero, zero, False, 0, "zero gradient")
    max_iters = max_iters or manifold.dim

    target = min(0.5, np.sqrt(gnorm)) * gnorm
    s = zero
    hs = zero
    r = g
    d = -g
    rr = gnorm * gnorm
    ss = 0.0
    sd = 0.0

    def boundary_tau(dd):
        # positive root of ||s + tau d||^2 = radius^2
        disc = sd * sd + dd * (radius * radius - ss)
        return (-sd + np.sqrt(max(disc, 0.0))) / dd

    for it in range(1, max_iters + 1):
        hd = hess_vec(d)
        dd = manifold.inner(x, d, d)
        dhd = manifold.inner(x, d, hd)
        if dhd <= 0:
            tau = boundary_tau(dd)
            return TCGResult(
                s + tau * d, hs + tau * hd, True, it, "negative curvature"
            )
        alpha = rr / dhd
        ss_new = ss + 2.0 * alpha * sd + alpha * alpha * dd
        if ss_new >= radius * radius:
            tau = boundary_tau(dd)
            return TCGResult(
                s + tau * d, hs + tau * hd, True, it, "exceeded trust region"
            )
        s = s + alpha * d
        hs = hs + alpha * hd
        r = r + alpha * hd
        rr_new = manifold.inner(x, r, r)
        if np.sqrt(rr_new) <= target:
            return TCGResult(s, hs, False, it, "target residual")
        beta = rr_new / rr
        # recurrences for ||s||^2 and <s, d> under d <- -r + beta d
        sd = beta * (sd + alpha * dd)
        ss = ss_new
        d = -r + beta * d
        rr = rr_new

    return TCGResult(s, hs, False, max_iters, "max inner iterations")


def make_hess_operator(cost, manifold, x, g: Tangent):
    """Model Hessian at ``x``: the cost's Euclidean Hessian-vector product
    mapped to the tangent space when available, finite differences of the
    gradient otherwise."""
    if cost.euclidean_hess_vec is not None:
        def hv(v: Tangent) -> Tangent:
            return manifold.egrad_to_rgrad(x, cost.euclidean_hess_vec(x, v.coords))
    else:
        def hv(v: Tangent) -> Tangent:
            return hessian_vec_fd(cost, manifold, x, v, g0=g)
    return hv


def solve_rtr(cost, manifold, x0, cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Riemannian trust-region method with a truncated-CG subproblem solver.

    Classic accept/reject loop on the ratio of actual to predicted reduction;
    the radius grows only after boundary-hitting steps that fit the model
    well, and shrinks on poor steps.  A retraction that leaves the feasible
    cone counts as ``rho = -inf`` (reject and shrink).
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    manifold.check_point(x0)

    x = x0
    f = cost.value(x)
    g = _rgrad(cost, manifold, x)
    gnorm = manifold.norm(x, g)
    radius = cfg.tr_radius0

    report = SolverReport(final_point=x, final_cost=f)
    report.cost_trace.append(f)
    report.gradnorm_trace.append(gnorm)

    termination = Termination.MAX_ITERS
    it = 0
    while it < cfg.max_iters:
        if gnorm < cfg.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if radius < 1e-14:
            termination = Termination.STEP_TOO_SMALL
            break

        hess = make_hess_operator(cost, manifold, x, g)
        tcg = truncated_cg(g, hess, manifold, x, radius)
        s = tcg.step
        predicted = -(manifold.inner(x, g, s) + 0.5 * manifold.inner(x, s, tcg.hess_step))

        try:
            x_try = manifold.retract(x, s)
            f_try = cost.value(x_try)
            actual = f - f_try
            # guard the ratio against cancellation near convergence
            reg = np.finfo(float).eps * max(1.0, abs(f)) * 1e3
            if predicted + reg <= 0:
                rho = -np.inf  # model increased: reject and shrink
            else:
                rho = (actual + reg) / (predicted + reg)
        except (StepTooLongError, DegenerateStepError):
            x_try = None
            f_try = np.inf
            actual = -np.inf
            rho = -np.inf

        accepted = rho > cfg.tr_accept_rho and f_try <= f
        if accepted:
            x = x_try
            f = f_try
            manifold.check_point(x)
            g = _rgrad(cost, manifold, x)
            gnorm = manifold.norm(x, g)

        if rho < cfg.tr_accept_rho or not np.isfinite(rho):
            radius *= cfg.tr_shrink
        elif rho > 0.75 and tcg.hit_boundary:
            radius = min(radius * cfg.tr_expand, cfg.tr_radius_max)

        it += 1
        report.cost_trace.append(f)
        report.gradnorm_trace.append(gnorm)
        report.per_iter_events.append({
            "radius": radius,
            "rho": rho,
            "accepted": accepted,
            "predicted": predicted,
            "actual": actual if np.isfinite(actual) else None,
            "inner_iters": tcg.iterations,
            "boundary": tcg.hit_boundary,
            "tcg_reason": tcg.reason,
        })
    else:
        if gnorm < cfg.grad_tol:
            termination = Termination.GRAD_TOL

    report.final_point = x
    report.final_cost = f
    report.iterations = it
    report.termination = termination
    report.wall_time = time.perf_counter() - t0
    return report


SOLVERS = {
    "rgd": solve_rgd,
    "rcg": solve_rcg,
    "rtr": solve_rtr,
    "lbfgs": solve_lbfgs,
}
